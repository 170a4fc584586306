"""Parser learning-rate schedule and gradual unfreezing."""

from __future__ import annotations

import math


def lr_schedule(step: int, total_steps: int | None, warmup_steps: int, peak: float) -> float:
    """Linear warmup then inverse-square-root decay: ``peak * min(t/w, sqrt(w/t))``.

    ``total_steps`` is accepted for interface symmetry; the decay has no end point.
    """
    if warmup_steps < 1:
        raise ValueError("warmup_steps must be at least 1")
    if step < 1:
        raise ValueError(f"step must be >= 1, got {step}")
    return peak * min(step / warmup_steps, math.sqrt(warmup_steps / step))


def unfreezing_plan(epoch: int, n_encoder_layers: int, mode: str = "ft", decay: float = 0.9) -> dict[int, float]:
    """Trainable encoder depths and their learning-rate multipliers at ``epoch`` (1-based).

    Depth ``L`` is the top transformer layer and depth 0 the embeddings.
    One more layer unfreezes per epoch from the top; the embeddings follow
    once every layer is trainable.  Depth ``l`` is scaled by ``decay ** (L - l)``.
    """
    if mode == "frozen":
        return {}
    if mode != "ft":
        raise ValueError(f"unknown mode {mode!r}")
    if epoch < 1:
        raise ValueError("epochs are 1-based")
    top = n_encoder_layers
    depths = range(top, -1, -1)
    n_open = min(epoch, top + 1)
    return {d: decay ** (top - d) for d in list(depths)[:n_open]}
