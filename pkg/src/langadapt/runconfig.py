"""Per-run optimizer and seed settings, sampled for variation measurements."""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

METHODS = ("baseline", "lapt", "va", "tva")
VARIANTS = ("frozen", "ft")
EPOCH_GRID = (1, 5, 10, 15, 20)


@dataclass(frozen=True)
class SamplingBounds:
    beta1: tuple[float, float] = (0.9, 0.9999)
    beta2: tuple[float, float] = (0.9, 0.9999)
    grad_norm_clip: tuple[float, float] = (1.0, 10.0)
    seed: tuple[int, int] = (0, 100000)

    def __post_init__(self):
        for name in ("beta1", "beta2", "grad_norm_clip", "seed"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"bad bounds for {name}: {lo} > {hi}")


DEFAULT_BOUNDS = SamplingBounds()


@dataclass(frozen=True)
class RunConfig:
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    grad_norm_clip: float = 5.0
    env_seed: int = 0
    numeric_seed: int = 0
    model_seed: int = 0
    method: str = "baseline"
    variant: str = "frozen"
    pretrain_epochs: int | None = None

    def check(self, bounds: SamplingBounds = DEFAULT_BOUNDS) -> None:
        def inside(v, lohi):
            return lohi[0] <= v <= lohi[1]

        ok = (inside(self.adam_beta1, bounds.beta1) and inside(self.adam_beta2, bounds.beta2)
              and inside(self.grad_norm_clip, bounds.grad_norm_clip)
              and all(inside(s, bounds.seed) for s in (self.env_seed, self.numeric_seed, self.model_seed)))
        if not ok:
            raise ValueError(f"run config outside sampling bounds: {self}")
        if self.method not in METHODS or self.variant not in VARIANTS:
            raise ValueError(f"unknown method/variant {self.method}/{self.variant}")
        if self.pretrain_epochs is not None and self.pretrain_epochs not in EPOCH_GRID:
            raise ValueError(f"pretrain_epochs {self.pretrain_epochs} not in {EPOCH_GRID}")

    def with_method(self, method: str, variant: str, pretrain_epochs: int | None = None) -> "RunConfig":
        return replace(self, method=method, variant=variant, pretrain_epochs=pretrain_epochs)

    def to_dict(self) -> dict:
        return asdict(self)


def sample_run_configs(bounds: SamplingBounds = DEFAULT_BOUNDS, n: int = 5, master_seed: int = 0,
                       method: str = "baseline", variant: str = "frozen") -> list[RunConfig]:
    """``n`` configurations drawn independently and uniformly within ``bounds``."""
    rng = np.random.default_rng(master_seed)
    out = []
    for _ in range(n):
        b1 = float(rng.uniform(*bounds.beta1))
        b2 = float(rng.uniform(*bounds.beta2))
        clip = float(rng.uniform(*bounds.grad_norm_clip))
        seeds = [int(s) for s in rng.integers(bounds.seed[0], bounds.seed[1] + 1, size=3)]
        out.append(RunConfig(b1, b2, clip, *seeds, method=method, variant=variant))
    return out
