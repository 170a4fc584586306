"""Masked-LM pretraining: base, language-adaptive, and (tiered) vocabulary-augmented."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .encoder import Encoder, collate, mlm_loss

logger = logging.getLogger(__name__)

MODES = ("base", "lapt", "va", "tva")


@dataclass
class PretrainConfig:
    lr: float = 2e-5
    tiered_lr: float = 1e-4
    warmup_steps: int = 1000
    batch_size: int = 12
    epochs_grid: tuple[int, ...] = (1, 5, 10, 15, 20)
    mask_prob: float = 0.15
    max_pred: int = 20
    dup_factor: int = 5
    grad_clip: float = 1.0
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        self.epochs_grid = tuple(sorted(int(e) for e in self.epochs_grid))
        if self.tiered_lr < self.lr:
            raise ValueError("tiered embedding rate must be at least the base rate")
        if not 0.0 <= self.mask_prob <= 1.0:
            raise ValueError("mask_prob must be a probability")
        if not self.epochs_grid or self.epochs_grid[0] < 1:
            raise ValueError("epochs_grid must hold positive epochs")


def make_param_groups(encoder: Encoder, mode: str, config: PretrainConfig) -> list[dict]:
    """Optimizer groups for a pretraining mode.

    For ``va`` and ``tva`` the new rows must already be split off
    (``encoder.piece_embeddings.split_rows``); ``tva`` gives them
    ``config.tiered_lr``, everything else trains at ``config.lr``.
    """
    if mode not in MODES:
        raise ValueError(f"unknown pretraining mode {mode!r}")
    params = [p for p in encoder.parameters() if p.requires_grad]
    slot = encoder.piece_embeddings.slot_weight
    if mode in ("va", "tva") and (slot is None or slot.shape[0] == 0):
        raise ValueError(f"mode {mode} needs new embedding rows; none were split off")
    if mode != "tva":
        return [{"params": params, "lr": config.lr, "name": "all"}]
    rest = [p for p in params if p is not slot]
    return [
        {"params": rest, "lr": config.lr, "name": "base"},
        {"params": [slot], "lr": config.tiered_lr, "name": "new_embeddings"},
    ]


def warmup_linear_decay(step: int, total_steps: int, warmup_steps: int, peak: float) -> float:
    """Linear ramp from 0 to ``peak`` over ``warmup_steps``, then linear decay to 0."""
    if step < warmup_steps:
        return peak * step / warmup_steps
    if total_steps <= warmup_steps:
        return peak
    return peak * max(0.0, (total_steps - step) / (total_steps - warmup_steps))


@dataclass
class PretrainResult:
    checkpoints: dict[int, dict[str, torch.Tensor]]
    losses: list[float] = field(default_factory=list)
    epoch_losses: dict[int, float] = field(default_factory=dict)


def prepare_for_mode(encoder: Encoder, mode: str) -> None:
    if mode in ("va", "tva"):
        if not encoder.new_slot_ids:
            raise ValueError(f"mode {mode} requires new_slot_ids on the encoder")
        encoder.piece_embeddings.split_rows(encoder.new_slot_ids)
    else:
        encoder.piece_embeddings.merge_rows()


def train_mlm(encoder: Encoder, instances, config: PretrainConfig, mode: str = "lapt",
              pad_id: int = 0) -> PretrainResult:
    """Adam on the masked-LM loss with a checkpoint at every grid epoch.

    Optimizer state starts fresh.  The learning rate warms up linearly over
    ``config.warmup_steps`` and decays linearly to zero at the end of the
    last grid epoch.
    """
    if not instances:
        raise ValueError("no pretraining instances")
    prepare_for_mode(encoder, mode)
    groups = make_param_groups(encoder, mode, config)
    for g in groups:
        g["peak_lr"] = g["lr"]
    opt = torch.optim.Adam(groups, betas=config.adam_betas, eps=config.adam_eps)

    rng = np.random.default_rng(config.seed)
    torch.manual_seed(config.seed)
    n = len(instances)
    steps_per_epoch = math.ceil(n / config.batch_size)
    max_epoch = config.epochs_grid[-1]
    total = steps_per_epoch * max_epoch
    result = PretrainResult({})
    # module order, so the clipping norm does not depend on how groups are split
    params = [p for p in encoder.parameters() if p.requires_grad]
    step = 0
    encoder.train()
    for epoch in range(1, max_epoch + 1):
        order = rng.permutation(n)
        running = 0.0
        for b in range(steps_per_epoch):
            batch = collate([instances[i] for i in order[b * config.batch_size:(b + 1) * config.batch_size]], pad_id)
            for g in groups:
                g["lr"] = warmup_linear_decay(step, total, config.warmup_steps, g["peak_lr"])
            out = encoder(batch["input_ids"], batch["attention_mask"], batch["masked_index"])
            loss = mlm_loss(out.mlm_logits, batch["masked_labels"])
            if not torch.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite MLM loss {loss.item()} at epoch {epoch}, step {step} (mode {mode})")
            opt.zero_grad(set_to_none=True)
            loss.backward()
            if config.grad_clip:
                torch.nn.utils.clip_grad_norm_(params, config.grad_clip)
            opt.step()
            result.losses.append(loss.item())
            running += loss.item()
            step += 1
        result.epoch_losses[epoch] = running / steps_per_epoch
        logger.info("%s epoch %d: mean MLM loss %.4f", mode, epoch, result.epoch_losses[epoch])
        if epoch in config.epochs_grid:
            result.checkpoints[epoch] = encoder.merged_state_dict()
    encoder.eval()
    return result
