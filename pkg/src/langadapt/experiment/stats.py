"""Epoch selection, seed aggregation and relative error reduction."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

N_RUNS = 5


def _mean(xs: Sequence[float]) -> float:
    return math.fsum(xs) / len(xs)


def select_pretrain_epoch(validation_las: Mapping[int, Sequence[float]], grid: Sequence[int] | None = None,
                          n_runs: int = N_RUNS) -> int:
    """Grid epoch with the highest mean validation LAS; ties go to the smaller epoch.

    ``validation_las`` maps each epoch to one value per run.
    """
    grid = sorted(grid if grid is not None else validation_las)
    if not grid:
        raise ValueError("empty epoch grid")
    for e in grid:
        runs = validation_las.get(e)
        if runs is None or len(runs) != n_runs:
            raise ValueError(f"incomplete grid: epoch {e} has {0 if runs is None else len(runs)} of {n_runs} runs")
    best = grid[0]
    best_mean = _mean(validation_las[best])
    for e in grid[1:]:
        m = _mean(validation_las[e])
        if m > best_mean:
            best, best_mean = e, m
    return best


def aggregate_results(test_las: Sequence[float], n_runs: int = N_RUNS) -> tuple[float, float]:
    """Mean and sample standard deviation (n - 1 denominator)."""
    if len(test_las) != n_runs:
        raise ValueError(f"expected {n_runs} values, got {len(test_las)}")
    m = _mean(test_las)
    if n_runs < 2:
        return m, 0.0
    var = math.fsum((x - m) ** 2 for x in test_las) / (n_runs - 1)
    return m, math.sqrt(var)


def relative_error_reduction(base_las: float, new_las: float) -> float:
    """Share of the remaining error removed, in percent."""
    if not 0.0 <= base_las < 100.0:
        raise ValueError(f"base LAS must lie in [0, 100), got {base_las}")
    return 100.0 * (new_las - base_las) / (100.0 - base_las)


@dataclass
class ExperimentResult:
    method: str
    variant: str
    grid: list[int | None]
    validation_las: dict = field(default_factory=dict)  # epoch -> per-run LAS
    test_las: list[float] = field(default_factory=list)
    test_uas: list[float] = field(default_factory=list)
    selected_epoch: int | None = None
    mean: float = 0.0
    std: float = 0.0

    def __post_init__(self):
        if self.std < 0:
            raise ValueError("standard deviation cannot be negative")

    @property
    def key(self) -> str:
        return f"{self.method}/{self.variant}"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["validation_las"] = {str(k): v for k, v in self.validation_las.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentResult":
        d = dict(d)
        d["validation_las"] = {_epoch_key(k): v for k, v in d["validation_las"].items()}
        return cls(**d)


def _epoch_key(k: str):
    return None if k == "None" else int(k)
