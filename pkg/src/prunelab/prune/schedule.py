"""Density schedules for one-shot and iterative pruning."""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..errors import InvalidArg, InvalidSparsity


@dataclass(frozen=True)
class SparsitySchedule:
    kappa: float
    n_iters: int
    densities: tuple

    @property
    def final_density(self) -> float:
        return self.densities[-1]


def make_schedule(kappa: float, n_iters: int) -> SparsitySchedule:
    """Exponential-in-density schedule ``d_n = (1 - kappa) ** (n / N)``.

    Every iteration keeps the same fraction ``(1 - kappa) ** (1 / N)`` of the
    surviving weights, so sparsity rises from a low value to ``kappa``.
    """
    if not 0.0 <= kappa < 1.0 or math.isnan(kappa):
        raise InvalidSparsity(f"sparsity must lie in [0, 1), got {kappa}")
    if n_iters < 1:
        raise InvalidArg(f"need at least one pruning iteration, got {n_iters}")
    keep = 1.0 - kappa
    densities = tuple(keep ** (n / n_iters) for n in range(1, n_iters + 1))
    return SparsitySchedule(kappa, n_iters, densities)


def survivor_target(density: float, total: int) -> int:
    """Number of weights left at ``density``; halves round up."""
    return int(math.floor(density * total + 0.5))
