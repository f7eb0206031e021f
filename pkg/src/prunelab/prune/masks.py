"""Global mask updates, collapse detection and prune reports."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import DensityIncrease, MissingParameter, NonFinite
from ..nn import Model
from .schedule import survivor_target
from .scores import ScoreVector


@dataclass
class PruneReport:
    achieved_sparsity: float
    layer_densities: dict
    collapsed_layers: list
    density_trace: list = field(default_factory=list)
    seconds: float = 0.0
    pretrain_seconds: float = 0.0


def layer_densities(model: Model) -> dict:
    return {p.id: np.count_nonzero(p.mask != 0) / p.mask.size for p in model.prunable()}


def detect_layer_collapse(model: Model) -> list:
    """Layers whose prunable weights are all masked out."""
    collapsed = []
    for p in model.prunable():
        if p.role == "weight" and not np.any(p.mask):
            collapsed.append(f"layer{p.layer:02d}")
    return collapsed


def make_report(model: Model, trace=(), seconds: float = 0.0) -> PruneReport:
    return PruneReport(model.sparsity(), layer_densities(model), detect_layer_collapse(model),
                       list(trace), seconds)


def lowest_k(values: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` smallest values, ties taken in index order."""
    if k <= 0:
        return np.zeros(0, dtype=np.int64)
    if k >= len(values):
        return np.arange(len(values))
    t = np.partition(values, k - 1)[k - 1]
    below = np.flatnonzero(values < t)
    ties = np.flatnonzero(values == t)
    return np.sort(np.concatenate([below, ties[:k - len(below)]]))


def apply_prune(model: Model, scores: ScoreVector, target_density: float, state=None) -> PruneReport:
    """Mask the lowest-scored surviving weights until ``target_density`` remains.

    Ranking is global over all prunable parameters. Ties are broken by
    (parameter id, flat element index), ascending. Optimizer buffers in
    ``state`` are cleared at newly pruned positions.
    """
    params = sorted(model.prunable(), key=lambda p: p.id)
    for p in params:
        if p.id not in scores.scores:
            raise MissingParameter(p.id)
    total = sum(p.mask.size for p in params)
    target = survivor_target(target_density, total)
    current = model.survivor_count()
    if target > current:
        raise DensityIncrease(f"target keeps {target} weights but only {current} survive")
    k = current - target
    if k:
        s = np.concatenate([np.asarray(scores.scores[p.id], dtype=np.float64).ravel() for p in params])
        live = np.concatenate([p.mask.ravel() != 0 for p in params])
        if not np.isfinite(s).all():
            raise NonFinite(f"{scores.method}: scores must be finite")
        # pruned positions rank last; k never exceeds the survivor count
        s[~live] = np.inf
        chosen = lowest_k(s, k)
        offsets = np.cumsum([0] + [p.mask.size for p in params])
        for i, p in enumerate(params):
            lo, hi = np.searchsorted(chosen, [offsets[i], offsets[i + 1]])
            if hi > lo:
                flat = chosen[lo:hi] - offsets[i]
                p.mask.ravel()[flat] = 0
                if state is not None:
                    pruned = np.zeros(p.mask.size, dtype=bool)
                    pruned[flat] = True
                    state.zero_positions(p.id, pruned.reshape(p.mask.shape))
    return make_report(model)
