"""End-to-end pruning pipelines: IMP, SNIP, SynFlow and DRIVE."""

from __future__ import annotations

import time
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .. import seeding
from ..data import Dataset, sample_batch
from ..errors import ZeroSaliency
from ..nn import LossFn, Model, loss_ce
from ..optim import TrainConfig, train_epochs
from .masks import PruneReport, apply_prune, detect_layer_collapse, make_report
from .schedule import SparsitySchedule, make_schedule
from .scores import ScoreVector, score_drive, score_magnitude, score_snip, score_synflow


class PruneMethod(str, Enum):
    MAGNITUDE = "magnitude"
    SNIP = "snip"
    SYNFLOW = "synflow"
    DRIVE = "drive"


_DATA_FREE = (PruneMethod.MAGNITUDE, PruneMethod.SYNFLOW)


def compute_scores(method: PruneMethod, model: Model, batch, loss_fn: LossFn = loss_ce) -> ScoreVector:
    method = PruneMethod(method)
    if method is PruneMethod.MAGNITUDE:
        return score_magnitude(model)
    if method is PruneMethod.SYNFLOW:
        return score_synflow(model)
    if method is PruneMethod.SNIP:
        return score_snip(model, batch, loss_fn)
    return score_drive(model, batch, loss_fn)


def _zero_scores(model: Model, method: PruneMethod) -> ScoreVector:
    return ScoreVector({p.id: np.zeros(p.mask.shape) for p in model.prunable()}, False, method.value)


def iterative_prune(model: Model, method, schedule: SparsitySchedule, data: Optional[Dataset] = None,
                    *, batch_size: int = 128, seed: int = 0, loss_fn: LossFn = loss_ce,
                    state=None) -> PruneReport:
    """Score and prune once per schedule entry.

    Data-dependent methods draw a fresh batch each iteration from the seeded
    ``score`` stream; SynFlow and magnitude ignore ``data``. If a layer has
    already collapsed and every saliency is zero, remaining iterations fall
    back to index-order pruning and the collapse is left in the report.
    """
    method = PruneMethod(method)
    rng = seeding.rng(seed, "score")
    trace = []
    start = time.perf_counter()
    for density in schedule.densities:
        batch = None if method in _DATA_FREE else sample_batch(data, batch_size, rng)
        try:
            scores = compute_scores(method, model, batch, loss_fn)
        except ZeroSaliency:
            if not detect_layer_collapse(model):
                raise
            scores = _zero_scores(model, method)
        apply_prune(model, scores, density, state)
        trace.append(model.density())
    return make_report(model, trace, time.perf_counter() - start)


def drive_pipeline(model: Model, data: Dataset, epochs: int, schedule: SparsitySchedule,
                   config: TrainConfig, *, seed: int = 0, loss_fn: LossFn = loss_ce):
    """Dense pretraining for ``epochs`` epochs, then iterative DRIVE pruning.

    The trained weights are kept (no rewind). The report's ``seconds`` covers
    the pruning stage; ``pretrain_seconds`` the dense epochs.
    """
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    start = time.perf_counter()
    if epochs:
        train_epochs(model, data, epochs, config, seeding.derive_seed(seed, "shuffle", 0), loss_fn)
    pretrain = time.perf_counter() - start
    report = iterative_prune(model, PruneMethod.DRIVE, schedule, data,
                             batch_size=config.batch_size, seed=seed, loss_fn=loss_fn)
    report.pretrain_seconds = pretrain
    return model, report


def imp_pipeline(model: Model, data: Dataset, cycles: int, epochs_per_cycle: int, kappa: float,
                 config: TrainConfig, *, seed: int = 0, loss_fn: LossFn = loss_ce,
                 on_cycle: Optional[Callable] = None):
    """Iterative magnitude pruning with rewinding to initialisation.

    Each cycle trains with a fresh optimizer (the LR schedule restarts),
    prunes by ``|theta|`` to the cycle's density and resets surviving weights
    to their initial values bit for bit. ``on_cycle(n, model, theta0)`` is
    called after each rewind. All of it counts as pruning time.
    """
    if cycles < 1:
        raise ValueError("cycles must be >= 1")
    schedule = make_schedule(kappa, cycles)
    theta0 = {p.id: p.value.copy() for p in model.params}
    trace = []
    start = time.perf_counter()
    for n, density in enumerate(schedule.densities):
        train_epochs(model, data, epochs_per_cycle, config,
                     seeding.derive_seed(seed, "shuffle", n), loss_fn)
        apply_prune(model, score_magnitude(model), density)
        for p in model.params:
            np.copyto(p.value, theta0[p.id], where=p.mask != 0)
        trace.append(model.density())
        if on_cycle is not None:
            on_cycle(n, model, theta0)
    return model, make_report(model, trace, time.perf_counter() - start)


def snip_pipeline(model: Model, data: Dataset, kappa: float, *, batch_size: int = 128, seed: int = 0,
                  loss_fn: LossFn = loss_ce):
    """One-shot SNIP at initialisation from a single sampled batch."""
    schedule = make_schedule(kappa, 1)
    start = time.perf_counter()
    if kappa > 0:
        batch = sample_batch(data, batch_size, seeding.rng(seed, "score"))
        apply_prune(model, score_snip(model, batch, loss_fn), schedule.final_density)
    return model, make_report(model, [model.density()], time.perf_counter() - start)


def synflow_pipeline(model: Model, kappa: float, n_iters: int = 100):
    """Iterative, data-free SynFlow pruning."""
    report = iterative_prune(model, PruneMethod.SYNFLOW, make_schedule(kappa, n_iters))
    return model, report
