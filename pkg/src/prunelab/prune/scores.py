"""Saliency scores: magnitude, SNIP, SynFlow, convergence sensitivity and DRIVE.

All scores are float64 arrays keyed by parameter id and cover the prunable
parameters only. Positions that are already pruned get a score of zero; the
ranking in :func:`~prunelab.prune.masks.apply_prune` ignores them anyway.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import tensor as T
from ..errors import AlreadyPruned, NonFinite, ZeroSaliency
from ..nn import LossFn, Model, batch_loss, forward_with, loss_ce, model_grads
from ..tensor import GradientMap, Tape, Tensor


@dataclass
class ScoreVector:
    scores: dict
    normalized: bool
    method: str

    def total(self) -> float:
        return float(sum(s.sum() for s in self.scores.values()))

    def flat(self) -> np.ndarray:
        return np.concatenate([self.scores[k].ravel() for k in sorted(self.scores)])


def _normalize(raw: dict, method: str) -> ScoreVector:
    total = sum(float(np.abs(v).sum()) for v in raw.values())
    if total == 0.0:
        raise ZeroSaliency(f"{method}: every saliency is zero")
    if not np.isfinite(total):
        raise NonFinite(f"{method}: saliency sum is not finite")
    scores = {}
    for k, v in raw.items():
        z = np.abs(v, out=v) if v.dtype == np.float64 else np.abs(v.astype(np.float64))
        z /= total
        scores[k] = z
    return ScoreVector(scores, True, method)


def score_magnitude(model: Model) -> ScoreVector:
    return ScoreVector({p.id: np.abs(p.value.astype(np.float64)) * p.mask for p in model.prunable()},
                       False, "magnitude")


def snip_saliency(model: Model, grads: GradientMap) -> dict:
    """``|dL/dm| = |theta * g|`` at surviving positions."""
    return {p.id: np.abs(p.value.astype(np.float64) * grads[p.id]) * p.mask for p in model.prunable()}


def score_snip(model: Model, batch, loss_fn: LossFn = loss_ce) -> ScoreVector:
    """Connection sensitivity ``|dL/dm_j|`` normalised to sum to one."""
    return _normalize(snip_saliency(model, model_grads(model, batch, loss_fn)), "snip")


def synflow_saliency(model: Model) -> tuple:
    """Data-free synaptic saliency and the total flow ``A``.

    Forward an all-ones sample through the network with every parameter
    replaced by its absolute value (masks kept), take ``A`` as the sum of the
    outputs and score ``dA/d|theta| * |theta|``. Runs in float64; the
    model's parameters are never modified.
    """
    weights = {p.id: Tensor(np.abs(p.value.astype(np.float64)) * p.mask, name=p.id,
                            requires_grad=True, dtype=np.float64)
               for p in model.params}
    ones = Tensor(np.ones((1,) + model.spec.input_shape), dtype=np.float64)
    with Tape() as tape, np.errstate(over="ignore", invalid="ignore"):
        flow = T.tsum(forward_with(model.spec, weights, ones))
    total = flow.item()
    if not np.isfinite(total):
        raise NonFinite(f"synflow: network flow overflowed ({total})")
    grads = T.backward(tape, flow)
    scores = {p.id: grads[p.id] * p.mask * np.abs(p.value.astype(np.float64)) for p in model.prunable()}
    return scores, total


def score_synflow(model: Model) -> ScoreVector:
    return ScoreVector(synflow_saliency(model)[0], False, "synflow")


def convergence_sensitivity(model: Model, batch, loss_fn: LossFn = loss_ce,
                            grads: GradientMap | None = None) -> ScoreVector:
    """``|dL/dtheta| = |m * g|``; large values mean the weight is still moving."""
    grads = model_grads(model, batch, loss_fn) if grads is None else grads
    return ScoreVector({p.id: np.abs(p.mask * grads[p.id].astype(np.float64)) for p in model.prunable()},
                       False, "convergence")


def drive_metric(model: Model, grads: GradientMap) -> dict:
    """Signed product ``theta * dL/dm * dL/dtheta`` per prunable element.

    With ``dL/dm = theta * g`` and ``dL/dtheta = m * g`` this equals
    ``m * (theta * g)**2`` for binary masks.
    """
    out = {}
    for p in model.prunable():
        theta = p.value.astype(np.float64)
        g = grads[p.id].astype(np.float64)
        s = theta * g
        s *= theta
        s *= p.mask
        s *= g
        out[p.id] = s
    return out


def score_drive(model: Model, batch, loss_fn: LossFn = loss_ce) -> ScoreVector:
    """Magnitude x connection sensitivity x convergence sensitivity, normalised."""
    return _normalize(drive_metric(model, model_grads(model, batch, loss_fn)), "drive")


def connection_sensitivity_exact(model: Model, batch, element: tuple, loss_fn: LossFn = loss_ce) -> float:
    """Loss change from removing one weight, by two float64 forward passes.

    ``element`` is ``(parameter id, flat index)``. Returns
    ``L(current masks) - L(masks with that element zeroed)``.
    """
    pid, index = element
    p = model[pid]
    if p.mask.ravel()[index] == 0:
        raise AlreadyPruned(f"{pid}[{index}] is already pruned")
    full = batch_loss(model, batch, loss_fn, dtype=np.float64)
    mask = p.mask.copy()
    mask.ravel()[index] = 0
    removed = batch_loss(model, batch, loss_fn, masks={pid: mask}, dtype=np.float64)
    return full - removed
