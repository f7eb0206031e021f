"""SGD with momentum, Adam, learning-rate schedules and the epoch loop.

Updates are masked: an element with ``m == 0`` keeps its exact value and its
optimizer buffers stay at zero, so pruned weights are frozen rather than
re-zeroed. Since the forward pass only ever reads ``theta * m`` the two are
equivalent, and freezing keeps the IMP rewind bookkeeping exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import EpochOutOfRange, InvalidArg, MissingParameter
from .nn import LossFn, Model, loss_and_grads, loss_ce
from .tensor import GradientMap


# ---------------------------------------------------------------------------
# learning-rate schedules

@dataclass(frozen=True)
class Constant:
    lr: float


@dataclass(frozen=True)
class StepDecay:
    """Divide the rate by ``factor`` every ``every`` epochs, or at each of ``milestones``."""

    lr: float
    factor: float
    every: Optional[int] = None
    milestones: tuple = ()


@dataclass(frozen=True)
class CosineAnnealing:
    """``lr * 0.5 * (1 + cos(pi * epoch / T))``; ``T=None`` means the length of the training phase."""

    lr: float
    T: Optional[int] = None


LrSchedule = Union[Constant, StepDecay, CosineAnnealing]


def lr_at_epoch(schedule: LrSchedule, epoch: int, horizon: Optional[int] = None) -> float:
    if epoch < 0:
        raise EpochOutOfRange(f"epoch {epoch} < 0")
    if isinstance(schedule, Constant):
        return schedule.lr
    if isinstance(schedule, StepDecay):
        if schedule.every:
            drops = epoch // schedule.every
        else:
            drops = sum(1 for m in schedule.milestones if epoch >= m)
        return schedule.lr / schedule.factor ** drops
    if isinstance(schedule, CosineAnnealing):
        T = schedule.T if schedule.T is not None else horizon
        if T is None or T < 1:
            raise EpochOutOfRange("cosine schedule needs a horizon")
        if epoch >= T:
            raise EpochOutOfRange(f"epoch {epoch} outside [0, {T})")
        return schedule.lr * 0.5 * (1.0 + math.cos(math.pi * epoch / T))
    raise TypeError(f"unknown schedule {schedule!r}")


# ---------------------------------------------------------------------------
# optimizer state and steps

@dataclass
class OptimizerState:
    method: str = "sgd"  # "sgd" or "adam"
    lr: float = 0.01
    momentum: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    buffers: dict = field(default_factory=dict)  # name -> {param id -> ndarray}
    t: int = 0

    def buffer(self, name: str, p) -> np.ndarray:
        store = self.buffers.setdefault(name, {})
        if p.id not in store:
            store[p.id] = np.zeros_like(p.value)
        return store[p.id]

    def zero_positions(self, pid: str, pruned: np.ndarray) -> None:
        """Clear every auxiliary buffer of ``pid`` where ``pruned`` is true."""
        for store in self.buffers.values():
            if pid in store:
                store[pid][pruned] = 0


def _check_covered(model: Model, grads: GradientMap) -> None:
    for p in model.params:
        if p.id not in grads:
            raise MissingParameter(p.id)


def sgd_step(model: Model, grads: GradientMap, state: OptimizerState) -> Model:
    """``v <- momentum*v + dL/dtheta; theta <- theta - lr*v`` on unmasked elements."""
    _check_covered(model, grads)
    lr = np.float32(state.lr)
    mu = np.float32(state.momentum)
    for p in model.params:
        live = p.mask != 0
        g = p.mask * grads[p.id]  # dL/dtheta = m * dL/dw
        if state.momentum:
            v = state.buffer("velocity", p)
            v *= mu
            v += g
            v *= p.mask
            step = v
        else:
            step = g
        np.copyto(p.value, p.value - lr * step, where=live)
    state.t += 1
    return model


def adam_step(model: Model, grads: GradientMap, state: OptimizerState, t: Optional[int] = None) -> Model:
    """Bias-corrected Adam on unmasked elements; ``t`` is the 1-based step index."""
    _check_covered(model, grads)
    t = state.t + 1 if t is None else t
    if t < 1:
        raise InvalidArg("adam step index must be >= 1")
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p in model.params:
        live = p.mask != 0
        g = (p.mask * grads[p.id]).astype(np.float32)
        m = state.buffer("m", p)
        v = state.buffer("v", p)
        m *= np.float32(b1)
        m += np.float32(1 - b1) * g
        v *= np.float32(b2)
        v += np.float32(1 - b2) * g * g
        m *= p.mask
        v *= p.mask
        upd = (state.lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)).astype(np.float32)
        np.copyto(p.value, p.value - upd, where=live)
    state.t = t
    return model


# ---------------------------------------------------------------------------
# training loop

@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "sgd"
    schedule: LrSchedule = Constant(0.01)
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 128

    def new_state(self) -> OptimizerState:
        if self.optimizer not in ("sgd", "adam"):
            raise InvalidArg(f"unknown optimizer {self.optimizer!r}")
        return OptimizerState(self.optimizer, lr_at_epoch(self.schedule, 0, horizon=1 << 30),
                              self.momentum, self.beta1, self.beta2, self.epsilon)


def train_epochs(model: Model, data, epochs: int, config: TrainConfig, seed: int,
                 loss_fn: LossFn = loss_ce, state: Optional[OptimizerState] = None) -> list:
    """Train for ``epochs`` passes over ``data``; returns the mean loss per epoch.

    A fresh optimizer state (and a restarted LR schedule) is used unless
    ``state`` is given.
    """
    from .data import batches

    state = state or config.new_state()
    step = sgd_step if state.method == "sgd" else adam_step
    it = batches(data, config.batch_size, seed)
    history = []
    for epoch in range(epochs):
        state.lr = lr_at_epoch(config.schedule, epoch, horizon=epochs)
        total, count = 0.0, 0
        for xb, yb in it.epoch():
            loss, grads = loss_and_grads(model, (xb, yb), loss_fn)
            step(model, grads, state)
            total += loss * len(yb)
            count += len(yb)
        history.append(total / max(count, 1))
    return history
