"""Masked feed-forward models: MLPs and plain Conv-ReLU-Pool stacks.

Every forward pass reads effective weights ``w = theta * mask``; gradients
returned by :func:`model_grads` are taken with respect to ``w``. Because
``w_j = theta_j * m_j``, the loss gradients with respect to the mask and to
theta follow by the chain rule (``theta * g`` and ``m * g``) without
differentiating through the mask on the tape.
"""

from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from . import seeding
from . import tensor as T
from .errors import DimensionMismatch, InvalidSpec, MissingParameter
from .tensor import GradientMap, Tape, Tensor

ACTIVATIONS = ("relu", "none")


@dataclass(frozen=True)
class Dense:
    in_features: int
    out_features: int
    activation: str = "relu"
    bias: bool = True


@dataclass(frozen=True)
class Conv2D:
    in_channels: int
    out_channels: int
    kernel: int
    stride: int = 1
    padding: int = 0
    activation: str = "relu"
    bias: bool = True


@dataclass(frozen=True)
class MaxPool:
    size: int
    stride: Optional[int] = None


@dataclass(frozen=True)
class Flatten:
    pass


LayerSpec = Union[Dense, Conv2D, MaxPool, Flatten]
_LAYER_TYPES = {cls.__name__: cls for cls in (Dense, Conv2D, MaxPool, Flatten)}


@dataclass(frozen=True)
class ModelSpec:
    layers: tuple
    input_shape: tuple
    num_classes: int

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))

    def output_shapes(self) -> list[tuple]:
        """Per-sample output shape after each layer; raises InvalidSpec if layers don't compose."""
        shape = self.input_shape
        shapes = []
        for i, layer in enumerate(self.layers):
            shape = _layer_output_shape(i, layer, shape)
            shapes.append(shape)
        return shapes

    def validate(self) -> None:
        if not self.layers:
            raise InvalidSpec("model has no layers")
        if self.num_classes < 1:
            raise InvalidSpec("num_classes must be positive")
        final = self.output_shapes()[-1]
        if final != (self.num_classes,):
            raise InvalidSpec(f"final output shape {final} != ({self.num_classes},)")

    def to_dict(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "num_classes": self.num_classes,
            "layers": [{"type": type(l).__name__, **asdict(l)} for l in self.layers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        layers = []
        for raw in d["layers"]:
            raw = dict(raw)
            kind = raw.pop("type")
            if kind not in _LAYER_TYPES:
                raise InvalidSpec(f"unknown layer type {kind!r}")
            layers.append(_LAYER_TYPES[kind](**raw))
        return cls(tuple(layers), tuple(d["input_shape"]), int(d["num_classes"]))


def _layer_output_shape(i: int, layer, shape: tuple) -> tuple:
    where = f"layer {i} ({type(layer).__name__})"
    if isinstance(layer, Dense):
        if layer.activation not in ACTIVATIONS:
            raise InvalidSpec(f"{where}: unknown activation {layer.activation!r}")
        if shape != (layer.in_features,):
            raise InvalidSpec(f"{where}: expects input ({layer.in_features},), got {shape}")
        return (layer.out_features,)
    if isinstance(layer, Conv2D):
        if layer.activation not in ACTIVATIONS:
            raise InvalidSpec(f"{where}: unknown activation {layer.activation!r}")
        if len(shape) != 3 or shape[0] != layer.in_channels:
            raise InvalidSpec(f"{where}: expects ({layer.in_channels}, H, W), got {shape}")
        _, h, w = shape
        p, k, s = layer.padding, layer.kernel, layer.stride
        if k > h + 2 * p or k > w + 2 * p or s < 1:
            raise InvalidSpec(f"{where}: kernel {k} does not fit input {shape}")
        return (layer.out_channels, (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1)
    if isinstance(layer, MaxPool):
        s = layer.stride or layer.size
        if len(shape) != 3 or layer.size > shape[1] or layer.size > shape[2]:
            raise InvalidSpec(f"{where}: window {layer.size} does not fit {shape}")
        return (shape[0], (shape[1] - layer.size) // s + 1, (shape[2] - layer.size) // s + 1)
    if isinstance(layer, Flatten):
        return (int(np.prod(shape)),)
    raise InvalidSpec(f"{where}: unknown layer type")


def mlp_spec(sizes, bias: bool = True) -> ModelSpec:
    """Dense ReLU stack; ``sizes`` runs from input width to class count."""
    layers = [Dense(a, b, "relu", bias) for a, b in zip(sizes[:-2], sizes[1:-1])]
    layers.append(Dense(sizes[-2], sizes[-1], "none", bias))
    return ModelSpec(tuple(layers), (sizes[0],), sizes[-1])


def conv_spec(input_shape=(1, 28, 28), channels=(8, 16), num_classes=10, kernel=3) -> ModelSpec:
    """Plain (Conv-ReLU-MaxPool) x len(channels), then Flatten and a linear head."""
    c, h, w = input_shape
    layers = []
    for out_ch in channels:
        layers += [Conv2D(c, out_ch, kernel, 1, kernel // 2), MaxPool(2)]
        c, h, w = out_ch, h // 2, w // 2
    layers += [Flatten(), Dense(c * h * w, num_classes, "none")]
    return ModelSpec(tuple(layers), tuple(input_shape), num_classes)


DESK_MLP = mlp_spec((784, 300, 100, 10))


# ---------------------------------------------------------------------------
# parameters and models

@dataclass
class Parameter:
    id: str
    role: str  # "weight" or "bias"
    value: np.ndarray
    mask: np.ndarray
    prunable: bool
    layer: int

    def __post_init__(self):
        if self.value.shape != self.mask.shape:
            raise InvalidSpec(f"{self.id}: mask shape {self.mask.shape} != value shape {self.value.shape}")

    @property
    def effective(self) -> np.ndarray:
        return self.value * self.mask


@dataclass
class Model:
    spec: ModelSpec
    params: list
    seed: int
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._index = {p.id: p for p in self.params}

    def __getitem__(self, pid: str) -> Parameter:
        try:
            return self._index[pid]
        except KeyError:
            raise MissingParameter(pid) from None

    def prunable(self) -> list:
        return [p for p in self.params if p.prunable]

    def prunable_count(self) -> int:
        return sum(p.value.size for p in self.prunable())

    def survivor_count(self) -> int:
        return int(sum(np.count_nonzero(p.mask != 0) for p in self.prunable()))

    def density(self) -> float:
        total = self.prunable_count()
        return self.survivor_count() / total if total else 1.0

    def sparsity(self) -> float:
        return 1.0 - self.density()

    def parameter_count(self) -> int:
        return sum(p.value.size for p in self.params)

    def masks(self) -> dict:
        return {p.id: p.mask.copy() for p in self.params}

    def values(self) -> dict:
        return {p.id: p.value.copy() for p in self.params}

    def copy(self) -> "Model":
        return Model(self.spec, [copy.deepcopy(p) for p in self.params], self.seed)


def param_id(layer: int, role: str) -> str:
    # zero-padded so lexicographic order equals layer order (used for tie-breaks)
    return f"layer{layer:02d}.{role}"


def build_model(spec: ModelSpec, seed: int, prune_biases: bool = False) -> Model:
    """Kaiming-uniform (fan-in) weights, zero biases, all-ones masks."""
    spec.validate()
    rng = seeding.rng(seed, "init")
    params = []
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Dense):
            wshape, fan_in, out, bias = (layer.in_features, layer.out_features), layer.in_features, layer.out_features, layer.bias
        elif isinstance(layer, Conv2D):
            k = layer.kernel
            wshape = (layer.out_channels, layer.in_channels, k, k)
            fan_in, out, bias = layer.in_channels * k * k, layer.out_channels, layer.bias
        else:
            continue
        bound = math.sqrt(6.0 / fan_in)
        w = rng.uniform(-bound, bound, size=wshape).astype(np.float32)
        params.append(Parameter(param_id(i, "weight"), "weight", w, np.ones_like(w), True, i))
        if bias:
            b = np.zeros(out, dtype=np.float32)
            params.append(Parameter(param_id(i, "bias"), "bias", b, np.ones_like(b), prune_biases, i))
    return Model(spec, params, int(seed))


# ---------------------------------------------------------------------------
# forward and losses

def forward_with(spec: ModelSpec, weights: dict, x: Tensor) -> Tensor:
    """Run ``spec`` with explicit effective-weight tensors keyed by parameter id."""
    if x.data.ndim == 0 or x.shape[1:] != spec.input_shape:
        raise DimensionMismatch(f"input shape {x.shape} does not match (batch,) + {spec.input_shape}")
    h = x
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Dense):
            h = T.matmul(h, weights[param_id(i, "weight")])
            if layer.bias:
                h = T.add_bias(h, weights[param_id(i, "bias")])
        elif isinstance(layer, Conv2D):
            h = T.conv2d(h, weights[param_id(i, "weight")], layer.stride, layer.padding)
            if layer.bias:
                h = T.add_bias(h, weights[param_id(i, "bias")])
        elif isinstance(layer, MaxPool):
            h = T.maxpool2d(h, layer.size, layer.stride)
        elif isinstance(layer, Flatten):
            h = T.flatten(h)
        if getattr(layer, "activation", "none") == "relu":
            h = T.relu(h)
    return h


def effective_weights(model: Model, requires_grad: bool = False, dtype=np.float32) -> dict:
    return {p.id: Tensor(p.effective, name=p.id, requires_grad=requires_grad, dtype=dtype)
            for p in model.params}


def _input_tensor(x, dtype=np.float32) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)


def forward_logits(model: Model, x) -> Tensor:
    """Logits of the masked network; records onto the active tape, if any."""
    weights = effective_weights(model, requires_grad=T.active_tape() is not None)
    return forward_with(model.spec, weights, _input_tensor(x))


def loss_ce(logits: Tensor, labels) -> Tensor:
    return T.softmax_cross_entropy(logits, labels)


def loss_mse(outputs: Tensor, targets) -> Tensor:
    """``0.5 * sum((y_hat - y)**2) / batch``."""
    targets = Tensor(np.asarray(targets).reshape(outputs.shape), dtype=outputs.dtype)
    return T.scale(T.tsum(T.square(T.sub(outputs, targets))), 0.5 / outputs.shape[0])


LossFn = Callable[[Tensor, object], Tensor]


def loss_and_grads(model: Model, batch, loss_fn: LossFn = loss_ce) -> tuple[float, GradientMap]:
    x, y = batch
    if len(x) == 0:
        raise DimensionMismatch("empty batch")
    with Tape() as tape:
        loss = loss_fn(forward_logits(model, x), y)
    return loss.item(), T.backward(tape, loss)


def model_grads(model: Model, batch, loss_fn: LossFn = loss_ce) -> GradientMap:
    """Gradients of the batch loss with respect to the effective weights ``theta * m``.

    Pruned positions can carry non-zero entries: the gradient flows through
    ``w``, not ``theta``.
    """
    return loss_and_grads(model, batch, loss_fn)[1]


def batch_loss(model: Model, batch, loss_fn: LossFn = loss_ce, masks: Optional[dict] = None,
               dtype=np.float32) -> float:
    """Loss of the model on ``batch`` with optionally overridden masks, no tape."""
    x, y = batch
    weights = {}
    for p in model.params:
        m = p.mask if masks is None or p.id not in masks else masks[p.id]
        weights[p.id] = Tensor(p.value.astype(dtype) * m, name=p.id, dtype=dtype)
    return loss_fn(forward_with(model.spec, weights, Tensor(x, dtype=dtype)), y).item()


def mask_gradient(model: Model, grads: GradientMap) -> GradientMap:
    """dL/dm for every prunable parameter: ``theta * g`` by the chain rule through ``w = theta * m``."""
    out = {}
    for p in model.prunable():
        if p.id not in grads:
            raise MissingParameter(p.id)
        out[p.id] = p.value * grads[p.id]
    return out


def theta_gradient(model: Model, grads: GradientMap) -> GradientMap:
    """dL/dtheta for every parameter: ``m * g``."""
    out = {}
    for p in model.params:
        if p.id not in grads:
            raise MissingParameter(p.id)
        out[p.id] = p.mask * grads[p.id]
    return out


def predict(model: Model, x, batch_size: int = 1024) -> np.ndarray:
    """Argmax class per sample; ties resolve to the lowest class index."""
    preds = []
    for start in range(0, len(x), batch_size):
        preds.append(forward_logits(model, x[start:start + batch_size]).data.argmax(axis=1))
    return np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)
