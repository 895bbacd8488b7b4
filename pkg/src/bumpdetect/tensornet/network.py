from __future__ import annotations

import copy
import re
from dataclasses import dataclass, field

import numpy as np

from .layers import (
    Conv, Dense, Flatten, MaxPool, ReLU, ShapeError, Softmax,
    cross_entropy, layer_from_dict,
)


@dataclass(frozen=True)
class NetworkSpec:
    input_shape: tuple
    layers: tuple
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.input_shape or min(self.input_shape) < 1:
            raise ShapeError(f"bad input shape {self.input_shape}")
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Softmax) and i != len(self.layers) - 1:
                raise ShapeError("Softmax may only be the final layer")
        self.shapes()

    def shapes(self):
        """Input shape followed by every layer's output shape."""
        shapes = [self.input_shape]
        for layer in self.layers:
            shapes.append(layer.output_shape(shapes[-1]))
        return shapes

    @property
    def output_shape(self):
        return self.shapes()[-1]

    def to_dict(self):
        return {"name": self.name, "input_shape": list(self.input_shape),
                "layers": [layer.to_dict() for layer in self.layers]}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["input_shape"]),
                   tuple(layer_from_dict(x) for x in d["layers"]),
                   d.get("name", "custom"))


def fc_preset(hidden_layers, width, input_dim=4761):
    layers = []
    for _ in range(hidden_layers):
        layers += [Dense(width), ReLU()]
    layers += [Dense(2), Softmax()]
    return NetworkSpec((input_dim,), layers, f"FC{hidden_layers}-{width}")


def cnn4_ref():
    """Four 50-filter convolutions (5x5, 3x3, 3x3, 3x3) on a 69x69 matrix."""
    layers = [
        Conv(50, 5, 5), ReLU(), MaxPool(),
        Conv(50, 3, 3), ReLU(), MaxPool(),
        Conv(50, 3, 3), ReLU(),
        Conv(50, 3, 3), ReLU(), MaxPool(),
        Flatten(), Dense(256), ReLU(), Dense(2), Softmax(),
    ]
    return NetworkSpec((69, 69), layers, "CNN4-REF")


def cnn2_small():
    layers = [
        Conv(16, 5, 5), ReLU(), MaxPool(),
        Conv(16, 3, 3), ReLU(), MaxPool(),
        Flatten(), Dense(64), ReLU(), Dense(2), Softmax(),
    ]
    return NetworkSpec((69, 69), layers, "CNN2-SMALL")


def img_cnn():
    """Small ConvNet for 256x256 line-plot images."""
    layers = [
        Conv(8, 5, 5), ReLU(), MaxPool(),
        Conv(16, 3, 3), ReLU(), MaxPool(),
        Conv(16, 3, 3), ReLU(), MaxPool(), MaxPool(),
        Flatten(), Dense(64), ReLU(), Dense(2), Softmax(),
    ]
    return NetworkSpec((256, 256), layers, "IMG-CNN")


_NAMED = {"CNN4-REF": cnn4_ref, "CNN2-SMALL": cnn2_small, "IMG-CNN": img_cnn}


def preset(name, input_dim=4761) -> NetworkSpec:
    """``FC{k}-{n}``, ``CNN4-REF``, ``CNN2-SMALL`` or ``IMG-CNN``."""
    m = re.fullmatch(r"FC(\d+)-(\d+)", name)
    if m:
        return fc_preset(int(m.group(1)), int(m.group(2)), input_dim)
    try:
        return _NAMED[name]()
    except KeyError:
        raise ValueError(f"unknown network preset {name!r}") from None


PRESETS = ("FC{k}-{n}",) + tuple(_NAMED)


def param_count(spec: NetworkSpec) -> int:
    shapes = spec.shapes()
    return sum(int(np.prod(s)) for layer, shp in zip(spec.layers, shapes)
               for s in layer.param_shapes(shp))


@dataclass
class Model:
    spec: NetworkSpec
    params: list
    epoch: int = 0
    meta: dict = field(default_factory=dict)

    def copy(self) -> "Model":
        return Model(self.spec, copy.deepcopy(self.params), self.epoch, dict(self.meta))

    def flat_params(self):
        return [p for layer_params in self.params for p in layer_params]


def init(spec: NetworkSpec, seed=0) -> Model:
    """He-normal weights, zero biases."""
    rng = np.random.default_rng(seed)
    shapes = spec.shapes()
    params = [layer.init_params(shp, rng) for layer, shp in zip(spec.layers, shapes)]
    return Model(spec, params)


def _check_batch(spec, batch):
    batch = np.asarray(batch, dtype=np.float64)
    if batch.shape[1:] != spec.input_shape:
        raise ShapeError(f"batch shape {batch.shape[1:]} does not match "
                         f"network input {spec.input_shape}")
    return batch


def _run(model, x, stop=None):
    caches = []
    layers = model.spec.layers if stop is None else model.spec.layers[:stop]
    for layer, params in zip(layers, model.params):
        x, cache = layer.forward(params, x)
        caches.append(cache)
    return x, caches


def _head_end(spec):
    return len(spec.layers) - 1 if isinstance(spec.layers[-1], Softmax) else len(spec.layers)


def forward(model: Model, batch) -> np.ndarray:
    """Class probabilities, shape ``(N, 2)``."""
    return _run(model, _check_batch(model.spec, batch))[0]


def logits(model: Model, batch) -> np.ndarray:
    """Pre-softmax outputs."""
    return _run(model, _check_batch(model.spec, batch), _head_end(model.spec))[0]


def activations(model: Model, batch, layer_index):
    """Output of layer ``layer_index`` (0-based)."""
    return _run(model, _check_batch(model.spec, batch), layer_index + 1)[0]


def backprop(model: Model, x, grad_out, stop):
    """Forward through ``layers[:stop]`` on ``x``, then pull ``grad_out`` back.

    Returns the gradient w.r.t. ``x`` and per-layer parameter gradients.
    """
    _, caches = _run(model, x, stop)
    grads = [None] * stop
    g = grad_out
    for i in range(stop - 1, -1, -1):
        g, grads[i] = model.spec.layers[i].backward(model.params[i], caches[i], g)
    return g, grads


def loss_and_grads(model: Model, batch, labels):
    """Mean cross-entropy and gradients for every parameter tensor.

    Softmax is folded into the loss so the gradient w.r.t. the logits is
    ``(p - onehot) / N``.
    """
    loss, grads, _ = _loss_grads_logits(model, batch, labels)
    return loss, grads


def _loss_grads_logits(model, batch, labels, frozen=0):
    x = _check_batch(model.spec, batch)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (x.shape[0],):
        raise ShapeError("labels must be a vector with one entry per sample")
    if np.any((labels < 0) | (labels > 1)):
        raise ValueError("labels must be 0 or 1")
    stop = _head_end(model.spec)
    z, caches = _run(model, x, stop)
    loss, g = cross_entropy(z, labels)
    grads = [[np.zeros_like(p) for p in ps] for ps in model.params]
    for i in range(stop - 1, frozen - 1, -1):
        g, grads[i] = model.spec.layers[i].backward(model.params[i], caches[i], g,
                                                    need_dx=i > frozen)
    return loss, grads, z
