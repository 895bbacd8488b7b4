"""Layer types with explicit forward and backward passes.

Layers only hold hyperparameters. Parameters live in the model and are
passed in, so one layer description can be shared across models. Spatial
tensors are laid out ``(N, C, H, W)``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    pass


class Layer:
    kind = "layer"

    def output_shape(self, in_shape):
        return tuple(in_shape)

    def param_shapes(self, in_shape):
        return []

    def init_params(self, in_shape, rng):
        return []

    def forward(self, params, x):
        raise NotImplementedError

    def backward(self, params, cache, dy, need_dx=True):
        """``(dx, param grads)``; ``dx`` may be None when ``need_dx`` is False."""
        raise NotImplementedError

    def to_dict(self):
        return {"type": self.kind, **asdict(self)}


@dataclass(frozen=True)
class Dense(Layer):
    out: int
    kind = "dense"

    def output_shape(self, in_shape):
        if len(in_shape) != 1:
            raise ShapeError(f"Dense expects a flat input, got shape {tuple(in_shape)}")
        if self.out < 1:
            raise ShapeError("Dense width must be positive")
        return (self.out,)

    def param_shapes(self, in_shape):
        return [(in_shape[0], self.out), (self.out,)]

    def init_params(self, in_shape, rng):
        fan_in = in_shape[0]
        w = rng.standard_normal((fan_in, self.out)) * math.sqrt(2.0 / fan_in)
        return [w, np.zeros(self.out)]

    def forward(self, params, x):
        w, b = params
        return x @ w + b, x

    def backward(self, params, x, dy, need_dx=True):
        w, _ = params
        return (dy @ w.T if need_dx else None), [x.T @ dy, dy.sum(axis=0)]


@dataclass(frozen=True)
class Conv(Layer):
    """Stride-1 convolution with 'same' zero padding (odd kernels only)."""

    filters: int
    kh: int
    kw: int
    kind = "conv"

    def _chw(self, in_shape):
        if len(in_shape) == 2:
            return (1, *in_shape)
        if len(in_shape) == 3:
            return tuple(in_shape)
        raise ShapeError(f"Conv expects (C, H, W) or (H, W), got {tuple(in_shape)}")

    def output_shape(self, in_shape):
        if self.filters < 1 or self.kh % 2 == 0 or self.kw % 2 == 0 or self.kh < 1:
            raise ShapeError("Conv needs positive filters and odd kernel sizes")
        _, h, w = self._chw(in_shape)
        return (self.filters, h, w)

    def param_shapes(self, in_shape):
        c = self._chw(in_shape)[0]
        return [(self.filters, c, self.kh, self.kw), (self.filters,)]

    def init_params(self, in_shape, rng):
        wshape, bshape = self.param_shapes(in_shape)
        fan_in = wshape[1] * self.kh * self.kw
        return [rng.standard_normal(wshape) * math.sqrt(2.0 / fan_in), np.zeros(bshape)]

    def forward(self, params, x):
        w, b = params
        orig_ndim = x.ndim
        if x.ndim == 3:
            x = x[:, None]
        n, c, h, wd = x.shape
        ph, pw = self.kh // 2, self.kw // 2
        # channels-last padded copy so the column gather below copies runs of C
        xp = np.zeros((n, h + 2 * ph, wd + 2 * pw, c))
        xp[:, ph:ph + h, pw:pw + wd, :] = x.transpose(0, 2, 3, 1)
        # (N, H, W, C, kh, kw) view -> (N*H*W, kh*kw*C) columns
        win = sliding_window_view(xp, (self.kh, self.kw), axis=(1, 2))
        cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * h * wd, -1)
        wmat = w.transpose(0, 2, 3, 1).reshape(self.filters, -1)
        out = cols @ wmat.T
        out += b
        y = out.reshape(n, h, wd, self.filters).transpose(0, 3, 1, 2)
        return np.ascontiguousarray(y), (cols, x.shape, orig_ndim)

    def backward(self, params, cache, dy, need_dx=True):
        w, _ = params
        cols, xshape, orig_ndim = cache
        n, c, h, wd = xshape
        dy_cols = dy.transpose(0, 2, 3, 1).reshape(n * h * wd, self.filters)
        dw = (dy_cols.T @ cols).reshape(self.filters, self.kh, self.kw, c)
        dw = dw.transpose(0, 3, 1, 2)
        db = dy_cols.sum(axis=0)
        if not need_dx:
            return None, [np.ascontiguousarray(dw), db]
        wmat = w.transpose(0, 2, 3, 1).reshape(self.filters, -1)
        dcols = (dy_cols @ wmat).reshape(n, h, wd, self.kh, self.kw, c)
        ph, pw = self.kh // 2, self.kw // 2
        dxp = np.zeros((n, h + 2 * ph, wd + 2 * pw, c))
        for i in range(self.kh):
            for j in range(self.kw):
                dxp[:, i:i + h, j:j + wd, :] += dcols[:, :, :, i, j, :]
        dx = dxp[:, ph:ph + h, pw:pw + wd, :].transpose(0, 3, 1, 2)
        if orig_ndim == 3:
            dx = dx[:, 0]
        return np.ascontiguousarray(dx), [np.ascontiguousarray(dw), db]


@dataclass(frozen=True)
class MaxPool(Layer):
    """2x2 max pooling, stride 2, odd trailing rows/columns dropped."""

    kind = "maxpool"

    def output_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError(f"MaxPool expects (C, H, W), got {tuple(in_shape)}")
        c, h, w = in_shape
        if h < 2 or w < 2:
            raise ShapeError("MaxPool input too small")
        return (c, h // 2, w // 2)

    @staticmethod
    def _corners(x):
        ho, wo = x.shape[2] // 2, x.shape[3] // 2
        return [x[:, :, i:2 * ho:2, j:2 * wo:2] for i in (0, 1) for j in (0, 1)]

    def forward(self, params, x):
        a, b, c, d = self._corners(x)
        y = np.maximum(np.maximum(a, b), np.maximum(c, d))
        # route each gradient to the first maximal corner (row-major order)
        masks = [a == y]
        taken = masks[0].copy()
        for corner in (b, c, d):
            m = (corner == y) & ~taken
            taken |= m
            masks.append(m)
        return y, (masks, x.shape)

    def backward(self, params, cache, dy, need_dx=True):
        masks, shape = cache
        dx = np.zeros(shape)
        for view, m in zip(self._corners(dx), masks):
            np.multiply(dy, m, out=view)
        return dx, []


@dataclass(frozen=True)
class ReLU(Layer):
    kind = "relu"

    def forward(self, params, x):
        mask = x > 0
        return x * mask, mask

    def backward(self, params, mask, dy, need_dx=True):
        return dy * mask, []


@dataclass(frozen=True)
class Flatten(Layer):
    kind = "flatten"

    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, params, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, params, shape, dy, need_dx=True):
        return dy.reshape(shape), []


@dataclass(frozen=True)
class Softmax(Layer):
    kind = "softmax"

    def output_shape(self, in_shape):
        if len(in_shape) != 1:
            raise ShapeError("Softmax expects a flat input")
        return tuple(in_shape)

    def forward(self, params, x):
        p = softmax(x)
        return p, p

    def backward(self, params, p, dy, need_dx=True):
        return p * (dy - (dy * p).sum(axis=1, keepdims=True)), []


LAYER_TYPES = {cls.kind: cls for cls in (Dense, Conv, MaxPool, ReLU, Flatten, Softmax)}


def layer_from_dict(d):
    d = dict(d)
    kind = d.pop("type")
    try:
        return LAYER_TYPES[kind](**d)
    except KeyError:
        raise ShapeError(f"unknown layer type {kind!r}") from None


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits, labels):
    """Mean cross-entropy of softmax(logits) and its gradient w.r.t. logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    n = logits.shape[0]
    loss = float(np.mean(logsum - z[np.arange(n), labels]))
    grad = np.exp(z - logsum[:, None])
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n
