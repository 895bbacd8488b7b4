"""Looking inside trained models, plus SVG line plots and PNG export.

Filter grids, feature maps and gradient-ascent reconstructions come back
as float arrays in [0, 1]; :func:`write_png` stores them as 8-bit
grayscale.
"""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np
from PIL import Image

from .spectra import Spectrum
from .tensornet.layers import Conv, ReLU
from .tensornet.network import Model, _check_batch, _head_end, _run, backprop


def _minmax(a, flat_value):
    lo, hi = float(a.min()), float(a.max())
    if hi == lo:
        return np.full(a.shape, flat_value)
    return (a - lo) / (hi - lo)


def render_filters(model: Model, layer_index=0):
    """Tile the filters of a Conv layer into one image.

    Each filter is averaged over input channels and min-max scaled on its
    own (a constant filter becomes 0.5). Tiles are laid out row-major on a
    ``ceil(sqrt(F))``-wide grid, separated by 1-px white lines; unused
    tiles stay white.
    """
    layer = model.spec.layers[layer_index]
    if not isinstance(layer, Conv):
        raise ValueError(f"layer {layer_index} is {type(layer).__name__}, not Conv")
    w = model.params[layer_index][0].mean(axis=1)
    f, kh, kw = w.shape
    cols = math.ceil(math.sqrt(f))
    rows = math.ceil(f / cols)
    grid = np.ones((rows * (kh + 1) - 1, cols * (kw + 1) - 1))
    for k in range(f):
        r, c = divmod(k, cols)
        grid[r * (kh + 1):r * (kh + 1) + kh, c * (kw + 1):c * (kw + 1) + kw] = \
            _minmax(w[k], 0.5)
    return grid


def feature_maps(model: Model, sample, layer_index):
    """Per-channel activation maps after layer ``layer_index``.

    A Conv layer directly followed by ReLU reports the rectified output.
    Maps are min-max scaled individually; a constant map comes back all
    zeros (no activation to show).
    """
    x = _check_batch(model.spec, np.asarray(sample)[None])
    layers = model.spec.layers
    stop = layer_index + 1
    if isinstance(layers[layer_index], Conv) and stop < len(layers) \
            and isinstance(layers[stop], ReLU):
        stop += 1
    out, _ = _run(model, x, stop)
    if out.ndim != 4:
        raise ValueError(f"layer {layer_index} output is not spatial: {out.shape[1:]}")
    return [_minmax(m, 0.0) for m in out[0]]


def reconstruct_input(model: Model, target_class=1, steps=200, step_size=0.1, seed=0):
    """Gradient ascent on the target class logit, starting from noise.

    Starts from uniform noise in [0.4, 0.6], takes ``steps`` fixed-size
    gradient steps, clamping to [0, 1] after each. Returns the final input
    and the logit after every step (initial value first).
    """
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.4, 0.6, size=(1, *model.spec.input_shape))
    stop = _head_end(model.spec)
    onehot = np.zeros((1, model.spec.shapes()[stop][0]))
    onehot[0, target_class] = 1.0
    trajectory = []
    for _ in range(steps):
        z, _ = _run(model, x, stop)
        trajectory.append(float(z[0, target_class]))
        g, _ = backprop(model, x, onehot, stop)
        x = np.clip(x + step_size * g, 0.0, 1.0)
    trajectory.append(float(_run(model, x, stop)[0][0, target_class]))
    return x[0], trajectory


def write_png(array, path):
    """Save a [0, 1] array as 8-bit grayscale PNG (0 = black)."""
    a = np.asarray(array, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("PNG export needs a 2-D array")
    img = np.round(np.clip(a, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(img, mode="L").save(path, format="PNG")


# --- SVG line plots --------------------------------------------------------

WIDTH, HEIGHT = 640, 400
MARGIN = {"left": 70, "right": 20, "top": 20, "bottom": 50}
COLORS = ("#000000", "#2ca02c", "#d62728", "#1f77b4", "#ff7f0e", "#9467bd")


class PlotTransform:
    """Affine data -> pixel map of the plot area.

    ``px = left + (x - x_min) / (x_max - x_min) * (WIDTH - left - right)``
    ``py = top + (y_max - y) / (y_max - y_min) * (HEIGHT - top - bottom)``
    """

    def __init__(self, xlim, ylim):
        self.xlim, self.ylim = xlim, ylim
        self.w = WIDTH - MARGIN["left"] - MARGIN["right"]
        self.h = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def __call__(self, x, y):
        (x0, x1), (y0, y1) = self.xlim, self.ylim
        px = MARGIN["left"] + (np.asarray(x) - x0) / (x1 - x0) * self.w
        py = MARGIN["top"] + (y1 - np.asarray(y)) / (y1 - y0) * self.h
        return px, py


def _limits(lo, hi):
    if hi == lo:
        return lo - 1.0, hi + 1.0
    return lo, hi


def _ticks(lo, hi, n=5):
    return [lo + (hi - lo) * k / n for k in range(n + 1)]


def svg_line_plot(series, xlabel, ylabel, xlim=None, ylim=None, title=None):
    """``series``: list of ``(name, x, y)``; one ``<polyline>`` each."""
    if not series:
        raise ValueError("nothing to plot")
    xs = np.concatenate([np.asarray(s[1], dtype=float) for s in series])
    ys = np.concatenate([np.asarray(s[2], dtype=float) for s in series])
    if xs.size == 0:
        raise ValueError("nothing to plot")
    xlim = xlim or _limits(float(xs.min()), float(xs.max()))
    ylim = ylim or _limits(float(ys.min()), float(ys.max()))
    tf = PlotTransform(xlim, ylim)
    left, top = MARGIN["left"], MARGIN["top"]
    bottom = HEIGHT - MARGIN["bottom"]
    right = WIDTH - MARGIN["right"]
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<g class="axes" stroke="black" stroke-width="1">'
        f'<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}"/>'
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}"/></g>',
    ]
    for t in _ticks(*xlim):
        px, _ = tf(t, ylim[0])
        out.append(f'<text x="{px:.2f}" y="{bottom + 16}" font-size="11" '
                   f'text-anchor="middle">{t:.4g}</text>')
    for t in _ticks(*ylim):
        _, py = tf(xlim[0], t)
        out.append(f'<text x="{left - 6}" y="{py + 4:.2f}" font-size="11" '
                   f'text-anchor="end">{t:.4g}</text>')
    out.append(f'<text x="{(left + right) / 2}" y="{HEIGHT - 10}" font-size="13" '
               f'text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{(top + bottom) / 2}" font-size="13" text-anchor="middle" '
               f'transform="rotate(-90 16 {(top + bottom) / 2})">{escape(ylabel)}</text>')
    if title:
        out.append(f'<text x="{(left + right) / 2}" y="14" font-size="13" '
                   f'text-anchor="middle">{escape(title)}</text>')
    for k, (name, x, y) in enumerate(series):
        px, py = tf(x, y)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(np.atleast_1d(px), np.atleast_1d(py)))
        label = escape(str(name), {'"': "&quot;"})
        out.append(f'<polyline class="series" data-name="{label}" '
                   f'fill="none" stroke="{COLORS[k % len(COLORS)]}" stroke-width="1" '
                   f'points="{pts}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot_spectrum(s: Spectrum, overlays=(), title=None):
    """SVG of a spectrum with optional ``(name, Spectrum)`` overlay curves."""
    if s is None or len(s) == 0:
        raise ValueError("empty spectrum")
    series = [("spectrum", s.wavelengths, s.fluxes)]
    series += [(name, o.wavelengths, o.fluxes) for name, o in overlays]
    return svg_line_plot(series, "Wavelength (Å)", "Flux", title=title)


def plot_roc(curves, title="ROC"):
    """SVG of ``(name, RocCurve)`` pairs on the unit square."""
    series = [(name, c.fpr, c.tpr) for name, c in curves]
    return svg_line_plot(series, "False positive rate", "True positive rate",
                         xlim=(0.0, 1.0), ylim=(0.0, 1.0), title=title)
