"""Model input encodings: padded flux vector, folded matrix, line-plot image.

Also holds the ``BENC`` batch container used to pass encoded data between
CLI steps.
"""
from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .spectra import Spectrum
from .validation import check_spectra

VECTOR_LEN = 4761
MATRIX_SIDE = 69
IMAGE_SIDE = 256
DEFAULT_AXES = (800.0, 8800.0, 0.0, 50.0)

ENCODINGS = ("vector", "matrix", "image")
SHAPES = {"vector": (VECTOR_LEN,), "matrix": (MATRIX_SIDE, MATRIX_SIDE),
          "image": (IMAGE_SIDE, IMAGE_SIDE)}


@dataclass(frozen=True, eq=False)
class EncodedSample:
    encoding: str
    data: np.ndarray
    label: int | None = None
    truncated: bool = False

    def __post_init__(self):
        if self.encoding not in SHAPES:
            raise ValueError(f"unknown encoding {self.encoding!r}")
        if self.data.shape != SHAPES[self.encoding]:
            raise ValueError(f"{self.encoding} data must have shape "
                             f"{SHAPES[self.encoding]}, got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("encoded values must be finite")


def to_vector(s: Spectrum, normalize=True, strict=True, label=None) -> EncodedSample:
    """Fluxes in wavelength order, zero-padded to 4761.

    With ``normalize`` the fluxes are divided by the median of the nonzero
    fluxes. Longer spectra raise unless ``strict=False``, which truncates
    the tail and sets ``truncated``.
    """
    f = s.fluxes.copy()
    truncated = False
    if f.size > VECTOR_LEN:
        if strict:
            raise ValueError(f"spectrum has {f.size} samples, more than {VECTOR_LEN}")
        f, truncated = f[:VECTOR_LEN], True
    if normalize:
        nz = f[f != 0]
        if nz.size:
            med = np.median(nz)
            if med > 0:
                f = f / med
    out = np.zeros(VECTOR_LEN)
    out[:f.size] = f
    return EncodedSample("vector", out, label, truncated)


def to_matrix(v: EncodedSample | np.ndarray) -> EncodedSample:
    """Row-major fold: ``M[r, c] = v[69 r + c]``."""
    data = v.data if isinstance(v, EncodedSample) else np.asarray(v, dtype=np.float64)
    if data.shape != (VECTOR_LEN,):
        raise ValueError(f"matrix fold needs a length-{VECTOR_LEN} vector, got {data.shape}")
    label = v.label if isinstance(v, EncodedSample) else None
    return EncodedSample("matrix", data.reshape(MATRIX_SIDE, MATRIX_SIDE).copy(), label)


def from_matrix(m: EncodedSample) -> EncodedSample:
    return EncodedSample("vector", m.data.reshape(-1).copy(), m.label)


def _round_half_up(v):
    return np.floor(v + 0.5).astype(np.int64)


def line_pixels(c0, r0, c1, r1):
    """Integer pixels of the segments ``(c0, r0) -> (c1, r1)``, vectorized.

    Steps one pixel at a time along the major axis and rounds the minor
    coordinate half-up, so shallow lines get exactly one pixel per column.
    """
    c0, r0, c1, r1 = (np.atleast_1d(np.asarray(a, dtype=np.int64)) for a in (c0, r0, c1, r1))
    dc, dr = c1 - c0, r1 - r0
    n = np.maximum(np.abs(dc), np.abs(dr))
    steps = n + 1
    seg = np.repeat(np.arange(c0.size), steps)
    k = np.arange(steps.sum()) - np.repeat(np.cumsum(steps) - steps, steps)
    nn = np.maximum(n[seg], 1)
    # c0 + round_half_up(k * dc / n) in exact integer arithmetic
    cols = c0[seg] + (2 * k * dc[seg] + nn) // (2 * nn)
    rows = r0[seg] + (2 * k * dr[seg] + nn) // (2 * nn)
    return cols, rows


def to_image(s: Spectrum, axes=DEFAULT_AXES, label=None) -> EncodedSample:
    """Rasterize the spectrum as a 1-px black polyline on white, 256x256.

    ``axes = (wl_min, wl_max, f_min, f_max)``. Only samples inside the
    wavelength range are drawn; fluxes are clamped to the flux range.
    ``col = round((wl - wl_min) / (wl_max - wl_min) * 255)`` and
    ``row = round((f_max - f) / (f_max - f_min) * 255)``, rounding half up.
    """
    wl_min, wl_max, f_min, f_max = (float(a) for a in axes)
    if not (wl_min < wl_max and f_min < f_max):
        raise ValueError(f"degenerate image axes {axes}")
    img = np.ones((IMAGE_SIDE, IMAGE_SIDE))
    keep = (s.wavelengths >= wl_min) & (s.wavelengths <= wl_max)
    if keep.any():
        wl = s.wavelengths[keep]
        f = np.clip(s.fluxes[keep], f_min, f_max)
        span = IMAGE_SIDE - 1
        cols = _round_half_up((wl - wl_min) / (wl_max - wl_min) * span)
        rows = _round_half_up((f_max - f) / (f_max - f_min) * span)
        if cols.size == 1:
            img[rows[0], cols[0]] = 0.0
        else:
            pc, pr = line_pixels(cols[:-1], rows[:-1], cols[1:], rows[1:])
            img[pr, pc] = 0.0
    return EncodedSample("image", img, label)


def network_input(encoding, batch):
    """Map stored encodings to network inputs (images become curve=1, background=0)."""
    batch = np.asarray(batch, dtype=np.float64)
    return 1.0 - batch if encoding == "image" else batch


class VectorEncoder(TransformerMixin, BaseEstimator):
    """Spectra -> ``(n_samples, 4761)`` padded flux vectors."""

    def __init__(self, normalize=True, strict=True):
        self.normalize = normalize
        self.strict = strict

    def fit(self, X, y=None):
        check_spectra(X)
        self.n_features_out_ = VECTOR_LEN
        return self

    def transform(self, X):
        spectra = check_spectra(X)
        rows = []
        for s in spectra:
            enc = to_vector(s, self.normalize, self.strict)
            if enc.truncated:
                warnings.warn(f"spectrum truncated from {len(s)} to {VECTOR_LEN} samples")
            rows.append(enc.data)
        return np.stack(rows)


class MatrixEncoder(TransformerMixin, BaseEstimator):
    """Spectra or 4761-vectors -> ``(n_samples, 69, 69)`` matrices."""

    def __init__(self, normalize=True, strict=True):
        self.normalize = normalize
        self.strict = strict

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        if isinstance(X, np.ndarray) and X.ndim == 2:
            if X.shape[1] != VECTOR_LEN:
                raise ValueError(f"expected {VECTOR_LEN} features, got {X.shape[1]}")
            vectors = X
        else:
            vectors = VectorEncoder(self.normalize, self.strict).transform(X)
        return vectors.reshape(-1, MATRIX_SIDE, MATRIX_SIDE).copy()

    def inverse_transform(self, X):
        return np.asarray(X).reshape(-1, VECTOR_LEN).copy()


class ImageEncoder(TransformerMixin, BaseEstimator):
    """Spectra -> ``(n_samples, 256, 256)`` line-plot images.

    With ``rest_frame=True`` each spectrum is shifted by its ``z_em``
    (passed to :meth:`transform`) before drawing.
    """

    def __init__(self, axes=DEFAULT_AXES, rest_frame=True):
        self.axes = axes
        self.rest_frame = rest_frame

    def fit(self, X, y=None, z_em=None):
        return self

    def transform(self, X, z_em=None):
        spectra = check_spectra(X)
        if self.rest_frame:
            if z_em is None:
                raise ValueError("rest_frame images need z_em for every spectrum")
            z_em = np.broadcast_to(np.asarray(z_em, dtype=np.float64), (len(spectra),))
            spectra = [Spectrum(s.wavelengths / (1.0 + z), s.fluxes)
                       for s, z in zip(spectra, z_em)]
        return np.stack([to_image(s, self.axes).data for s in spectra])

    def fit_transform(self, X, y=None, z_em=None):
        return self.fit(X, y).transform(X, z_em=z_em)


def encode(spectra, encoding, z_em=None, normalize=True, axes=DEFAULT_AXES,
           rest_frame=True):
    if encoding == "vector":
        return VectorEncoder(normalize).transform(spectra)
    if encoding == "matrix":
        return MatrixEncoder(normalize).transform(spectra)
    if encoding == "image":
        return ImageEncoder(axes, rest_frame).transform(spectra, z_em=z_em)
    raise ValueError(f"unknown encoding {encoding!r}; choose from {ENCODINGS}")


# --- BENC batch container -------------------------------------------------

BENC_MAGIC = b"BENC"
BENC_VERSION = 1
NO_LABEL = 255


class BatchFormatError(ValueError):
    pass


def _record_dtype(shape):
    return np.dtype([("label", "u1"), ("data", "<f4", shape)])


def write_batch(path, encoding, data, labels=None, ids=None):
    """Write ``data`` (``(N, *shape)``) as a BENC container.

    Layout: magic, u32 version, u8 encoding tag, u32 count, u8 ndim,
    ndim x u32 shape, then per sample a label byte and float32 values.
    Sample ids, when given, go to a ``<path>.ids.json`` sidecar.
    """
    data = np.asarray(data)
    shape = SHAPES[encoding]
    if data.shape[1:] != shape:
        raise ValueError(f"{encoding} batch needs shape (N, {shape}), got {data.shape}")
    n = data.shape[0]
    rec = np.zeros(n, dtype=_record_dtype(shape))
    rec["label"] = NO_LABEL if labels is None else np.asarray(labels, dtype=np.uint8)
    rec["data"] = data
    header = BENC_MAGIC + struct.pack("<IBIB", BENC_VERSION, ENCODINGS.index(encoding),
                                      n, len(shape))
    header += struct.pack(f"<{len(shape)}I", *shape)
    Path(path).write_bytes(header + rec.tobytes())
    if ids is not None:
        Path(str(path) + ".ids.json").write_text(json.dumps(list(ids)) + "\n")


def read_batch(path):
    """Return ``(encoding, data float32 (N, *shape), labels or None, ids or None)``."""
    raw = Path(path).read_bytes()
    if raw[:4] != BENC_MAGIC:
        raise BatchFormatError(f"{path}: not an encoded batch file")
    version, tag, n, ndim = struct.unpack_from("<IBIB", raw, 4)
    if version != BENC_VERSION:
        raise BatchFormatError(f"{path}: unsupported batch version {version}")
    if tag >= len(ENCODINGS):
        raise BatchFormatError(f"{path}: unknown encoding tag {tag}")
    off = 4 + struct.calcsize("<IBIB")
    shape = struct.unpack_from(f"<{ndim}I", raw, off)
    off += 4 * ndim
    encoding = ENCODINGS[tag]
    if tuple(shape) != SHAPES[encoding]:
        raise BatchFormatError(f"{path}: shape {shape} does not match {encoding}")
    dt = _record_dtype(tuple(shape))
    if len(raw) - off != n * dt.itemsize:
        raise BatchFormatError(f"{path}: truncated or oversized payload")
    rec = np.frombuffer(raw, dtype=dt, count=n, offset=off)
    labels = rec["label"].astype(np.int64)
    labels = None if np.all(labels == NO_LABEL) else labels
    ids_path = Path(str(path) + ".ids.json")
    ids = json.loads(ids_path.read_text()) if ids_path.exists() else None
    return encoding, np.array(rec["data"]), labels, ids
