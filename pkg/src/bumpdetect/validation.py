"""Input validation helpers shared by the estimators."""
from __future__ import annotations

import numpy as np

from .spectra import Spectrum


def check_spectra(X):
    """Return ``X`` as a non-empty list of :class:`Spectrum`.

    Accepts a single spectrum, an iterable of spectra, or an iterable of
    ``(wavelengths, fluxes)`` pairs.
    """
    if isinstance(X, Spectrum):
        return [X]
    out = []
    for item in X:
        if isinstance(item, Spectrum):
            out.append(item)
        elif isinstance(item, (tuple, list)) and len(item) == 2:
            out.append(Spectrum(*item))
        else:
            raise TypeError(f"expected Spectrum objects, got {type(item).__name__}")
    if not out:
        raise ValueError("no spectra given")
    return out


def check_labels(y, n=None):
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError("labels must be one-dimensional")
    if n is not None and y.size != n:
        raise ValueError(f"got {y.size} labels for {n} samples")
    if not np.all(np.isin(y, (0, 1))):
        raise ValueError("labels must be 0 (no bump) or 1 (bump)")
    return y.astype(np.int64)


def check_scores(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.ndim != 1 or s.shape != y.shape:
        raise ValueError("scores and labels must be 1-D arrays of equal length")
    if s.size == 0:
        raise ValueError("empty input")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    return s, check_labels(y)
