"""Traditional bump detection: reddened-composite fit, rule filter, Monte Carlo significance.

The fit works in magnitudes, where the extinction law is linear in
(c1, c2, c3). For every (x0, gamma) on a grid the three coefficients come
from a closed-form least-squares solve; the grid point with the smallest
sum of squared residuals wins.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .simulate import add_noise, mix_seed, observed_grid, synth_composite
from .spectra import (
    BumpProfile, ExtinctionParams, Spectrum, apply_extinction, bump_area,
    inverse_microns,
)
from .validation import check_spectra

MIN_POINTS = 10


class FitError(ValueError):
    pass


def default_grid():
    """x0 from 4.0 to 5.2 and gamma from 0.4 to 2.0, both in steps of 0.02."""
    x0 = np.round(4.0 + 0.02 * np.arange(61), 10)
    gamma = np.round(0.4 + 0.02 * np.arange(81), 10)
    return x0, gamma


@dataclass(frozen=True)
class FitResult:
    c1: float
    c2: float
    c3: float
    x0: float
    gamma: float
    sse: float
    n_points: int
    a_bump: float

    def to_dict(self):
        return asdict(self)

    @property
    def params(self) -> ExtinctionParams:
        return ExtinctionParams(self.c1, self.c2, BumpProfile(self.x0, self.gamma, self.c3))


def magnitude_residual(observed: Spectrum, composite: Spectrum, z_em, z_abs):
    """Absorber-frame ``x``, extinction ``y`` in magnitudes and the pixel mask."""
    rest_wl = observed.wavelengths / (1.0 + z_em)
    comp = composite.interpolate(rest_wl, fill=0.0)
    valid = (observed.fluxes > 0) & (comp > 0)
    x = inverse_microns(observed.wavelengths[valid], z_abs)
    y = -2.5 * np.log10(observed.fluxes[valid] / comp[valid])
    return x, y, valid


def _solve_grid(x, y, w, x0_grid, gamma_grid):
    """Normal-equation SSE and coefficients for every grid point."""
    sw = w.sum()
    sx, sxx = (w * x).sum(), (w * x * x).sum()
    sy, sxy, syy = (w * y).sum(), (w * x * y).sum(), (w * y * y).sum()
    x2 = x * x
    gx2 = (gamma_grid ** 2)[:, None] * x2
    d = np.empty_like(gx2)
    basis = np.stack([w, w * x, w * y], axis=1)
    n0, n1 = len(x0_grid), len(gamma_grid)
    coef = np.empty((n0, n1, 3))
    sse = np.empty((n0, n1))

    # bump-free fit, used wherever c3 comes out negative
    lin = np.linalg.solve([[sw, sx], [sx, sxx]], [sy, sxy])
    sse_lin = syy - lin @ [sy, sxy]

    for i, x0 in enumerate(x0_grid):
        np.add(gx2, (x2 - x0 * x0) ** 2, out=d)
        np.divide(x2, d, out=d)
        sd, sxd, syd = (d @ basis).T
        sdd = np.einsum("gi,gi->g", d, d * w)
        a = np.empty((n1, 3, 3))
        a[:, 0] = np.stack([np.full(n1, sw), np.full(n1, sx), sd], axis=1)
        a[:, 1] = np.stack([np.full(n1, sx), np.full(n1, sxx), sxd], axis=1)
        a[:, 2] = np.stack([sd, sxd, sdd], axis=1)
        rhs = np.stack([np.full(n1, sy), np.full(n1, sxy), syd], axis=1)
        c = np.linalg.solve(a, rhs[..., None])[..., 0]
        s = syy - np.einsum("gk,gk->g", c, rhs)
        neg = c[:, 2] < 0
        c[neg] = [lin[0], lin[1], 0.0]
        s[neg] = sse_lin
        coef[i], sse[i] = c, s
    return coef, sse


def _exact_fit(x, y, w, x0, gamma, with_bump=True):
    cols = [np.ones_like(x), x]
    if with_bump:
        x2 = x * x
        cols.append(x2 / ((x2 - x0 * x0) ** 2 + x2 * gamma * gamma))
    design = np.stack(cols, axis=1)
    sw = np.sqrt(w)
    c, *_ = np.linalg.lstsq(design * sw[:, None], y * sw, rcond=None)
    r = y - design @ c
    c = np.append(c, 0.0) if not with_bump else c
    return c, float(np.sum(w * r * r))


def fit_spectrum(observed: Spectrum, composite: Spectrum, z_em, z_abs,
                 x0_grid=None, gamma_grid=None, weights=None) -> FitResult:
    """Best-fit extinction parameters of ``observed`` against ``composite``.

    ``weights`` (one per observed pixel) turns the objective into a
    weighted SSE; unweighted by default. Ties in SSE go to the smallest
    (x0, gamma).
    """
    dx0, dg = default_grid()
    x0_grid = dx0 if x0_grid is None else np.asarray(x0_grid, dtype=np.float64)
    gamma_grid = dg if gamma_grid is None else np.asarray(gamma_grid, dtype=np.float64)
    if x0_grid.size == 0 or gamma_grid.size == 0:
        raise FitError("empty (x0, gamma) grid")
    if np.any(x0_grid <= 0) or np.any(gamma_grid <= 0):
        raise FitError("grid values must be positive")
    x, y, valid = magnitude_residual(observed, composite, z_em, z_abs)
    if x.size < MIN_POINTS:
        raise FitError(f"only {x.size} usable pixels; need at least {MIN_POINTS}")
    if np.ptp(x) == 0:
        raise FitError("singular fit: all pixels share one wavelength")
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=np.float64)[valid]

    coef, sse = _solve_grid(x, y, w, x0_grid, gamma_grid)
    # normal-equation SSE suffers cancellation near zero; re-check the best few exactly
    flat = sse.ravel()
    k = min(8, flat.size)
    cand = np.argpartition(flat, k - 1)[:k]
    best = None
    for idx in sorted(cand.tolist()):
        i, j = divmod(idx, gamma_grid.size)
        bump = coef[i, j, 2] > 0
        c, s = _exact_fit(x, y, w, x0_grid[i], gamma_grid[j], bump)
        if bump and c[2] < 0:
            c, s = _exact_fit(x, y, w, x0_grid[i], gamma_grid[j], False)
        key = (s, x0_grid[i], gamma_grid[j])
        if best is None or key < best[0]:
            best = (key, c, i, j)
    (s, x0, gamma), c, _, _ = best
    c3 = max(float(c[2]), 0.0)
    return FitResult(float(c[0]), float(c[1]), c3, float(x0), float(gamma),
                     max(s, 0.0), int(x.size), float(bump_area(c3, gamma)))


@dataclass(frozen=True)
class FilterRules:
    x0_range: tuple = (4.0, 5.2)
    gamma_range: tuple = (0.4, 2.0)
    min_a_bump: float = 0.5
    min_significance: float | None = 0.95

    def __post_init__(self):
        if self.x0_range[0] > self.x0_range[1] or self.gamma_range[0] > self.gamma_range[1]:
            raise ValueError("rule ranges must be nonempty")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("x0_range", "gamma_range"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def check_rules(result: FitResult, rules: FilterRules, significance=None):
    """Name of the first failed rule, or ``None`` when all pass.

    The significance rule only applies when a significance value is given.
    """
    if not rules.x0_range[0] <= result.x0 <= rules.x0_range[1]:
        return "peak-position"
    if not rules.gamma_range[0] <= result.gamma <= rules.gamma_range[1]:
        return "bump-width"
    if result.a_bump < rules.min_a_bump:
        return "bump-strength"
    if (rules.min_significance is not None and significance is not None
            and significance < rules.min_significance):
        return "significance"
    return None


def filter_candidates(results, rules: FilterRules = FilterRules(), significances=None):
    """Split fits into ``accepted`` and ``rejected`` (``(result, reason)`` pairs)."""
    results = list(results)
    sig = [None] * len(results) if significances is None else list(significances)
    accepted, rejected = [], []
    for r, s in zip(results, sig):
        reason = check_rules(r, rules, s)
        if reason is None:
            accepted.append(r)
        else:
            rejected.append((r, reason))
    return accepted, rejected


AREA_TOL = 1e-12


def significance(observed_fit: FitResult, composite: Spectrum, z_em, z_abs, snr,
                 n_trials=200, seed=0, wavelengths=None, x0_grid=None, gamma_grid=None):
    """Fraction of bump-free simulated fits with a smaller bump area.

    Null spectra use the fitted (c1, c2) with c3 = 0, at the same redshifts
    and signal-to-noise; trial ``i`` draws its noise with seed
    ``mix_seed(seed, i)``. Areas closer than ``AREA_TOL`` count as ties, so
    a roundoff-sized area from a bump-free fit scores as zero.
    """
    if n_trials < 100:
        raise ValueError("need at least 100 null trials")
    wavelengths = observed_grid() if wavelengths is None else wavelengths
    null = ExtinctionParams(observed_fit.c1, observed_fit.c2,
                            BumpProfile(observed_fit.x0, observed_fit.gamma, 0.0))
    clean = apply_extinction(composite, null, z_abs, z_em, wavelengths)
    below = 0
    for i in range(n_trials):
        trial = add_noise(clean, snr, mix_seed(seed, i))
        fit = fit_spectrum(trial, composite, z_em, z_abs, x0_grid, gamma_grid)
        below += fit.a_bump < observed_fit.a_bump - AREA_TOL
    return below / n_trials


class BumpFitDetector(ClassifierMixin, BaseEstimator):
    """Curve-fitting detector with a classifier interface.

    Needs both redshifts for every spectrum. ``decision_function`` returns
    the fitted bump area; ``predict`` applies the filter rules.
    """

    def __init__(self, composite=None, rules=None, x0_grid=None, gamma_grid=None):
        self.composite = composite
        self.rules = rules
        self.x0_grid = x0_grid
        self.gamma_grid = gamma_grid

    def fit(self, X=None, y=None):
        self.composite_ = self.composite if self.composite is not None else synth_composite()
        self.rules_ = self.rules if self.rules is not None else FilterRules()
        self.classes_ = np.array([0, 1])
        return self

    def fit_results(self, X, z_em, z_abs):
        if not hasattr(self, "composite_"):
            self.fit()
        spectra = check_spectra(X)
        z_em = np.broadcast_to(np.asarray(z_em, dtype=np.float64), (len(spectra),))
        z_abs = np.broadcast_to(np.asarray(z_abs, dtype=np.float64), (len(spectra),))
        return [fit_spectrum(s, self.composite_, ze, za, self.x0_grid, self.gamma_grid)
                for s, ze, za in zip(spectra, z_em, z_abs)]

    def decision_function(self, X, z_em, z_abs):
        return np.array([r.a_bump for r in self.fit_results(X, z_em, z_abs)])

    def predict(self, X, z_em, z_abs):
        return np.array([int(check_rules(r, self.rules_) is None)
                         for r in self.fit_results(X, z_em, z_abs)])

    def score(self, X, y, z_em=None, z_abs=None):
        return float(np.mean(self.predict(X, z_em, z_abs) == np.asarray(y)))
