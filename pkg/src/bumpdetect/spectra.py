"""Spectral data types and the linear-plus-Drude extinction model.

Wavelengths are kept in Angstrom; the extinction formulas work in inverse
micrometres, ``x = 1e4 / wavelength``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Spectrum",
    "BumpProfile",
    "ExtinctionParams",
    "drude",
    "extinction",
    "bump_area",
    "c3_from_area",
    "inverse_microns",
    "apply_extinction",
    "bump_center_angstrom",
    "read_spectrum",
    "write_spectrum",
]

# 2175 A bump peak in inverse micrometres
DEFAULT_X0 = 4.59
DEFAULT_GAMMA = 1.0
DEFAULT_A_BUMP = 2.0


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Flux samples on a strictly ascending wavelength grid (Angstrom)."""

    wavelengths: np.ndarray
    fluxes: np.ndarray

    def __post_init__(self):
        wl = np.array(self.wavelengths, dtype=np.float64)
        fl = np.array(self.fluxes, dtype=np.float64)
        if wl.ndim != 1 or fl.ndim != 1:
            raise ValueError("wavelengths and fluxes must be one-dimensional")
        if wl.shape != fl.shape:
            raise ValueError(
                f"length mismatch: {wl.size} wavelengths vs {fl.size} fluxes")
        if wl.size < 2:
            raise ValueError("a spectrum needs at least 2 samples")
        if not np.all(np.isfinite(wl)) or not np.all(np.isfinite(fl)):
            raise ValueError("wavelengths and fluxes must be finite")
        if wl[0] <= 0:
            raise ValueError("wavelengths must be positive")
        if np.any(np.diff(wl) <= 0):
            raise ValueError("wavelengths must be strictly increasing")
        wl.setflags(write=False)
        fl.setflags(write=False)
        object.__setattr__(self, "wavelengths", wl)
        object.__setattr__(self, "fluxes", fl)

    def __len__(self):
        return self.wavelengths.size

    def __eq__(self, other):
        if not isinstance(other, Spectrum):
            return NotImplemented
        return (np.array_equal(self.wavelengths, other.wavelengths)
                and np.array_equal(self.fluxes, other.fluxes))

    __hash__ = None

    def with_fluxes(self, fluxes) -> "Spectrum":
        return Spectrum(self.wavelengths, fluxes)

    def interpolate(self, wavelengths, fill=0.0) -> np.ndarray:
        """Linearly interpolated flux at ``wavelengths``; ``fill`` outside coverage."""
        return np.interp(wavelengths, self.wavelengths, self.fluxes,
                         left=fill, right=fill)


@dataclass(frozen=True)
class BumpProfile:
    x0: float = DEFAULT_X0
    gamma: float = DEFAULT_GAMMA
    c3: float = 0.0

    def __post_init__(self):
        _check_positive("x0", self.x0)
        _check_positive("gamma", self.gamma)
        if not math.isfinite(self.c3) or self.c3 < 0:
            raise ValueError(f"c3 must be finite and >= 0, got {self.c3!r}")

    @classmethod
    def from_area(cls, a_bump, x0=DEFAULT_X0, gamma=DEFAULT_GAMMA):
        return cls(x0=x0, gamma=gamma, c3=c3_from_area(a_bump, gamma))

    @property
    def a_bump(self) -> float:
        return bump_area(self.c3, self.gamma)


@dataclass(frozen=True)
class ExtinctionParams:
    c1: float = 0.0
    c2: float = 0.0
    bump: BumpProfile = field(default_factory=BumpProfile)

    def __post_init__(self):
        if not (math.isfinite(self.c1) and math.isfinite(self.c2)):
            raise ValueError("c1 and c2 must be finite")


def _check_positive(name, value):
    if not (isinstance(value, (int, float, np.floating, np.integer))
            and math.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be finite and > 0, got {value!r}")


def drude(x, x0, gamma):
    """Drude profile ``x^2 / ((x^2 - x0^2)^2 + x^2 gamma^2)``.

    Peaks at ``x = x0`` with value ``1 / gamma**2``. Works elementwise on
    arrays.
    """
    _check_positive("x0", x0)
    _check_positive("gamma", gamma)
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise ValueError("x must be finite and >= 0")
    x2 = x * x
    out = x2 / ((x2 - x0 * x0) ** 2 + x2 * gamma * gamma)
    return out if out.ndim else float(out)


def extinction(x, params: ExtinctionParams):
    """Extinction in magnitudes, ``c1 + c2 x + c3 D(x; x0, gamma)``."""
    b = params.bump
    out = params.c1 + params.c2 * np.asarray(x, dtype=np.float64) \
        + b.c3 * drude(x, b.x0, b.gamma)
    return out if np.ndim(out) else float(out)


def bump_area(c3, gamma):
    """Integrated bump strength ``pi c3 / (2 gamma)``."""
    _check_positive("gamma", gamma)
    return math.pi * c3 / (2.0 * gamma)


def c3_from_area(a_bump, gamma):
    """Inverse of :func:`bump_area`."""
    _check_positive("gamma", gamma)
    return 2.0 * gamma * a_bump / math.pi


def inverse_microns(wavelengths, z=0.0):
    """Inverse wavelength in the frame at redshift ``z``, in 1/um."""
    return 1e4 * (1.0 + z) / np.asarray(wavelengths, dtype=np.float64)


def bump_center_angstrom(x0, z_abs):
    """Observed wavelength of the bump peak for an absorber at ``z_abs``."""
    return 1e4 * (1.0 + z_abs) / x0


def apply_extinction(rest: Spectrum, params: ExtinctionParams, z_abs, z_em,
                     grid=None) -> Spectrum:
    """Redshift ``rest`` to ``z_em`` and attenuate by ``params`` at ``z_abs``.

    ``grid`` is the observed-frame wavelength array; by default the rest
    spectrum's own grid. Observed pixels outside the redshifted coverage
    get flux 0.
    """
    if not (0 <= z_abs <= z_em):
        raise ValueError(f"need 0 <= z_abs <= z_em, got z_abs={z_abs}, z_em={z_em}")
    obs_wl = rest.wavelengths if grid is None else np.asarray(grid, dtype=np.float64)
    rest_wl = obs_wl / (1.0 + z_em)
    inside = (rest_wl >= rest.wavelengths[0]) & (rest_wl <= rest.wavelengths[-1])
    if not inside.any():
        raise ValueError("observed grid does not overlap the redshifted spectrum")
    flux = rest.interpolate(rest_wl)
    att = extinction(inverse_microns(obs_wl, z_abs), params)
    flux = np.where(inside, flux * 10.0 ** (-0.4 * att), 0.0)
    return Spectrum(obs_wl, flux)


def read_spectrum(path) -> Spectrum:
    """Read a two-column ``wavelength flux`` text file ('#' comments)."""
    try:
        data = np.loadtxt(path, comments="#", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise ValueError(f"{path}: malformed spectrum file ({exc})") from None
    if data.shape[1] != 2:
        raise ValueError(f"{path}: expected 2 columns, found {data.shape[1]}")
    return Spectrum(data[:, 0], data[:, 1])


def write_spectrum(spectrum: Spectrum, path, header=None):
    lines = []
    if header:
        lines.extend(f"# {h}" for h in header.splitlines())
    lines.extend(f"{w:.9g} {f:.9g}"
                 for w, f in zip(spectrum.wavelengths.tolist(),
                                 spectrum.fluxes.tolist()))
    Path(path).write_text("\n".join(lines) + "\n")
