"""Labeled synthetic spectra: composite template, reddening, bump, noise.

Every sample draws its parameters and noise from a seed derived from
``(master_seed, sample_id)`` so a dataset does not depend on the order in
which samples are produced.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .spectra import (
    DEFAULT_A_BUMP, DEFAULT_GAMMA, DEFAULT_X0, BumpProfile, ExtinctionParams,
    Spectrum, apply_extinction, bump_center_angstrom, drude, inverse_microns,
    read_spectrum, write_spectrum,
)

__all__ = [
    "GENERATOR_VERSION", "BUMP", "NO_BUMP", "ConfigError",
    "CompositeSpec", "SampleSpec", "DatasetConfig", "DatasetManifest",
    "synth_composite", "load_composite", "observed_grid", "generate_sample",
    "inject_bump", "add_noise", "mix_seed", "plan_samples",
    "generate_dataset", "split",
]

GENERATOR_VERSION = "bumpdetect-sim/1"
BUMP = "bump"
NO_BUMP = "no_bump"
LABELS = (NO_BUMP, BUMP)

# (center A, amplitude relative to continuum, sigma A)
DEFAULT_LINES = (
    (1216.0, 3.0, 20.0),   # Ly-alpha
    (1549.0, 1.0, 15.0),   # C IV
    (1909.0, 0.4, 15.0),   # C III]
    (2798.0, 0.5, 20.0),   # Mg II
    (4861.0, 0.4, 20.0),   # H-beta
    (6563.0, 1.5, 25.0),   # H-alpha
)

_MASK64 = (1 << 64) - 1


class ConfigError(ValueError):
    """Invalid or infeasible generation configuration."""


@dataclass(frozen=True)
class CompositeSpec:
    continuum_slope: float = -1.5
    emission_lines: tuple = DEFAULT_LINES
    grid: tuple = (600.0, 9000.0, 8401)

    def __post_init__(self):
        lo, hi, n = self.grid
        if int(n) < 2 or not lo < hi:
            raise ConfigError(f"bad composite grid {self.grid}")
        for center, amp, sigma in self.emission_lines:
            if amp < 0 or sigma <= 0:
                raise ConfigError(f"bad emission line {(center, amp, sigma)}")


@dataclass(frozen=True)
class SampleSpec:
    label: str
    z_em: float
    z_abs: float
    params: ExtinctionParams
    snr: float
    seed: int

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}, got {self.label!r}")
        if self.z_abs > self.z_em:
            raise ValueError("z_abs must not exceed z_em")
        if not self.snr > 0:
            raise ValueError("snr must be > 0")
        if self.label == NO_BUMP and self.params.bump.c3 != 0:
            raise ValueError("no_bump samples must have c3 = 0")


def synth_composite(spec: CompositeSpec = CompositeSpec()) -> Spectrum:
    """Power law normalized at 2500 A times (1 + Gaussian emission lines)."""
    lo, hi, n = spec.grid
    wl = np.linspace(lo, hi, int(n))
    lines = np.zeros_like(wl)
    for center, amp, sigma in spec.emission_lines:
        lines += amp * np.exp(-(wl - center) ** 2 / (2.0 * sigma ** 2))
    return Spectrum(wl, (wl / 2500.0) ** spec.continuum_slope * (1.0 + lines))


def load_composite(path) -> Spectrum:
    """User-supplied rest-frame composite in the two-column text format."""
    return read_spectrum(path)


def observed_grid(lo=3800.0, hi=9200.0, count=4600) -> np.ndarray:
    return np.linspace(lo, hi, int(count))


def add_noise(s: Spectrum, snr, seed) -> Spectrum:
    """Multiplicative Gaussian noise ``f * (1 + n / snr)``, clamped at 0.

    ``n`` comes from numpy's PCG64 generator (``np.random.default_rng``)
    seeded with ``seed``. ``snr = math.inf`` disables noise.
    """
    if not snr > 0:
        raise ValueError("snr must be > 0")
    if math.isinf(snr):
        return s
    n = np.random.default_rng(seed).standard_normal(len(s))
    return s.with_fluxes(np.maximum(s.fluxes * (1.0 + n / snr), 0.0))


def inject_bump(observed: Spectrum, z_abs, profile: BumpProfile) -> Spectrum:
    """Multiply an observed spectrum by the bump attenuation at ``z_abs``.

    Works on any spectrum, including real observations.
    """
    center = bump_center_angstrom(profile.x0, z_abs)
    if not observed.wavelengths[0] <= center <= observed.wavelengths[-1]:
        raise ValueError(f"bump center {center:.1f} A lies outside the spectrum")
    d = drude(inverse_microns(observed.wavelengths, z_abs), profile.x0, profile.gamma)
    return observed.with_fluxes(observed.fluxes * 10.0 ** (-0.4 * profile.c3 * d))


def generate_sample(composite: Spectrum, spec: SampleSpec, grid=None) -> Spectrum:
    if grid is None:
        grid = observed_grid()
    reddened = apply_extinction(composite, spec.params, spec.z_abs, spec.z_em, grid)
    return add_noise(reddened, spec.snr, spec.seed)


def mix_seed(master_seed, sample_id) -> int:
    """splitmix64 finalizer over ``master_seed`` and ``sample_id``."""
    z = (int(master_seed) * 0x9E3779B97F4A7C15 + int(sample_id) + 1) & _MASK64
    for _ in range(2):
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        z ^= z >> 31
    return z


@dataclass
class DatasetConfig:
    count: int = 2000
    seed: int = 0
    z_em: tuple = (1.0, 4.0)
    z_abs: tuple = (0.75, 3.2)
    z_gap: float = 0.05
    c1: tuple = (-0.5, 0.5)
    c2: tuple = (0.0, 1.2)
    snr: tuple = (10.0, 50.0)
    x0: float = DEFAULT_X0
    gamma: float = DEFAULT_GAMMA
    a_bump: float = DEFAULT_A_BUMP
    grid: tuple = (3800.0, 9200.0, 4600)
    composite: CompositeSpec = field(default_factory=CompositeSpec)
    composite_path: str | None = None

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "composite" in d and isinstance(d["composite"], dict):
            comp = dict(d["composite"])
            if "emission_lines" in comp:
                comp["emission_lines"] = tuple(tuple(x) for x in comp["emission_lines"])
            if "grid" in comp:
                comp["grid"] = tuple(comp["grid"])
            d["composite"] = CompositeSpec(**comp)
        for key in ("z_em", "z_abs", "c1", "c2", "snr", "grid"):
            if key in d:
                d[key] = tuple(d[key])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def validate(self):
        if self.count < 2:
            raise ConfigError("count must be >= 2")
        for key in ("z_em", "z_abs", "c1", "c2", "snr"):
            lo, hi = getattr(self, key)
            if lo > hi:
                raise ConfigError(f"{key} range is empty: {(lo, hi)}")
        if self.snr[0] <= 0:
            raise ConfigError("snr must be positive")
        if self.gamma <= 0 or self.x0 <= 0 or self.a_bump < 0:
            raise ConfigError("bump profile needs x0 > 0, gamma > 0, a_bump >= 0")
        lo, hi, n = self.grid
        if int(n) < 2 or lo >= hi:
            raise ConfigError(f"bad observed grid {self.grid}")
        zlo, zhi = self._z_abs_limits(self.z_em[0])
        if zlo > zhi:
            raise ConfigError(
                f"empty z_abs interval [{zlo:.4f}, {zhi:.4f}] at z_em={self.z_em[0]}")

    def _z_abs_limits(self, z_em):
        # bump center must land on the observed grid
        lo, hi, _ = self.grid
        z_in_lo = lo * self.x0 / 1e4 - 1.0
        z_in_hi = hi * self.x0 / 1e4 - 1.0
        zlo = max(self.z_abs[0], z_in_lo, 0.0)
        zhi = min(z_em - self.z_gap, self.z_abs[1], z_in_hi)
        return zlo, zhi


def plan_samples(config: DatasetConfig) -> list[tuple[int, SampleSpec]]:
    """Sample specs in shuffled order; nothing is written."""
    config.validate()
    n_bump = (config.count + 1) // 2
    profile = BumpProfile.from_area(config.a_bump, config.x0, config.gamma)
    plan = []
    for sid in range(config.count):
        seed = mix_seed(config.seed, sid)
        rng = np.random.default_rng([seed, 1])
        z_em = rng.uniform(*config.z_em)
        zlo, zhi = config._z_abs_limits(z_em)
        if zlo > zhi:
            raise ConfigError(f"empty z_abs interval at z_em={z_em:.4f}")
        z_abs = rng.uniform(zlo, zhi)
        c1 = rng.uniform(*config.c1)
        c2 = rng.uniform(*config.c2)
        snr = rng.uniform(*config.snr)
        label = BUMP if sid < n_bump else NO_BUMP
        bump = profile if label == BUMP else replace(profile, c3=0.0)
        plan.append((sid, SampleSpec(label, z_em, z_abs,
                                     ExtinctionParams(c1, c2, bump), snr, seed)))
    order = np.random.default_rng(config.seed).permutation(config.count)
    return [plan[i] for i in order]


@dataclass
class DatasetManifest:
    """Sample records plus the observed grid; paths are relative to ``root``."""

    records: list
    grid: tuple = (3800.0, 9200.0, 4600)
    version: str = GENERATOR_VERSION
    root: Path | None = None
    master_seed: int | None = None

    def __len__(self):
        return len(self.records)

    @property
    def ids(self):
        return [r["id"] for r in self.records]

    @property
    def labels(self) -> np.ndarray:
        """1 for bump, 0 for no_bump."""
        return np.array([int(r["label"] == BUMP) for r in self.records])

    def spectrum_path(self, record) -> Path:
        p = Path(record["path"])
        return p if p.is_absolute() or self.root is None else self.root / p

    def load_spectrum(self, record) -> Spectrum:
        return read_spectrum(self.spectrum_path(record))

    def spectra(self):
        return [self.load_spectrum(r) for r in self.records]

    def subset(self, records) -> "DatasetManifest":
        return replace(self, records=list(records))

    def header(self):
        lo, hi, n = self.grid
        return {"version": self.version, "count": len(self.records),
                "master_seed": self.master_seed,
                "grid": {"min": float(lo), "max": float(hi), "count": int(n)}}

    def write(self, path):
        """Write ``path`` (JSON Lines) and the ``<path>.header.json`` sidecar."""
        path = Path(path)
        body = "".join(json.dumps(r, sort_keys=False) + "\n" for r in self.records)
        path.write_text(body)
        header_path(path).write_text(json.dumps(self.header(), indent=2) + "\n")

    @classmethod
    def read(cls, path) -> "DatasetManifest":
        path = Path(path)
        records = [json.loads(line) for line in path.read_text().splitlines()
                   if line.strip()]
        hp = header_path(path)
        grid, version, seed = (3800.0, 9200.0, 4600), GENERATOR_VERSION, None
        if hp.exists():
            h = json.loads(hp.read_text())
            g = h["grid"]
            grid = (g["min"], g["max"], g["count"])
            version, seed = h.get("version", version), h.get("master_seed")
        ids = [r["id"] for r in records]
        if len(set(ids)) != len(ids):
            raise ValueError(f"{path}: duplicate sample ids")
        return cls(records, grid, version, path.parent, seed)


def header_path(manifest_path) -> Path:
    p = Path(manifest_path)
    return p.with_name(p.name + ".header.json")


def _record(sid, spec: SampleSpec, relpath):
    b = spec.params.bump
    return {
        "id": sid, "path": relpath, "label": spec.label,
        "z_em": spec.z_em, "z_abs": spec.z_abs,
        "x0": b.x0, "gamma": b.gamma, "c3": b.c3, "a_bump": b.a_bump,
        "c1": spec.params.c1, "c2": spec.params.c2,
        "snr": spec.snr, "seed": spec.seed,
    }


def generate_dataset(config: DatasetConfig, out_dir) -> DatasetManifest:
    """Write every sample under ``out_dir/spectra`` plus ``manifest.jsonl``."""
    plan = plan_samples(config)
    out_dir = Path(out_dir)
    try:
        (out_dir / "spectra").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc
    composite = (load_composite(config.composite_path) if config.composite_path
                 else synth_composite(config.composite))
    grid = observed_grid(*config.grid)
    records = []
    for sid, spec in plan:
        rel = f"spectra/{sid:06d}.txt"
        write_spectrum(generate_sample(composite, spec, grid), out_dir / rel)
        records.append(_record(sid, spec, rel))
    manifest = DatasetManifest(records, tuple(config.grid), GENERATOR_VERSION,
                               out_dir, config.seed)
    manifest.write(out_dir / "manifest.jsonl")
    return manifest


def split(manifest: DatasetManifest, train_fraction, seed=0):
    """Stratified, seeded split into ``(train, test)`` manifests."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for label in LABELS:
        group = [r for r in manifest.records if r["label"] == label]
        if not group:
            continue
        idx = rng.permutation(len(group))
        k = int(round(train_fraction * len(group)))
        train += [group[i] for i in idx[:k]]
        test += [group[i] for i in idx[k:]]
    if not train or not test:
        raise ValueError(
            f"degenerate split: {len(train)} train / {len(test)} test samples")
    train = [train[i] for i in rng.permutation(len(train))]
    test = [test[i] for i in rng.permutation(len(test))]
    return manifest.subset(train), manifest.subset(test)
