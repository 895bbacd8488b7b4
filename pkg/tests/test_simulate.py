import math
from collections import Counter

import numpy as np
import pytest

from bumpdetect.simulate import (
    BUMP, NO_BUMP, CompositeSpec, ConfigError, DatasetConfig, DatasetManifest,
    SampleSpec, add_noise, generate_dataset, generate_sample, inject_bump,
    mix_seed, observed_grid, plan_samples, split, synth_composite,
)
from bumpdetect.spectra import (
    BumpProfile, ExtinctionParams, Spectrum, apply_extinction,
    bump_center_angstrom, read_spectrum,
)


def sig9(a):
    return np.array([float(f"{v:.9g}") for v in a])


def test_composite_examples():
    flat = synth_composite(CompositeSpec(continuum_slope=0.0, emission_lines=()))
    assert np.all(flat.fluxes == 1.0)
    pl = synth_composite(CompositeSpec(emission_lines=(), grid=(2000.0, 3000.0, 1001)))
    assert pl.fluxes[500] == pytest.approx(1.0, rel=1e-15)
    one = synth_composite(CompositeSpec(continuum_slope=0.0,
                                        emission_lines=((2500.0, 2.0, 10.0),),
                                        grid=(2000.0, 3000.0, 1001)))
    assert one.fluxes[500] == pytest.approx(3.0, rel=1e-15)


def test_default_composite():
    c = synth_composite()
    assert len(c) == 8401 and c.wavelengths[0] == 600 and c.wavelengths[-1] == 9000
    assert np.all(c.fluxes > 0)
    # Ly-alpha dominates the line set
    assert abs(c.wavelengths[np.argmax(c.fluxes)] - 1216) < 5


@pytest.mark.parametrize("kwargs", [dict(grid=(600.0, 600.0, 10)),
                                    dict(grid=(600.0, 9000.0, 1)),
                                    dict(emission_lines=((1000.0, -1.0, 5.0),)),
                                    dict(emission_lines=((1000.0, 1.0, 0.0),))])
def test_composite_spec_validation(kwargs):
    with pytest.raises(ConfigError):
        CompositeSpec(**kwargs)


def test_sample_spec_validation():
    p = ExtinctionParams()
    with pytest.raises(ValueError):
        SampleSpec("maybe", 2.0, 1.0, p, 10.0, 0)
    with pytest.raises(ValueError):
        SampleSpec(BUMP, 1.0, 2.0, p, 10.0, 0)
    with pytest.raises(ValueError):
        SampleSpec(BUMP, 2.0, 1.0, p, 0.0, 0)
    with pytest.raises(ValueError):
        SampleSpec(NO_BUMP, 2.0, 1.0, ExtinctionParams(bump=BumpProfile(c3=1.0)), 10.0, 0)


def test_noiseless_bump_free_sample_is_redshifted_composite():
    comp = synth_composite()
    spec = SampleSpec(NO_BUMP, 2.0, 1.0, ExtinctionParams(), math.inf, 5)
    s = generate_sample(comp, spec)
    grid = observed_grid()
    np.testing.assert_array_equal(s.fluxes, comp.interpolate(grid / 3.0))


def test_generate_sample_is_deterministic():
    comp = synth_composite()
    spec = SampleSpec(BUMP, 2.4, 1.5, ExtinctionParams(0.1, 0.5, BumpProfile.from_area(2.0)),
                      20.0, 1234)
    assert generate_sample(comp, spec) == generate_sample(comp, spec)


def test_bump_sample_minimum_location():
    comp = synth_composite()
    bump = BumpProfile.from_area(2.0, 4.59, 1.0)
    params = ExtinctionParams(0.1, 0.5, bump)
    spec = SampleSpec(BUMP, 2.4, 1.5, params, math.inf, 0)
    ref = SampleSpec(NO_BUMP, 2.4, 1.5, ExtinctionParams(0.1, 0.5), math.inf, 0)
    ratio = generate_sample(comp, spec).fluxes / generate_sample(comp, ref).fluxes
    grid = observed_grid()
    assert np.argmin(ratio) == np.argmin(np.abs(grid - bump_center_angstrom(4.59, 1.5)))


def test_inject_bump():
    comp = synth_composite()
    obs = apply_extinction(comp, ExtinctionParams(0.1, 0.3), 1.2, 2.0, observed_grid())
    assert inject_bump(obs, 1.2, BumpProfile(c3=0.0)) == obs
    a = inject_bump(inject_bump(obs, 1.2, BumpProfile(c3=0.4)), 1.2, BumpProfile(c3=0.9))
    b = inject_bump(obs, 1.2, BumpProfile(c3=1.3))
    np.testing.assert_allclose(a.fluxes, b.fluxes, rtol=1e-12)
    # at x = x0 exactly the attenuation is 10^(-0.4 c3 / gamma^2)
    center = bump_center_angstrom(4.59, 1.2)
    s = Spectrum([center - 10, center, center + 10], [1.0, 1.0, 1.0])
    out = inject_bump(s, 1.2, BumpProfile(4.59, 0.8, 1.5))
    assert out.fluxes[1] == pytest.approx(10 ** (-0.4 * 1.5 / 0.64), rel=1e-12)
    with pytest.raises(ValueError):
        inject_bump(obs, 3.5, BumpProfile(c3=1.0))


def test_add_noise():
    s = Spectrum(np.arange(1.0, 100001.0), np.full(100000, 2.0))
    assert add_noise(s, math.inf, 0) is s
    assert add_noise(s, 10.0, 3) == add_noise(s, 10.0, 3)
    assert add_noise(s, 10.0, 3) != add_noise(s, 10.0, 4)
    rel = add_noise(s, 10.0, 3).fluxes / s.fluxes - 1.0
    # mean of n/10 has standard error 0.1/sqrt(N)
    assert abs(rel.mean()) < 5 * 0.1 / math.sqrt(rel.size)
    assert rel.std() == pytest.approx(0.1, rel=0.02)
    assert np.all(add_noise(s, 0.2, 0).fluxes >= 0.0)
    with pytest.raises(ValueError):
        add_noise(s, 0.0, 0)


def test_mix_seed():
    assert mix_seed(0, 0) == mix_seed(0, 0)
    seeds = {mix_seed(m, i) for m in range(5) for i in range(200)}
    assert len(seeds) == 1000
    assert all(0 <= v < 2**64 for v in seeds)


def test_plan_balanced_and_in_range():
    cfg = DatasetConfig(count=501, seed=11)
    plan = plan_samples(cfg)
    counts = Counter(s.label for _, s in plan)
    assert counts[BUMP] == 251 and counts[NO_BUMP] == 250
    assert sorted(i for i, _ in plan) == list(range(501))
    for _, s in plan:
        assert 1.0 <= s.z_em <= 4.0
        assert 0.75 <= s.z_abs <= min(s.z_em - 0.05, 3.2)
        assert -0.5 <= s.params.c1 <= 0.5 and 0.0 <= s.params.c2 <= 1.2
        assert 10 <= s.snr <= 50
        if s.label == BUMP:
            b = s.params.bump
            assert (b.x0, b.gamma) == (4.59, 1.0)
            assert b.a_bump == pytest.approx(2.0, rel=1e-14)
            assert 3800 <= bump_center_angstrom(b.x0, s.z_abs) <= 9200


def test_plan_full_scale_balance():
    plan = plan_samples(DatasetConfig(count=30000, seed=1))
    counts = Counter(s.label for _, s in plan)
    assert counts[BUMP] == 15000 and counts[NO_BUMP] == 15000


def test_plan_is_order_independent():
    # a sample's parameters depend only on (master seed, id)
    small = dict(plan_samples(DatasetConfig(count=40, seed=2)))
    large = dict(plan_samples(DatasetConfig(count=80, seed=2)))
    for sid in range(20):
        assert small[sid].z_em == large[sid].z_em
        assert small[sid].seed == large[sid].seed


def test_plan_is_shuffled():
    labels = [s.label for _, s in plan_samples(DatasetConfig(count=200, seed=0))]
    assert labels != sorted(labels) and labels != sorted(labels, reverse=True)


def test_config_errors():
    with pytest.raises(ConfigError):
        DatasetConfig.from_dict({"cuont": 10})
    with pytest.raises(ConfigError):
        plan_samples(DatasetConfig(count=1))
    with pytest.raises(ConfigError):
        plan_samples(DatasetConfig(z_em=(0.5, 0.6)))
    with pytest.raises(ConfigError):
        plan_samples(DatasetConfig(snr=(0.0, 10.0)))
    with pytest.raises(ConfigError):
        plan_samples(DatasetConfig(c1=(1.0, 0.0)))


def test_config_from_dict():
    cfg = DatasetConfig.from_dict({"count": 10, "z_em": [1.5, 2.0],
                                   "composite": {"continuum_slope": -1.0,
                                                 "emission_lines": [[1216, 1.0, 10]]}})
    assert cfg.z_em == (1.5, 2.0)
    assert cfg.composite.emission_lines == ((1216, 1.0, 10),)


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("ds")
    return generate_dataset(DatasetConfig(count=24, seed=9), out), out


def test_generate_dataset_files(dataset):
    manifest, out = dataset
    assert len(manifest) == 24 and manifest.labels.sum() == 12
    back = DatasetManifest.read(out / "manifest.jsonl")
    assert back.records == manifest.records
    assert back.grid == (3800.0, 9200.0, 4600) and back.master_seed == 9
    keys = {"id", "path", "label", "z_em", "z_abs", "x0", "gamma", "c3", "a_bump",
            "c1", "c2", "snr", "seed"}
    comp = synth_composite()
    for r in back.records[:5]:
        assert set(r) == keys
        s = back.load_spectrum(r)
        spec = SampleSpec(r["label"], r["z_em"], r["z_abs"],
                          ExtinctionParams(r["c1"], r["c2"],
                                           BumpProfile(r["x0"], r["gamma"], r["c3"])),
                          r["snr"], r["seed"])
        ref = generate_sample(comp, spec)
        assert s == Spectrum(sig9(ref.wavelengths), sig9(ref.fluxes))


def test_generate_dataset_is_byte_identical(dataset, tmp_path):
    _, out = dataset
    generate_dataset(DatasetConfig(count=24, seed=9), tmp_path)
    for name in ("manifest.jsonl", "manifest.jsonl.header.json"):
        assert (tmp_path / name).read_bytes() == (out / name).read_bytes()
    for f in sorted((out / "spectra").iterdir()):
        assert (tmp_path / "spectra" / f.name).read_bytes() == f.read_bytes()


def test_generate_dataset_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        generate_dataset(DatasetConfig(count=4), blocker / "sub")


def test_manifest_rejects_duplicates(dataset, tmp_path):
    manifest, _ = dataset
    manifest.subset(manifest.records[:2] * 2).write(tmp_path / "dup.jsonl")
    with pytest.raises(ValueError):
        DatasetManifest.read(tmp_path / "dup.jsonl")


def test_manifest_spectra_exist(dataset):
    manifest, _ = dataset
    for r in manifest.records:
        assert manifest.spectrum_path(r).exists()
        assert isinstance(read_spectrum(manifest.spectrum_path(r)), Spectrum)


def _fake_manifest(n_bump, n_none):
    recs = [{"id": i, "label": BUMP if i < n_bump else NO_BUMP}
            for i in range(n_bump + n_none)]
    return DatasetManifest(recs)


def test_split_full_scale():
    train, test = split(_fake_manifest(15000, 15000), 22 / 30, seed=4)
    assert len(train) == 22000 and len(test) == 8000
    assert train.labels.sum() == 11000
    assert sorted(train.ids + test.ids) == list(range(30000))
    assert not set(train.ids) & set(test.ids)


def test_split_is_stratified_and_seeded():
    m = _fake_manifest(1000, 1000)
    train, test = split(m, 0.8, seed=1)
    assert len(train) == 1600 and train.labels.sum() == 800
    assert split(m, 0.8, seed=1)[0].ids == train.ids
    assert split(m, 0.8, seed=2)[0].ids != train.ids
    # shuffled, not grouped by class
    assert list(train.labels[:800]) != [1] * 800 and list(train.labels[:800]) != [0] * 800


def test_split_errors():
    with pytest.raises(ValueError):
        split(_fake_manifest(5, 5), 1.0)
    with pytest.raises(ValueError):
        split(_fake_manifest(1, 1), 0.1)
