from fractions import Fraction
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bumpdetect.spectra import Spectrum
from bumpdetect.transform import (
    BatchFormatError, ImageEncoder, MatrixEncoder, VectorEncoder, encode,
    from_matrix, line_pixels, network_input, read_batch, to_image, to_matrix,
    to_vector, write_batch,
)


def spec(n, flux=None, lo=3800.0, hi=9200.0):
    wl = np.linspace(lo, hi, n)
    f = np.linspace(1.0, 2.0, n) if flux is None else np.broadcast_to(flux, (n,))
    return Spectrum(wl, f)


def half_up(q: Fraction) -> int:
    return math.floor(q + Fraction(1, 2))


def naive_segment(c0, r0, c1, r1):
    """Per-column (shallow) or per-row (steep) interpolation, exact rationals."""
    pts = set()
    if abs(c1 - c0) >= abs(r1 - r0):
        if c0 == c1:
            return {(c0, r0)}
        for c in range(min(c0, c1), max(c0, c1) + 1):
            pts.add((c, r0 + half_up(Fraction((c - c0) * (r1 - r0), c1 - c0))))
    else:
        for r in range(min(r0, r1), max(r0, r1) + 1):
            pts.add((c0 + half_up(Fraction((r - r0) * (c1 - c0), r1 - r0)), r))
    return pts


# --- vector / matrix --------------------------------------------------------

def test_vector_padding():
    v = to_vector(spec(4600), normalize=False)
    assert v.data.shape == (4761,)
    assert np.all(v.data[4600:] == 0) and np.all(v.data[:4600] > 0)
    np.testing.assert_array_equal(v.data[:4600], spec(4600).fluxes)


def test_vector_full_length_unchanged():
    s = spec(4761)
    np.testing.assert_array_equal(to_vector(s, normalize=False).data, s.fluxes)


def test_vector_normalization():
    v = to_vector(spec(4600, 5.0)).data
    assert np.all(v[:4600] == 1.0) and np.all(v[4600:] == 0.0)
    f = np.r_[np.zeros(100), np.arange(1.0, 4501.0)]
    s = Spectrum(np.linspace(3800, 9200, 4600), f)
    # median over nonzero fluxes only
    np.testing.assert_allclose(to_vector(s).data[:4600], f / np.median(f[100:]))


def test_vector_too_long():
    with pytest.raises(ValueError):
        to_vector(spec(5000))
    v = to_vector(spec(5000), normalize=False, strict=False)
    assert v.truncated and v.data.shape == (4761,)
    np.testing.assert_array_equal(v.data, spec(5000).fluxes[:4761])
    with pytest.warns(UserWarning):
        VectorEncoder(strict=False).transform([spec(5000)])


def test_matrix_fold():
    v = np.arange(4761.0)
    m = to_matrix(v).data
    assert m.shape == (69, 69)
    assert m[0, 0] == v[0] and m[1, 0] == v[69] and m[68, 68] == v[4760]
    np.testing.assert_array_equal(from_matrix(to_matrix(v)).data, v)
    assert m.sum() == v.sum()
    with pytest.raises(ValueError):
        to_matrix(np.zeros(4760))


def test_fold_preserves_values():
    rng = np.random.default_rng(0)
    s = Spectrum(np.linspace(3800, 9200, 4600), rng.uniform(0, 3, 4600))
    v = to_vector(s)
    m = to_matrix(v)
    np.testing.assert_array_equal(np.sort(m.data, axis=None), np.sort(v.data))


def test_sklearn_encoders():
    X = [spec(4600), spec(4600, 3.0)]
    V = VectorEncoder().fit_transform(X)
    M = MatrixEncoder().fit_transform(X)
    assert V.shape == (2, 4761) and M.shape == (2, 69, 69)
    np.testing.assert_array_equal(MatrixEncoder().transform(V), M)
    np.testing.assert_array_equal(MatrixEncoder().inverse_transform(M), V)
    assert VectorEncoder(normalize=False).get_params() == {"normalize": False, "strict": True}
    with pytest.raises(TypeError):
        VectorEncoder().transform([np.ones(3)])
    with pytest.raises(ValueError):
        VectorEncoder().transform([])


def test_encode_shapes():
    X = [spec(4600), spec(4600, 3.0)]
    assert encode(X, "vector").shape == (2, 4761)
    assert encode(X, "matrix").shape == (2, 69, 69)
    assert encode(X, "image", z_em=[2.0, 2.0]).shape == (2, 256, 256)
    with pytest.raises(ValueError):
        encode(X, "tensor")
    with pytest.raises(ValueError):
        encode(X, "image")


# --- image ------------------------------------------------------------------

def test_image_midline():
    img = to_image(spec(4000, 25.0, 800.0, 8800.0)).data
    black = np.argwhere(img == 0.0)
    # (50 - 25) / 50 * 255 = 127.5 rounds half up to 128
    assert set(black[:, 0]) == {128}
    assert set(black[:, 1]) == set(range(256))
    assert np.all((img == 0.0) | (img == 1.0))


def test_image_outside_axes_is_blank():
    img = to_image(spec(100, 10.0, 9000.0, 9500.0)).data
    assert np.all(img == 1.0)


def test_image_clamps_flux():
    img = to_image(spec(500, 80.0, 800.0, 8800.0)).data
    assert set(np.argwhere(img == 0.0)[:, 0]) == {0}
    img = to_image(spec(500, -3.0, 800.0, 8800.0)).data
    assert set(np.argwhere(img == 0.0)[:, 0]) == {255}


def test_image_degenerate_axes():
    with pytest.raises(ValueError):
        to_image(spec(10), axes=(800, 800, 0, 50))
    with pytest.raises(ValueError):
        to_image(spec(10), axes=(800, 8800, 50, 0))


def test_image_diagonal_matches_naive_rasterizer():
    # two points: (800, 50) -> col 0, row 0 ; (8800, 10) -> col 255, row 204
    s = Spectrum([800.0, 8800.0], [50.0, 10.0])
    img = to_image(s).data
    got = {(int(c), int(r)) for r, c in np.argwhere(img == 0.0)}
    want = naive_segment(0, 0, 255, 204)
    assert got == want and len(got) == 256


@settings(max_examples=200)
@given(st.integers(0, 255), st.integers(0, 255), st.integers(0, 255), st.integers(0, 255))
def test_line_pixels_match_naive(c0, r0, c1, r1):
    cols, rows = line_pixels(c0, r0, c1, r1)
    got = set(zip(cols.tolist(), rows.tolist()))
    assert got == naive_segment(c0, r0, c1, r1)
    assert len(cols) == max(abs(c1 - c0), abs(r1 - r0)) + 1


def test_line_pixels_batched():
    c, r = line_pixels([0, 10], [0, 10], [3, 10], [1, 14])
    assert list(zip(c.tolist(), r.tolist())) == [(0, 0), (1, 0), (2, 1), (3, 1),
                                                 (10, 10), (10, 11), (10, 12), (10, 13), (10, 14)]


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-10, 60), min_size=2, max_size=60), st.floats(700, 2000))
def test_every_point_marks_its_column(fluxes, start):
    wl = start + 150.0 * np.arange(len(fluxes))
    s = Spectrum(wl, fluxes)
    img = to_image(s).data
    inside = (wl >= 800) & (wl <= 8800)
    for w, f in zip(wl[inside], np.clip(np.asarray(fluxes)[inside], 0, 50)):
        col = math.floor((w - 800) / 8000 * 255 + 0.5)
        row = math.floor((50 - f) / 50 * 255 + 0.5)
        assert img[row, col] == 0.0


def test_image_encoder_rest_frame():
    s = spec(4600, 20.0)
    z = 2.0
    rest = Spectrum(s.wavelengths / (1 + z), s.fluxes)
    np.testing.assert_array_equal(ImageEncoder().transform([s], z_em=[z])[0],
                                  to_image(rest).data)
    obs = ImageEncoder(axes=(3800, 9200, 0, 50), rest_frame=False).transform([s])[0]
    np.testing.assert_array_equal(obs, to_image(s, (3800, 9200, 0, 50)).data)


def test_network_input_inverts_images():
    img = to_image(spec(100, 25.0, 800, 8800)).data[None]
    x = network_input("image", img)
    assert x.sum() == (img == 0).sum()
    v = np.ones((1, 4761))
    np.testing.assert_array_equal(network_input("vector", v), v)


# --- BENC container ---------------------------------------------------------

@pytest.mark.parametrize("encoding,shape", [("vector", (4761,)), ("matrix", (69, 69)),
                                            ("image", (256, 256))])
def test_batch_round_trip(tmp_path, encoding, shape):
    rng = np.random.default_rng(1)
    data = rng.standard_normal((3, *shape))
    p = tmp_path / "b.benc"
    write_batch(p, encoding, data, [1, 0, 1], ids=[7, 8, 9])
    enc, back, labels, ids = read_batch(p)
    assert enc == encoding and ids == [7, 8, 9]
    np.testing.assert_array_equal(labels, [1, 0, 1])
    np.testing.assert_array_equal(back, data.astype(np.float32))
    write_batch(tmp_path / "c.benc", encoding, back, labels, ids)
    assert (tmp_path / "c.benc").read_bytes() == p.read_bytes()


def test_batch_layout(tmp_path):
    p = tmp_path / "b.benc"
    write_batch(p, "vector", np.ones((2, 4761)))
    raw = p.read_bytes()
    assert raw[:4] == b"BENC"
    assert len(raw) == 4 + 4 + 1 + 4 + 1 + 4 + 2 * (1 + 4 * 4761)
    enc, _, labels, ids = read_batch(p)
    assert labels is None and ids is None


def test_batch_errors(tmp_path):
    p = tmp_path / "b.benc"
    write_batch(p, "matrix", np.ones((2, 69, 69)), [0, 1])
    raw = bytearray(p.read_bytes())
    bad = tmp_path / "bad.benc"
    bad.write_bytes(b"XXXX" + bytes(raw[4:]))
    with pytest.raises(BatchFormatError):
        read_batch(bad)
    bad.write_bytes(bytes(raw[:4]) + (9).to_bytes(4, "little") + bytes(raw[8:]))
    with pytest.raises(BatchFormatError):
        read_batch(bad)
    bad.write_bytes(bytes(raw[:-5]))
    with pytest.raises(BatchFormatError):
        read_batch(bad)
    with pytest.raises(ValueError):
        write_batch(p, "vector", np.ones((2, 69, 69)))
