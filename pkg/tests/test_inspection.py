import xml.etree.ElementTree as ET

import numpy as np
import pytest
from PIL import Image

from bumpdetect import tensornet as tn
from bumpdetect.evaluate import roc
from bumpdetect.inspection import (
    HEIGHT, MARGIN, WIDTH, PlotTransform, feature_maps, plot_roc, plot_spectrum,
    reconstruct_input, render_filters, svg_line_plot, write_png,
)
from bumpdetect.spectra import Spectrum
from bumpdetect.tensornet import Conv, Dense, Flatten, MaxPool, NetworkSpec, ReLU, Softmax

SVG = "{http://www.w3.org/2000/svg}"


def small_cnn():
    spec = NetworkSpec((8, 8), [Conv(3, 3, 3), ReLU(), MaxPool(), Flatten(), Dense(2), Softmax()])
    return tn.init(spec, seed=1)


def test_filter_grid_layout():
    model = tn.init(tn.cnn4_ref(), seed=0)
    grid = render_filters(model, 0)
    # 50 filters on an 8-wide, 7-tall grid of 5x5 tiles with 1-px gaps
    assert grid.shape == (7 * 6 - 1, 8 * 6 - 1)
    assert grid.min() >= 0.0 and grid.max() <= 1.0
    tile = grid[:5, :5]
    assert tile.min() == 0.0 and tile.max() == 1.0
    assert np.all(grid[5, :] == 1.0) and np.all(grid[:, 5] == 1.0)
    # slots 50..55 on the last row are unused
    assert np.all(grid[36:, 2 * 6:] == 1.0)


def test_constant_filter_is_mid_gray():
    model = small_cnn()
    model.params[0][0][1] = 0.3
    grid = render_filters(model)
    assert np.all(grid[:3, 4:7] == 0.5)
    with pytest.raises(ValueError):
        render_filters(model, 1)


def test_feature_maps_zero_input():
    model = tn.init(tn.cnn4_ref(), seed=0)
    maps = feature_maps(model, np.zeros((69, 69)), 8)
    assert len(maps) == 50
    assert all(m.shape == (17, 17) and np.all(m == 0.0) for m in maps)


def test_feature_maps_scaled():
    model = small_cnn()
    x = np.random.default_rng(0).uniform(size=(8, 8))
    maps = feature_maps(model, x, 0)
    assert len(maps) == 3 and maps[0].shape == (8, 8)
    raw = tn.activations(model, x[None], 1)[0]
    for m, r in zip(maps, raw):
        if r.max() > r.min():
            np.testing.assert_allclose(m, (r - r.min()) / (r.max() - r.min()))
    with pytest.raises(ValueError):
        feature_maps(model, x, 3)


def linear_model():
    spec = NetworkSpec((4, 4), [Flatten(), Dense(2), Softmax()])
    model = tn.init(spec, seed=0)
    w = np.zeros((16, 2))
    w[:8, 1] = 1.0
    w[8:, 1] = -1.0
    model.params[1] = [w, np.zeros(2)]
    return model


def test_reconstruct_zero_steps_is_noise():
    model = small_cnn()
    x, traj = reconstruct_input(model, steps=0, seed=4)
    ref = np.random.default_rng(4).uniform(0.4, 0.6, size=(8, 8))
    np.testing.assert_array_equal(x, ref)
    assert len(traj) == 1


def test_reconstruct_climbs_logit():
    model = linear_model()
    x, traj = reconstruct_input(model, steps=200, step_size=0.1, seed=0)
    assert len(traj) == 201 and traj[-1] > traj[0]
    # the optimum for this logit saturates the clamp
    np.testing.assert_array_equal(x.ravel(), [1.0] * 8 + [0.0] * 8)
    assert traj[-1] == pytest.approx(8.0)


def test_reconstruct_deterministic():
    model = small_cnn()
    a = reconstruct_input(model, steps=20, seed=3)
    b = reconstruct_input(model, steps=20, seed=3)
    np.testing.assert_array_equal(a[0], b[0])
    assert a[1] == b[1]


def test_write_png(tmp_path):
    arr = np.array([[0.0, 0.5], [1.0, 2.0]])
    write_png(arr, tmp_path / "a.png")
    back = np.asarray(Image.open(tmp_path / "a.png"))
    np.testing.assert_array_equal(back, [[0, 128], [255, 255]])
    with pytest.raises(ValueError):
        write_png(np.zeros(3), tmp_path / "b.png")


def polylines(svg):
    root = ET.fromstring(svg.encode())
    assert root.tag == SVG + "svg"
    return root.findall(f".//{SVG}polyline")


def test_plot_spectrum_parses():
    wl = np.linspace(1000, 3000, 50)
    s = Spectrum(wl, np.sin(wl / 200) + 2)
    overlays = [("fit", s.with_fluxes(s.fluxes * 0.9)), ("no <bump>", s.with_fluxes(s.fluxes + 0.1))]
    lines = polylines(plot_spectrum(s, overlays, title="a & b"))
    assert len(lines) == 3
    assert [p.get("data-name") for p in lines] == ["spectrum", "fit", "no <bump>"]
    assert all(p.get("class") == "series" for p in lines)


def test_plot_transform_spot_checks():
    svg = svg_line_plot([("s", [0.0, 5.0, 10.0], [2.0, 3.0, 4.0])], "x", "y")
    pts = [tuple(map(float, p.split(","))) for p in polylines(svg)[0].get("points").split()]
    left, top = MARGIN["left"], MARGIN["top"]
    w = WIDTH - left - MARGIN["right"]
    h = HEIGHT - top - MARGIN["bottom"]
    assert pts[0] == pytest.approx((left, top + h))
    assert pts[1] == pytest.approx((left + w / 2, top + h / 2))
    assert pts[2] == pytest.approx((left + w, top))
    tf = PlotTransform((0, 10), (2, 4))
    assert tf(2.5, 2.5) == pytest.approx((left + w / 4, top + 3 * h / 4))


def test_plot_roc():
    c = roc([0.9, 0.8, 0.85, 0.7], [1, 1, 0, 0])
    lines = polylines(plot_roc([("a", c), ("b", c)]))
    assert len(lines) == 2
    assert len(lines[0].get("points").split()) == len(c.fpr)


def test_plot_errors():
    with pytest.raises(ValueError):
        svg_line_plot([], "x", "y")
    flat = svg_line_plot([("c", [1.0, 2.0], [5.0, 5.0])], "x", "y")
    assert len(polylines(flat)) == 1
