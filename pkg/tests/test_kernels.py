import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import ndimage
from scipy.spatial import ConvexHull

from styleseg import _kernels_py, kernels

compiled = pytest.importorskip("styleseg._kernels") if kernels.BACKEND == "cython" else None

EIGHT = np.ones((3, 3), dtype=bool)


def first_pixels(mask):
    labels, count = ndimage.label(mask, structure=EIGHT)
    out = []
    for k in range(1, count + 1):
        r, c = np.argwhere(labels == k)[0]
        out.append((int(r), int(c), labels == k))
    return out


masks16 = st.integers(0, 2**32 - 1).map(
    lambda s: (np.random.default_rng(s).random((np.random.default_rng(s).integers(1, 17), 16)) < 0.45).astype(np.uint8)
)


def test_backend_is_reported():
    assert kernels.BACKEND in ("cython", "python")


@settings(max_examples=150, deadline=None)
@given(masks16)
def test_trace_visits_only_component_pixels_in_8_steps(mask):
    mask = np.ascontiguousarray(mask)
    for r, c, comp in first_pixels(mask):
        contour = _kernels_py.trace_boundary(mask, r, c)
        assert tuple(contour[0]) == (r, c)
        assert all(comp[y, x] for y, x in contour)
        if len(contour) > 1:
            steps = np.abs(np.diff(np.vstack([contour, contour[:1]]), axis=0))
            assert steps.max() <= 1 and (steps.sum(axis=1) > 0).all()


@settings(max_examples=150, deadline=None)
@given(masks16)
def test_trace_covers_outer_boundary(mask):
    """Every component pixel 4-adjacent to the outside background lies on the trace."""
    mask = np.ascontiguousarray(mask)
    for r, c, comp in first_pixels(mask):
        filled = ndimage.binary_fill_holes(comp)
        outside = ~np.pad(filled, 1)
        near = ndimage.binary_dilation(outside, structure=ndimage.generate_binary_structure(2, 1))[1:-1, 1:-1]
        expected = {tuple(p) for p in np.argwhere(comp & near)}
        traced = {tuple(p) for p in _kernels_py.trace_boundary(mask, r, c)}
        assert expected <= traced


@pytest.mark.skipif(compiled is None, reason="compiled extension not built")
def test_compiled_matches_python_on_random_masks():
    rng = np.random.default_rng(3)
    for _ in range(200):
        mask = np.ascontiguousarray(rng.random((16, 16)) < rng.uniform(0.2, 0.8), dtype=np.uint8)
        for r, c, _ in first_pixels(mask):
            a = compiled.trace_boundary(mask, r, c)
            b = _kernels_py.trace_boundary(mask, r, c)
            np.testing.assert_array_equal(a, b)
            if len(a) > 1:
                sa = compiled.simplify_closed(a, 1.0)
                sb = _kernels_py.simplify_closed(b, 1.0)
                np.testing.assert_array_equal(np.asarray(sa), np.asarray(sb))
                assert compiled.polygon_length(sa) == pytest.approx(_kernels_py.polygon_length(sb), abs=1e-12)
            pts = a.astype(float) + rng.uniform(-0.5, 0.5, size=a.shape)
            assert compiled.convex_hull_area(pts) == pytest.approx(_kernels_py.convex_hull_area(pts), abs=1e-9)


def test_isolated_pixel_trace():
    mask = np.zeros((5, 5), np.uint8)
    mask[2, 2] = 1
    np.testing.assert_array_equal(kernels.trace_boundary(mask, 2, 2), [[2, 2]])


def test_rectangle_simplifies_to_corners():
    mask = np.zeros((8, 10), np.uint8)
    mask[2:6, 1:9] = 1
    poly = np.asarray(kernels.simplify_closed(kernels.trace_boundary(mask, 2, 1), 1.0))
    assert {tuple(p) for p in poly} == {(2, 1), (2, 8), (5, 8), (5, 1)}
    assert kernels.polygon_length(poly) == pytest.approx(2 * (7 + 3))


@pytest.mark.parametrize("mod", [_kernels_py, kernels])
def test_hull_area_matches_scipy(mod):
    rng = np.random.default_rng(11)
    for _ in range(50):
        pts = rng.uniform(-10, 10, size=(rng.integers(3, 40), 2))
        assert mod.convex_hull_area(pts) == pytest.approx(ConvexHull(pts).volume, rel=1e-12)


@pytest.mark.parametrize("mod", [_kernels_py, kernels])
def test_hull_of_degenerate_sets_is_zero(mod):
    assert mod.convex_hull_area(np.array([[0.0, 0.0]])) == 0.0
    assert mod.convex_hull_area(np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])) == 0.0


def test_fallback_selected_by_environment(monkeypatch):
    import importlib

    monkeypatch.setenv("STYLESEG_PURE_PYTHON", "1")
    try:
        mod = importlib.reload(kernels)
        assert mod.BACKEND == "python"
        assert mod.trace_boundary is _kernels_py.trace_boundary
    finally:
        monkeypatch.delenv("STYLESEG_PURE_PYTHON")
        importlib.reload(kernels)
