import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cascadesc.patches import aggregate, extract, make_grid


def loop_extract(img, b, starts_r, starts_c):
    cols = []
    for r in starts_r:
        for c in starts_c:
            cols.append(img[r:r + b, c:c + b].ravel(order="F"))
    return np.array(cols).T


def test_grid_clamps_last_start():
    g = make_grid(20, 16, 8, 7)
    assert list(g.rows) == [0, 7, 12]
    assert list(g.cols) == [0, 7, 8]
    assert len(g) == 9
    assert g.locations[:2] == [(0, 0), (0, 7)]


def test_grid_examples():
    assert make_grid(8, 8, 8, 1).locations == [(0, 0)]
    assert make_grid(9, 9, 8, 7).locations == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert make_grid(16, 16, 8, 8).locations == [(0, 0), (0, 8), (8, 0), (8, 8)]
    img = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert list(extract(img, make_grid(2, 2, 2, 1))[:, 0]) == [1.0, 3.0, 2.0, 4.0]


def test_grid_errors():
    with pytest.raises(ValueError):
        make_grid(6, 10, 8, 1)
    with pytest.raises(ValueError):
        make_grid(10, 10, 8, 0)
    with pytest.raises(ValueError):
        make_grid(10, 10, 2, 3)


def test_extract_matches_loop(rng):
    img = rng.uniform(0, 255, (21, 18))
    g = make_grid(21, 18, 5, 3)
    np.testing.assert_array_equal(extract(img, g), loop_extract(img, 5, g.rows, g.cols))


def test_column_major_flattening():
    img = np.arange(64.0).reshape(8, 8)
    p = extract(img, make_grid(8, 8, 2, 2))[:, 0]
    assert list(p) == [0.0, 8.0, 1.0, 9.0]


def test_coverage_counts(rng):
    g = make_grid(12, 12, 4, 2)
    cov = np.zeros((12, 12), int)
    for r, c in g.locations:
        cov[r:r + 4, c:c + 4] += 1
    np.testing.assert_array_equal(g.coverage(), cov)


@settings(max_examples=40, deadline=None)
@given(h=st.integers(4, 30), w=st.integers(4, 30), b=st.integers(1, 4), s=st.integers(1, 4),
       seed=st.integers(0, 2**16))
def test_aggregate_extract_identity(h, w, b, s, seed):
    s = min(s, b)
    img = np.random.default_rng(seed).uniform(-100, 300, (h, w))
    g = make_grid(h, w, b, s)
    np.testing.assert_allclose(aggregate(extract(img, g), g), img, atol=1e-12, rtol=0)


def test_aggregate_mean_of_overlapping_values():
    g = make_grid(2, 2, 2, 1)
    both = np.concatenate([np.zeros((4, 1)), np.full((4, 1), 10.0)], axis=1)
    grid2 = type(g)(2, 2, 2, 1, np.array([0, 0]), np.array([0]))
    np.testing.assert_array_equal(aggregate(both, grid2), np.full((2, 2), 5.0))


def test_linearity(rng):
    g = make_grid(14, 11, 4, 3)
    a, b = rng.normal(size=(2, 14, 11))
    np.testing.assert_allclose(extract(2 * a - 3 * b, g), 2 * extract(a, g) - 3 * extract(b, g))
    pa, pb = rng.normal(size=(2, 16, len(g)))
    np.testing.assert_allclose(aggregate(2 * pa + pb, g), 2 * aggregate(pa, g) + aggregate(pb, g))


def test_aggregate_averages_overlaps():
    g = make_grid(1 * 3, 3, 2, 1)
    patches = np.stack([np.full(4, v) for v in (1.0, 2.0, 3.0, 4.0)], axis=1)
    out = aggregate(patches, g)
    assert out[1, 1] == pytest.approx(2.5)
    assert out[0, 0] == 1.0 and out[2, 2] == 4.0


def test_aggregate_include_mask_leaves_uncovered_zero():
    g = make_grid(8, 8, 4, 4)
    patches = np.ones((16, 4))
    out = aggregate(patches, g, include=[True, False, False, True])
    assert out[:4, :4].min() == 1.0 and out[:4, 4:].max() == 0.0


def test_shape_checks():
    g = make_grid(8, 8, 4, 4)
    with pytest.raises(ValueError):
        extract(np.zeros((8, 9)), g)
    with pytest.raises(ValueError):
        aggregate(np.zeros((16, 3)), g)
