import math

import numpy as np
import pytest

from smalltime.paths import (BrownianBundle, BundleSpec, TimeGrid,
                             ergodic_grid, geometric_grid, make_grid,
                             refine_bisect, rotate_bundle, sample_bundle,
                             uniform_grid, union_grid)


# --------------------------------------------------------------------- grids

def test_uniform_grid_points():
    g = uniform_grid(1.0, 4)
    assert np.allclose(g.points, [0.0, 0.25, 0.5, 0.75, 1.0])
    assert g.kind == "uniform"


def test_geometric_grid_points():
    g = geometric_grid(1e-2, 0.5, 2)
    assert np.allclose(g.points, [0.0025, 0.005, 0.01], rtol=1e-14)
    assert g.points[0] > 0.0


def test_geometric_grid_rejects_bad_theta():
    with pytest.raises(ValueError):
        geometric_grid(1e-2, 1.5, 2)
    with pytest.raises(ValueError):
        geometric_grid(1e-2, 1.0, 2)


def test_geometric_grid_deep_levels_no_underflow():
    g = geometric_grid(1e-2, 0.5, 940)
    assert g.points[0] > 0.0
    with pytest.raises(ValueError):
        geometric_grid(1e-2, 0.5, 2000)  # below the 1e-300 floor


def test_grid_invariants():
    with pytest.raises(ValueError):
        TimeGrid(np.array([0.0, 0.5, 0.5]))
    with pytest.raises(ValueError):
        TimeGrid(np.array([-1.0, 0.5]))


def test_union_and_make_grid():
    g = union_grid(uniform_grid(1.0, 2), geometric_grid(0.25, 0.5, 1))
    assert np.allclose(g.points, [0.0, 0.125, 0.25, 0.5, 1.0])
    g2 = make_grid("uniform", horizon=1.0, steps=2)
    assert np.allclose(g2.points, [0.0, 0.5, 1.0])
    with pytest.raises(ValueError):
        make_grid("nope")


def test_ergodic_grid_times():
    g = ergodic_grid(5)
    assert np.allclose(g.points, np.exp(-np.arange(5, 0, -1)), rtol=1e-12)


# ------------------------------------------------------------------ sampling

def test_bundle_starts_at_zero_and_is_deterministic():
    g = uniform_grid(1.0, 10)
    b1 = sample_bundle(2, g, 7, seed=123)
    b2 = sample_bundle(2, g, 7, seed=123)
    assert np.array_equal(b1.paths, b2.paths)
    assert np.all(b1.paths[:, :, 0] == 0.0)
    b3 = sample_bundle(2, g, 7, seed=124)
    assert not np.array_equal(b1.paths, b3.paths)


def test_bundle_chunking_matches_global_indexing():
    g = uniform_grid(0.5, 8)
    full = sample_bundle(3, g, 10, seed=9)
    part = sample_bundle(3, g, 4, seed=9, first_path=6)
    assert np.array_equal(full.paths[6:], part.paths)
    spec = BundleSpec(3, g, 10, seed=9, chunk_size=3)
    glued = np.concatenate([c.paths for c in spec.chunks()], axis=0)
    assert np.array_equal(full.paths, glued)


def test_gaussian_statistics():
    g = uniform_grid(1.0, 1)
    b = sample_bundle(1, g, 100_000, seed=2024)
    w1 = b.paths[:, 0, -1]
    n = w1.size
    assert abs(w1.mean()) < 4.0 / math.sqrt(n)
    s2 = w1.var(ddof=1)
    assert abs(s2 - 1.0) < 5.0 * math.sqrt(2.0 / n)


def test_increment_sanity_zscore():
    b = sample_bundle(2, uniform_grid(1.0, 50), 2000, seed=5)
    assert abs(b.increment_variance_zscore()) < 5.0


def test_geometric_bundle_statistics_and_nesting():
    g_small = geometric_grid(1e-2, 0.5, 10)
    g_big = geometric_grid(1e-2, 0.5, 25)
    a = sample_bundle(1, g_small, 500, seed=31)
    b = sample_bundle(1, g_big, 500, seed=31)
    # coarsest-first bridge: extending the grid extends the paths
    assert np.array_equal(a.paths, b.paths[:, :, 15:])
    assert abs(b.increment_variance_zscore()) < 5.0


def test_self_similarity_spot_check():
    b = sample_bundle(1, ergodic_grid(40), 4000, seed=17)
    t = b.grid.points
    for idx in (0, 20, 39):
        n = 40 - idx
        x = math.exp(0.5 * n) * b.paths[:, 0, idx]
        s2 = x.var(ddof=1)
        assert abs(s2 - 1.0) < 5.0 * math.sqrt(2.0 / x.size)


# ------------------------------------------------------------------ rotation

def test_rotate_identity_is_noop():
    b = sample_bundle(2, uniform_grid(1.0, 5), 3, seed=1)
    r = rotate_bundle(b, np.eye(2))
    assert np.array_equal(b.paths, r.paths)


def test_rotate_twice_by_quarter_turn_negates():
    b = sample_bundle(2, uniform_grid(1.0, 5), 3, seed=1)
    u = np.array([[0.0, -1.0], [1.0, 0.0]])
    r = rotate_bundle(rotate_bundle(b, u), u)
    assert np.allclose(r.paths, -b.paths, atol=0)


def test_rotate_rejects_non_orthogonal():
    b = sample_bundle(2, uniform_grid(1.0, 5), 3, seed=1)
    with pytest.raises(ValueError):
        rotate_bundle(b, np.array([[1.0, 0.1], [0.0, 1.0]]))


def test_rotated_bundle_keeps_increment_statistics():
    b = sample_bundle(2, uniform_grid(1.0, 50), 2000, seed=23)
    ang = 0.7
    u = np.array([[math.cos(ang), -math.sin(ang)], [math.sin(ang), math.cos(ang)]])
    r = rotate_bundle(b, u)
    assert abs(r.increment_variance_zscore()) < 5.0


# ---------------------------------------------------------------- refinement

def test_refine_bisect_couples_shared_times():
    b = sample_bundle(1, uniform_grid(1.0, 8), 200, seed=40)
    fine = refine_bisect(b)
    assert fine.grid.points.size == 17
    assert np.array_equal(fine.paths[:, :, ::2], b.paths)
    finer = refine_bisect(fine)
    assert np.array_equal(finer.paths[:, :, ::4], b.paths)
    # refinement draws fresh increments each level, and stays Brownian
    assert abs(finer.increment_variance_zscore()) < 5.0


def test_refine_bisect_deterministic():
    b = sample_bundle(1, uniform_grid(1.0, 4), 10, seed=3)
    f1 = refine_bisect(b)
    f2 = refine_bisect(sample_bundle(1, uniform_grid(1.0, 4), 10, seed=3))
    assert np.array_equal(f1.paths, f2.paths)


# -------------------------------------------------------------------- export

def test_bundle_csv_export(tmp_path):
    b = sample_bundle(2, uniform_grid(1.0, 2), 2, seed=77)
    out = tmp_path / "bundle.csv"
    b.to_csv(out)
    lines = out.read_text().splitlines()
    assert lines[0] == "path,time,W_1,W_2"
    assert len(lines) == 1 + 2 * 3
