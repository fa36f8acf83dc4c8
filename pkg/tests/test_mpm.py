import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lscontact.grid import Grid
from lscontact.levelset import Circle, init_primitive
from lscontact.mechanics import Material, build_quadrature
from lscontact.mpm import (MaterialPoints, MlsConfig, ReconstructionError, confine_to_points,
                           mls_reconstruct,
                           mls_weight, project_state, seed_points, update_points)


@pytest.fixture
def disc():
    g = Grid.from_extent(-1.5, 1.5, -1.5, 1.5, 0.1)
    return g, build_quadrature(g, init_primitive(Circle((0.0, 0.0), 1.0), g))


def test_seed_points(disc):
    g, q = disc
    pts = seed_points(q)
    assert len(pts) == len(q)
    assert np.all(pts.stress == 0)
    assert abs(pts.total_volume - np.pi) < 0.01 * np.pi
    pre = seed_points(q, prestress=(1.0, 2.0, 0.5))
    assert np.all(pre.stress == [1.0, 2.0, 0.5])


def test_seed_from_empty_quadrature_fails(disc):
    g, _ = disc
    empty = build_quadrature(g, np.ones(g.shape))
    with pytest.raises(ValueError, match="empty"):
        seed_points(empty, body=4)


def test_zero_increment_leaves_points(disc):
    g, q = disc
    pts = seed_points(q)
    out = update_points(g, pts, np.zeros(g.shape + (2,)), Material(1.0, 0.3))
    assert np.array_equal(out.x, pts.x) and np.array_equal(out.stress, pts.stress)


def test_translation_moves_without_stress(disc):
    g, q = disc
    pts = seed_points(q, prestress=(1.0, -1.0, 0.2))
    out = update_points(g, pts, np.broadcast_to([0.02, -0.01], g.shape + (2,)), Material(1.0, 0.3))
    assert np.allclose(out.x, pts.x + [0.02, -0.01], atol=1e-15)
    assert np.allclose(out.stress, pts.stress, atol=1e-15)
    assert out.total_volume == pts.total_volume


def test_uniaxial_stretch_stress(disc):
    g, q = disc
    E, alpha = 7.0, 1e-3
    du = np.zeros(g.shape + (2,))
    du[..., 0] = alpha * g.nodes()[..., 0]
    out = update_points(g, seed_points(q), du, Material(E, 0.0))
    assert np.allclose(out.stress[:, 0], E * alpha, rtol=1e-12)
    assert np.allclose(out.stress[:, 1:], 0, atol=1e-15)


def test_point_leaving_grid_fails(disc):
    g, q = disc
    pts = seed_points(q)
    pts.x[0] = [10.0, 0.0]
    with pytest.raises(ValueError, match="left the grid"):
        update_points(g, pts, np.zeros(g.shape + (2,)), Material(1.0, 0.3))


def test_small_increments_compose(disc, rng):
    g, q = disc
    pts = seed_points(q)
    X = g.nodes()
    a = 1e-3 * g.h * np.stack([np.sin(X[..., 1]), np.cos(X[..., 0])], -1)
    b = 1e-3 * g.h * np.stack([X[..., 0] * X[..., 1], -X[..., 0]], -1)
    mat = Material(1.0, 0.3)
    two = update_points(g, update_points(g, pts, a, mat), b, mat)
    one = update_points(g, pts, a + b, mat)
    assert np.abs(two.x - one.x).max() < 1e-6


# ------------------------------------------------------------------ MLS

@pytest.mark.parametrize("r, w", [(0.0, 0.75), (0.5, 0.5), (1.0, 0.125), (1.5, 0.0), (2.0, 0.0)])
def test_weight_values(r, w):
    assert mls_weight(r) == pytest.approx(w, abs=1e-15)


def test_weight_is_continuous():
    eps = 1e-9
    for r in (0.5, 1.5):
        assert mls_weight(r - eps) == pytest.approx(mls_weight(r + eps), abs=1e-8)


def _cloud(rng, n=400):
    return rng.uniform(-1, 1, size=(n, 2))


def test_constant_and_linear_reproduction(rng):
    cfg = MlsConfig(h=0.2)
    x = _cloud(rng)
    q = rng.uniform(-0.8, 0.8, size=(50, 2))
    out, fb = mls_reconstruct(x, np.full(len(x), 3.0), q, cfg)
    assert np.allclose(out, 3.0, atol=1e-12) and not fb.any()
    out, _ = mls_reconstruct(x, 2 * x[:, 0] - x[:, 1], q, cfg)
    assert np.allclose(out, 2 * q[:, 0] - q[:, 1], atol=1e-12)


def test_collinear_points_use_weighted_mean():
    cfg = MlsConfig(h=1.0)
    x = np.column_stack([np.linspace(-1, 1, 9), np.zeros(9)])
    f = np.arange(9.0)
    q = np.array([[0.1, 0.2]])
    out, fb = mls_reconstruct(x, f, q, cfg)
    w = mls_weight(np.linalg.norm(x - q, axis=1))
    assert fb[0]
    assert out[0] == pytest.approx(np.dot(w, f) / w.sum(), rel=1e-12)


def test_too_few_neighbours_raises():
    cfg = MlsConfig(h=1.0)
    x = np.array([[0.0, 0.0], [0.5, 0.0], [5.0, 5.0]])
    with pytest.raises(ReconstructionError, match="has 2 neighbours"):
        mls_reconstruct(x, np.ones(3), np.array([[-0.9, 0.0]]), cfg)


def test_support_must_be_positive():
    with pytest.raises(ValueError):
        MlsConfig(h=0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_linear_fields_reproduced(seed, c0, cx, cy):
    rng = np.random.default_rng(seed)
    x = _cloud(rng, 300)
    q = rng.uniform(-0.7, 0.7, size=(20, 2))
    f = lambda p: c0 + cx * p[:, 0] + cy * p[:, 1]
    out, fb = mls_reconstruct(x, f(x), q, MlsConfig(h=0.25))
    assert np.allclose(out[~fb], f(q)[~fb], atol=1e-10)


def test_project_uniform_and_linear_stress(disc, rng):
    g, q = disc
    pts = seed_points(q)
    cfg = MlsConfig(h=g.h)
    pts.stress[:] = [1.0, -2.0, 0.3]
    assert np.allclose(project_state(pts, q, cfg), [1.0, -2.0, 0.3], atol=1e-12)
    pts.stress[:, 0] = 4 * pts.x[:, 0] - pts.x[:, 1]
    out = project_state(pts, q, cfg)
    assert np.allclose(out[:, 0], 4 * q.x[:, 0] - q.x[:, 1], atol=1e-10)
    # back to the points again
    back, _ = mls_reconstruct(q.x, out, pts.x, cfg)
    assert np.allclose(back, pts.stress, atol=1e-10)


def test_project_error_names_body(disc):
    g, q = disc
    pts = MaterialPoints(np.array([[0.0, 0.0]]), np.ones(1), np.zeros((1, 3)), body=3)
    with pytest.raises(ReconstructionError, match="body 3"):
        project_state(pts, q, MlsConfig(h=g.h))


def test_project_starved_point_takes_nearest_mean(disc, caplog):
    g, q = disc
    pts = seed_points(q)
    cfg = MlsConfig(h=g.h)
    pts.stress[:, 0] = np.arange(len(pts.x))
    k = len(q.x) // 2
    keep = np.linalg.norm(pts.x - q.x[k], axis=1) >= cfg.radius
    thin = MaterialPoints(pts.x[keep], pts.volume[keep], pts.stress[keep], body=pts.body)
    with caplog.at_level("WARNING", logger="lscontact.mpm"):
        out = project_state(thin, q, cfg)
    d = np.linalg.norm(thin.x - q.x[k], axis=1)
    nearest = np.argsort(d)[:cfg.min_neighbors]
    assert out[k, 0] == pytest.approx(thin.stress[nearest, 0].mean())
    assert "outside the MLS support" in caplog.text
    # with the reach shrunk to the support radius the same query is an error
    with pytest.raises(ReconstructionError, match="material points within"):
        project_state(thin, q, cfg, reach=1.0)


def test_confinement_keeps_a_seeded_body(disc):
    g, q = disc
    phi = init_primitive(Circle((0.0, 0.0), 1.0), g)
    out, cut = confine_to_points(g, phi, seed_points(q).x, g.h)
    assert cut == 0 and out is phi


def test_confinement_cuts_unsupported_region(disc):
    g, q = disc
    phi = init_primitive(Circle((0.0, 0.0), 1.0), g)
    x = seed_points(q).x
    left = x[x[:, 0] < 0]
    out, cut = confine_to_points(g, phi, left, g.h)
    xn = g.nodes()[..., 0]
    assert cut == np.sum((phi < 0) & (out > 0)) > 0
    assert np.all(out[(phi < 0) & (xn > 2 * g.h)] > 0)
    # nodes beside the remaining material and all outside nodes are untouched
    assert np.array_equal(out[xn <= 0], phi[xn <= 0])
    assert np.array_equal(out[phi >= 0], phi[phi >= 0])
