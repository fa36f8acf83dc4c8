import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lscontact.contour import contour_segments, interior_polygons, polygon_area
from lscontact.grid import Grid
from lscontact.levelset import (Circle, Polygon, ProjectionError, Rectangle, advect,
                                circular_cap, closest_point_projection, extrapolate,
                                init_primitive, load_levelset, normal, project_points,
                                reinitialize, save_levelset)


def contour_points(grid, phi):
    segs, _ = contour_segments(grid, phi)
    return segs.reshape(-1, 2)


def enclosed_area(grid, phi):
    cells = np.arange(grid.n_cells)
    inner = np.count_nonzero(grid.classify_cells(phi).ravel() == 0)
    cut = np.flatnonzero(grid.classify_cells(phi).ravel() == 1)
    part = sum(polygon_area(p) for polys in interior_polygons(grid, phi, cut) for p in polys)
    return inner * grid.h ** 2 + part


# ------------------------------------------------------------ primitives

def test_circle_signed_distance_samples():
    c = Circle((0.0, 0.0), 1.0)
    assert c.signed_distance(np.array([[2.0, 0.0], [0.0, 0.0]])) == pytest.approx([1.0, -1.0])


def test_unit_square_polygon_centre():
    sq = Polygon(((0, 0), (1, 0), (1, 1), (0, 1)))
    assert sq.signed_distance(np.array([[0.5, 0.5]]))[0] == pytest.approx(-0.5)
    # clockwise input describes the same region
    cw = Polygon(((0, 0), (0, 1), (1, 1), (1, 0)))
    assert cw.signed_distance(np.array([[0.5, 0.5], [2.0, 0.5]])) == pytest.approx([-0.5, 1.0])


def test_rectangle_matches_polygon():
    r = Rectangle((-1.0, -0.5), (2.0, 1.0))
    pts = np.random.default_rng(3).uniform(-3, 3, size=(200, 2))
    assert np.allclose(r.signed_distance(pts), r.as_polygon().signed_distance(pts), atol=1e-12)


def test_self_intersecting_polygon_rejected():
    with pytest.raises(ValueError, match="self-intersecting"):
        Polygon(((0, 0), (1, 1), (1, 0), (0, 1)))


def test_circular_cap_is_a_valid_polygon():
    cap = circular_cap((0.0, 10.0), 10.0, 4.0, below=True, spacing=0.05)
    xmin, xmax, ymin, ymax = cap.bounds()
    assert ymin == pytest.approx(0.0, abs=1e-4) and ymax == pytest.approx(4.0)
    assert xmax == pytest.approx(8.0, abs=1e-9)


def test_init_primitive_respects_halo():
    g = Grid.from_extent(-1, 1, -1, 1, 0.1)
    with pytest.raises(ValueError, match="halo"):
        init_primitive(Circle((0.0, 0.0), 0.9), g)


def test_init_primitive_snaps_grid_line_boundaries():
    g = Grid.from_extent(-1, 1, -1, 1, 0.1)
    phi = init_primitive(Rectangle((-0.5, -0.5), (0.5, 0.3)), g)
    j = int(round((0.3 + 1) / 0.1))
    assert np.all(phi[j, 7:14] == 0.0)


def test_levelset_file_round_trip(tmp_path, disc_grid):
    phi = init_primitive(Circle((0.1, -0.2), 1.0), disc_grid)
    save_levelset(tmp_path / "ls.txt", disc_grid, phi)
    g2, phi2 = load_levelset(tmp_path / "ls.txt")
    assert g2 == disc_grid
    assert np.array_equal(phi, phi2)


def test_levelset_file_wrong_count(tmp_path):
    (tmp_path / "bad.txt").write_text("4 4 1.0 0 0\n1 2 3\n")
    with pytest.raises(ValueError, match="expected 16"):
        load_levelset(tmp_path / "bad.txt")


# --------------------------------------------------------- reinitialize

@pytest.mark.parametrize("direction", [(0.0, 1.0), (0.6, 0.8), (1.0, 0.0)])
def test_reinit_fixed_point_for_exact_distance(direction, disc_grid):
    n = np.asarray(direction)
    phi = disc_grid.nodes() @ n - 0.137
    # near the domain corners the clipped contour ends before the foot point
    X = disc_grid.nodes()
    inner = (np.abs(X[..., 0]) < 1.5) & (np.abs(X[..., 1]) < 1.5)
    assert np.abs(reinitialize(disc_grid, phi) - phi)[inner].max() < 1e-10


def test_reinit_recovers_distance_from_scaled_circle(disc_grid):
    sd = init_primitive(Circle((0.0, 0.0), 1.0), disc_grid)
    out = reinitialize(disc_grid, 3 * sd)
    r = np.linalg.norm(contour_points(disc_grid, out), axis=1)
    assert np.abs(r - 1.0).max() < disc_grid.h ** 2
    band = np.abs(out) < 3 * disc_grid.h
    assert np.abs(out - sd)[band].max() < 0.1 * disc_grid.h


def test_reinit_keeps_shifted_contour(disc_grid):
    sd = init_primitive(Circle((0.0, 0.0), 1.0), disc_grid)
    out = reinitialize(disc_grid, sd + 0.4 * disc_grid.h)
    r = np.linalg.norm(contour_points(disc_grid, out), axis=1)
    assert np.allclose(r, 1.0 - 0.4 * disc_grid.h, atol=disc_grid.h ** 2)


def test_reinit_gradient_near_interface(disc_grid):
    phi = reinitialize(disc_grid, 2.5 * init_primitive(Circle((0.05, 0.0), 1.2), disc_grid))
    g = np.linalg.norm(disc_grid.nodal_gradient(phi), axis=-1)
    band = np.abs(phi) < 3 * disc_grid.h
    assert np.abs(g[band] - 1).max() < 0.1


def test_reinit_idempotent(disc_grid):
    pent = Polygon(tuple((np.cos(a), 0.8 * np.sin(a)) for a in np.linspace(0, 2 * np.pi, 6)[:-1]))
    once = reinitialize(disc_grid, init_primitive(pent, disc_grid) * 1.7)
    twice = reinitialize(disc_grid, once)
    assert np.abs(twice - once).max() < 1e-8


def test_reinit_requires_interface(disc_grid):
    with pytest.raises(ValueError, match="no interface"):
        reinitialize(disc_grid, np.ones(disc_grid.shape))


# ----------------------------------------------------------- extension

def test_extrapolate_constant(disc_grid):
    phi = init_primitive(Circle((0.0, 0.0), 1.0), disc_grid)
    f = np.where(phi <= 0, 2.5, np.nan)
    assert np.allclose(extrapolate(disc_grid, phi, f), 2.5)


def test_extrapolate_angle_is_radially_constant():
    g = Grid.from_extent(-3, 3, -3, 3, 0.05)
    phi = init_primitive(Circle((0.0, 0.0), 1.5), g)
    X, Y = g.nodes()[..., 0], g.nodes()[..., 1]
    theta = np.arctan2(Y, X + 1e-300)
    # keep away from the branch cut of the angle
    f = np.where(phi <= 0, theta, 0.0)
    out = extrapolate(g, phi, f, band=4 * g.h)
    band = (phi > 0) & (phi < 3 * g.h) & (np.abs(Y) > 0.3)
    assert np.abs(out - theta)[band].max() < 2 * g.h


def test_extrapolate_leaves_known_values(disc_grid, rng):
    phi = init_primitive(Circle((0.0, 0.0), 1.0), disc_grid)
    f = rng.normal(size=disc_grid.shape + (2,))
    out = extrapolate(disc_grid, phi, f)
    inside = phi <= 0
    assert np.array_equal(out[inside], f[inside])


def test_extrapolate_bodies_independently(disc_grid):
    a = init_primitive(Circle((-1.0, 0.0), 0.6), disc_grid)
    b = init_primitive(Circle((1.0, 0.0), 0.6), disc_grid)
    fa = np.where(a <= 0, 1.0, -99.0)
    fb = np.where(b <= 0, 7.0, -99.0)
    assert np.allclose(extrapolate(disc_grid, a, fa), 1.0)
    assert np.allclose(extrapolate(disc_grid, b, fb), 7.0)


def test_extrapolate_needs_known_nodes(disc_grid):
    with pytest.raises(ValueError, match="no known"):
        extrapolate(disc_grid, np.ones(disc_grid.shape), np.zeros(disc_grid.shape))


# ------------------------------------------------------------ advection

def test_advect_zero_velocity_is_exact_copy(disc_grid):
    phi = init_primitive(Circle((0.0, 0.0), 1.0), disc_grid)
    out = advect(disc_grid, phi, np.zeros(disc_grid.shape + (2,)))
    assert np.array_equal(out, phi) and out is not phi


def test_advect_rejects_bad_input(disc_grid):
    phi = np.zeros(disc_grid.shape)
    with pytest.raises(ValueError):
        advect(disc_grid, phi, np.zeros(disc_grid.shape + (2,)), scheme="eno")
    v = np.zeros(disc_grid.shape + (2,))
    v[3, 3, 0] = np.nan
    with pytest.raises(ValueError):
        advect(disc_grid, phi, v)


def test_translation_moves_circle():
    g = Grid.from_extent(-2, 2, -2, 2, 0.1)
    R, c = 1.0, 0.35
    phi = init_primitive(Circle((0.0, 0.0), R), g)
    out = advect(g, phi, np.broadcast_to([c, 0.0], g.shape + (2,)))
    pts = contour_points(g, out)
    centre = pts.mean(axis=0)
    assert centre == pytest.approx([c, 0.0], abs=0.01 * g.h)
    assert np.abs(np.linalg.norm(pts - [c, 0.0], axis=1) - R).max() < 0.01 * R


def test_translation_round_trip(disc_grid):
    phi = init_primitive(Circle((0.0, 0.0), 1.0), disc_grid)
    v = np.broadcast_to([0.3, -0.2], disc_grid.shape + (2,))
    back = advect(disc_grid, advect(disc_grid, phi, v), -v)
    band = np.abs(phi) < 3 * disc_grid.h
    assert np.abs(back - phi)[band].max() < 0.02 * disc_grid.h


def test_translation_conserves_area():
    g = Grid.from_extent(-2, 2, -2, 2, 0.05)
    phi = init_primitive(Circle((-0.2, 0.0), 0.8), g)
    a0 = enclosed_area(g, phi)
    # 10 substeps at CFL 0.5
    out = advect(g, phi, np.broadcast_to([0.25, 0.0], g.shape + (2,)))
    assert abs(enclosed_area(g, out) - a0) < 0.01 * a0


def _perturbed(X, Y):
    return X ** 2 + Y ** 2 - (1 + 0.2 * np.sin(3 * X) * np.sin(2 * Y))


@pytest.mark.parametrize("scheme, lo, hi", [("weno5", 3.0, np.inf), ("upwind", 0.8, 1.3)])
def test_observed_order(scheme, lo, hi):
    v = np.array([0.37, -0.23])
    errs = []
    for h in (0.1, 0.05, 0.025):
        g = Grid.from_extent(-2, 2, -2, 2, h)
        X, Y = g.nodes()[..., 0], g.nodes()[..., 1]
        out = advect(g, _perturbed(X, Y), np.broadcast_to(v, g.shape + (2,)), scheme=scheme)
        inner = (np.abs(X) < 1.2) & (np.abs(Y) < 1.2)
        errs.append(np.abs(out - _perturbed(X - v[0], Y - v[1]))[inner].max())
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= lo) and np.all(orders <= hi)


# ----------------------------------------------- projection and normals

@pytest.fixture
def circle_ls(disc_grid):
    return disc_grid, init_primitive(Circle((0.0, 0.0), 1.0), disc_grid)


def test_cpp_outside_point(circle_ls):
    g, phi = circle_ls
    assert closest_point_projection(g, phi, np.array([1.8, 0.0])) == pytest.approx([1.0, 0.0], abs=2e-3)


def test_cpp_interior_point(circle_ls):
    g, phi = circle_ls
    p = closest_point_projection(g, phi, np.array([0.3, 0.4]))
    assert p == pytest.approx([0.6, 0.8], abs=5e-3)


def test_cpp_fixed_point(circle_ls):
    g, phi = circle_ls
    x0 = np.array([np.cos(0.3), np.sin(0.3)])
    x0 = closest_point_projection(g, phi, x0)
    assert closest_point_projection(g, phi, x0) == pytest.approx(x0, abs=1e-3 * g.h)


def test_cpp_failure_raises(disc_grid):
    flat = np.zeros(disc_grid.shape) + 1.0
    with pytest.raises(ProjectionError):
        closest_point_projection(disc_grid, flat, np.array([0.0, 0.0]))


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 1.9), st.floats(-np.pi, np.pi))
def test_cpp_residuals_met_when_converged(r, a):
    g = Grid.from_extent(-2.5, 2.5, -2.5, 2.5, 0.1)
    poly = Polygon(((-1, -1), (1.2, -0.8), (1.4, 0.9), (-0.3, 1.3), (-1.3, 0.2)))
    for phi in (init_primitive(Circle((0, 0), 1.1), g), init_primitive(poly, g)):
        x0 = np.array([[r * np.cos(a), r * np.sin(a)]])
        x, ok, rp, rt = project_points(g, phi, x0)
        if ok[0]:
            assert rp[0] < 1e-3 * g.h and rt[0] < 1e-3 * g.h
            assert abs(g.interpolate(phi, x[0])) < 1e-3 * g.h


@pytest.mark.parametrize("x, n", [((1.0, 0.0), (1.0, 0.0)), ((0.0, -1.0), (0.0, -1.0))])
def test_circle_normals(circle_ls, x, n):
    g, phi = circle_ls
    assert normal(g, phi, np.array(x)) == pytest.approx(n, abs=1e-3)


def test_half_plane_normal(disc_grid):
    phi = disc_grid.nodes()[..., 1].copy()
    pts = np.array([[-1.3, 0.2], [0.77, -0.4]])
    assert np.allclose(normal(disc_grid, phi, pts), [0.0, 1.0], atol=1e-12)


def test_degenerate_normal_raises(disc_grid):
    with pytest.raises(ValueError, match="degenerate"):
        normal(disc_grid, np.ones(disc_grid.shape), np.array([0.0, 0.0]))
