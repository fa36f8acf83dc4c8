import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lscontact.contact import (ContactPair, FrictionLaw, active_set, build_intermediate_surface,
                               contact_region, evaluate_gaps, min_level_set, return_map,
                               transfer_plastic_history, update_tractions)
from lscontact.contour import contour_segments
from lscontact.grid import Grid
from lscontact.levelset import Circle, Rectangle, init_primitive

R = 1.0


@pytest.fixture(scope="module")
def two_circles():
    # offset rows so a segment midpoint falls on the centre line
    g = Grid.from_extent(-2.6, 2.6, -1.625, 1.625, 0.05)
    delta = 0.03
    a = init_primitive(Circle((-(R + delta / 2), 0.0), R), g)
    b = init_primitive(Circle((R + delta / 2, 0.0), R), g)
    return g, a, b, delta


def surface(g, a, b, i=0, j=1):
    shift = 1.5 * g.h
    return build_intermediate_surface(g, a, b, contact_region(g, a, b, shift), i, j, shift)


# ------------------------------------------------------------ regions

def test_min_level_set(rng):
    a, b = rng.normal(size=(2, 5, 7))
    m = min_level_set(a, b)
    assert np.all(m <= a) and np.all(m <= b)
    assert np.array_equal(min_level_set(a, a), a)
    assert np.all(min_level_set(-np.ones(3), np.ones(3)) == -1)
    with pytest.raises(ValueError, match="mismatch"):
        min_level_set(a, b[:, :3])


def test_far_bodies_have_no_region():
    g = Grid.from_extent(-3, 3, -2, 2, 0.1)
    a = init_primitive(Circle((-1.5, 0.0), 1.0), g)
    b = init_primitive(Circle((1.5, 0.0), 1.0), g)
    assert not contact_region(g, a, b, 1.5 * g.h).any()


def test_region_centred_on_midline(two_circles):
    g, a, b, _ = two_circles
    mask = contact_region(g, a, b, 1.5 * g.h)
    assert mask.any()
    x = g.nodes()[mask]
    assert np.abs(x[:, 0]).max() < 2 * g.h
    assert x[:, 1].mean() == pytest.approx(0.0, abs=1e-12)


def test_region_excludes_body_interiors():
    g = Grid.from_extent(-2, 2, -2, 2, 0.1)
    a = init_primitive(Circle((-0.45, 0.0), 0.5), g)
    b = init_primitive(Circle((0.45, 0.0), 0.5), g)
    mask = contact_region(g, a, b, 1.5 * g.h)
    assert np.all(a[mask] > 0) and np.all(b[mask] > 0)


# ------------------------------------------------------------ surface

def test_pair_needs_distinct_bodies():
    with pytest.raises(ValueError):
        ContactPair(2, 2, 0.1)


def test_two_circle_surface_is_the_midline(two_circles):
    g, a, b, delta = two_circles
    pair = surface(g, a, b)
    assert len(pair) > 0
    assert np.abs(pair.x[:, 0]).max() < 1e-12
    # n points from body i towards body j
    assert np.allclose(pair.n, [1.0, 0.0], atol=2e-3)
    mid = np.argmin(np.abs(pair.x[:, 1]))
    # bilinear interpolation of the distance fields costs O(h^2)
    assert pair.g_n0[mid] == pytest.approx(delta, abs=0.5 * g.h ** 2)


def test_surface_points_on_intermediate_contour(two_circles):
    g, a, b, _ = two_circles
    pair = surface(g, a, b)
    assert np.abs(g.interpolate(0.5 * (a - b), pair.x)).max() < 1e-3 * g.h
    assert np.allclose(np.einsum("nd,nd->n", pair.n, pair.t), 0.0)
    assert np.allclose(np.linalg.norm(pair.t, axis=1), 1.0)


def test_weights_match_contour_length():
    g = Grid.from_extent(-2.5, 2.5, -2.5, 2.5, 0.05)
    circle, plate = Circle((0.0, 0.0), 1.0), Rectangle((-2.0, -2.0), (2.0, -1.02))
    a, b = init_primitive(circle, g), init_primitive(plate, g)
    pair = surface(g, a, b)
    # same cells as the surface builder, contour of the exact field on a finer grid
    shift = 1.5 * g.h
    nodes = contact_region(g, a, b, shift) | (np.maximum(a, b) <= shift)
    cells = (nodes[:-1, :-1] | nodes[:-1, 1:] | nodes[1:, 1:] | nodes[1:, :-1]).ravel()
    fine = Grid.from_extent(-2.5, 2.5, -2.5, 2.5, g.h / 10)
    X = fine.nodes().reshape(-1, 2)
    phi_int = 0.5 * (circle.signed_distance(X) - plate.signed_distance(X)).reshape(fine.shape)
    segs, _ = contour_segments(fine, phi_int)
    keep = cells[g.locate(segs.mean(axis=1))[0]]
    arc = np.linalg.norm(segs[keep, 1] - segs[keep, 0], axis=-1).sum()
    assert abs(pair.weight.sum() - arc) < 0.02 * arc


def test_gaps_zero_displacement(two_circles):
    g, a, b, delta = two_circles
    pair = surface(g, a, b)
    z = np.zeros((len(pair), 2))
    gn, gt = evaluate_gaps(pair, z, z)
    assert np.array_equal(gn, pair.g_n0) and np.all(gt == 0)
    c = np.broadcast_to([0.3, -0.7], z.shape)
    gn, gt = evaluate_gaps(pair, c, c)
    assert np.allclose(gn, pair.g_n0, atol=1e-15) and np.allclose(gt, 0, atol=1e-15)


def test_closing_gap_touches(two_circles):
    g, a, b, delta = two_circles
    pair = surface(g, a, b)
    mid = np.argmin(np.abs(pair.x[:, 1]))
    uj = -pair.g_n0[:, None] * pair.n
    gn, _ = evaluate_gaps(pair, np.zeros_like(uj), uj)
    assert gn[mid] == pytest.approx(0.0, abs=1e-15)


def test_swap_is_unbiased(two_circles):
    g, a, b, _ = two_circles
    law = FrictionLaw(0.4, 1e-3, 1e-3)
    p, q = surface(g, a, b, 0, 1), surface(g, b, a, 1, 0)
    order_p, order_q = np.lexsort(p.x.T), np.lexsort(q.x.T)
    assert np.allclose(p.x[order_p], q.x[order_q], atol=1e-12)
    assert np.allclose(p.n[order_p], -q.n[order_q], atol=1e-12)
    rng = np.random.default_rng(5)
    ui, uj = rng.normal(scale=0.02, size=(2, len(p), 2))
    evaluate_gaps(p, ui[order_p.argsort()], uj[order_p.argsort()])
    evaluate_gaps(q, uj[order_q.argsort()], ui[order_q.argsort()])
    update_tractions(p, law)
    update_tractions(q, law)
    for name in ("g_n", "tau_n"):
        assert np.allclose(getattr(p, name)[order_p], getattr(q, name)[order_q], atol=1e-10)
    assert np.allclose(np.abs(p.tau_t[order_p]), np.abs(q.tau_t[order_q]), atol=1e-10)
    assert np.allclose(p.force_on(0), q.force_on(0), atol=1e-10)


# --------------------------------------------------------- return map

def test_law_validation():
    with pytest.raises(ValueError):
        FrictionLaw(-0.1, 1, 1)
    with pytest.raises(ValueError):
        FrictionLaw(0.1, 0, 1)
    assert FrictionLaw.from_mesh(0.3, 0.1, 1e5).eps_n == pytest.approx(1e-6)


UNIT = FrictionLaw(0.5, 1.0, 1.0)


def test_stick_example():
    tn, tt, gp, slip = return_map(-10.0, 4.0, 0.0, UNIT)
    assert (tn, tt, gp, slip) == (-10.0, 4.0, 0.0, False)


def test_slip_example():
    tn, tt, gp, slip = return_map(-10.0, 8.0, 0.0, UNIT)
    assert (tn, tt, gp, slip) == (-10.0, 5.0, 3.0, True)


def test_open_gap_is_inactive():
    tn, _, _, _ = return_map(2.0, 1.0, 0.0, UNIT)
    assert tn == 2.0
    assert not active_set(tn)


def test_active_set_strict():
    tau = np.array([-1.0, 0.0, 2.0, -1e-300])
    assert active_set(tau).tolist() == [True, False, False, True]


def test_inactive_points_carry_no_traction(two_circles):
    g, a, b, _ = two_circles
    pair = surface(g, a, b)
    z = np.zeros((len(pair), 2))
    evaluate_gaps(pair, z, z)
    update_tractions(pair, UNIT)
    assert not pair.active.any()
    assert np.all(pair.traction() == 0) and np.all(pair.force_on(0) == 0)


gaps = st.floats(-1e3, 1e3, allow_nan=False)


@settings(max_examples=300)
@given(gaps, gaps, gaps, st.floats(0, 2), st.floats(1e-3, 10), st.floats(1e-3, 10))
def test_return_map_properties(gn, gt, gp, mu, en, et):
    law = FrictionLaw(mu, en, et)
    tn, tt, gp_new, slip = return_map(gn, gt, gp, law)
    assert abs(gn) == pytest.approx(en * abs(tn), rel=1e-15)
    assert abs(tt) <= mu * abs(tn) * (1 + 1e-9) + 1e-300
    if gp_new != gp:
        assert abs(tt) == pytest.approx(mu * abs(tn), rel=1e-12)


@settings(max_examples=50)
@given(st.floats(-100, -1e-3), st.floats(0, 2))
def test_monotone_driving_gives_monotone_slip(gn, mu):
    gp = 0.0
    history = []
    for gt in np.linspace(0, 50, 60):
        _, _, gp, _ = return_map(gn, gt, gp, UNIT.__class__(mu, 1.0, 1.0))
        history.append(float(gp))
    assert np.all(np.diff(history) >= 0)


# ------------------------------------------------------ history transfer

def _pair(x, gp):
    x = np.asarray(x, float)
    m = len(x)
    p = ContactPair(0, 1, 0.1, x, np.ones(m), np.tile([1.0, 0.0], (m, 1)), x, x, np.zeros(m))
    p.g_t_plastic = np.asarray(gp, float)
    return p


def test_transfer_identical_points():
    old = _pair([[0, 0], [0, 1], [0, 2]], [0.1, -0.2, 0.3])
    new = transfer_plastic_history(old, _pair(old.x, np.zeros(3)), radius=0.2)
    assert np.array_equal(new.g_t_plastic, old.g_t_plastic)


def test_transfer_from_nothing():
    new = transfer_plastic_history(None, _pair([[0, 0]], [5.0]), radius=0.2)
    assert new.g_t_plastic.tolist() == [0.0]


def test_transfer_single_source_and_radius():
    old = _pair([[0, 0]], [0.7])
    new = transfer_plastic_history(old, _pair([[0.05, 0], [0, -0.1], [3, 3]], np.zeros(3)), 0.2)
    assert new.g_t_plastic.tolist() == [0.7, 0.7, 0.0]


def test_transfer_rejects_other_pair():
    old = _pair([[0, 0]], [0.7])
    other = ContactPair(0, 2, 0.1)
    with pytest.raises(ValueError):
        transfer_plastic_history(old, other, 0.2)
