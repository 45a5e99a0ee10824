import math

import numpy as np
import pytest

from flatzoom import chart as ch
from flatzoom import expr as ex
from flatzoom import probes
from flatzoom import radii as ra


def test_flat_geodesic_is_straight_line():
    g = ch.euclidean_metric(2)
    T = 1.5
    traj = ra.integrate_geodesic(g, [0.0, 0.0], [0.6, 0.8], T)
    assert traj.reason == "horizon"
    want = traj.times[:, None] * np.array([0.6, 0.8])
    assert np.max(np.abs(traj.positions - want)) <= 1e-10 * T


def test_hyperbolic_vertical_ray():
    g = probes.hyperbolic_half_plane()
    T = 3.0
    traj = ra.integrate_geodesic(g, [0.0, 1.0], [0.0, 1.0], T, h=1e-3)
    # unit-speed vertical geodesic: (0, e^t)
    assert np.max(np.abs(traj.positions[:, 0])) <= 1e-9
    assert np.max(np.abs(traj.positions[:, 1] - np.exp(traj.times))) <= 1e-6
    assert traj.speed_drift(g) <= 1e-6


def test_sphere_great_circle_closes():
    g = probes.round_sphere()
    x = np.array([math.pi / 2.0, 0.0])
    traj = ra.integrate_geodesic(g, x, [0.0, 1.0], 2.0 * math.pi, h=5e-3)
    end = traj.positions[-1].copy()
    end[1] %= 2.0 * math.pi
    assert np.linalg.norm(end - x) <= 1e-5
    assert traj.speed_drift(g) <= 1e-6


def test_domain_exit_reason():
    g = ch.euclidean_metric(2)  # domain is a bounded box
    traj = ra.integrate_geodesic(g, [0.0, 0.0], [1.0, 0.0], 100.0)
    assert traj.reason == "left-domain"
    assert traj.positions[-1, 0] <= g.domain[0][1]


def test_integrate_geodesic_input_validation():
    g = ch.euclidean_metric(2)
    with pytest.raises(ValueError):
        ra.integrate_geodesic(g, [0.0, 0.0], [0.0, 0.0], 1.0)
    with pytest.raises(ValueError):
        ra.integrate_geodesic(g, [100.0, 0.0], [1.0, 0.0], 1.0)


def test_sup_sectional_model_spaces():
    flat = ch.euclidean_metric(2)
    assert ra.sup_sectional(flat, [0.0, 0.0], 1.0) == pytest.approx(0.0,
                                                                    abs=1e-12)
    sph = probes.round_sphere()
    assert ra.sup_sectional(sph, [math.pi / 2, 1.0], 1.0) \
        == pytest.approx(1.0, abs=1e-6)
    hyp = probes.hyperbolic_half_plane()
    assert ra.sup_sectional(hyp, [0.0, 5.0], 1.0) \
        == pytest.approx(-1.0, abs=1e-6)


def test_loop_search_cylinder_and_plane():
    cyl = probes.flat_cylinder(radius=1.0)
    ell = ra.shortest_self_intersecting(cyl, [0.1, 0.0], 10.0)
    # the detector shaves a discretization margin, so ell underestimates
    assert 2.0 * math.pi - 3e-3 <= ell <= 2.0 * math.pi + 1e-6
    flat = ch.euclidean_metric(2)
    assert math.isinf(ra.shortest_self_intersecting(flat, [0.0, 0.0], 3.0))


def test_loop_search_sphere():
    sph = probes.round_sphere()
    # r = 4 keeps the full great circle inside the ball
    ell = ra.shortest_self_intersecting(sph, [math.pi / 2, 1.0], 4.0)
    assert ell == pytest.approx(2.0 * math.pi, abs=2e-3)


def test_loop_search_requires_2d():
    g = ch.euclidean_metric(3)
    with pytest.raises(ValueError):
        ra.shortest_self_intersecting(g, [0.0, 0.0, 0.0], 1.0)


def test_radius_bounds_formulas():
    inj, conv_w, conv = ra.radius_bounds(1.0, math.pi, 10.0)
    assert inj == pytest.approx(math.pi / 2.0)
    inj, conv_w, conv = ra.radius_bounds(0.0, 2.0 * math.pi, 10.0)
    assert inj == pytest.approx(math.pi)
    assert conv_w == pytest.approx(math.pi / 2.0)
    assert conv == pytest.approx(0.5 * min(math.pi, 5.0))
    # nonpositive curvature sup: the pi / sqrt(delta) term is dropped
    inj, _, _ = ra.radius_bounds(-3.0, math.inf, 7.0)
    assert inj == 7.0
    with pytest.raises(ValueError):
        ra.radius_bounds(1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        ra.radius_bounds(1.0, 0.0, 1.0)


def test_radius_bounds_monotonicity():
    rng = np.random.default_rng(3)
    for _ in range(50):
        delta = rng.uniform(-1.0, 4.0)
        ell = rng.uniform(0.5, 10.0)
        r = rng.uniform(0.5, 10.0)
        base = ra.radius_bounds(delta, ell, r)
        up_ell = ra.radius_bounds(delta, ell + 1.0, r)
        up_r = ra.radius_bounds(delta, ell, r + 1.0)
        up_delta = ra.radius_bounds(delta + 1.0, ell, r)
        for b, ue, ur, ud in zip(base, up_ell, up_r, up_delta):
            assert ue >= b - 1e-12
            assert ur >= b - 1e-12
            assert ud <= b + 1e-12


def test_inj_conv_estimate_flat():
    g = ch.euclidean_metric(2)
    est = ra.inj_conv_estimate(g, [0.0, 0.0], 5.0)
    assert est.inj == 5.0
    assert est.heuristic
    d = est.to_dict()
    assert d["ell"] == "inf" and d["inj_bound"] == 5.0


def test_lorentz_blowup_exact_case():
    # w = 0: gamma2 = -2 ln(1 - t/2), blow-up exactly at t = 2, bound 2
    rep = ra.lorentz_blowup(ex.Const(0.0))
    assert rep["passed"]
    assert 2.0 - 1e-3 <= rep["t_star"] < 2.0
    assert rep["bound"] == pytest.approx(2.0)
    # checkpoint crossing at p = 1e9: closed form t(p) = 2 - 2/p
    assert rep["crossings"]["1e+09"] == pytest.approx(2.0 - 2e-9, abs=1e-4)


def test_lorentz_blowup_threshold_insensitive():
    w = ex.parse("0.2*sin(2*pi*y)", ["y"])
    a = ra.lorentz_blowup(w, h=5e-3, threshold=1e10)
    b = ra.lorentz_blowup(w, h=5e-3, threshold=1e12)
    assert abs(a["t_star"] - b["t_star"]) <= 1e-6
    assert a["t_star"] < a["bound"]


def test_lorentz_blowup_step_budget():
    with pytest.raises(RuntimeError):
        ra.lorentz_blowup(ex.Const(0.0), max_steps=10)
