"""End-to-end acceptance suite: one test per headline guarantee."""

import json
import math
import os
import time

import numpy as np
import pytest

from flatzoom import alpinist as alp_mod
from flatzoom import chart as ch
from flatzoom import cli
from flatzoom import constructor as co
from flatzoom import expr as ex
from flatzoom import flatzoomer as fz
from flatzoom import probes
from flatzoom import radii as rd

DATA = os.path.join(os.path.dirname(__file__), os.pardir, "data")


def _tensor_rel(a, b):
    ax = tuple(range(1, a.ndim))
    scale = np.maximum(np.sqrt(np.sum(b * b, axis=ax)), 1e-30)
    return float(np.max(np.sqrt(np.sum((a - b) ** 2, axis=ax)) / scale))


def test_criterion_1_conformal_identity_suite():
    rng = np.random.default_rng(42)
    t0 = time.monotonic()
    worst = 0.0
    for dim, count in ((2, 50), (3, 20)):
        for _ in range(count):
            g = probes.random_metric(dim, rng)
            u = probes.random_factor(g.var_names, rng)
            pts = g.interior_samples(50, rng)
            gu = ch.conformal_rescale(g, u)
            worst = max(worst, _tensor_rel(
                ch.conformal_riemann_closed_form(g, u, pts),
                ch.riemann(gu, pts)))
            fol = ch.FoliationSpec(dim - 1)
            worst = max(worst, _tensor_rel(
                ch.conformal_sff_closed_form(g, fol, u, pts),
                ch.second_fundamental_form(gu, fol, pts)))
    elapsed = time.monotonic() - t0
    assert worst <= 1e-7, f"worst relative identity error {worst:.3e}"
    assert elapsed <= 60.0, f"suite took {elapsed:.1f}s"


def test_criterion_2_scaling_identity():
    # |T|_{h[u]} = e^{-(k+4)u} |T|_h for the (0, k+4)-tensor
    # T = nabla^k_{g[u]} Riem_{g[u]}, pointwise for arbitrary u
    rng = np.random.default_rng(7)
    for dim in (2, 3):
        for _ in range(3):
            g = probes.random_metric(dim, rng)
            h = probes.random_metric(dim, rng)
            u = probes.random_factor(g.var_names, rng)
            gu = ch.conformal_rescale(g, u)
            hu = ch.conformal_rescale(h, u)
            pts = g.interior_samples(20, rng)
            env = {name: pts[:, kk] for kk, name in enumerate(g.var_names)}
            u_vals = np.broadcast_to(np.asarray(
                ex.evaluate(u.expr, env), dtype=float), (pts.shape[0],))
            for k in (0, 1):
                tensor = ch.covariant_derivative_k(gu, ch.RiemannOracle(gu),
                                                   k, pts)
                _, n_resc = ch.inner_and_norm(tensor, hu, x=pts)
                _, n_base = ch.inner_and_norm(tensor, h, x=pts)
                expect = np.exp(-(k + 4) * u_vals) * n_base
                rel = np.max(np.abs(n_resc - expect)
                             / np.maximum(np.abs(expect), 1e-30))
                assert rel <= 1e-12, f"dim {dim} k {k}: rel {rel:.3e}"


def test_criterion_3_constant_curvature_oracles():
    hyp = probes.hyperbolic_half_plane()
    pts = np.array([[0.0, 1.0], [2.0, 0.5], [-3.0, 4.0]])
    riem = ch.riemann(hyp, pts)
    _, norms = ch.inner_and_norm(riem, hyp, x=pts)
    assert np.max(np.abs(norms - 2.0)) <= 1e-9

    sph = probes.round_sphere()
    for p in ([math.pi / 2, 1.0], [1.0, 2.0], [2.0, 0.3]):
        sec = ch.sectional_curvature(sph, p, [1.0, 0.0], [0.0, 1.0])
        assert abs(sec - 1.0) <= 1e-9


def test_criterion_4_alpinist_boundedness():
    for a, k in ((1.0, 1), (2.0, 2), (0.5, 3)):
        alp = alp_mod.make_alpinist(a, k)
        reports, sup200 = alp_mod.g_bound(alp, 200, grid=4000)
        sup50 = max(r.sup for r in reports[:50])
        assert sup200 <= 1.001 * sup50, f"(a,k)=({a},{k}) not stabilized"
        edges = alp.phi_derivatives(10, np.array([0.0, 1.0]),
                                    min(k + 1, alp_mod.MAX_PHI_ORDER))
        flat_resid = max(float(np.max(np.abs(d))) for d in edges[1:])
        assert flat_resid <= 1e-6
    v3 = alp_mod.naive_counterexample(10 ** 3)
    v4 = alp_mod.naive_counterexample(10 ** 4)
    v5 = alp_mod.naive_counterexample(10 ** 5)
    assert v5 / v3 >= 2.0
    assert v4 >= 31.0


def test_criterion_5_od_end_to_end():
    t0 = time.monotonic()
    problem = co.ODProblem(
        eps=[math.exp(-i) for i in range(12)],
        alpha=[1.0] * 12,
        polys=[[((0, 2), 1.0)]] * 12,
        w=ex.Const(0.0),
        horizon=12)
    mu, u, ledger, report = co.solve_od(problem, grid=1024)
    elapsed = time.monotonic() - t0
    assert report["passed"]
    assert report["checks"]["initial_value"]["ok"]
    # plateaus are exact by construction, not merely within tolerance
    assert report["checks"]["plateaus"]["max_deviation"] == 0.0
    assert report["checks"]["above_floor"]["margin"] > 0.0
    for m in report["checks"]["inequalities"]:
        assert m["margin"] > 0.0, f"block {m['block']} not strict"
    assert elapsed <= 30.0, f"solver took {elapsed:.1f}s"


def _flagship_setup():
    comp = "exp(2*sin(x^2+y^2))"
    zero = ex.Const(0.0)
    g0 = ch.MetricField(
        2, ["x", "y"],
        [[ex.parse(comp, ["x", "y"]), zero], [zero, ex.parse(comp, ["x", "y"])]],
        [1, 1], [(-13.0, 13.0), (-13.0, 13.0)])
    dv = "4*cos(x^2+y^2) - 4*(x^2+y^2)*sin(x^2+y^2)"
    c0 = ex.parse(f"2*exp(-2*sin(x^2+y^2))*abs({dv})", ["x", "y"])
    c2 = ex.parse("2*1.41421356237309515*exp(-2*sin(x^2+y^2))", ["x", "y"])
    bound = fz.FlatzoomerBound(
        k=2, d=1, alpha=2.0, u0=ex.Const(0.0),
        terms=[((0, 0, 0), c0), ((0, 0, 1), c2)], var_names=["x", "y"])
    return g0, bound


def test_criterion_6_flatzoom_flagship():
    t0 = time.monotonic()
    g0, bound = _flagship_setup()
    phi = fz.make_curvature_functional(g0, g0, 0)
    u, factor, ledger, report = co.flatzoom_all(
        [(phi, bound, 0.01)], ex.Const(0.0), fz.ExhaustionModel(),
        co.RadialLift(), horizon=12, grid=256)
    assert report["passed"]
    for entry in report["aim2"]:
        assert entry["ok"], f"block {entry['block']} inequality failed"
    # measured Gauss curvature of e^{2u} g0 on 1 <= r <= 12, radial closed form
    rr = np.linspace(1.0, 12.0, 4000)
    U = u.derivatives(rr, 2)
    lap_v = 4 * np.cos(rr ** 2) - 4 * rr ** 2 * np.sin(rr ** 2)
    K = -np.exp(-2.0 * (U[0] + np.sin(rr ** 2))) \
        * (U[2] + U[1] / rr + lap_v)
    assert np.max(np.abs(K)) < 0.01
    # spot cross-check against the full tensor pipeline: |Riem| = 2|K| in 2D
    spots = np.array([[1.5, 0.0], [0.0, 5.2], [7.7, 0.0]])
    riem = ch.riemann(ch.conformal_rescale(g0, factor), spots)
    gu = ch.conformal_rescale(g0, factor)
    _, norms = ch.inner_and_norm(riem, gu, x=spots)
    r_spots = np.linalg.norm(spots, axis=1)
    idx = np.searchsorted(rr, r_spots)
    assert np.max(np.abs(norms - 2.0 * np.abs(K[np.minimum(idx, len(K) - 1)]))) < 2e-3
    elapsed = time.monotonic() - t0
    assert elapsed <= 300.0, f"flagship took {elapsed:.1f}s"


def test_criterion_7_radius_bounds():
    cyl = probes.flat_cylinder()
    est = rd.inj_conv_estimate(cyl, [1.0, 0.0], 10.0)
    assert 0.95 * math.pi <= est.inj <= math.pi
    assert 0.95 * math.pi / 2 <= est.conv <= math.pi / 2

    sph = probes.round_sphere()
    est_s = rd.inj_conv_estimate(sph, [math.pi / 2, 1.0], 3.0)
    assert 0.95 * math.pi <= est_s.inj <= math.pi
    assert est_s.conv <= math.pi / 2  # true conv of the unit sphere

    flat = ch.euclidean_metric(2, ["x", "y"])
    est_f = rd.inj_conv_estimate(flat, [0.0, 0.0], 5.0)
    assert est_f.inj <= 5.0 and est_f.inj == 5.0  # min(inf, inf, r)

    hyp = probes.hyperbolic_half_plane()
    est_h = rd.inj_conv_estimate(hyp, [0.0, 1.0], 2.0)
    assert est_h.inj <= 2.0  # true injectivity radius is infinite


def test_criterion_8_lorentz_incompleteness():
    rep = rd.lorentz_blowup(ex.Const(0.0))
    assert 2.0 - 1e-3 <= rep["t_star"] < 2.0
    assert abs(rep["crossings"]["1e+12"] - rep["crossings"]["1e+09"]) <= 1e-4
    rng = np.random.default_rng(3)
    for _ in range(20):
        a = float(rng.uniform(-0.3, 0.3))
        b = float(rng.uniform(-0.2, 0.2))
        w = ex.parse(f"{a}*sin(2*pi*y) + {b}*cos(4*pi*y) - {b}", ["y"])
        rep = rd.lorentz_blowup(w, h=5e-3)
        assert rep["t_star"] < rep["bound"], \
            f"t*={rep['t_star']} vs bound {rep['bound']}"


def test_criterion_9_report_determinism(tmp_path):
    outs = []
    for run in range(2):
        out = tmp_path / f"run{run}"
        code = cli.main(["conformal-check", "--grid", "16", "--seed", "11",
                         "--out", str(out)])
        assert code == 0
        code = cli.main(["alpinist", "--a", "1", "--k", "1", "--grid", "60",
                         "--out", str(out)])
        assert code == 0
        outs.append(out)
    for name in ("conformal-check.json", "conformal-check.csv",
                 "alpinist.json", "alpinist.csv"):
        b0 = (outs[0] / name).read_bytes()
        b1 = (outs[1] / name).read_bytes()
        assert b0 == b1, f"{name} differs between identical runs"
