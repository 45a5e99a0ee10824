import math

import numpy as np
import pytest

from flatzoom import chart as ch
from flatzoom import expr as ex
from flatzoom import probes


def test_hyperbolic_christoffels():
    g = probes.hyperbolic_half_plane()
    pts = np.array([[0.3, 2.0]])
    gam = ch.christoffels(g, pts)[0]  # Gamma[a, b, c] = Gamma^c_ab
    y = 2.0
    assert gam[0, 1, 0] == pytest.approx(-1.0 / y, abs=1e-12)
    assert gam[1, 0, 0] == pytest.approx(-1.0 / y, abs=1e-12)
    assert gam[0, 0, 1] == pytest.approx(1.0 / y, abs=1e-12)
    assert gam[1, 1, 1] == pytest.approx(-1.0 / y, abs=1e-12)
    assert gam[0, 0, 0] == pytest.approx(0.0, abs=1e-12)


def test_constant_curvature_signs():
    sph = probes.round_sphere()
    assert ch.sectional_curvature(sph, [1.1, 0.7], [1, 0], [0, 1]) \
        == pytest.approx(1.0, abs=1e-9)
    hyp = probes.hyperbolic_half_plane()
    assert ch.sectional_curvature(hyp, [0.0, 3.0], [1, 0], [0, 1]) \
        == pytest.approx(-1.0, abs=1e-9)
    pts = np.array([[0.2, 1.5], [1.0, 0.5]])
    _, norms = ch.inner_and_norm(ch.riemann(hyp, pts), hyp, x=pts)
    assert np.allclose(norms, 2.0, atol=1e-9)


def test_metric_compatibility():
    rng = np.random.default_rng(0)
    g = probes.random_metric(3, rng)
    pts = g.interior_samples(10, rng)
    nabla_g = ch.covariant_derivative_k(g, ch.MetricOracle(g), 1, pts)
    assert np.max(np.abs(nabla_g)) <= 1e-10


def test_flat_metric_riemann_vanishes():
    g = ch.euclidean_metric(3)
    pts = np.zeros((1, 3)) + 0.3
    assert np.max(np.abs(ch.riemann(g, pts))) == 0.0


def test_conformal_connection_closed_form():
    rng = np.random.default_rng(1)
    g = probes.random_metric(2, rng)
    u = probes.random_factor(g.var_names, rng)
    x_field = [ex.parse("x1 + x2^2", g.var_names),
               ex.parse("sin(x1)", g.var_names)]
    pt = np.array([0.2, -0.3])
    v = np.array([0.5, 1.0])
    closed = ch.conformal_connection_closed_form(g, u, pt, v, x_field)
    # direct: nabla_v X = v^a (d_a X^c + Gamma^c_ab X^b) for e^{2u} g
    gu = ch.conformal_rescale(g, u)
    gam = ch.christoffels(gu, pt[None, :])[0]
    env = {name: pt[k] for k, name in enumerate(g.var_names)}
    xval = np.array([float(ex.evaluate(c, env)) for c in x_field])
    jac = np.array([[float(ex.evaluate(ex.differentiate(c, name), env))
                     for name in g.var_names] for c in x_field])
    direct = jac @ v + np.einsum("abc,a,b->c", gam, v, xval)
    assert np.allclose(np.asarray(closed).ravel(), direct, atol=1e-10)


def test_product_metric_totally_geodesic_leaves():
    g = ch.euclidean_metric(3, ["x", "y", "z"])
    fol = ch.FoliationSpec(2)
    pts = np.array([[0.1, 0.2, 0.3]])
    ii = ch.second_fundamental_form(g, fol, pts)
    assert np.max(np.abs(ii)) == 0.0


def test_wick_rotation_minkowski():
    one = ex.Const(1.0)
    zero = ex.Const(0.0)
    mink = ch.MetricField(2, ["x", "t"],
                          [[one, zero], [zero, ex.Const(-1.0)]],
                          [1, -1], [(-5.0, 5.0), (-5.0, 5.0)])
    rot = ch.wick_rotation(mink, ex.Var("t"),
                           check_points=np.array([[0.0, 0.0]]))
    mat = rot.matrix(np.array([[0.3, 0.4]]))[0]
    assert np.allclose(mat, np.eye(2), atol=1e-12)


def test_symbolic_inverse():
    rng = np.random.default_rng(2)
    g = probes.random_metric(3, rng)
    inv = ch.symbolic_inverse(g)
    pts = g.interior_samples(5, rng)
    env = {name: pts[:, k] for k, name in enumerate(g.var_names)}
    inv_vals = np.stack(
        [np.stack([np.broadcast_to(np.asarray(
            ex.evaluate(inv[i][j], env), dtype=float), (pts.shape[0],))
            for j in range(3)], axis=-1) for i in range(3)], axis=-2)
    assert np.allclose(inv_vals, g.inverse(pts), atol=1e-10)


def test_restrict_to_leaf():
    sph = probes.round_sphere()
    fol = ch.FoliationSpec(1)
    leaf = ch.restrict_to_leaf(sph, fol, transverse_values=[1.0])
    # leaves are theta-curves; the induced metric is d theta^2
    mat = leaf.matrix(np.array([[0.7]]))[0]
    assert mat[0, 0] == pytest.approx(1.0, abs=1e-12)


def test_signature_validation():
    one = ex.Const(1.0)
    zero = ex.Const(0.0)
    g = ch.MetricField(2, ["x", "y"], [[one, zero], [zero, ex.Const(-1.0)]],
                       [1, 1], [(-1.0, 1.0), (-1.0, 1.0)])
    with pytest.raises(ch.SingularMetricError):
        g.check_signature(np.array([[0.0, 0.0]]))


def test_singular_metric_raises():
    zero = ex.Const(0.0)
    g = ch.MetricField(2, ["x", "y"],
                       [[ex.Var("x"), zero], [zero, ex.Const(1.0)]],
                       [1, 1], [(-1.0, 1.0), (-1.0, 1.0)])
    with pytest.raises(ch.SingularMetricError):
        g.inverse(np.array([[0.0, 0.5]]))


def test_metric_serialization_round_trip():
    data = {
        "dimension": 2,
        "variables": ["x", "y"],
        "components": [["1/y^2", "0"], ["0", "1/y^2"]],
        "signature": [1, 1],
        "domain": [[-2.0, 2.0], [0.5, 3.0]],
    }
    g = ch.MetricField.from_dict(data)
    pts = np.array([[0.1, 1.2]])
    ref = probes.hyperbolic_half_plane()
    assert np.allclose(g.matrix(pts), ref.matrix(pts))


def test_derivative_order_cap():
    g = ch.euclidean_metric(2)
    with pytest.raises(ValueError):
        ch.covariant_derivative_k(g, ch.RiemannOracle(g), 4,
                                  np.array([[0.0, 0.0]]))
