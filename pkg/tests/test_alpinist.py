import math

import numpy as np
import pytest

from flatzoom import alpinist as alp


def test_smoothstep_endpoints_and_midpoint():
    step = alp.default_smoothstep()
    assert step.eval(0.0) == 0.0
    assert step.eval(1.0) == 1.0
    assert step.eval(0.5) == pytest.approx(0.5, abs=1e-15)
    for order in (1, 2, 3):
        assert step.eval(0.0, order) == 0.0
        assert step.eval(1.0, order) == 0.0


def test_smoothstep_symmetric_complement():
    step = alp.default_smoothstep()
    t = np.linspace(0.0, 1.0, 17)
    assert np.allclose(step.complement(t), 1.0 - step.eval(t), atol=1e-12)


def test_smoothstep_derivative_matches_finite_difference():
    step = alp.default_smoothstep()
    t = np.array([0.2, 0.5, 0.8])
    fd = (step.eval(t + 1e-6) - step.eval(t - 1e-6)) / 2e-6
    assert np.allclose(step.eval(t, 1), fd, rtol=1e-7)


def test_phi_endpoint_values():
    a = alp.make_alpinist(1.0, 2)
    for n in (1, 5, 40, 200):
        ders = a.phi_derivatives(n, np.array([0.0, 1.0]), 3)
        assert ders[0][0] == 0.0
        assert ders[0][1] == float(n)
        for d in ders[1:]:
            assert np.max(np.abs(d)) <= 1e-9


def test_phi_monotone_in_t():
    a = alp.make_alpinist(2.0, 2)
    t = np.linspace(0.0, 1.0, 301)
    vals = a.phi_derivatives(17, t, 0)[0]
    assert np.all(np.diff(vals) >= -1e-12)


def test_g_bound_known_values():
    # the weighted sup stays O(1) for (1,1) and collapses to 1 for k=0
    a = alp.make_alpinist(1.0, 1)
    _, sup = alp.g_bound(a, 60, grid=2000)
    assert 1.0 <= sup <= 5.0
    a0 = alp.make_alpinist(1.0, 0)
    reports, sup0 = alp.g_bound(a0, 60, grid=2000)
    assert sup0 == pytest.approx(1.0, abs=1e-6)


def test_g_bound_stabilizes():
    a = alp.make_alpinist(2.0, 2)
    reports, sup = alp.g_bound(a, 120, grid=2000)
    early = max(r.sup for r in reports[:40])
    assert sup <= 1.001 * early


def test_no_nan_near_endpoint_for_large_n():
    a = alp.make_alpinist(1.0, 2)
    t = np.linspace(0.999, 1.0, 50)
    ders = a.phi_derivatives(500, t, 3)
    for d in ders:
        assert np.all(np.isfinite(d))


def test_naive_counterexample_diverges():
    v3 = alp.naive_counterexample(1000)
    v5 = alp.naive_counterexample(100_000)
    assert v5 > 2 * v3
    # closed form e^{-1}(2 + ln(n)^2) at the evaluation point
    n = 10_000
    want = math.exp(-1.0) * (2.0 + math.log(n) ** 2)
    assert alp.naive_counterexample(n) == pytest.approx(want, rel=1e-12)
    with pytest.raises(ValueError):
        alp.naive_counterexample(10)


def test_phi_order_cap():
    a = alp.make_alpinist(1.0, 1)
    with pytest.raises(ValueError):
        a.phi_derivatives(3, 0.5, alp.MAX_PHI_ORDER + 1)


def test_invalid_parameters():
    with pytest.raises(ValueError):
        alp.make_alpinist(0.0, 1)
    with pytest.raises(ValueError):
        alp.make_alpinist(1.0, -1)
