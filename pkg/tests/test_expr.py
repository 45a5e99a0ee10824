import math

import numpy as np
import pytest

from flatzoom import expr as ex


def test_parse_precedence_and_eval():
    e = ex.parse("2 + 3 * 4 ^ 2", [])
    assert ex.evaluate(e, {}) == 50.0
    e = ex.parse("-x^2", ["x"])
    assert ex.evaluate(e, {"x": 3.0}) == -9.0
    e = ex.parse("(1 + x) / (1 - x)", ["x"])
    assert ex.evaluate(e, {"x": 0.5}) == pytest.approx(3.0)


def test_parse_functions_and_constants():
    e = ex.parse("exp(0) + sin(pi/2) + ln(e)", [])
    assert ex.evaluate(e, {}) == pytest.approx(3.0)
    e = ex.parse("sqrt(abs(-4))", [])
    assert ex.evaluate(e, {}) == 2.0
    # ** is an alias for ^
    assert ex.evaluate(ex.parse("2**3", []), {}) == 8.0


def test_vectorized_evaluation():
    e = ex.parse("x^2 + y", ["x", "y"])
    x = np.array([1.0, 2.0, 3.0])
    out = ex.evaluate(e, {"x": x, "y": 1.0})
    assert np.allclose(out, [2.0, 5.0, 10.0])


def test_parse_error_reports_position():
    with pytest.raises(ex.ParseError) as err:
        ex.parse("1 + * 2", [])
    assert err.value.position == 4
    with pytest.raises(ex.ParseError):
        ex.parse("unknown_fn(1)", [])
    with pytest.raises(ex.ParseError):
        ex.parse("x + y", ["x"])  # y not declared


def test_differentiate_basic_rules():
    e = ex.parse("x^3 + sin(2*x)", ["x"])
    d = ex.differentiate(e, "x")
    xs = np.linspace(-1, 1, 11)
    want = 3 * xs ** 2 + 2 * np.cos(2 * xs)
    assert np.allclose(ex.evaluate(d, {"x": xs}), want, atol=1e-12)


def test_differentiate_quotient_and_chain():
    e = ex.parse("exp(-1/x) / (1 + x^2)", ["x"])
    d = ex.differentiate(e, "x")
    x = 0.7
    fd = (ex.evaluate(e, {"x": x + 1e-7}) - ex.evaluate(e, {"x": x - 1e-7})) \
        / 2e-7
    assert ex.evaluate(d, {"x": x}) == pytest.approx(fd, rel=1e-6)


def test_shared_subtree_differentiation_is_memoized():
    # a deliberately shared DAG: derivative must not blow up the tree
    base = ex.parse("exp(-1/t)", ["t"])
    e = base
    for _ in range(6):
        e = ex.mul(e, e)
    d = ex.differentiate(e, "t")
    # f = g^64 with g = exp(-1/t), so f' = 64 g^63 g' = 64 g^64 / t^2
    t = 0.5
    want = 64 * math.exp(-64 / t) / t ** 2
    assert ex.evaluate(d, {"t": t}) == pytest.approx(want, rel=1e-9)


def test_eval_errors():
    with pytest.raises(ex.EvalError):
        ex.evaluate(ex.parse("ln(x)", ["x"]), {"x": -1.0})
    with pytest.raises(ex.EvalError):
        ex.evaluate(ex.parse("sqrt(x)", ["x"]), {"x": -4.0})
    with pytest.raises(ex.EvalError):
        ex.evaluate(ex.parse("1/x", ["x"]), {"x": 0.0})
    with pytest.raises(ex.EvalError):
        ex.evaluate(ex.parse("x + 1", ["x"]), {})


def test_to_string_round_trip():
    src = "x^2*sin(y) - 3/(1 + y)"
    e = ex.parse(src, ["x", "y"])
    rendered = ex.to_string(e)
    e2 = ex.parse(rendered, ["x", "y"])
    env = {"x": 1.3, "y": -0.4}
    assert ex.evaluate(e2, env) == pytest.approx(ex.evaluate(e, env),
                                                 rel=1e-15)


def test_substitute():
    e = ex.parse("x + y^2", ["x", "y"])
    s = ex.substitute(e, {"y": 3.0})
    assert ex.evaluate(s, {"x": 1.0}) == 10.0


def test_constant_folding():
    e = ex.add(ex.Const(2.0), ex.Const(3.0))
    assert isinstance(e, ex.Const)
    e = ex.mul(ex.Const(0.0), ex.Var("x"))
    assert isinstance(e, ex.Const) and e.value == 0.0
    e = ex.mul(ex.Const(1.0), ex.Var("x"))
    assert isinstance(e, ex.Var)
