"""Seeded random chart metrics and conformal factors for verification runs."""

from __future__ import annotations

import itertools

import numpy as np

from . import chart as ch
from . import expr as ex

__all__ = ["random_metric", "random_factor", "hyperbolic_half_plane",
           "round_sphere", "flat_cylinder"]


def _random_poly(var_names, rng, max_degree, n_terms, amplitude):
    """Random multivariate polynomial as an Expr tree."""
    monomials = [m for m in itertools.product(range(max_degree + 1),
                                              repeat=len(var_names))
                 if 0 < sum(m) <= max_degree]
    total = None
    for _ in range(n_terms):
        exps = monomials[rng.integers(0, len(monomials))]
        coeff = float(rng.uniform(-amplitude, amplitude))
        term = ex.Const(coeff)
        for name, e in zip(var_names, exps):
            if e:
                term = ex.mul(term, ex.pow_(ex.Var(name), e))
        total = term if total is None else ex.add(total, term)
    return total if total is not None else ex.Const(0.0)


def random_metric(dim, rng, domain_half_width=1.0):
    """Diagonally dominant random polynomial metric, positive definite on the
    cube: diagonal 1.2..2 plus a small quadratic, off-diagonal much smaller."""
    var_names = [f"x{i+1}" for i in range(dim)]
    comps = [[None] * dim for _ in range(dim)]
    for i in range(dim):
        base = float(rng.uniform(1.2, 2.0))
        comps[i][i] = ex.add(ex.Const(base),
                             _random_poly(var_names, rng, 2, 3, 0.1))
        for j in range(i + 1, dim):
            off = _random_poly(var_names, rng, 2, 2, 0.05)
            comps[i][j] = off
            comps[j][i] = off
    hw = domain_half_width
    return ch.MetricField(dim, var_names, comps, [1] * dim,
                          [(-hw, hw)] * dim)


def random_factor(var_names, rng, max_degree=3, n_terms=4, amplitude=0.3):
    """Random polynomial conformal factor u over the given chart variables."""
    return ch.ConformalFactorField(
        _random_poly(var_names, rng, max_degree, n_terms, amplitude),
        list(var_names))


def hyperbolic_half_plane(height=200.0, domain=None):
    inv = ex.parse("1/y^2", ["x", "y"])
    zero = ex.Const(0.0)
    if domain is None:
        domain = [(-50.0, 50.0), (1e-3, height)]
    return ch.MetricField(2, ["x", "y"], [[inv, zero], [zero, inv]],
                          [1, 1], domain)


def round_sphere(pole_margin=0.05):
    """Unit sphere in colatitude/longitude coordinates, poles excluded."""
    import math
    zero = ex.Const(0.0)
    return ch.MetricField(
        2, ["th", "ph"],
        [[ex.Const(1.0), zero], [zero, ex.parse("sin(th)^2", ["th", "ph"])]],
        [1, 1], [(pole_margin, math.pi - pole_margin), (0.0, 2 * math.pi)],
        periodic=[None, 2 * math.pi])


def flat_cylinder(radius=1.0, height=50.0):
    import math
    zero = ex.Const(0.0)
    period = 2 * math.pi * radius
    return ch.MetricField(
        2, ["s", "z"], [[ex.Const(1.0), zero], [zero, ex.Const(1.0)]],
        [1, 1], [(0.0, period), (-height, height)], periodic=[period, None])
