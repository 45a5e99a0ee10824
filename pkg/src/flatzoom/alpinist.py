"""Climb-function families with uniformly bounded weighted derivative data.

A climb of height n is a smooth map [0,1] -> [0,n] from 0 to n whose
derivatives all vanish at both endpoints.  The family built here is
phi_n = -(1/c) ln(1 - q_n xi) with q_n = 1 - e^{-nc} and a fixed smooth step
xi; the point of the construction is that the weighted quantity
e^{-a phi_n} (1 + sum_{j<=k} |phi_n^{(j)}|) stays bounded uniformly in n,
which fails for the obvious scaling phi_n = n phi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import expr as ex

__all__ = [
    "SmoothStep",
    "Alpinist",
    "GQuantityReport",
    "default_smoothstep",
    "make_alpinist",
    "phi",
    "g_bound",
    "naive_counterexample",
]

DEFAULT_C_ORDER_ZERO = 19.26
# repeated quotient-rule denominators reach t^(2^j); past order 6 they
# underflow near the endpoints, and nothing downstream needs more than k+2
MAX_PHI_ORDER = 6


class SmoothStep:
    """A fixed step xi: [0,1] -> [0,1] with all-order flat endpoints.

    Derivative expressions are exact symbolic trees in the variable t; the
    endpoints themselves are special-cased because the defining expression is
    a 0/0 form there (the limits are 0, 1 and 0 for every derivative).
    """

    def __init__(self, xi_expr, max_order=MAX_PHI_ORDER, symmetric=False):
        self.expr = xi_expr
        self.max_order = max_order
        # symmetric means xi(t) + xi(1-t) = 1, enabling a cancellation-free
        # evaluation of the complement 1 - xi near t = 1
        self.symmetric = symmetric
        self._derivs = [xi_expr]

    def _deriv(self, order):
        while len(self._derivs) <= order:
            self._derivs.append(ex.differentiate(self._derivs[-1], "t"))
        return self._derivs[order]

    def eval(self, t, order=0):
        if order > self.max_order:
            raise ValueError(f"derivative order {order} above cached maximum")
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        if np.any((t < 0.0) | (t > 1.0)):
            raise ValueError("step function arguments must lie in [0,1]")
        out = np.empty_like(t)
        inner = (t > 0.0) & (t < 1.0)
        if np.any(inner):
            out[inner] = ex.evaluate(self._deriv(order), {"t": t[inner]})
        if order == 0:
            out[t == 0.0] = 0.0
            out[t == 1.0] = 1.0
        else:
            out[~inner] = 0.0
        return out[0] if scalar else out

    def complement(self, t):
        """1 - xi(t) without cancellation where possible."""
        if self.symmetric:
            return self.eval(1.0 - np.asarray(t, dtype=float))
        return 1.0 - self.eval(t)


def default_smoothstep():
    """xi(t) = sigma(t) / (sigma(t) + sigma(1-t)) with sigma(t) = e^{-1/t}."""
    src = "exp(-1/t) / (exp(-1/t) + exp(-1/(1-t)))"
    return SmoothStep(ex.parse(src, ["t"]), symmetric=True)


def _partitions(j):
    """Integer partitions of j as multiplicity dicts {part: count}."""
    if j == 0:
        yield {}
        return

    def rec(remaining, max_part):
        if remaining == 0:
            yield {}
            return
        for part in range(min(remaining, max_part), 0, -1):
            for rest in rec(remaining - part, part):
                d = dict(rest)
                d[part] = d.get(part, 0) + 1
                yield d

    yield from rec(j, j)


def _log_composition_derivatives(v_derivs, up_to, one_minus_v=None):
    """Derivatives of -ln(1 - v(t)) given the derivatives of v.

    Faa di Bruno with outer function f(v) = -ln(1-v), whose m-th derivative
    is (m-1)! / (1-v)^m.  ``one_minus_v`` allows the caller to supply a
    cancellation-free value of 1 - v(t) (it is bounded below by e^{-nc} in
    the climb construction, but the naive difference rounds to 0 near t=1).
    """
    v0 = v_derivs[0]
    if one_minus_v is None:
        one_minus_v = 1.0 - v0
    # keep 1/(1-v) finite through double underflow; the affected region only
    # contributes values that are smaller than e^{-600}
    one_minus_v = np.maximum(one_minus_v, 1e-300)
    d = 1.0 / one_minus_v
    out = [-np.log(one_minus_v)]
    for j in range(1, up_to + 1):
        acc = np.zeros(np.broadcast(v0, v_derivs[min(1, len(v_derivs) - 1)]).shape)
        for part in _partitions(j):
            m = sum(part.values())
            coeff = math.factorial(j) * math.factorial(m - 1)
            # distribute the d^m = (1-v)^{-m} factor over the derivative
            # factors: d alone can overflow while each d * v' stays moderate
            term = np.ones(np.broadcast(v0, d).shape)
            for size, count in part.items():
                coeff //= math.factorial(size) ** count * math.factorial(count)
                term = term * (d * v_derivs[size]) ** count
            acc = acc + coeff * term
        out.append(acc)
    return out


@dataclass
class GQuantityReport:
    n: int
    grid: int
    sup: float
    argmax_t: float


class Alpinist:
    """The climb family phi_n = -(1/c) ln(1 - q_n xi)."""

    def __init__(self, a, k, step=None, c=None):
        if a <= 0:
            raise ValueError("decay rate a must be positive")
        if k < 0:
            raise ValueError("derivative order k must be nonnegative")
        self.a = float(a)
        self.k = int(k)
        if c is not None:
            self.c = float(c)
        else:
            self.c = self.a / self.k if self.k >= 1 else DEFAULT_C_ORDER_ZERO
        self.step = step if step is not None else default_smoothstep()
        self._q_cache = {}

    def q(self, n):
        """q_n = 1 - e^{-nc} and the complement e^{-nc} itself."""
        if n not in self._q_cache:
            em = math.exp(-n * self.c)
            self._q_cache[n] = (-math.expm1(-n * self.c), em)
        return self._q_cache[n]

    def phi_derivatives(self, n, t, up_to):
        """phi_n and its t-derivatives up to the given order, endpoint-exact."""
        if up_to > MAX_PHI_ORDER:
            raise ValueError(f"derivative order {up_to} above supported maximum")
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        qn, em = self.q(n)
        xi = [self.step.eval(t, order=j) for j in range(up_to + 1)]
        v = [qn * x for x in xi]
        one_minus_v = em + qn * self.step.complement(t)
        ladder = _log_composition_derivatives(v, up_to, one_minus_v)
        out = [lvl / self.c for lvl in ladder]
        # pin the exact endpoint values (the ladder is already 0 there, but
        # phi_n(1) = n only up to the floating-point value of q_n)
        out[0][t == 1.0] = float(n)
        out[0][t == 0.0] = 0.0
        if scalar:
            return [float(o[0]) for o in out]
        return out

    def g_quantity_grid(self, n_values, grid):
        """Weighted quantity e^{-a phi_n}(1 + sum |phi^{(j)}|) on a t-grid.

        Evaluates all requested n at once: returns (t, values) with values of
        shape (len(n_values), grid).
        """
        t = np.linspace(0.0, 1.0, grid)
        inner = t[1:-1]
        xi = [self.step.eval(inner, order=j) for j in range(self.k + 1)]
        xic = self.step.complement(inner)
        pairs = [self.q(n) for n in n_values]
        qs = np.array([p[0] for p in pairs])[:, None]
        ems = np.array([p[1] for p in pairs])[:, None]
        v = [qs * x[None, :] for x in xi]
        one_minus_v = ems + qs * xic[None, :]
        ladder = _log_composition_derivatives(v, self.k, one_minus_v)
        phi_levels = [lvl / self.c for lvl in ladder]
        vals_inner = np.exp(-self.a * phi_levels[0])
        # the weighted sum includes the j = 0 term |phi_n| itself
        weight = 1.0 + phi_levels[0]
        for j in range(1, self.k + 1):
            weight = weight + np.abs(phi_levels[j])
        vals_inner = vals_inner * weight
        vals = np.empty((len(n_values), grid))
        vals[:, 1:-1] = vals_inner
        vals[:, 0] = 1.0  # phi_n(0) = 0, flat endpoint
        ns = np.array([float(n) for n in n_values])
        vals[:, -1] = np.exp(-self.a * ns) * (1.0 + ns)
        return t, vals


def make_alpinist(a, k, step=None, c=None):
    return Alpinist(a, k, step=step, c=c)


def phi(alp, n, t, up_to):
    """phi_n(t) and derivatives (phi_n, phi_n', ..., phi_n^{(up_to)})."""
    return alp.phi_derivatives(n, t, up_to)


def g_bound(alp, n_max, grid=10_000):
    """Per-n suprema of the weighted derivative quantity and their overall max."""
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    n_values = list(range(1, n_max + 1))
    t, vals = alp.g_quantity_grid(n_values, grid)
    reports = []
    for row, n in enumerate(n_values):
        idx = int(np.argmax(vals[row]))
        reports.append(GQuantityReport(n=n, grid=grid,
                                       sup=float(vals[row, idx]),
                                       argmax_t=float(t[idx])))
    overall = max(r.sup for r in reports)
    return reports, overall


def naive_counterexample(n):
    """The same weighted quantity for the naive scaling phi_n = n e^{-1/t},
    evaluated at t_n = 1/ln n, where it grows like ln(n)^2 / e.

    Only t <= 1/4 is modeled (the scaled bump is completed to a climb away
    from 0, which never affects the evaluation point), hence n >= 55.
    """
    if n < 55:
        raise ValueError("counterexample evaluation needs n >= 55 (t_n <= 1/4)")
    t_n = 1.0 / math.log(n)
    phi_val = n * math.exp(-1.0 / t_n)
    dphi_val = n * math.exp(-1.0 / t_n) / t_n ** 2
    return math.exp(-phi_val) * (1.0 + abs(phi_val) + abs(dphi_val))
