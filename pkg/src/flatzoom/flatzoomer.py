"""Decay functionals on conformal factors and their certificate bounds.

A functional maps a conformal factor u to a nonnegative field on the chart,
e.g. |nabla^i_{g[u]} Riem_{g[u]}|_{h[u]}.  A certificate bound asserts
Phi(u)(x) <= e^{-alpha u(x)} P(x)(u, |grad u|, ..., |grad^k u|) for u above a
floor, with the derivative norms taken in the chart-euclidean metric; the
block-sup variant replaces the right-hand side by its supremum over an
exhaustion block.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import chart as ch
from . import expr as ex

__all__ = [
    "Functional",
    "FlatzoomerBound",
    "ExhaustionModel",
    "make_curvature_functional",
    "make_leaf_functional",
    "make_sff_functional",
    "make_zero_functional",
    "verify_flatzoomer_bound",
    "calibrate_certificate",
    "combine",
    "quasi_sup",
    "radius_functional_ingredients",
    "RadiusIngredients",
]


class Functional:
    """Nonnegative functional of conformal factors, sampled at chart points."""

    def __init__(self, kind, fn, g0=None, h0=None, foliation=None, order=0):
        self.kind = kind
        self._fn = fn
        self.g0 = g0
        self.h0 = h0
        self.foliation = foliation
        self.order = order

    def eval(self, u, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        vals = np.asarray(self._fn(u, pts), dtype=float)
        return vals


def make_zero_functional():
    return Functional("custom", lambda u, pts: np.zeros(pts.shape[0]))


def make_curvature_functional(g0, h0, i):
    """u |-> |nabla^i_{g[u]} Riem_{g[u]}|_{h[u]} sampled pointwise."""
    if i > 2:
        raise ValueError("derivative order above supported cap 2")

    def fn(u, pts):
        gu = ch.conformal_rescale(g0, u)
        hu = ch.conformal_rescale(h0, u)
        tensor = ch.covariant_derivative_k(gu, ch.RiemannOracle(gu), i, pts)
        _, norm = ch.inner_and_norm(tensor, hu, x=pts)
        return norm

    return Functional("curvature", fn, g0=g0, h0=h0, order=i)


def _leaf_factor(u, leaf_vars):
    """Reinterpret u over the leaf chart (transverse coordinates become
    parameters bound through the evaluation points)."""
    return ch.ConformalFactorField(u.expr, leaf_vars)


def make_leaf_functional(g0, h0, foliation, i):
    """The curvature functional of the leaf restriction of g[u]."""
    foliation.validate(g0.dim)
    p = foliation.leaf_dim
    if p == 1:
        return make_zero_functional()
    gleaf = ch.restrict_to_leaf(g0, foliation)
    hleaf = ch.restrict_to_leaf(h0, foliation)
    leaf_vars = g0.var_names[:p]

    def fn(u, pts):
        uleaf = _leaf_factor(u, leaf_vars)
        gu = ch.conformal_rescale(gleaf, uleaf)
        hu = ch.conformal_rescale(hleaf, uleaf)
        tensor = ch.covariant_derivative_k(gu, ch.RiemannOracle(gu), i, pts)
        _, norm = ch.inner_and_norm(tensor, hu, x=pts)
        return norm

    return Functional("leaf_curvature", fn, g0=g0, h0=h0,
                      foliation=foliation, order=i)


def make_sff_functional(g0, h0, foliation, i):
    """u |-> |nabla^i_{g[u]} II^F_{g[u]}|_{h[u]}."""
    foliation.validate(g0.dim)

    def fn(u, pts):
        gu = ch.conformal_rescale(g0, u)
        hu = ch.conformal_rescale(h0, u)
        tensor = ch.covariant_derivative_k(gu, ch.SFFOracle(gu, foliation), i, pts)
        _, norm = ch.inner_and_norm(tensor, hu, x=pts)
        return norm

    return Functional("sff", fn, g0=g0, h0=h0, foliation=foliation, order=i)


def combine(spec, *functionals, scale=None):
    """Pointwise combinations: sum, sqrt (of a single functional), scale, max."""
    if spec == "sum":
        def fn(u, pts):
            return sum(f.eval(u, pts) for f in functionals)
    elif spec == "sqrt":
        if len(functionals) != 1:
            raise ValueError("sqrt combines exactly one functional")
        def fn(u, pts):
            return np.sqrt(functionals[0].eval(u, pts))
    elif spec == "scale":
        if scale is None or scale < 0:
            raise ValueError("scale requires a nonnegative factor")
        def fn(u, pts):
            return scale * functionals[0].eval(u, pts)
    elif spec == "max":
        def fn(u, pts):
            return np.max(np.stack([f.eval(u, pts) for f in functionals]), axis=0)
    else:
        raise ValueError(f"unknown combination {spec!r}")
    return Functional("custom-combination", fn)


# ---------------------------------------------------------------------------
# certificates

@dataclass
class FlatzoomerBound:
    """Certificate data (k, d, alpha, u0, P).

    ``terms`` lists (exponents, coeff) pairs: exponents is a tuple of k+1
    naturals for the polynomial variables (u, |grad^1 u|, ..., |grad^k u|),
    coeff an Expr over the chart variables (or a constant).
    """

    k: int
    d: int
    alpha: float
    u0: object           # Expr
    terms: list
    var_names: list = field(default_factory=list)

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        for exps, _ in self.terms:
            if len(exps) != self.k + 1:
                raise ValueError("exponent tuple length must be k+1")
            if sum(exps) > self.d:
                raise ValueError("term degree above declared d")

    def poly(self, pts, args):
        """P(x)(args) with args[j] of shape (npts,)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        env = {name: pts[:, kk] for kk, name in enumerate(self.var_names)}
        total = np.zeros(pts.shape[0])
        for exps, coeff in self.terms:
            c = coeff if isinstance(coeff, (int, float)) else ex.evaluate(coeff, env)
            term = np.broadcast_to(np.asarray(c, dtype=float), (pts.shape[0],)).copy()
            for j, e in enumerate(exps):
                if e:
                    term = term * args[j] ** e
            total = total + term
        return total

    def floor(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        env = {name: pts[:, kk] for kk, name in enumerate(self.var_names)}
        return np.broadcast_to(
            np.asarray(ex.evaluate(self.u0, env), dtype=float), (pts.shape[0],))

    def rhs(self, pts, u_vals, args):
        return np.exp(-self.alpha * u_vals) * self.poly(pts, args)

    def to_dict(self):
        return {
            "k": self.k,
            "d": self.d,
            "alpha": self.alpha,
            "u0": ex.to_string(self.u0),
            "P": [{"exponents": list(exps),
                   "coeff": coeff if isinstance(coeff, (int, float))
                   else ex.to_string(coeff)}
                  for exps, coeff in self.terms],
            "variables": list(self.var_names),
        }

    @classmethod
    def from_dict(cls, data):
        var_names = list(data.get("variables", []))
        u0 = ex.parse(str(data["u0"]), var_names)
        terms = []
        for item in data["P"]:
            coeff = item["coeff"]
            if isinstance(coeff, str):
                coeff = ex.parse(coeff, var_names)
            terms.append((tuple(item["exponents"]), coeff))
        return cls(int(data["k"]), int(data["d"]), float(data["alpha"]),
                   u0, terms, var_names)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _certificate_args(u, b, pts):
    """(u(x), |grad^1 u|_euclid, ..., |grad^k u|_euclid) at the points."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    u_vals = u.euclid_derivative_norm(0, pts)
    env = {name: pts[:, kk] for kk, name in enumerate(u.var_names)}
    u_signed = np.broadcast_to(
        np.asarray(ex.evaluate(u.expr, env), dtype=float), (pts.shape[0],))
    args = [np.abs(u_signed)]
    for j in range(1, b.k + 1):
        args.append(u.euclid_derivative_norm(j, pts))
    return u_signed, args


def verify_flatzoomer_bound(phi, bound, u_family, pts):
    """Check the certificate inequality on a family of conformal factors.

    Points where a factor does not exceed the floor are skipped (the bound
    only speaks above u0).  Violations are returned as data, not raised.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    floor = bound.floor(pts)
    violations = []
    checked = 0
    for ui, u in enumerate(u_family):
        u_signed, args = _certificate_args(u, bound, pts)
        active = u_signed > floor
        if not np.any(active):
            continue
        lhs = phi.eval(u, pts)
        rhs = bound.rhs(pts, u_signed, args)
        checked += int(active.sum())
        bad = active & (lhs > rhs)
        for idx in np.nonzero(bad)[0]:
            violations.append({
                "u_index": ui,
                "point": [float(c) for c in pts[idx]],
                "lhs": float(lhs[idx]),
                "rhs": float(rhs[idx]),
            })
    return {"passed": not violations, "checked": checked,
            "violations": violations}


def calibrate_certificate(phi, k, d, alpha, u0, probe_family, pts,
                          var_names, headroom=1.1):
    """Fit the single scalar in P = c (1 + sum v_j)^d to a probe family.

    c is the headroom-scaled empirical maximum of Phi(u) e^{alpha u} over
    (1 + sum v_j)^d; validation on an independent family is the caller's job.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if isinstance(u0, (int, float)):
        u0 = ex.Const(u0)
    probe_bound = FlatzoomerBound(k, d, alpha, u0, [(tuple([0] * (k + 1)), 1.0)],
                                  var_names)
    best = 0.0
    for u in probe_family:
        u_signed, args = _certificate_args(u, probe_bound, pts)
        active = u_signed > probe_bound.floor(pts)
        if not np.any(active):
            continue
        lhs = phi.eval(u, pts)
        base = 1.0 + sum(args)
        ratio = lhs[active] * np.exp(alpha * u_signed[active]) / base[active] ** d
        best = max(best, float(ratio.max()))
    c = headroom * best
    terms = []
    for exps in ch.multi_indices(k + 1, d):
        rest = d - sum(exps)
        coeff = math.factorial(d) // (
            math.prod(math.factorial(e) for e in exps) * math.factorial(rest))
        terms.append((tuple(exps), c * coeff))
    return FlatzoomerBound(k, d, alpha, u0, terms, var_names)


# ---------------------------------------------------------------------------
# exhaustion blocks on the ray model

@dataclass
class ExhaustionModel:
    """K_i = [0, r_i] on the ray, with K_{-1} = K_{-2} = empty."""

    radii: list = None

    def r(self, i):
        if self.radii is not None:
            if i >= len(self.radii):
                raise IndexError(f"exhaustion radius {i} beyond horizon")
            val = float(self.radii[i])
        else:
            val = float(i + 1)
        return val

    def validate(self, horizon):
        for i in range(horizon - 1):
            if not self.r(i) < self.r(i + 1):
                raise ValueError("exhaustion radii must be strictly increasing")

    def block(self, i):
        """K_{i+1} without K_{i-2} as a half-open radial interval (lo, hi]."""
        lo = 0.0 if i - 2 < 0 else self.r(i - 2)
        return lo, self.r(i + 1)

    def shell(self, i):
        """K_i without K_{i-1}."""
        lo = 0.0 if i - 1 < 0 else self.r(i - 1)
        return lo, self.r(i)

    def block_grid(self, i, count):
        lo, hi = self.block(i)
        # half-open on the left: stay strictly above lo when lo > 0
        eps = (hi - lo) * 1e-9
        return np.linspace(lo + (eps if lo > 0.0 else 0.0), hi, count)

    def shell_grid(self, i, count):
        lo, hi = self.shell(i)
        eps = (hi - lo) * 1e-9
        return np.linspace(lo + (eps if lo > 0.0 else 0.0), hi, count)


def quasi_sup(phi, bound, exhaustion, i, u, grid=256, embed=None):
    """Grid suprema for the block-sup inequality at block i.

    Returns (sup of Phi(u) over K_i without K_{i-1},
             sup of the certificate integrand over K_{i+1} without K_{i-2}).
    ``embed`` maps ray radii to chart points (identity for 1D models).
    """
    if embed is None:
        def embed(radii):
            return radii[:, None]
    shell_pts = embed(exhaustion.shell_grid(i, grid))
    block_pts = embed(exhaustion.block_grid(i, grid))
    lhs_sup = float(np.max(phi.eval(u, shell_pts)))
    u_signed, args = _certificate_args(u, bound, block_pts)
    rhs_sup = float(np.max(bound.rhs(block_pts, u_signed, args)))
    return lhs_sup, rhs_sup


# ---------------------------------------------------------------------------
# radius-functional ingredients

@dataclass
class RadiusIngredients:
    charts: list          # list of (interval, A_j, C_j, H_j)
    H: object             # callable: chart points -> pointwise max of H_j
    u1: object            # callable: chart points -> profile values
    probe_family: list


def _chart_mask(pts_radii, interval):
    lo, hi = interval
    return (pts_radii >= lo) & (pts_radii <= hi)


def radius_functional_ingredients(g, cover, exhaustion=None, probes=None,
                                  samples_per_chart=64, rng=None,
                                  radius_of=None, margin=0.5):
    """Constants feeding the inverse-radius functionals.

    Per covering chart: A_j bounds |Gamma[u]| / (1 + |du|_g) over the probe
    family (constants by default, where Gamma[u] = Gamma[g]), C_j is the
    bi-Lipschitz constant between g and the chart-euclidean metric, and
    H_j = 4 n^2 A_j C_j^3.  H is their pointwise max over covering charts;
    u1 is the smallest sampled profile keeping the unit rescaled ball inside
    one chart and one exhaustion block.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    n = g.dim
    if radius_of is None:
        def radius_of(pts):
            return pts[:, 0]
    lo_all = min(iv[0] for iv in cover)
    hi_all = max(iv[1] for iv in cover)
    for iv in cover:
        if iv[0] >= iv[1]:
            raise ValueError("chart interval is empty")
    # coverage: every radius must lie in some chart
    probe_r = np.linspace(lo_all, hi_all, 512)
    covered = np.zeros(512, dtype=bool)
    for iv in cover:
        covered |= _chart_mask(probe_r, iv)
    if not covered.all():
        raise ValueError("cover has gaps")

    if probes is None:
        probes = [ch.ConformalFactorField(ex.Const(c), g.var_names)
                  for c in (0.0, 0.5, 1.0)]

    charts = []
    for iv in cover:
        pts = g.interior_samples(samples_per_chart, rng)
        # project radii into the chart interval
        r = lo_all + (radius_of(pts) - lo_all) % max(hi_all - lo_all, 1e-12)
        scale = (iv[1] - iv[0]) / max(hi_all - lo_all, 1e-12)
        pts = pts.copy()
        pts[:, 0] = iv[0] + (r - lo_all) * scale
        a_j = 0.0
        env = {name: pts[:, kk] for kk, name in enumerate(g.var_names)}
        for u in probes:
            gu = ch.conformal_rescale(g, u)
            gamma, _ = ch.christoffel_jet(gu, pts, 0)
            gam_mag = np.max(np.abs(gamma[(0,) * n]), axis=(1, 2, 3))
            du = np.stack([np.broadcast_to(np.asarray(ex.evaluate(
                u.partial(tuple(1 if b == a else 0 for b in range(n))), env),
                dtype=float), (pts.shape[0],)) for a in range(n)], axis=1)
            gmat = g.matrix(pts)
            ginv = np.linalg.inv(gmat)
            du_g = np.sqrt(np.abs(np.einsum("pab,pa,pb->p", ginv, du, du)))
            a_j = max(a_j, float(np.max(gam_mag / (1.0 + du_g))))
        eig = np.linalg.eigvalsh(g.matrix(pts))
        if np.any(eig <= 0):
            raise ch.SingularMetricError("radius ingredients need a "
                                         "Riemannian chart metric")
        c_j = max(float(np.sqrt(eig.max())),
                  float(1.0 / np.sqrt(eig.min())), 1.0)
        h_j = 4.0 * n * n * a_j * c_j ** 3
        charts.append(((float(iv[0]), float(iv[1])), a_j, c_j, h_j))

    def H(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        rr = radius_of(pts)
        out = np.full(pts.shape[0], -np.inf)
        for (iv, _, _, h_j) in charts:
            mask = _chart_mask(rr, iv)
            out[mask] = np.maximum(out[mask], h_j)
        if np.any(~np.isfinite(out)):
            raise ValueError("a point lies outside every chart")
        return out

    def u1(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        rr = radius_of(pts)
        out = np.full(pts.shape[0], np.inf)
        for (iv, _, c_j, _) in charts:
            mask = _chart_mask(rr, iv)
            if not np.any(mask):
                continue
            # euclidean distance to the chart boundary, shrunk by C_j,
            # is a lower bound for the g-distance budget
            d_chart = np.minimum(rr[mask] - iv[0], iv[1] - rr[mask]) / c_j
            if exhaustion is not None:
                d_block = np.full(mask.sum(), np.inf)
                i = 0
                while True:
                    try:
                        blo, bhi = exhaustion.block(i)
                    except IndexError:
                        break
                    slo, shi = exhaustion.shell(i)
                    inside = (rr[mask] > slo) & (rr[mask] <= shi)
                    if np.any(inside):
                        d_block[inside] = np.minimum(
                            rr[mask][inside] - blo, bhi - rr[mask][inside]) / c_j
                    if shi >= rr[mask].max():
                        break
                    i += 1
                d_chart = np.minimum(d_chart, d_block)
            d_chart = np.maximum(d_chart, 1e-12)
            cand = np.maximum(0.0, -np.log(d_chart * margin))
            out[mask] = np.minimum(out[mask], cand)
        return out

    return RadiusIngredients(charts=charts, H=H, u1=u1, probe_family=probes)
