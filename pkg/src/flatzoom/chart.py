"""Tensor calculus on a chart box with exact symbolic metric derivatives.

Metric components are expression trees; everything down to the Christoffel
symbols and their coordinate partials is differentiated symbolically, then
the tensor arithmetic (inverses, products, contractions) runs numerically on
batched point arrays.  Derivatives of composite quantities (inverse metric,
Christoffels, Riemann, second fundamental form) are propagated through
truncated Taylor "jets": dictionaries mapping a multi-index to the batched
component array of that coordinate partial.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex

__all__ = [
    "MetricField",
    "TensorSample",
    "FoliationSpec",
    "ConformalFactorField",
    "SingularMetricError",
    "christoffels",
    "riemann",
    "covariant_derivative_k",
    "inner_and_norm",
    "conformal_rescale",
    "conformal_riemann_closed_form",
    "conformal_connection_closed_form",
    "second_fundamental_form",
    "conformal_sff_closed_form",
    "wick_rotation",
    "sectional_curvature",
    "MetricOracle",
    "RiemannOracle",
    "SFFOracle",
    "restrict_to_leaf",
]

MAX_DERIVATIVE_ORDER = 3


class SingularMetricError(ArithmeticError):
    pass


# ---------------------------------------------------------------------------
# multi-index helpers

def multi_indices(nvars, order):
    """All multi-indices of degree <= order, sorted by (degree, lex)."""
    out = []
    for alpha in itertools.product(range(order + 1), repeat=nvars):
        if sum(alpha) <= order:
            out.append(alpha)
    out.sort(key=lambda a: (sum(a), a))
    return out


def sub_indices(alpha):
    """All beta with beta <= alpha componentwise."""
    return itertools.product(*(range(a + 1) for a in alpha))


def mindex_binom(alpha, beta):
    return math.prod(math.comb(a, b) for a, b in zip(alpha, beta))


def _add(alpha, beta):
    return tuple(a + b for a, b in zip(alpha, beta))


def _sub(alpha, beta):
    return tuple(a - b for a, b in zip(alpha, beta))


def _unit(nvars, axis):
    e = [0] * nvars
    e[axis] = 1
    return tuple(e)


def leibniz(ajet, bjet, order, nvars, combine):
    """Jet of a bilinear combination of two jets."""
    out = {}
    for alpha in multi_indices(nvars, order):
        acc = None
        for beta in sub_indices(alpha):
            coeff = mindex_binom(alpha, beta)
            term = combine(ajet[beta], bjet[_sub(alpha, beta)])
            if coeff != 1:
                term = coeff * term
            acc = term if acc is None else acc + term
        out[alpha] = acc
    return out


def shift_jet(jet, nvars, order, stack_axis=1):
    """Jet of the coordinate-gradient: result[alpha][..., a, ...] = jet[alpha+e_a]."""
    out = {}
    for alpha in multi_indices(nvars, order):
        parts = [jet[_add(alpha, _unit(nvars, a))] for a in range(nvars)]
        out[alpha] = np.stack(parts, axis=stack_axis)
    return out


def inverse_jet(gjet, order, nvars):
    """Jet of the matrix inverse of a matrix-valued jet."""
    zero = (0,) * nvars
    g0 = gjet[zero]
    try:
        inv0 = np.linalg.inv(g0)
    except np.linalg.LinAlgError as e:
        raise SingularMetricError(str(e)) from None
    out = {zero: inv0}
    for alpha in multi_indices(nvars, order):
        if sum(alpha) == 0:
            continue
        acc = None
        for beta in sub_indices(alpha):
            if sum(beta) == 0:
                continue
            term = mindex_binom(alpha, beta) * (gjet[beta] @ out[_sub(alpha, beta)])
            acc = term if acc is None else acc + term
        out[alpha] = -inv0 @ acc
    return out


# ---------------------------------------------------------------------------
# domain types

@dataclass
class TensorSample:
    """Fully covariant tensor value at a point."""

    degree: int
    components: np.ndarray
    point: np.ndarray

    def __post_init__(self):
        self.components = np.asarray(self.components, dtype=float)
        n = self.components.shape[-1] if self.degree else None
        if self.degree and self.components.shape[-self.degree:] != (n,) * self.degree:
            raise ValueError("component array shape does not match tensor degree")


@dataclass
class FoliationSpec:
    """Leaves are level sets of the last n - leaf_dim coordinates."""

    leaf_dim: int

    def validate(self, dim):
        if not 1 <= self.leaf_dim <= dim:
            raise ValueError(f"leaf dimension {self.leaf_dim} out of range for dim {dim}")


class MetricField:
    """A chart-domain metric: symmetric grid of component expressions.

    ``param_names`` lists extra symbols the components may reference that are
    not chart coordinates (used when a metric is the restriction of a higher
    dimensional one to a leaf); they must be bound in every evaluation point.
    """

    def __init__(self, dim, var_names, components, signature, domain,
                 periodic=None, param_names=()):
        if not 1 <= dim <= 4:
            raise ValueError("supported dimensions are 1..4")
        if len(var_names) != dim or len(signature) != dim or len(domain) != dim:
            raise ValueError("var_names, signature and domain must have length dim")
        self.dim = dim
        self.var_names = list(var_names)
        self.param_names = list(param_names)
        self.signature = [int(s) for s in signature]
        if any(s not in (-1, 1) for s in self.signature):
            raise ValueError("signature entries must be +1 or -1")
        self.domain = [tuple(map(float, iv)) for iv in domain]
        self.periodic = list(periodic) if periodic is not None else [None] * dim
        self.components = components
        for i in range(dim):
            for j in range(dim):
                if components[i][j] is None:
                    raise ValueError("metric component grid has holes")
        self._deriv_cache = {}

    # -- symbolic partials -------------------------------------------------

    def component_partial(self, i, j, alpha):
        alpha = tuple(alpha)
        key = (i, j, alpha)
        if key in self._deriv_cache:
            return self._deriv_cache[key]
        if sum(alpha) == 0:
            e = self.components[i][j]
        else:
            axis = next(a for a, c in enumerate(alpha) if c > 0)
            lower = list(alpha)
            lower[axis] -= 1
            e = ex.differentiate(self.component_partial(i, j, tuple(lower)),
                                 self.var_names[axis])
        self._deriv_cache[key] = e
        return e

    # -- evaluation --------------------------------------------------------

    def _env(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        names = self.var_names + self.param_names
        if pts.shape[1] != len(names):
            raise ValueError(
                f"points must have {len(names)} columns ({names}), got {pts.shape[1]}")
        return pts, {name: pts[:, k] for k, name in enumerate(names)}

    def jet(self, pts, order):
        """Batched coordinate partials of the component matrix."""
        pts, env = self._env(pts)
        npts = pts.shape[0]
        out = {}
        for alpha in multi_indices(self.dim, order):
            mat = np.empty((npts, self.dim, self.dim))
            for i in range(self.dim):
                for j in range(i, self.dim):
                    val = ex.evaluate(self.component_partial(i, j, alpha), env)
                    mat[:, i, j] = val
                    mat[:, j, i] = ex.evaluate(self.component_partial(j, i, alpha), env) \
                        if self.components[i][j] is not self.components[j][i] else val
            out[alpha] = mat
        return out

    def matrix(self, pts):
        return self.jet(pts, 0)[(0,) * self.dim]

    def inverse(self, pts):
        mat = self.matrix(pts)
        det = np.linalg.det(mat)
        if np.any(np.abs(det) < 1e-14):
            raise SingularMetricError("metric matrix is singular at a sample point")
        return np.linalg.inv(mat)

    def check_signature(self, pts):
        """Eigenvalue sign pattern at the given points must match the declaration."""
        mat = self.matrix(pts)
        eig = np.linalg.eigvalsh(mat)
        want_neg = sum(1 for s in self.signature if s < 0)
        n_neg = (eig < 0).sum(axis=1)
        if np.any(eig == 0.0) or np.any(n_neg != want_neg):
            raise SingularMetricError(
                "metric eigenvalue signs do not match the declared signature")

    def interior_samples(self, count, rng, margin=1e-3):
        lo = np.array([iv[0] for iv in self.domain])
        hi = np.array([iv[1] for iv in self.domain])
        span = hi - lo
        u = rng.uniform(margin, 1.0 - margin, size=(count, self.dim))
        return lo + u * span

    # -- serialization -----------------------------------------------------

    @classmethod
    def from_dict(cls, data):
        dim = int(data["dimension"])
        var_names = list(data["variables"])
        comps = [[ex.parse(data["components"][i][j], var_names)
                  for j in range(dim)] for i in range(dim)]
        return cls(
            dim,
            var_names,
            comps,
            data["signature"],
            data["domain"],
            periodic=data.get("periodic"),
        )

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def euclidean_metric(dim, var_names=None):
    var_names = var_names or [f"x{i+1}" for i in range(dim)]
    comps = [[ex.Const(1.0 if i == j else 0.0) for j in range(dim)] for i in range(dim)]
    return MetricField(dim, var_names, comps, [1] * dim,
                       [(-10.0, 10.0)] * dim)


class ConformalFactorField:
    """A conformal factor u over chart variables with cached symbolic partials."""

    def __init__(self, u_expr, var_names):
        self.expr = u_expr
        self.var_names = list(var_names)
        self._cache = {}

    @classmethod
    def from_source(cls, source, var_names):
        return cls(ex.parse(source, var_names), var_names)

    def partial(self, alpha):
        alpha = tuple(alpha)
        if alpha in self._cache:
            return self._cache[alpha]
        if sum(alpha) == 0:
            e = self.expr
        else:
            axis = next(a for a, c in enumerate(alpha) if c > 0)
            lower = list(alpha)
            lower[axis] -= 1
            e = ex.differentiate(self.partial(tuple(lower)), self.var_names[axis])
        self._cache[alpha] = e
        return e

    def jet(self, pts, order, env=None):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if env is None:
            env = {name: pts[:, k] for k, name in enumerate(self.var_names)}
        nvars = len(self.var_names)
        out = {}
        for alpha in multi_indices(nvars, order):
            val = ex.evaluate(self.partial(alpha), env)
            out[alpha] = np.broadcast_to(np.asarray(val, dtype=float),
                                         (pts.shape[0],)).copy()
        return out

    def euclid_derivative_norm(self, j, pts):
        """|grad^j u| with respect to the chart-euclidean metric.

        Sums squares over ordered index tuples, i.e. each multi-index alpha of
        degree j is weighted by its multinomial count.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        env = {name: pts[:, k] for k, name in enumerate(self.var_names)}
        nvars = len(self.var_names)
        if j == 0:
            return np.abs(np.broadcast_to(
                np.asarray(ex.evaluate(self.expr, env), dtype=float), (pts.shape[0],)))
        total = np.zeros(pts.shape[0])
        for alpha in multi_indices(nvars, j):
            if sum(alpha) != j:
                continue
            count = math.factorial(j) // math.prod(math.factorial(a) for a in alpha)
            val = np.asarray(ex.evaluate(self.partial(alpha), env), dtype=float)
            total = total + count * np.broadcast_to(val, (pts.shape[0],)) ** 2
        return np.sqrt(total)


# ---------------------------------------------------------------------------
# jets of geometric quantities

def christoffel_jet(g, pts, order):
    """Jet of Gamma^c_ab, array layout [..., a, b, c]."""
    n = g.dim
    gjet = g.jet(pts, order + 1)
    ginv = inverse_jet(gjet, order, n)
    # E[alpha][p, a, b, m] = partial^alpha partial_a g_bm
    egrid = shift_jet(gjet, n, order, stack_axis=1)
    djet = {}
    for alpha, e in egrid.items():
        djet[alpha] = e + np.einsum("pbam->pabm", e) - np.einsum("pmab->pabm", e)
    return leibniz(ginv, djet, order, n,
                   lambda gi, d: 0.5 * np.einsum("pcm,pabm->pabc", gi, d)), gjet


def riemann_jet(g, pts, order, gamma=None, gjet=None):
    """Jet of the fully covariant Riemann tensor, layout [..., a, b, c, d]."""
    n = g.dim
    if gamma is None:
        gamma, gjet = christoffel_jet(g, pts, order + 1)
    dgamma = shift_jet(gamma, n, order, stack_axis=1)  # [p, a, b, c, l]
    quad = leibniz(gamma, gamma, order, n,
                   lambda A, B: np.einsum("paml,pbcm->pabcl", A, B))
    rup = {}
    for alpha in multi_indices(n, order):
        t = dgamma[alpha] - np.einsum("pbacl->pabcl", dgamma[alpha])
        q = quad[alpha]
        rup[alpha] = t + q - np.einsum("pbacl->pabcl", q)
    return leibniz(gjet, rup, order, n,
                   lambda gm, r: -np.einsum("pdl,pabcl->pabcd", gm, r))


def covd_jet(tjet, gamma, nvars, order, degree):
    """Jet of the covariant derivative of a degree-``degree`` covariant tensor."""
    letters = "abcdefgh"
    idx = letters[:degree]
    grad = shift_jet(tjet, nvars, order, stack_axis=1)
    out = {}
    for alpha in multi_indices(nvars, order):
        acc = grad[alpha]
        for j in range(degree):
            slot = idx[j]
            src = idx[:j] + "m" + idx[j + 1:]
            spec = f"pz{slot}m,p{src}->pz{idx}"
            term = None
            for beta in sub_indices(alpha):
                coeff = mindex_binom(alpha, beta)
                t = np.einsum(spec, gamma[beta], tjet[_sub(alpha, beta)])
                if coeff != 1:
                    t = coeff * t
                term = t if term is None else term + t
            acc = acc - term
        out[alpha] = acc
    return out


# ---------------------------------------------------------------------------
# tensor-field oracles for covariant differentiation

class MetricOracle:
    degree = 2

    def __init__(self, g):
        self.g = g

    def jet(self, pts, order):
        return self.g.jet(pts, order)


class RiemannOracle:
    degree = 4

    def __init__(self, g):
        self.g = g

    def jet(self, pts, order):
        return riemann_jet(self.g, pts, order)


class SFFOracle:
    degree = 3

    def __init__(self, g, foliation):
        self.g = g
        self.foliation = foliation

    def jet(self, pts, order):
        return sff_jet(self.g, self.foliation, pts, order)


# ---------------------------------------------------------------------------
# public operations (single point or batch; return TensorSample at a point)

def _single(pts):
    pts = np.asarray(pts, dtype=float)
    return pts.ndim == 1


def christoffels(g, x):
    """Gamma^c_ab at x, from exact symbolic metric partials."""
    one = _single(x)
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    gamma, _ = christoffel_jet(g, pts, 0)
    out = gamma[(0,) * g.dim]
    return out[0] if one else out


def riemann(g, x):
    """Fully covariant Riemann tensor at x (constant curvature K gives
    Riem(v,w,v,w) = K (|v|^2|w|^2 - <v,w>^2))."""
    one = _single(x)
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    r = riemann_jet(g, pts, 0)[(0,) * g.dim]
    if one:
        return TensorSample(4, r[0], np.asarray(x, dtype=float))
    return r


def covariant_derivative_k(g, tensor_oracle, k, x):
    """k-th iterated covariant derivative of the oracle's tensor field at x."""
    if k > MAX_DERIVATIVE_ORDER:
        raise ValueError(f"derivative order {k} above supported cap "
                         f"{MAX_DERIVATIVE_ORDER}")
    one = _single(x)
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    n = g.dim
    tjet = tensor_oracle.jet(pts, k)
    degree = tensor_oracle.degree
    if k == 0:
        out = tjet[(0,) * n]
        return TensorSample(degree, out[0], np.asarray(x, dtype=float)) if one else out
    gamma, _ = christoffel_jet(g, pts, k - 1)
    for step in range(k):
        remaining = k - 1 - step
        tjet = covd_jet(tjet, gamma, n, remaining, degree)
        degree += 1
    out = tjet[(0,) * n]
    return TensorSample(degree, out[0], np.asarray(x, dtype=float)) if one else out


def inner_and_norm(tensor, h, x=None):
    """Signed full contraction <T,T>_h and |T|_h = |<T,T>|^(1/2).

    ``tensor`` may be a TensorSample or a batched component array; ``h`` a
    MetricField (evaluated at the tensor's point / at ``x``) or a batched
    inverse-ready matrix array.
    """
    if isinstance(tensor, TensorSample):
        comps = tensor.components[None]
        degree = tensor.degree
        if x is None:
            x = tensor.point
        one = True
    else:
        comps = np.asarray(tensor, dtype=float)
        degree = comps.ndim - 1
        one = False
    if isinstance(h, MetricField):
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        hinv = h.inverse(pts)
    else:
        hmat = np.asarray(h, dtype=float)
        if hmat.ndim == 2:
            hmat = hmat[None]
        det = np.linalg.det(hmat)
        if np.any(np.abs(det) < 1e-14):
            raise SingularMetricError("auxiliary metric singular")
        hinv = np.linalg.inv(hmat)
    letters = "abcdefgh"
    idx = letters[:degree]
    raised = comps
    for j in range(degree):
        out_idx = idx[:j] + "z" + idx[j + 1:]
        # the raised axis lands in the same slot, so the labeling stays valid
        raised = np.einsum(f"p{idx},pz{idx[j]}->p{out_idx}", raised, hinv)
    if degree == 0:
        inner = (comps * raised).reshape(comps.shape[0])
    else:
        axes = tuple(range(1, degree + 1))
        inner = np.sum(comps * raised, axis=axes)
    norm = np.sqrt(np.abs(inner))
    if one:
        return float(inner[0]), float(norm[0])
    return inner, norm


def conformal_rescale(g, u):
    """The metric e^{2u} g as a new MetricField."""
    factor = ex.func("exp", ex.mul(ex.Const(2.0), u.expr))
    comps = [[ex.mul(factor, g.components[i][j]) for j in range(g.dim)]
             for i in range(g.dim)]
    return MetricField(g.dim, g.var_names, comps, g.signature, g.domain,
                       periodic=g.periodic, param_names=g.param_names)


def kulkarni_nomizu(a, b):
    """(A . B)_{abcd} = A_ac B_bd + A_bd B_ac - A_ad B_bc - A_bc B_ad (batched)."""
    return (np.einsum("pac,pbd->pabcd", a, b)
            + np.einsum("pbd,pac->pabcd", a, b)
            - np.einsum("pad,pbc->pabcd", a, b)
            - np.einsum("pbc,pad->pabcd", a, b))


def _u_grad_hess(g, u, pts):
    """du (lower), Hess_g u, |du|_g^2 at the points."""
    n = g.dim
    ujet = u.jet(pts, 2)
    du = np.stack([ujet[_unit(n, a)] for a in range(n)], axis=1)
    dd = np.empty((pts.shape[0], n, n))
    for a in range(n):
        for b in range(n):
            alpha = [0] * n
            alpha[a] += 1
            alpha[b] += 1
            dd[:, a, b] = ujet[tuple(alpha)]
    gamma, gjet = christoffel_jet(g, pts, 0)
    z = (0,) * n
    hess = dd - np.einsum("pabm,pm->pab", gamma[z], du)
    ginv = np.linalg.inv(gjet[z])
    grad_sq = np.einsum("pab,pa,pb->p", ginv, du, du)
    grad = np.einsum("pab,pb->pa", ginv, du)
    return du, hess, grad_sq, grad, gjet[z], ginv


def conformal_riemann_closed_form(g, u, x):
    """Riemann tensor of e^{2u} g via the conformal transformation law."""
    one = _single(x)
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    n = g.dim
    du, hess, grad_sq, _, gmat, _ = _u_grad_hess(g, u, pts)
    riem = riemann_jet(g, pts, 0)[(0,) * n]
    s = hess - np.einsum("pa,pb->pab", du, du) + 0.5 * grad_sq[:, None, None] * gmat
    env = {name: pts[:, k] for k, name in enumerate(g.var_names)}
    e2u = np.exp(2.0 * np.broadcast_to(
        np.asarray(ex.evaluate(u.expr, env), dtype=float), (pts.shape[0],)))
    out = e2u[:, None, None, None, None] * (riem - kulkarni_nomizu(gmat, s))
    if one:
        return TensorSample(4, out[0], np.asarray(x, dtype=float))
    return out


def conformal_connection_closed_form(g, u, x, v, x_field):
    """nabla^{g[u]}_v X at x via the conformal connection law.

    ``x_field`` is a list of component expressions for the vector field X.
    """
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    n = g.dim
    env = {name: pts[:, k] for k, name in enumerate(g.var_names)}
    v = np.asarray(v, dtype=float)
    xval = np.array([np.broadcast_to(
        np.asarray(ex.evaluate(c, env), dtype=float), (1,))[0] for c in x_field])
    dx = np.array([[np.broadcast_to(np.asarray(
        ex.evaluate(ex.differentiate(c, g.var_names[a]), env), dtype=float), (1,))[0]
        for a in range(n)] for c in x_field])  # dx[m, a] = partial_a X^m
    gamma, gjet = christoffel_jet(g, pts, 0)
    z = (0,) * n
    gam = gamma[z][0]
    gmat = gjet[z][0]
    nabla = dx @ v + np.einsum("abm,a,b->m", gam, v, xval)
    du, _, _, grad, _, _ = _u_grad_hess(g, u, pts)
    du0, grad0 = du[0], grad[0]
    du_x = float(du0 @ xval)
    du_v = float(du0 @ v)
    g_vx = float(v @ gmat @ xval)
    return nabla + du_x * v + du_v * xval - g_vx * grad0


def sff_jet(g, foliation, pts, order):
    """Jet of the second fundamental form II_{abc} of the coordinate foliation."""
    foliation.validate(g.dim)
    n = g.dim
    p = foliation.leaf_dim
    gjet = g.jet(pts, order + 2)
    z = (0,) * n
    gv0 = gjet[z][:, :p, :p]
    if np.any(np.abs(np.linalg.det(gv0)) < 1e-12):
        raise SingularMetricError("metric degenerate on the leaf directions")
    gvjet = {alpha: mat[:, :p, :p] for alpha, mat in gjet.items()}
    gvinv = inverse_jet(gvjet, order + 1, n)
    grows = {alpha: mat[:, :p, :] for alpha, mat in gjet.items()}
    # projection pr, layout [p_, i, j] = (pr)^i_j, rows >= p are zero
    prtop = leibniz(gvinv, grows, order + 1, n,
                    lambda a, b: np.einsum("pag,pgb->pab", a, b))
    npts = pts.shape[0] if hasattr(pts, "shape") else np.atleast_2d(pts).shape[0]
    pr = {}
    for alpha, top in prtop.items():
        full = np.zeros((top.shape[0], n, n))
        full[:, :p, :] = top
        pr[alpha] = full
    prperp = {alpha: ((np.eye(n)[None] if sum(alpha) == 0 else 0.0) - mat)
              for alpha, mat in pr.items()}
    gamma, _ = christoffel_jet(g, pts, order)
    dpr = shift_jet(pr, n, order, stack_axis=1)  # [p_, e, m, b]
    gammap = leibniz(gamma, pr, order, n,
                     lambda gm, P: np.einsum("pelm,plb->pebm", gm, P))
    m_term = {alpha: np.einsum("pemb->pebm", dpr[alpha]) + gammap[alpha]
              for alpha in multi_indices(n, order)}
    t1 = leibniz(pr, m_term, order, n,
                 lambda P, M: np.einsum("pea,pebm->pabm", P, M))
    t2 = leibniz(t1, gjet, order, n,
                 lambda T, gm: np.einsum("pabm,pmq->pabq", T, gm))
    return leibniz(t2, prperp, order, n,
                   lambda T, Q: np.einsum("pabq,pqc->pabc", T, Q))


def second_fundamental_form(g, foliation, x):
    one = _single(x)
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    out = sff_jet(g, foliation, pts, 0)[(0,) * g.dim]
    if one:
        return TensorSample(3, out[0], np.asarray(x, dtype=float))
    return out


def conformal_sff_closed_form(g, foliation, u, x):
    """II of e^{2u}g via the closed form: e^{2u} II - e^{2u} g(pr v, pr w) du(pr_perp z)."""
    one = _single(x)
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    n = g.dim
    p = foliation.leaf_dim
    z = (0,) * n
    ii = sff_jet(g, foliation, pts, 0)[z]
    gjet = g.jet(pts, 0)
    gmat = gjet[z]
    gv = gmat[:, :p, :p]
    gvinv = np.linalg.inv(gv)
    pr = np.zeros((pts.shape[0], n, n))
    pr[:, :p, :] = np.einsum("pag,pgb->pab", gvinv, gmat[:, :p, :])
    prperp = np.eye(n)[None] - pr
    du, _, _, _, _, _ = _u_grad_hess(g, u, pts)
    # g(pr v, pr w) = (pr^T g pr)_{ab}
    gpp = np.einsum("pia,pij,pjb->pab", pr, gmat, pr)
    du_perp = np.einsum("pm,pmc->pc", du, prperp)
    env = {name: pts[:, k] for k, name in enumerate(g.var_names)}
    e2u = np.exp(2.0 * np.broadcast_to(
        np.asarray(ex.evaluate(u.expr, env), dtype=float), (pts.shape[0],)))
    out = e2u[:, None, None, None] * (ii - np.einsum("pab,pc->pabc", gpp, du_perp))
    if one:
        return TensorSample(3, out[0], np.asarray(x, dtype=float))
    return out


# ---------------------------------------------------------------------------
# symbolic matrix inverse (for Wick rotation)

def _sym_det(comps, rows, cols):
    if len(rows) == 1:
        return comps[rows[0]][cols[0]]
    total = None
    for k, c in enumerate(cols):
        minor = _sym_det(comps, rows[1:], cols[:k] + cols[k + 1:])
        term = ex.mul(comps[rows[0]][c], minor)
        if k % 2 == 1:
            term = ex.neg(term)
        total = term if total is None else ex.add(total, term)
    return total


def symbolic_inverse(g):
    """Component expressions of the inverse metric via the adjugate."""
    n = g.dim
    all_idx = tuple(range(n))
    det = _sym_det(g.components, all_idx, all_idx)
    inv = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            rows = tuple(r for r in all_idx if r != j)
            cols = tuple(c for c in all_idx if c != i)
            minor = _sym_det(g.components, rows, cols) if n > 1 else ex.Const(1.0)
            cof = minor if (i + j) % 2 == 0 else ex.neg(minor)
            inv[i][j] = ex.div(cof, det)
    return inv


def wick_rotation(g, t_expr, check_points=None):
    """Riemannian metric g - 2 dt (x) dt / <dt,dt>_g (grad t must be timelike)."""
    n = g.dim
    ginv = symbolic_inverse(g)
    dt = [ex.differentiate(t_expr, v) for v in g.var_names]
    denom = None
    for a in range(n):
        for b in range(n):
            term = ex.mul(ginv[a][b], ex.mul(dt[a], dt[b]))
            denom = term if denom is None else ex.add(denom, term)
    if check_points is None:
        rng = np.random.default_rng(0)
        check_points = g.interior_samples(16, rng)
    pts = np.atleast_2d(np.asarray(check_points, dtype=float))
    env = {name: pts[:, k] for k, name in enumerate(g.var_names)}
    vals = np.asarray(ex.evaluate(denom, env), dtype=float)
    if np.any(vals >= 0.0):
        raise ValueError("dt is not timelike at a sample point")
    comps = [[ex.sub(g.components[i][j],
                     ex.div(ex.mul(ex.Const(2.0), ex.mul(dt[i], dt[j])), denom))
              for j in range(n)] for i in range(n)]
    return MetricField(n, g.var_names, comps, [1] * n, g.domain,
                       periodic=g.periodic, param_names=g.param_names)


def sectional_curvature(g, x, v, w):
    """sec(span(v,w)) with the sign pinned so the round sphere gives +1."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    riem_t = riemann(g, x)
    comps = riem_t.components if isinstance(riem_t, TensorSample) else riem_t[0]
    gmat = g.matrix(np.atleast_2d(np.asarray(x, dtype=float)))[0]
    num = np.einsum("abcd,a,b,c,d->", comps, v, w, v, w)
    den = (v @ gmat @ v) * (w @ gmat @ w) - (v @ gmat @ w) ** 2
    if abs(den) < 1e-14:
        raise ValueError("degenerate 2-plane")
    return float(num / den)


# ---------------------------------------------------------------------------
# leaf restriction

def restrict_to_leaf(g, foliation, transverse_values=None):
    """The leaf metric as a lower dimensional MetricField.

    Transverse coordinates stay as bound parameters unless explicit values are
    given, in which case they are substituted as constants.
    """
    foliation.validate(g.dim)
    p = foliation.leaf_dim
    if transverse_values is not None:
        bind = dict(zip(g.var_names[p:], transverse_values))
        comps = [[ex.substitute(g.components[i][j], bind) for j in range(p)]
                 for i in range(p)]
        params = []
    else:
        comps = [[g.components[i][j] for j in range(p)] for i in range(p)]
        params = g.var_names[p:] + g.param_names
    return MetricField(p, g.var_names[:p], comps, g.signature[:p], g.domain[:p],
                       periodic=g.periodic[:p], param_names=params)
