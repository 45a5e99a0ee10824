"""Geodesic integration and injectivity/convexity radius estimation.

The estimators feed the classical lower bounds: with sec <= delta on a ball
of radius r around x and every self-intersecting geodesic inside the ball of
length >= ell,

    inj(x)  >= min(pi/sqrt(delta), ell/2, r)
    conv(x) >= (1/2) min(pi/sqrt(delta), ell/2, r/2)

with the convention pi/sqrt(delta) = infinity for delta <= 0.  The loop
detector is a shooting heuristic: the reported ell covers detected loops
only, so estimates are flagged accordingly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import chart as ch
from . import expr as ex

__all__ = [
    "GeodesicTrajectory",
    "RadiusEstimate",
    "integrate_geodesic",
    "sup_sectional",
    "shortest_self_intersecting",
    "radius_bounds",
    "inj_conv_estimate",
    "lorentz_blowup",
]

BLOWUP_SPEED = 1e8
DEFAULT_STEP = 5e-3


@dataclass
class GeodesicTrajectory:
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    reason: str               # horizon | left-domain | blow-up

    def speeds(self, g):
        mats = g.matrix(self._wrapped(g))
        return np.sqrt(np.abs(np.einsum(
            "nab,na,nb->n", mats, self.velocities, self.velocities)))

    def speed_drift(self, g):
        """Largest relative deviation of |gamma'|_g from its initial value."""
        sp = self.speeds(g)
        return float(np.max(np.abs(sp - sp[0])) / max(sp[0], 1e-300))

    def _wrapped(self, g):
        return _wrap_points(self.positions, g)


@dataclass
class RadiusEstimate:
    delta: float
    ell: float
    r: float
    inj: float = 0.0
    conv_whitehead: float = 0.0
    conv: float = 0.0
    heuristic: bool = True

    def to_dict(self):
        def enc(v):
            return "inf" if math.isinf(v) else v
        return {"delta": enc(self.delta), "ell": enc(self.ell), "r": self.r,
                "inj_bound": enc(self.inj),
                "conv_whitehead_bound": enc(self.conv_whitehead),
                "conv_bound": enc(self.conv), "heuristic": self.heuristic}


def _wrap_points(pts, g):
    """Reduce periodic coordinates into the declared fundamental interval."""
    pts = np.array(pts, dtype=float, copy=True)
    for i, period in enumerate(g.periodic):
        if period:
            lo = g.domain[i][0]
            pts[..., i] = lo + np.mod(pts[..., i] - lo, period)
    return pts


def _inside(pts, g, margin=0.0):
    ok = np.ones(pts.shape[:-1], dtype=bool)
    for i, period in enumerate(g.periodic):
        if period:
            continue
        lo, hi = g.domain[i]
        ok &= (pts[..., i] >= lo + margin) & (pts[..., i] <= hi - margin)
    return ok


def _accel(g, pts, vel):
    gamma = ch.christoffels(g, _wrap_points(pts, g))
    return -np.einsum("nabc,na,nb->nc", gamma, vel, vel)


def _integrate_batch(g, x0, v0, horizon, h, blowup=BLOWUP_SPEED):
    """Fixed-step 4th order integration of a batch of geodesics.

    Returns (times, positions, velocities, alive) with positions of shape
    (steps+1, nrays, dim); rays are frozen in place once they leave the
    domain or exceed the blow-up speed.
    """
    x = np.atleast_2d(np.asarray(x0, dtype=float)).copy()
    v = np.atleast_2d(np.asarray(v0, dtype=float)).copy()
    steps = max(1, int(math.ceil(horizon / h)))
    h = horizon / steps  # land the last sample exactly on the horizon
    nrays = x.shape[0]
    pos = np.empty((steps + 1, nrays, x.shape[1]))
    vel = np.empty_like(pos)
    pos[0], vel[0] = x, v
    alive = np.ones(nrays, dtype=bool)
    reason = np.array(["horizon"] * nrays, dtype=object)
    for s in range(steps):
        if np.any(alive):
            xa, va = x[alive], v[alive]
            k1x, k1v = va, _accel(g, xa, va)
            k2x = va + 0.5 * h * k1v
            k2v = _accel(g, xa + 0.5 * h * k1x, k2x)
            k3x = va + 0.5 * h * k2v
            k3v = _accel(g, xa + 0.5 * h * k2x, k3x)
            k4x = va + h * k3v
            k4v = _accel(g, xa + h * k3x, k4x)
            x[alive] = xa + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
            v[alive] = va + (h / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
            exited = ~_inside(x, g) & alive
            blown = (np.linalg.norm(v, axis=1) > blowup) & alive
            reason[exited] = "left-domain"
            reason[blown] = "blow-up"
            alive &= ~(exited | blown)
            # freeze finished rays at their last admissible state
            x[~alive] = pos[s][~alive]
            v[~alive] = vel[s][~alive]
        pos[s + 1], vel[s + 1] = x, v
    times = h * np.arange(steps + 1)
    return times, pos, vel, alive, reason


def integrate_geodesic(g, x, v, horizon, h=1e-3, blowup=BLOWUP_SPEED):
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if not np.all(_inside(x[None, :], g)):
        raise ValueError("starting point outside the chart domain")
    if not np.any(v):
        raise ValueError("starting velocity must be nonzero")
    times, pos, vel, alive, reason = _integrate_batch(
        g, x[None, :], v[None, :], horizon, h, blowup)
    if not alive[0]:
        # trim the frozen tail
        moved = np.any(np.diff(pos[:, 0, :], axis=0) != 0.0, axis=1)
        last = int(np.max(np.nonzero(moved)[0])) + 1 if np.any(moved) else 0
        sl = slice(0, last + 1)
    else:
        sl = slice(None)
    return GeodesicTrajectory(times[sl], pos[sl, 0, :], vel[sl, 0, :],
                              str(reason[0]))


def _unit_directions(g, x, count, rng=None):
    dim = g.dim
    if dim == 2:
        ang = np.linspace(0.0, 2.0 * math.pi, count, endpoint=False)
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    else:
        rng = rng or np.random.default_rng(0)
        dirs = rng.normal(size=(count, dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    gmat = g.matrix(np.atleast_2d(np.asarray(x, dtype=float)))[0]
    norms = np.sqrt(np.abs(np.einsum("na,ab,nb->n", dirs, gmat, dirs)))
    return dirs / norms[:, None]


def sup_sectional(g, x, r, samples=16, rays=24, planes=4, h=DEFAULT_STEP,
                  seed=0):
    """Empirical sup of sec over the metric ball, by shooting unit-speed rays."""
    rng = np.random.default_rng(seed)
    x = np.asarray(x, dtype=float)
    dirs = _unit_directions(g, x, rays, rng)
    _, pos, _, _, _ = _integrate_batch(g, np.tile(x, (rays, 1)), dirs, r, h)
    picks = np.linspace(0, pos.shape[0] - 1, samples).astype(int)
    pts = pos[picks].reshape(-1, g.dim)
    pts = np.concatenate([x[None, :], pts])
    pts = _wrap_points(pts, g)
    pts = pts[_inside(pts, g, margin=1e-9)]
    best = -math.inf
    for p in pts:
        if g.dim == 2:
            pairs = [(np.array([1.0, 0.0]), np.array([0.0, 1.0]))]
        else:
            pairs = []
            for _ in range(planes):
                vv = rng.normal(size=g.dim)
                ww = rng.normal(size=g.dim)
                pairs.append((vv, ww))
        for vv, ww in pairs:
            best = max(best, ch.sectional_curvature(g, p, vv, ww))
    return float(best)


def _chart_dist(a, b, g):
    d = a - b
    for i, period in enumerate(g.periodic):
        if period:
            d[..., i] = np.abs(d[..., i]) % period
            d[..., i] = np.minimum(d[..., i], period - d[..., i])
    return np.linalg.norm(d, axis=-1)


def _first_return(dist, h, coarse, proximity, start_idx, ball):
    """Time of the first interpolated return below the proximity threshold.

    ``coarse`` is the sampling-aware screening width; the true minimum of a
    run of sub-coarse samples is recovered by quadratic interpolation of the
    squared distance.
    """
    below = dist < coarse
    below[:start_idx] = False
    idx = start_idx
    n = len(dist)
    while idx < n:
        if not below[idx]:
            idx += 1
            continue
        run_end = idx
        while run_end + 1 < n and below[run_end + 1]:
            run_end += 1
        local = int(np.argmin(dist[idx:run_end + 1])) + idx
        if 0 < local < n - 1:
            d0, d1, d2 = (dist[local - 1] ** 2, dist[local] ** 2,
                          dist[local + 1] ** 2)
            denom = d0 - 2 * d1 + d2
            shift = 0.5 * (d0 - d2) / denom if denom > 0 else 0.0
            dmin2 = d1 - 0.25 * (d0 - d2) * shift if denom > 0 else d1
            if dmin2 <= proximity ** 2 \
                    and np.max(dist[:local + 1]) <= ball:
                return h * (local + shift)
        idx = run_end + 1
    return math.inf


def shortest_self_intersecting(g, x, r, angular=64, h=DEFAULT_STEP,
                               proximity=1e-4, min_length=0.5):
    """Shortest detected geodesic loop through x within the ball (2D charts).

    Detected loops only; a quieter geodesic the shooting grid misses would
    shorten the true value, hence the heuristic flag on downstream bounds.
    The returned length is shaved by a fine step as a discretization margin.
    """
    if g.dim != 2:
        raise ValueError("loop shooting is implemented for 2D charts")
    x = np.asarray(x, dtype=float)
    # loops confined to the ball can be much longer than a diameter
    horizon = max(2.0, math.pi) * r
    dirs = _unit_directions(g, x, angular)
    times, pos, _, _, _ = _integrate_batch(
        g, np.tile(x, (angular, 1)), dirs, horizon, h)
    hh = times[1] - times[0]
    start_idx = max(2, int(min_length / hh))
    best = math.inf
    best_dir = None
    for ray in range(angular):
        dist = _chart_dist(pos[:, ray, :], x[None, :], g)
        t = _first_return(dist, hh, max(proximity, 3.0 * hh), 3.0 * hh,
                          start_idx, ball=r)
        if t < best:
            best, best_dir = t, dirs[ray]
    if best_dir is None:
        return math.inf
    # refine the winning ray with a finer step and the strict threshold
    fine_h = h / 5.0
    _, pos_f, _, _, _ = _integrate_batch(
        g, x[None, :], best_dir[None, :], min(best * 1.05, horizon), fine_h)
    dist = _chart_dist(pos_f[:, 0, :], x[None, :], g)
    fine = _first_return(dist, fine_h, max(proximity, 3.0 * fine_h),
                         proximity, max(2, int(min_length / fine_h)), ball=r)
    if math.isinf(fine):
        return math.inf
    return max(fine - 2.0 * fine_h, 0.0)


def radius_bounds(delta, ell, r, iota=None):
    """(inj, conv_whitehead, conv) lower bounds from curvature and loop data."""
    if r <= 0:
        raise ValueError("ball radius must be positive")
    if ell <= 0:
        raise ValueError("loop length must be positive (or infinite)")
    pi_term = math.inf if delta <= 0 else math.pi / math.sqrt(delta)
    inj = min(pi_term, ell / 2.0, r)
    iota_eff = iota if iota is not None else inj
    conv_w = min(pi_term / 2.0, iota_eff / 2.0, r)
    conv = 0.5 * min(pi_term, ell / 2.0, r / 2.0)
    return inj, conv_w, conv


def inj_conv_estimate(g, x, r, angular=64, rays=24, h=DEFAULT_STEP, seed=0):
    """Chained estimate: curvature sup, loop search, then the bound formulas."""
    delta = sup_sectional(g, x, r, rays=rays, h=h, seed=seed)
    if g.dim == 2:
        ell = shortest_self_intersecting(g, x, r, angular=angular, h=h)
    else:
        ell = math.inf
    inj, conv_w, conv = radius_bounds(delta, ell, r)
    return RadiusEstimate(delta=delta, ell=ell, r=float(r), inj=inj,
                          conv_whitehead=conv_w, conv=conv, heuristic=True)


# ---------------------------------------------------------------------------
# Lorentzian incompleteness experiment

def lorentz_blowup(w_expr, h=2e-3, threshold=1e12, checkpoints=(1e9,),
                   max_steps=5_000_000):
    """Blow-up time of gamma2'' = (1/2 - w'(gamma2)) gamma2'^2, started at
    gamma2(0) = 0 with unit speed.

    The comparison bound is 2 e^C with C = sup(w - w(0)) over one period.
    Steps adapt as h / gamma2' so the resolution follows the blow-up.
    Returns a report dict with t*, checkpoint crossing times, the bound and
    a subsampled trajectory.
    """
    wp_expr = ex.differentiate(w_expr, "y")
    ys = np.linspace(0.0, 1.0, 2001)
    w_vals = np.broadcast_to(np.asarray(
        ex.evaluate(w_expr, {"y": ys}), dtype=float), ys.shape)
    C = float(np.max(w_vals - w_vals[0]))
    bound = 2.0 * math.exp(C)

    def f(state):
        y, p = state
        wp = ex.evaluate(wp_expr, {"y": y})
        return np.array([p, (0.5 - float(wp)) * p * p])

    state = np.array([0.0, 1.0])
    t = 0.0
    crossings = {}
    targets = sorted(set(checkpoints) | {threshold})
    traj_t, traj_y, traj_p = [0.0], [0.0], [1.0]
    for step in range(max_steps):
        p = state[1]
        for th in targets:
            if p >= th and th not in crossings:
                crossings[th] = t
        if p >= threshold:
            break
        dt = h / max(p, 1.0)
        k1 = f(state)
        k2 = f(state + 0.5 * dt * k1)
        k3 = f(state + 0.5 * dt * k2)
        k4 = f(state + dt * k3)
        state = state + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += dt
        if step % 200 == 0:
            traj_t.append(t)
            traj_y.append(float(state[0]))
            traj_p.append(float(state[1]))
    else:
        raise RuntimeError("no blow-up detected within the step budget")
    t_star = crossings[threshold]
    return {
        "t_star": t_star,
        "bound": bound,
        "C": C,
        "passed": t_star < bound,
        "crossings": {f"{th:g}": v for th, v in crossings.items()},
        "trajectory": {"t": traj_t, "y": traj_y, "dy": traj_p},
    }
