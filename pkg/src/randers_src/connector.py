"""Two-point connection problems for Randers metrics and their spacetime lifts.

Connecting geodesics are found by shooting: a fan of h-unit initial
velocities is integrated from ``p`` and the closest passages to ``q`` are
recorded.  In dimension 2 the signed closest-approach offset changes sign
between neighbouring rays that bracket a solution, and the bracket is refined
by an Illinois-type secant iteration.  In dimension 3 local minima of the miss
distance over the angular grid seed a least-squares refinement.

Charts with a periodic coordinate are treated as universal covers: each lift
``q + k * period`` of the target is a separate homotopy class of paths.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.linalg import solve_banded
from scipy.optimize import least_squares

from .core_metric import RandersMetric, StationarySplitting, fermat_from_stationary, product_randers_beta, reverse_metric
from .convexity import Hypersurface
from .errors import NoSolution, NonConvergence
from .geodesic import (GeodesicTrajectory, SpacetimeTrajectory, integrate_batch, integrate_pregeodesic,
                       lift_lightlike, lift_timelike)
from .integrate import Event

MISS_TOL = 1e-7
DEDUP_ANGLE = 1e-5
CONFINE_TOL = 1e-9


@dataclass
class ConnectionQuery:
    p: np.ndarray
    q: np.ndarray
    domain: Optional[Hypersurface] = None
    mode: str = "lightlike"
    ell: Optional[float] = None
    t_p: float = 0.0
    max_solutions: int = 10
    direction_grid: Optional[int] = None
    winding_range: int = 0
    max_s: Optional[float] = None
    orientation: str = "future"
    confine: bool = True

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        if self.p.shape != self.q.shape:
            raise ValueError("p and q must have the same dimension")
        if np.allclose(self.p, self.q, rtol=0, atol=1e-14) and self.mode == "lightlike":
            raise ValueError("p and q must differ")
        if self.mode not in ("lightlike", "timelike"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "timelike" and not (self.ell is not None and self.ell > 0):
            raise ValueError("timelike mode needs ell > 0")
        if self.orientation not in ("future", "past"):
            raise ValueError(f"unknown orientation {self.orientation!r}")
        if self.domain is not None:
            for name, pt in (("p", self.p), ("q", self.q)):
                if not float(self.domain.phi(pt)) > 1e-8:
                    raise ValueError(f"{name} is not strictly inside the domain")


@dataclass
class ConnectionSolution:
    trajectory: GeodesicTrajectory
    randers_length: float
    arrival_time: float
    homotopy_tag: int
    confined: bool
    min_phi: float
    miss: float
    sheet: int
    angles: np.ndarray
    lift: Optional[SpacetimeTrajectory] = None

    @property
    def winding(self):
        return self.homotopy_tag


def _frame(R, p):
    """Columns form an h-orthonormal basis at ``p``."""
    L = np.linalg.cholesky(R.h(p))
    return np.linalg.inv(L).T


def _directions(angles, n):
    """Unit vectors from angle parameters: psi (n=2) or (theta, phi) (n=3)."""
    a = np.atleast_2d(angles)
    if n == 2:
        return np.column_stack([np.cos(a[:, 0]), np.sin(a[:, 0])])
    th, ph = a[:, 0], a[:, 1]
    return np.column_stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])


def _targets(R, q, winding_range):
    out = [(q.copy(), 0)]
    periods = R.chart.periods or ()
    axes = [k for k, per in enumerate(periods) if per]
    if axes and winding_range:
        ax = axes[0]
        out = []
        # truncated turn counts of lifts -K-1..K+1 cover every tag in -K..K
        for k in range(-winding_range - 1, winding_range + 2):
            t = q.copy()
            t[ax] += k * periods[ax]
            out.append((t, k))
    return out


def _segment_length(R, a, b, n=32):
    t = (np.arange(n) + 0.5) / n
    mid = a[None, :] + t[:, None] * (b - a)[None, :]
    d = (b - a) / n
    return float(np.sum(np.sqrt(np.einsum("i,nij,j->n", d, R.h(mid), d))))


def _approach_event(Q, name):
    """Closest approach to ``Q`` (one target, or one per global row)."""
    Q = np.asarray(Q, dtype=float)
    d = Q.shape[-1]

    def g(s, y, rows):
        q = Q if Q.ndim == 1 else Q[rows]
        return np.einsum("ni,ni->n", y[:, :d] - q, y[:, d:2 * d])
    return Event(name, g, 1, False)


def _signed_miss(x, v, q):
    """Signed offset of the closest approach (dimension 2), or the miss vector."""
    w = x - q
    if x.size == 2:
        vn = v / np.linalg.norm(v)
        return np.array([vn[0] * w[1] - vn[1] * w[0]])
    return w


def _best_passages(hits, name, Q, d, nrows):
    """Closest recorded passage per row: list of EventHit or None."""
    Q = np.broadcast_to(np.asarray(Q, dtype=float), (nrows, d))
    best = [None] * nrows
    dist = np.full(nrows, np.inf)
    for e in hits:
        if e.name != name:
            continue
        dd = np.linalg.norm(e.y[:d] - Q[e.row])
        if dd < dist[e.row]:
            dist[e.row], best[e.row] = dd, e
    return best


def _fan_grid(n, N):
    if n == 2:
        return (2 * np.pi * np.arange(N) / N)[:, None], (N,)
    th = (np.arange(N) + 0.5) * np.pi / N
    ph = 2 * np.pi * np.arange(N) / N
    T, P = np.meshgrid(th, ph, indexing="ij")
    return np.column_stack([T.ravel(), P.ravel()]), (N, N)


class _Shooter:
    """Integrates rays from ``p`` and reports the closest passage to one target."""

    def __init__(self, R, p, E, max_s, domain, confine=True):
        self.R, self.p, self.E, self.max_s, self.domain = R, p, E, max_s, domain
        self.confine = confine
        self.n = p.size

    def velocities(self, angles):
        return _directions(angles, self.n) @ self.E.T

    def run(self, angles, targets):
        a = np.atleast_2d(angles)
        X0 = np.tile(self.p, (a.shape[0], 1))
        events = [_approach_event(t, f"t{i}") for i, t in enumerate(targets)]
        return integrate_batch(self.R, X0, self.velocities(a), self.max_s, domain=self.domain,
                               stop_on_exit=self.confine, extra_events=events)

    def misses(self, res, name, Q, nrows):
        out = np.full((nrows, 1 if self.n == 2 else self.n), np.nan)
        Qb = np.broadcast_to(np.asarray(Q, dtype=float), (nrows, self.n))
        for j, e in enumerate(_best_passages(res.hits, name, Qb, self.n, nrows)):
            if e is not None:
                out[j] = _signed_miss(e.y[:self.n], e.y[self.n:2 * self.n], Qb[j])
        return out

    def miss(self, angles, Q):
        """Miss (signed scalar in 2D, vector otherwise) per angle row; NaN if no passage.

        ``Q`` is one target or one target per row.
        """
        a = np.atleast_2d(angles)
        res = self.run(a, [Q])
        return self.misses(res, "t0", Q, a.shape[0])


def _illinois(shooter, Q, lo, hi, flo, fhi, iters=60, stall_check=12):
    """Vectorized regula falsi with the Illinois modification on brackets [lo, hi].

    ``Q`` holds one target per bracket.  Brackets whose miss has not dropped
    by three orders of magnitude after ``stall_check`` iterations straddle a
    jump rather than a root and are abandoned (their result is NaN).
    """
    lo, hi, flo, fhi = (np.array(v, dtype=float) for v in (lo, hi, flo, fhi))
    Q = np.asarray(Q, dtype=float)
    f_init = np.minimum(np.abs(flo), np.abs(fhi))
    side = np.zeros(lo.size)
    x = 0.5 * (lo + hi)
    fx = np.full(lo.size, np.nan)
    active = np.ones(lo.size, dtype=bool)
    for end, fend in ((lo, flo), (hi, fhi)):
        hit = active & (np.abs(fend) < 1e-12)
        x[hit], fx[hit] = end[hit], fend[hit]
        active &= ~hit
    for it in range(iters):
        if it == stall_check:
            stalled = active & ~(np.abs(fx) < 1e-3 * f_init)
            fx[stalled] = np.nan
            active &= ~stalled
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        denom = fhi[idx] - flo[idx]
        xs = np.where(denom != 0, hi[idx] - fhi[idx] * (hi[idx] - lo[idx]) / np.where(denom != 0, denom, 1), 0.5 * (lo[idx] + hi[idx]))
        bad = ~((xs > np.minimum(lo[idx], hi[idx])) & (xs < np.maximum(lo[idx], hi[idx])))
        xs = np.where(bad, 0.5 * (lo[idx] + hi[idx]), xs)
        fs = shooter.miss(xs[:, None], Q[idx])[:, 0]
        x[idx] = xs
        fx[idx] = fs
        for k, i in enumerate(idx):
            f = fs[k]
            if not np.isfinite(f):
                active[i] = False
                continue
            if abs(f) < 1e-12 or abs(hi[i] - lo[i]) < 1e-15:
                active[i] = False
                continue
            if np.sign(f) == np.sign(fhi[i]):
                hi[i], fhi[i] = xs[k], f
                if side[i] == 1:
                    flo[i] *= 0.5
                side[i] = 1
            else:
                lo[i], flo[i] = xs[k], f
                if side[i] == -1:
                    fhi[i] *= 0.5
                side[i] = -1
    return x, fx


def _secant(shooter, target, a0, iters=60):
    """Secant iteration from an isolated near-miss ray (dimension 2)."""
    x0 = float(a0)
    x1 = x0 + 1e-7
    f0 = shooter.miss([[x0]], target)[0, 0]
    f1 = shooter.miss([[x1]], target)[0, 0]
    for _ in range(iters):
        if not (np.isfinite(f0) and np.isfinite(f1)):
            return x1, np.nan
        if abs(f1) < 1e-12 or f1 == f0:
            break
        x2 = x1 - f1 * (x1 - x0) / (f1 - f0)
        x0, f0 = x1, f1
        x1 = x2
        f1 = shooter.miss([[x1]], target)[0, 0]
    return x1, f1


def _winding(R, x_start, x_end):
    periods = R.chart.periods or ()
    for k, per in enumerate(periods):
        if per:
            turns = (x_end[k] - x_start[k]) / per
            return int(np.trunc(turns))
    return None


def _finalize(R, shooter, angles, target, sheet, query, tag_fallback):
    v0 = shooter.velocities(angles)[0]
    d = shooter.n
    traj = integrate_pregeodesic(R, shooter.p, v0, shooter.max_s, domain=query.domain,
                                 stop_on_exit=shooter.confine,
                                 extra_events=[_approach_event(target, "target")])
    e = _best_passages(traj.events, "target", target, d, 1)[0]
    if e is None:
        return None
    dist = float(np.linalg.norm(e.y[:d] - target))
    traj = traj.truncated(e.s, e.y[:d], e.y[d:2 * d], e.y[2 * d:2 * d + 2])
    min_phi = np.inf
    confined = True
    if query.domain is not None:
        min_phi = float(np.min(query.domain.phi(traj.x)))
        crossed = any(h.name == "left_domain" and h.s <= e.s for h in traj.events)
        confined = (min_phi > -CONFINE_TOL) and not crossed
    wind = _winding(R, traj.x[0], traj.x[-1])
    tag = wind if wind is not None else tag_fallback
    L = traj.randers_length
    return ConnectionSolution(traj, L, query.t_p + L, tag, bool(confined), min_phi, float(dist), sheet,
                              np.atleast_1d(np.asarray(angles, dtype=float)).ravel())


def _angle_distance(a, b, n):
    if n == 2:
        d = abs((a[0] - b[0] + np.pi) % (2 * np.pi) - np.pi)
        return d
    u, w = _directions(a, 3)[0], _directions(b, 3)[0]
    return float(np.arccos(np.clip(u @ w, -1, 1)))


def shoot_connect(R: RandersMetric, query: ConnectionQuery):
    """Connecting pregeodesics from ``p`` to ``q`` (or to ``(ell, q)`` in timelike mode).

    Returns solutions sorted by Randers length (ties by initial angle).  In
    timelike mode ``R`` must be a Fermat metric and the search runs in the
    product ``R_u x S`` with ``F_beta``.
    """
    if query.mode == "timelike":
        S = R.splitting
        if S is None:
            raise ValueError("timelike connection needs a Fermat metric with its splitting")
        Rs = product_randers_beta(R, S.beta)
        p = np.concatenate([[0.0], query.p])
        q = np.concatenate([[query.ell], query.q])
        dom = None
        if query.domain is not None:
            H = query.domain
            dom = Hypersurface(lambda X: H.phi(X[..., 1:]))
        inner = replace(query, p=p, q=q, domain=dom, mode="lightlike")
        inner.t_p = query.t_p
        return _shoot(Rs, inner)
    return _shoot(R, query)


def _shoot(R, query):
    n = R.dim
    if n not in (2, 3):
        raise ValueError("shooting supports fans in dimension 2 or 3")
    p, q = query.p, query.q
    E = _frame(R, p)
    targets = _targets(R, q, query.winding_range)
    max_s = query.max_s
    if max_s is None:
        max_s = 3.0 * max(_segment_length(R, p, t) for t, _ in targets) + 1.0
    shooter = _Shooter(R, p, E, max_s, query.domain, query.confine)
    N = query.direction_grid or (720 if n == 2 else 64)
    grid, shape = _fan_grid(n, N)
    res = shooter.run(grid, [t for t, _ in targets])

    nrays = grid.shape[0]
    misses = [shooter.misses(res, f"t{ti}", t, nrays) for ti, (t, _) in enumerate(targets)]
    coverage = {"rays": int(nrays),
                "passages": {int(k): int(np.sum(np.isfinite(m[:, 0]))) for (_, k), m in zip(targets, misses)}}
    cands = []  # (angles, target index)
    if n == 2:
        nxt = np.roll(np.arange(N), -1)
        prv = np.roll(np.arange(N), 1)
        br_lo, br_flo, br_fhi, br_t = [], [], [], []
        for ti, (target, _) in enumerate(targets):
            m = misses[ti][:, 0]
            cap = 0.3 * max(1.0, float(np.linalg.norm(target - p)))
            br = np.nonzero(np.isfinite(m) & np.isfinite(m[nxt]) & (np.sign(m) != np.sign(m[nxt])))[0]
            br_lo.append(grid[br, 0])
            br_flo.append(m[br])
            br_fhi.append(m[nxt[br]])
            br_t += [ti] * br.size
            # near-miss rays not adjacent to a bracket
            absm = np.where(np.isfinite(m), np.abs(m), np.inf)
            inbr = np.zeros(N, dtype=bool)
            inbr[br] = True
            inbr[nxt[br]] = True
            for j in np.nonzero((absm < cap) & (absm <= absm[prv]) & (absm <= absm[nxt]) & ~inbr)[0]:
                x, f = _secant(shooter, target, grid[j, 0])
                if np.isfinite(f):
                    cands.append((np.array([x]), ti))
        if br_t:
            lo = np.concatenate(br_lo)
            Qb = np.array([targets[ti][0] for ti in br_t])
            xs, fx = _illinois(shooter, Qb, lo, lo + 2 * np.pi / N, np.concatenate(br_flo), np.concatenate(br_fhi))
            cands += [(np.array([x]), ti) for x, f, ti in zip(xs, fx, br_t) if np.isfinite(f)]
    else:
        for ti, (target, _) in enumerate(targets):
            miss = misses[ti]
            cap = 0.3 * max(1.0, float(np.linalg.norm(target - p)))
            dist = np.where(np.isfinite(miss[:, 0]), np.linalg.norm(miss, axis=1), np.inf).reshape(shape)
            pad = np.pad(dist, 1, mode="edge")
            pad[:, 0], pad[:, -1] = pad[:, -2], pad[:, 1]
            locmin = np.ones(shape, dtype=bool)
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    if di or dj:
                        locmin &= dist <= pad[1 + di:1 + di + shape[0], 1 + dj:1 + dj + shape[1]]
            for j in np.nonzero((locmin & (dist < cap)).ravel())[0]:
                fun = lambda a, t=target: np.nan_to_num(shooter.miss(a[None, :], t)[0], nan=1e3)
                sol = least_squares(fun, grid[j], xtol=1e-15, ftol=1e-15, gtol=1e-15, diff_step=1e-7, max_nfev=200)
                cands.append((sol.x, ti))
    found = []
    for a, ti in cands:
        target, sheet = targets[ti]
        sol = _finalize(R, shooter, a, target, sheet, query, len(found))
        if sol is None or not sol.miss < MISS_TOL:
            continue
        if any(s.sheet == sheet and _angle_distance(s.angles, sol.angles, n) < DEDUP_ANGLE for s in found):
            continue
        found.append(sol)
    if query.winding_range:
        found = [s for s in found if s.homotopy_tag is None or abs(s.homotopy_tag) <= query.winding_range]
    if not found:
        raise NoSolution("no connecting geodesic found", coverage)
    found.sort(key=lambda s: (s.randers_length, float(s.angles[0]) % (2 * np.pi)))
    if R.chart.periods is None or not any(R.chart.periods):
        for i, s in enumerate(found):
            s.homotopy_tag = i
    return found[:query.max_solutions]


def min_arrival_lightlike(S: StationarySplitting, query: ConnectionQuery, F: Optional[RandersMetric] = None):
    """Confined light ray from ``(p, t_p)`` to the line over ``q`` with extremal arrival time.

    Future orientation minimizes ``t_p + L_F``; past orientation uses the
    reverse metric and maximizes ``t_p - L_F~``.
    """
    F = F or fermat_from_stationary(S)
    R = F if query.orientation == "future" else reverse_metric(F)
    sols = shoot_connect(R, query)
    confined = [s for s in sols if s.confined]
    if not confined:
        raise NoSolution("no confined connecting ray", {"found": len(sols)})
    best = min(confined, key=lambda s: s.randers_length)
    best.lift = lift_lightlike(F, best.trajectory, query.t_p, query.orientation)
    best.arrival_time = best.lift.arrival_time
    return best


def timelike_connect(S: StationarySplitting, query: ConnectionQuery, F: Optional[RandersMetric] = None):
    """Timelike geodesics of Lorentzian length ``ell`` from ``(p, t_p)`` to the line over ``q``.

    Sorted by arrival time; the first element is the minimizer.
    """
    F = F or fermat_from_stationary(S)
    sols = shoot_connect(F, replace(query, mode="timelike"))
    for s in sols:
        s.lift = lift_timelike(S, s.trajectory, query.t_p, query.ell, F)
        s.arrival_time = s.lift.arrival_time
    sols.sort(key=lambda s: s.arrival_time)
    return sols


@dataclass
class CensusReport:
    solutions: list
    by_winding: dict
    monotone: bool
    winding_range: int

    def to_dict(self):
        return {
            "winding_range": self.winding_range,
            "count": len(self.solutions),
            "monotone_in_abs_winding": self.monotone,
            "min_arrival_by_winding": {str(k): v for k, v in sorted(self.by_winding.items())},
        }


def lens_census(R, query: ConnectionQuery, winding_range: int = 2):
    """Confined connecting geodesics per winding class, with arrival times.

    ``monotone`` is true when the smallest arrival time in each class strictly
    increases with ``|winding|``.
    """
    if isinstance(R, StationarySplitting):
        R = fermat_from_stationary(R)
    q = replace(query, winding_range=winding_range, max_solutions=max(query.max_solutions, 4 * winding_range + 4))
    sols = [s for s in shoot_connect(R, q) if s.confined]
    if R.splitting is not None:
        for s in sols:
            s.lift = lift_lightlike(R, s.trajectory, query.t_p)
            s.arrival_time = s.lift.arrival_time
    by = {}
    for s in sols:
        by[s.homotopy_tag] = min(by.get(s.homotopy_tag, np.inf), s.arrival_time)
    levels = sorted({abs(k) for k in by})
    mins = [min(v for k, v in by.items() if abs(k) == lev) for lev in levels]
    monotone = all(b > a for a, b in zip(mins, mins[1:]))
    return CensusReport(sols, by, monotone, winding_range)


# ---------------------------------------------------------------- discrete energy oracle


@dataclass
class OraclePath:
    nodes: np.ndarray
    energy: float
    length: float
    iterations: int
    grad_norm: float


def polygon_energy(R, X):
    """``1/2 sum F(mid_i, dX_i)^2 / ds`` and the polygon's Randers length, ``ds = 1/(n-1)``."""
    seg = np.diff(X, axis=0)
    mid = 0.5 * (X[1:] + X[:-1])
    Fi = R.evaluate_unchecked(mid, seg)
    n = X.shape[0]
    return 0.5 * (n - 1) * float(np.sum(Fi ** 2)), float(np.sum(Fi))


def _segment_energies(R, X):
    seg = np.diff(X, axis=0)
    mid = 0.5 * (X[1:] + X[:-1])
    return 0.5 * (X.shape[0] - 1) * R.evaluate_unchecked(mid, seg) ** 2


def _energy_gradient(R, X):
    """Finite-difference gradient over interior nodes, perturbing alternate nodes together."""
    n, d = X.shape
    G = np.zeros_like(X)
    for parity in (0, 1):
        nodes = np.arange(1, n - 1)
        nodes = nodes[nodes % 2 == parity]
        for k in range(d):
            step = 1e-7 * np.maximum(1.0, np.abs(X[nodes, k]))
            Xp = X.copy()
            Xm = X.copy()
            Xp[nodes, k] += step
            Xm[nodes, k] -= step
            de = _segment_energies(R, Xp) - _segment_energies(R, Xm)
            # node j touches segments j-1 and j
            G[nodes, k] = (de[nodes - 1] + de[nodes]) / (2 * step)
    return G


def _project(domain, X, fixed=(0, -1)):
    if domain is None:
        return X
    X = X.copy()
    for _ in range(20):
        ph = domain.phi(X)
        bad = ph < 0
        bad[list(fixed)] = False
        if not np.any(bad):
            break
        g = domain.gradient(X[bad])
        X[bad] -= (ph[bad] / np.sum(g * g, axis=1))[:, None] * g
    return X


def discrete_energy_oracle(R: RandersMetric, p, q, domain=None, n_nodes=200, seed_path=None,
                           max_iter=5000, tol=1e-13):
    """Minimize the polygonal energy with fixed ends, staying in ``{phi >= 0}``.

    Preconditioned gradient descent: the gradient is smoothed by the inverse
    discrete Laplacian (the exact Hessian for a flat metric) and the step is
    chosen by Armijo backtracking.  ``seed_path(sigma)`` maps ``sigma`` in
    [0, 1] to points and fixes the homotopy class.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    sig = np.linspace(0.0, 1.0, n_nodes)
    if seed_path is None:
        X = p[None, :] + sig[:, None] * (q - p)[None, :]
    else:
        X = np.asarray(seed_path(sig), dtype=float)
        X[0], X[-1] = p, q
    X = _project(domain, X)
    m = n_nodes - 2
    band = np.zeros((3, m))
    band[0, 1:] = -1.0
    band[1, :] = 2.0
    band[2, :-1] = -1.0
    band *= n_nodes - 1
    E, L = polygon_energy(R, X)
    gnorm = np.inf
    for it in range(1, max_iter + 1):
        G = _energy_gradient(R, X)[1:-1]
        D = solve_banded((1, 1), band, G)
        gnorm = float(np.sqrt(np.sum(G * D)))
        t = 1.0
        while True:
            Xn = X.copy()
            Xn[1:-1] -= t * D
            Xn = _project(domain, Xn)
            En, Ln = polygon_energy(R, Xn)
            if En <= E - 1e-4 * t * gnorm ** 2 or t < 1e-12:
                break
            t *= 0.5
        done = abs(E - En) <= tol * max(E, 1e-300)
        X, E, L = Xn, En, Ln
        if done or gnorm < 1e-10:
            return OraclePath(X, E, L, it, gnorm)
    raise NonConvergence(f"energy descent did not converge in {max_iter} iterations", gnorm)


def path_winding(R, nodes):
    """Signed complete turns of a path in a chart with a periodic coordinate."""
    return _winding(R, nodes[0], nodes[-1])


def fermat_stationarity(R: RandersMetric, sol: ConnectionSolution, delta=1e-3, n_quad=64):
    """Length excess under a fixed-endpoint variation normal to the curve.

    The curve is interpolated from its stored states and displaced by
    ``k * sgn * delta * sin(pi tau) N`` with ``N`` the ``h``-normal part of the
    chart axis least aligned with the mean velocity.  Returns
    ``{(k, sgn): length change}`` for ``k in (1, 2)`` and both signs; at a
    stationary minimizer all are positive and scale quadratically.
    """
    tr = sol.trajectory
    s, keep = np.unique(tr.s, return_index=True)
    spline = CubicHermiteSpline(s, tr.x[keep], tr.v[keep])
    # composite Gauss-Legendre on the accepted steps
    gx, gw = np.polynomial.legendre.leggauss(6)
    edges = np.linspace(s[0], s[-1], n_quad + 1)
    mid, half = 0.5 * (edges[1:] + edges[:-1]), 0.5 * np.diff(edges)
    sq = (mid[:, None] + half[:, None] * gx).ravel()
    wq = (half[:, None] * gw).ravel()
    x, v = spline(sq), spline(sq, 1)
    e = np.eye(R.dim)[np.argmin(np.abs(np.mean(v, axis=0)))]
    h = R.h(x)
    hv = np.einsum("pij,pj->pi", h, v)
    N = e - (hv @ e / np.einsum("pi,pi->p", hv, v))[:, None] * v
    # derivative of the h-normal field by central differences of the projection along the spline
    ds = 1e-6 * (s[-1] - s[0])
    xp, vp, xm, vm = spline(sq + ds), spline(sq + ds, 1), spline(sq - ds), spline(sq - ds, 1)

    def normal(xx, vv):
        hh = np.einsum("pij,pj->pi", R.h(xx), vv)
        return e - (hh @ e / np.einsum("pi,pi->p", hh, vv))[:, None] * vv
    dN = (normal(xp, vp) - normal(xm, vm)) / (2 * ds)
    tau = (sq - s[0]) / (s[-1] - s[0])
    bump, dbump = np.sin(np.pi * tau), np.pi / (s[-1] - s[0]) * np.cos(np.pi * tau)
    W, dW = bump[:, None] * N, dbump[:, None] * N + bump[:, None] * dN

    def length(eps):
        return float(wq @ R.evaluate_unchecked(x + eps * W, v + eps * dW))
    L0 = length(0.0)
    return {(k, sgn): length(sgn * k * delta) - L0 for k in (1, 2) for sgn in (1, -1)}
