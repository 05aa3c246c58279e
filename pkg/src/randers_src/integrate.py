"""Batched Dormand-Prince 5(4) integrator with PI step control and dense output.

Each row of the state array is an independent initial value problem with its
own step size, so a whole shooting fan advances in one vectorized loop.
Events are located by bisection on the quartic dense output.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import StepFailure

C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
]
B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# difference between the 5th and embedded 4th order weights, FSAL stage last
E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# dense output: y(t + th*h) = y + h * sum_k K_k * sum_j P[k, j] th^(j+1)
P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

SAFETY = 0.9
BETA_PI = 0.04
ALPHA_PI = 0.2 - 0.75 * BETA_PI
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
BISECT_ITERS = 52


@dataclass(frozen=True)
class Event:
    """Scalar event function ``fun(s, y, rows) -> (n,)`` on a batch of rows.

    ``direction`` is +1 for upward crossings only, -1 for downward, 0 for both.
    """

    name: str
    fun: Callable
    direction: int = 0
    terminal: bool = False


@dataclass
class EventHit:
    name: str
    row: int
    s: float
    y: np.ndarray


@dataclass
class BatchResult:
    s: np.ndarray
    y: np.ndarray
    status: np.ndarray
    hits: list
    records: Optional[list] = None
    nsteps: Optional[np.ndarray] = None

    def hits_for(self, row, name=None):
        return [e for e in self.hits if e.row == row and (name is None or e.name == name)]


def _rms(a):
    return np.sqrt(np.mean(a * a, axis=-1))


def _initial_step(fun, s0, y0, f0, rows, rtol, atol, direction):
    scale = atol + rtol * np.abs(y0)
    d0 = _rms(y0 / scale)
    d1 = _rms(f0 / scale)
    h0 = np.where((d0 < 1e-5) | (d1 < 1e-5), 1e-6, 0.01 * d0 / np.maximum(d1, 1e-300))
    y1 = y0 + (direction * h0)[:, None] * f0
    f1 = fun(s0 + direction * h0, y1, rows)
    d2 = _rms((f1 - f0) / scale) / h0
    dm = np.maximum(d1, d2)
    h1 = np.where(dm <= 1e-15, np.maximum(1e-6, h0 * 1e-3), (0.01 / np.maximum(dm, 1e-300)) ** 0.2)
    h = np.minimum(100 * h0, h1)
    return np.where(np.isfinite(h) & (h > 0), h, 1e-6)


def _dense(y, h, Q, theta):
    """Evaluate dense output; ``Q`` has shape (n, m, 4), theta shape (n,)."""
    th = theta[:, None]
    powers = np.stack([th, th ** 2, th ** 3, th ** 4], axis=-1)  # (n, 1, 4)
    return y + h[:, None] * np.sum(Q * powers, axis=-1)


def dopri5(fun, y0, s_end, *, s0=0.0, rtol=1e-9, atol=1e-12, events=(), h0=None,
           max_steps=200000, record=False, raise_on_failure=False):
    """Integrate ``y' = fun(s, y, rows)`` for a batch of rows.

    Parameters
    ----------
    fun : callable
        ``fun(s, y, rows)`` with ``s`` of shape (n,), ``y`` of shape (n, m)
        and ``rows`` the global row indices of the batch being evaluated.
    y0 : array (N, m)
    s_end : float or array (N,)
        Integration ends; may be below ``s0`` for backward integration.
    events : sequence of Event
    record : bool
        Keep every accepted state, one list entry ``(s, y)`` per row.

    Returns
    -------
    BatchResult with final ``s``, ``y`` and per-row status strings
    ``completed``, ``step_failure``, ``max_steps`` or a terminal event name.
    """
    y0 = np.atleast_2d(np.asarray(y0, dtype=float))
    N, m = y0.shape
    s_end = np.broadcast_to(np.asarray(s_end, dtype=float), (N,)).copy()
    s = np.full(N, float(s0))
    direction = np.where(s_end >= s, 1.0, -1.0)
    y = y0.copy()
    status = np.array(["running"] * N, dtype=object)
    hits = []
    nsteps = np.zeros(N, dtype=int)
    recs_s = [[float(s0)] for _ in range(N)] if record else None
    recs_y = [[y0[i].copy()] for i in range(N)] if record else None

    rows_all = np.arange(N)
    done0 = s_end == s
    status[done0] = "completed"
    f = fun(s, y, rows_all)
    if h0 is None:
        h = _initial_step(fun, s, y, f, rows_all, rtol, atol, direction)
    else:
        h = np.full(N, float(h0))
    err_old = np.full(N, 1e-4)
    g_old = [np.asarray(ev.fun(s, y, rows_all), dtype=float) for ev in events]

    while True:
        act = np.nonzero(status == "running")[0]
        if act.size == 0:
            break
        sa, ya, fa, da = s[act], y[act], f[act], direction[act]
        remaining = np.abs(s_end[act] - sa)
        ha = np.minimum(h[act], remaining)
        hs = da * ha
        K = np.empty((7,) + ya.shape)
        K[0] = fa
        for i in range(1, 6):
            dy = np.tensordot(A[i], K[:i], axes=(0, 0))
            K[i] = fun(sa + C[i] * hs, ya + hs[:, None] * dy, act)
        y_new = ya + hs[:, None] * np.tensordot(B, K[:6], axes=(0, 0))
        s_new = np.where(ha >= remaining, s_end[act], sa + hs)
        K[6] = fun(s_new, y_new, act)
        err = hs[:, None] * np.tensordot(E, K, axes=(0, 0))
        scale = atol + rtol * np.maximum(np.abs(ya), np.abs(y_new))
        en = _rms(err / scale)
        en = np.where(np.isfinite(en) & np.all(np.isfinite(y_new), axis=1), en, np.inf)
        acc = en <= 1.0

        # step size update: PI on accepted steps, plain shrink on rejections
        en_safe = np.maximum(en, 1e-10)
        fac_acc = np.clip(SAFETY * en_safe ** (-ALPHA_PI) * err_old[act] ** BETA_PI, MIN_FACTOR, MAX_FACTOR)
        fac_rej = np.where(np.isfinite(en), np.clip(SAFETY * en_safe ** -0.2, MIN_FACTOR, 1.0), MIN_FACTOR)
        h_new = np.where(acc, ha * fac_acc, ha * fac_rej)
        tiny = 1e-14 * np.maximum(1.0, np.abs(sa))
        fail = (~acc) & (h_new < tiny)
        if np.any(fail):
            rows = act[fail]
            status[rows] = "step_failure"
            if raise_on_failure:
                raise StepFailure(f"step size underflow at s={s[rows[0]]:.6g}")
        h[act] = h_new
        err_old[act] = np.where(acc, np.maximum(en, 1e-4), err_old[act])

        ai = np.nonzero(acc)[0]
        if ai.size == 0:
            continue
        rows = act[ai]
        nsteps[rows] += 1
        y_old = ya[ai]
        y_acc = y_new[ai]
        s_acc = s_new[ai]
        s_prev = sa[ai]
        hstep = hs[ai]
        Q = np.einsum("kni,kj->nij", K[:, ai, :], P)
        theta_stop = np.full(ai.size, np.inf)
        stop_name = np.array([None] * ai.size, dtype=object)
        pending = []
        for j, ev in enumerate(events):
            gn = np.asarray(ev.fun(s_acc, y_acc, rows), dtype=float)
            go = g_old[j][rows]
            cross = (go != 0.0) & np.isfinite(go) & np.isfinite(gn) & ((go < 0) != (gn < 0))
            cross |= (gn == 0.0) & (go != 0.0)
            if ev.direction > 0:
                cross &= go < 0
            elif ev.direction < 0:
                cross &= go > 0
            g_old[j][rows] = gn
            ci = np.nonzero(cross)[0]
            if ci.size == 0:
                continue
            lo = np.zeros(ci.size)
            hi = np.ones(ci.size)
            glo = go[ci]
            for _ in range(BISECT_ITERS):
                mid = 0.5 * (lo + hi)
                ym = _dense(y_old[ci], hstep[ci], Q[ci], mid)
                gm = np.asarray(ev.fun(s_prev[ci] + mid * hstep[ci], ym, rows[ci]), dtype=float)
                same = (gm < 0) == (glo < 0)
                same &= gm != 0.0
                lo = np.where(same, mid, lo)
                hi = np.where(same, hi, mid)
            theta = hi
            ys = _dense(y_old[ci], hstep[ci], Q[ci], theta)
            ss = s_prev[ci] + theta * hstep[ci]
            for k, idx in enumerate(ci):
                pending.append((theta[k], ev, idx, ss[k], ys[k]))
                if ev.terminal and theta[k] < theta_stop[idx]:
                    theta_stop[idx] = theta[k]
                    stop_name[idx] = ev.name
        for theta, ev, idx, ss, ys in sorted(pending, key=lambda t: (t[2], t[0])):
            if theta <= theta_stop[idx]:
                hits.append(EventHit(ev.name, int(rows[idx]), float(ss), ys.copy()))

        stopped = np.isfinite(theta_stop)
        if np.any(stopped):
            si = np.nonzero(stopped)[0]
            y_acc = y_acc.copy()
            s_acc = s_acc.copy()
            y_acc[si] = _dense(y_old[si], hstep[si], Q[si], theta_stop[si])
            s_acc[si] = s_prev[si] + theta_stop[si] * hstep[si]
            status[rows[si]] = stop_name[si]
            for j, ev in enumerate(events):
                g_old[j][rows[si]] = np.asarray(ev.fun(s_acc[si], y_acc[si], rows[si]), dtype=float)

        y[rows] = y_acc
        s[rows] = s_acc
        f[rows] = K[6, ai]
        if np.any(stopped):
            f[rows[si]] = fun(s_acc[si], y_acc[si], rows[si])
        finished = (s_acc == s_end[rows]) & (status[rows] == "running")
        status[rows[finished]] = "completed"
        over = (nsteps[rows] >= max_steps) & (status[rows] == "running")
        status[rows[over]] = "max_steps"
        if record:
            for k, r in enumerate(rows):
                recs_s[r].append(float(s_acc[k]))
                recs_y[r].append(y_acc[k].copy())

    records = None
    if record:
        records = [(np.array(recs_s[i]), np.array(recs_y[i])) for i in range(N)]
    return BatchResult(s, y, status, hits, records, nsteps)
