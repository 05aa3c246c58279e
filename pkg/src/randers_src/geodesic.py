"""Randers pregeodesics as unit-speed magnetic geodesics of ``(h, d omega)``.

Curves are parametrized by h-arclength ``s``.  In that gauge the pregeodesic
equation is autonomous,

    a^l = -Gamma^l_ij v^i v^j + h^{lm} Omega_mj v^j,

and the magnetic force is h-orthogonal to ``v``, so ``h(v, v) = 1`` is a
conserved diagnostic.  Randers and reverse lengths are carried as extra
quadrature components of the ODE state.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core_metric import RandersMetric, ScalarField, StationarySplitting
from .errors import DegenerateLift, LeftChart, NotFermat, SingularMetric, StepFailure
from .integrate import Event, dopri5

RTOL = 1e-9
ATOL = 1e-12
COND_MAX = 1e12


def christoffel_from_derivatives(hmat, dh):
    """Levi-Civita symbols ``Gamma[..., l, i, j]`` from ``h`` and ``dh[..., k, i, j]``."""
    # T[m, i, j] = d_i h_mj + d_j h_mi - d_m h_ij
    T = np.swapaxes(dh, -3, -2) + np.moveaxis(dh, -3, -1) - dh
    hinv = np.linalg.inv(hmat)
    return 0.5 * np.einsum("...lm,...mij->...lij", hinv, T)


def christoffel_h(h, x):
    """Christoffel symbols of the metric field ``h`` at ``x``."""
    x = np.asarray(x, dtype=float)
    hm = h(x)
    cond = np.linalg.cond(hm)
    if np.any(~np.isfinite(cond)) or np.any(cond > COND_MAX):
        raise SingularMetric(f"metric condition number {float(np.max(cond)):.3g} exceeds {COND_MAX:g}")
    return christoffel_from_derivatives(hm, h.gradient(x))


def _acceleration(R: RandersMetric, x, v):
    hm = R.h(x)
    dh = R.h.gradient(x)
    T = np.swapaxes(dh, -3, -2) + np.moveaxis(dh, -3, -1) - dh
    # h_lm a^m = -1/2 T_lij v^i v^j + Omega_lj v^j
    rhs = -0.5 * np.einsum("...lij,...i,...j->...l", T, v, v)
    rhs = rhs + np.einsum("...lj,...j->...l", R.omega.exterior(x), v)
    return np.linalg.solve(hm, rhs[..., None])[..., 0]


def pregeodesic_rhs(R: RandersMetric, x, v):
    """Acceleration of the h-unit pregeodesic through ``(x, v)``."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    christoffel_h(R.h, x)
    return _acceleration(R, x, v)


def h_norm(R, x, v):
    return np.sqrt(np.einsum("...i,...ij,...j->...", v, R.h(x), v))


def normalize(R, x, v):
    v = np.asarray(v, dtype=float)
    return v / h_norm(R, x, v)[..., None]


@dataclass(frozen=True)
class GeodesicState:
    x: np.ndarray
    v: np.ndarray
    s: float


@dataclass
class GeodesicTrajectory:
    """Accepted steps of one pregeodesic.

    ``lengths[:, 0]`` and ``lengths[:, 1]`` are the running Randers and
    reverse lengths at each stored sample.
    """

    s: np.ndarray
    x: np.ndarray
    v: np.ndarray
    lengths: np.ndarray
    exit_flag: str
    events: list

    @property
    def randers_length(self):
        return float(self.lengths[-1, 0])

    @property
    def reverse_length(self):
        return float(self.lengths[-1, 1])

    @property
    def states(self):
        return [GeodesicState(self.x[i], self.v[i], float(self.s[i])) for i in range(self.s.size)]

    @property
    def endpoint(self):
        return self.x[-1]

    def speed_drift(self, R):
        return float(np.max(np.abs(np.einsum("ni,nij,nj->n", self.v, R.h(self.x), self.v) - 1.0)))

    def truncated(self, s_cut, x_cut, v_cut, l_cut):
        """Copy ending at ``s_cut`` with the given final state appended."""
        keep = self.s < s_cut
        return GeodesicTrajectory(
            np.append(self.s[keep], s_cut),
            np.vstack([self.x[keep], x_cut]),
            np.vstack([self.v[keep], v_cut]),
            np.vstack([self.lengths[keep], l_cut]),
            self.exit_flag, self.events)


def geodesic_system(R: RandersMetric):
    """Right-hand side on states ``[x, v, L_F, L_reverse]``."""
    d = R.dim

    def fun(s, y, rows):
        x = y[:, :d]
        v = y[:, d:2 * d]
        a = _acceleration(R, x, v)
        alpha = h_norm(R, x, v)
        wv = np.einsum("ni,ni->n", R.omega(x), v)
        return np.concatenate([v, a, (alpha + wv)[:, None], (alpha - wv)[:, None]], axis=1)

    return fun


def chart_events(chart, d):
    events = []
    lo, hi = chart.lower(), chart.upper()
    for k in range(d):
        if np.isfinite(lo[k]):
            events.append(Event("left_chart", lambda s, y, r, k=k, c=lo[k]: y[:, k] - c, -1, True))
        if np.isfinite(hi[k]):
            events.append(Event("left_chart", lambda s, y, r, k=k, c=hi[k]: c - y[:, k], -1, True))
    return events


def integrate_batch(R: RandersMetric, x0, v0, max_s, *, domain=None, stop_on_exit=True,
                    extra_events=(), rtol=RTOL, atol=ATOL, record=False, normalize_v=True):
    """Integrate many pregeodesics at once; returns the raw BatchResult."""
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    v0 = np.atleast_2d(np.asarray(v0, dtype=float))
    if normalize_v:
        v0 = normalize(R, x0, v0)
    d = R.dim
    y0 = np.concatenate([x0, v0, np.zeros((x0.shape[0], 2))], axis=1)
    events = list(chart_events(R.chart, d))
    if domain is not None:
        events.append(Event("left_domain", lambda s, y, r: domain.phi(y[:, :d]), -1, stop_on_exit))
    events.extend(extra_events)
    return dopri5(geodesic_system(R), y0, max_s, rtol=rtol, atol=atol, events=events, record=record)


def integrate_pregeodesic(R: RandersMetric, x0, v0, max_s, *, domain=None, stop_on_exit=True,
                          extra_events=(), rtol=RTOL, atol=ATOL, strict=False):
    """Integrate one pregeodesic from ``(x0, v0)`` up to h-arclength ``max_s``.

    Stops early at a chart bound (``left_chart``) or, when ``domain`` is given
    and ``stop_on_exit`` is true, where its level function becomes negative
    (``left_domain``).  With ``strict=True`` a chart exit raises LeftChart and
    a step underflow raises StepFailure instead of being flagged.
    """
    res = integrate_batch(R, x0, v0, max_s, domain=domain, stop_on_exit=stop_on_exit,
                          extra_events=extra_events, rtol=rtol, atol=atol, record=True)
    s, Y = res.records[0]
    d = R.dim
    flag = str(res.status[0])
    if flag == "max_steps":
        flag = "step_failure"
    if strict and flag == "left_chart":
        raise LeftChart(f"trajectory left the chart at s={s[-1]:.6g}")
    if strict and flag == "step_failure":
        raise StepFailure(f"integration failed at s={s[-1]:.6g}")
    # drop a duplicated final sample produced by a terminal event at step end
    keep = np.concatenate([np.diff(s) > 0, [True]])
    keep[0] = True
    s, Y = s[keep], Y[keep]
    return GeodesicTrajectory(s, Y[:, :d], Y[:, d:2 * d], Y[:, 2 * d:], flag, res.hits)


@dataclass
class SpacetimeTrajectory:
    """Lifted causal geodesic.

    ``z`` holds ``(x, t)`` samples (``(u, x, t)`` for timelike lifts) and
    ``zdot`` the affinely normalized velocity ``(xdot, tdot)``.
    """

    s: np.ndarray
    z: np.ndarray
    zdot: np.ndarray
    causal_type: str
    arrival_time: float
    lorentz_length: float
    residual: np.ndarray
    conserved: np.ndarray

    @property
    def max_residual(self):
        return float(np.max(np.abs(self.residual)))

    @property
    def conserved_drift(self):
        c = self.conserved
        return float(np.max(np.abs(c - c[0])) / max(abs(c[0]), 1e-300))


def _splitting_of(F: RandersMetric) -> StationarySplitting:
    if F.splitting is None:
        raise NotFermat("metric was not built from a stationary splitting")
    return F.splitting


def lift_lightlike(F: RandersMetric, traj: GeodesicTrajectory, t_p: float,
                   orientation="future") -> SpacetimeTrajectory:
    """Lift an F-pregeodesic (future) or F~-pregeodesic (past) to a light ray.

    With the first integral normalized to ``C_z = 1`` the affine velocity is
    ``xdot = v/beta`` and ``tdot = +-F(+-v)/beta``.  Arrival times come from
    the length quadratures, so the future arrival is ``t_p + randers_length``.
    For ``orientation="past"`` the trajectory must have been integrated with
    ``reverse_metric(F)``; its first length column is then the F~-length and
    the arrival is ``t_p`` minus that length.
    """
    S = _splitting_of(F)
    x, v = traj.x, traj.v
    alpha = h_norm(F, x, v)
    wv = np.einsum("ni,ni->n", F.omega(x), v)
    beta = S.beta(x)
    if orientation == "future":
        tau = alpha + wv
        t = t_p + traj.lengths[:, 0]
    elif orientation == "past":
        # the trajectory is a pregeodesic of the reverse metric and was traced
        # forward in its own parameter; the spacetime ray has x-velocity v
        tau = wv - alpha
        t = t_p - traj.lengths[:, 0]
    else:
        raise ValueError(f"unknown orientation {orientation!r}")
    xdot = v / beta[:, None]
    tdot = tau / beta
    residual = S.lorentz_norm(x, xdot, tdot)
    conserved = (tdot - np.einsum("ni,ni->n", F.omega(x), xdot)) * beta
    z = np.column_stack([x, t])
    zdot = np.column_stack([xdot, tdot])
    return SpacetimeTrajectory(traj.s, z, zdot, "lightlike", float(t[-1]), 0.0, residual, conserved)


def lift_timelike(S: StationarySplitting, product_traj: GeodesicTrajectory, t_p: float,
                  ell: Optional[float] = None, F: Optional[RandersMetric] = None) -> SpacetimeTrajectory:
    """Lift an ``F_beta`` geodesic on ``R_u x S`` to a timelike geodesic of ``g_L``.

    The affine parameter runs over [0, 1] with ``u' = ell``; the constant
    ``udot/beta`` of the exact solution fixes the reparametrization, so the
    residual ``g_L + ell^2`` measures how well it is conserved numerically.
    """
    from .core_metric import fermat_from_stationary

    if F is None:
        F = fermat_from_stationary(S)
    u = product_traj.x[:, 0]
    x = product_traj.x[:, 1:]
    udot = product_traj.v[:, 0]
    xdot = product_traj.v[:, 1:]
    if ell is None:
        ell = float(u[-1])
    if abs(u[-1] - ell) > 1e-8 or ell <= 0:
        raise DegenerateLift(f"u-endpoint {u[-1]:.12g} does not match ell={ell:.12g}")
    beta = S.beta(x)
    kappa0 = udot[0] / beta[0]
    ds_dsigma = ell / (kappa0 * beta)
    xp = xdot * ds_dsigma[:, None]
    up = udot * ds_dsigma
    hx = np.einsum("ni,nij,nj->n", xp, F.h(x), xp)
    wx = np.einsum("ni,ni->n", F.omega(x), xp)
    tp = wx + np.sqrt(hx + up ** 2 / beta)
    residual = S.lorentz_norm(x, xp, tp) + ell ** 2
    conserved = (tp - wx) * beta
    t = t_p + product_traj.lengths[:, 0]
    z = np.column_stack([u, x, t])
    zdot = np.column_stack([up, xp, tp])
    return SpacetimeTrajectory(product_traj.s, z, zdot, "timelike", float(t[-1]), float(ell),
                               residual, conserved)


def randers_distance_estimate(R, p, q, domain=None, **kwargs):
    """Shortest Randers length among connecting geodesics found by shooting."""
    from .connector import ConnectionQuery, shoot_connect

    sols = shoot_connect(R, ConnectionQuery(p=p, q=q, domain=domain, **kwargs))
    return min(sol.randers_length for sol in sols)
