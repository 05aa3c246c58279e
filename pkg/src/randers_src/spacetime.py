"""Geodesics of the full Lorentzian metric ``g_L`` in coordinates ``(x, t)``.

These routines never touch the Fermat metric: they work from the splitting
``(g0, omega0, beta)`` directly and serve as independent references for the
Randers-side computations.
"""
from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp

from .core_metric import StationarySplitting
from .geodesic import christoffel_from_derivatives


def spacetime_christoffel(S: StationarySplitting, x):
    """Christoffel symbols of ``g_L``, shape ``(..., n+1, n+1, n+1)``; t is last."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    G = S.spacetime_metric(x)
    dG = np.zeros(x.shape[:-1] + (n + 1, n + 1, n + 1))
    dG[..., :n, :, :] = S.spacetime_metric_gradient(x)
    return christoffel_from_derivatives(G, dG)


def _accel(S, z, w):
    n = z.shape[-1] - 1
    Gam = spacetime_christoffel(S, z[..., :n])
    return -np.einsum("...lij,...i,...j->...l", Gam, w, w)


def rk4_geodesic(S: StationarySplitting, z0, w0, sigma_end, nsteps):
    """Classical fixed-step RK4 for a batch of spacetime geodesics.

    Returns position and velocity at ``sigma_end`` (scalar or per-row array).
    """
    z = np.array(z0, dtype=float)
    w = np.array(w0, dtype=float)
    hstep = np.asarray(sigma_end, dtype=float) / nsteps
    hs = hstep[..., None] if np.ndim(hstep) else hstep
    for _ in range(nsteps):
        k1z, k1w = w, _accel(S, z, w)
        k2z, k2w = w + 0.5 * hs * k1w, _accel(S, z + 0.5 * hs * k1z, w + 0.5 * hs * k1w)
        k3z, k3w = w + 0.5 * hs * k2w, _accel(S, z + 0.5 * hs * k2z, w + 0.5 * hs * k2w)
        k4z, k4w = w + hs * k3w, _accel(S, z + hs * k3z, w + hs * k3w)
        z = z + hs / 6.0 * (k1z + 2 * k2z + 2 * k3z + k4z)
        w = w + hs / 6.0 * (k1w + 2 * k2w + 2 * k3w + k4w)
    return z, w


def integrate_spacetime_geodesic(S: StationarySplitting, z0, w0, sigma_end, *, events=None,
                                 rtol=1e-12, atol=1e-14, dense=False):
    """Affinely parametrized ``g_L`` geodesic via scipy's DOP853.

    The state is ``(z, w)``; returns the scipy OdeResult.
    """
    z0 = np.asarray(z0, dtype=float)
    m = z0.size

    def rhs(sig, y):
        z, w = y[:m], y[m:]
        return np.concatenate([w, _accel(S, z, w)])

    y0 = np.concatenate([z0, np.asarray(w0, dtype=float)])
    return solve_ivp(rhs, (0.0, sigma_end), y0, method="DOP853", rtol=rtol, atol=atol,
                     events=events, dense_output=dense)


def killing_constant(S: StationarySplitting, z, w):
    """``beta tdot - omega0(xdot)``, conserved along geodesics (equals ``C_z``)."""
    n = z.shape[-1] - 1
    x = z[..., :n]
    return S.beta(x) * w[..., n] - np.einsum("...i,...i->...", S.omega0(x), w[..., :n])
