"""Infinitesimal light- and time-convexity of level-set hypersurfaces.

A hypersurface is ``{phi = 0}`` and the domain is ``D = {phi > 0}``.  For a
Randers metric the boundary is convex at ``x`` when, for every h-tangent
``y``,

    H^h_phi(y, y) + sqrt(h(y, y)) |grad phi . Omega . y| <= 0,

where ``H^h_phi`` is the Levi-Civita Hessian of ``phi``.  The signed version
(without the absolute value) is the second derivative of ``phi`` along the
pregeodesic with velocity ``y``.  Time-convexity uses the same quantity for
the product metric ``F_beta`` on ``R_u x S``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .core_metric import (RandersMetric, StationarySplitting, central_gradient,
                          fermat_from_stationary)
from .errors import NotOnBoundary
from .geodesic import christoffel_from_derivatives
from .spacetime import rk4_geodesic

BOUNDARY_TOL = 1e-8
TOL_FACTOR = 1e-7
V_GRID = np.logspace(-3, 3, 25)


@dataclass(frozen=True)
class Hypersurface:
    """Level function ``phi`` with optional analytic gradient and coordinate Hessian."""

    phi_fn: Callable
    gradient_fn: Optional[Callable] = None
    hessian_fn: Optional[Callable] = None
    name: str = ""

    def phi(self, x):
        return np.asarray(self.phi_fn(np.asarray(x, dtype=float)), dtype=float)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        if self.gradient_fn is not None:
            return np.asarray(self.gradient_fn(x), dtype=float)
        return central_gradient(self.phi_fn, x)

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        if self.hessian_fn is not None:
            return np.asarray(self.hessian_fn(x), dtype=float)
        if self.gradient_fn is not None:
            hs = central_gradient(self.gradient_fn, x)
        else:
            hs = _second_differences(self.phi_fn, x)
        return 0.5 * (hs + np.swapaxes(hs, -1, -2))

    def scaled(self, c):
        """Same boundary and domain with ``phi`` multiplied by ``c > 0``."""
        g = None if self.gradient_fn is None else (lambda x: c * self.gradient_fn(x))
        hs = None if self.hessian_fn is None else (lambda x: c * self.hessian_fn(x))
        return Hypersurface(lambda x: c * self.phi_fn(x), g, hs, self.name)


def _second_differences(fun, x):
    d = x.shape[-1]
    step = 1e-4 * np.maximum(1.0, np.abs(x))
    out = np.zeros(x.shape + (d,))
    f0 = fun(x)
    for i in range(d):
        for j in range(i, d):
            def shifted(si, sj):
                z = x.copy()
                z[..., i] += si * step[..., i]
                z[..., j] += sj * step[..., j]
                return fun(z)
            val = (shifted(1, 1) - shifted(1, -1) - shifted(-1, 1) + shifted(-1, -1)) / (
                4 * step[..., i] * step[..., j])
            out[..., i, j] = val
            out[..., j, i] = val
    return out


def sphere(center, radius, scale=1.0):
    """Euclidean coordinate sphere ``phi = scale (R^2 - |x - c|^2)``."""
    c = np.asarray(center, dtype=float)
    d = c.size
    return Hypersurface(
        lambda x: scale * (radius ** 2 - np.sum((x - c) ** 2, axis=-1)),
        lambda x: -2.0 * scale * (x - c),
        lambda x: np.broadcast_to(-2.0 * scale * np.eye(d), np.shape(x)[:-1] + (d, d)).copy(),
        f"sphere(R={radius:g})")


@dataclass(frozen=True)
class RadialProbes:
    """Boundary sampler: bisection for ``phi = 0`` along rays ``seed + s dir``.

    Each seed must lie in ``D`` and each ray must leave it before ``s_max``.
    """

    seeds: np.ndarray
    directions: np.ndarray
    s_max: float = 1e3
    n_bracket: int = 400

    def points(self, H: Hypersurface):
        seeds = np.atleast_2d(np.asarray(self.seeds, dtype=float))
        dirs = np.atleast_2d(np.asarray(self.directions, dtype=float))
        seeds, dirs = np.broadcast_arrays(seeds, dirs)
        out = np.empty(seeds.shape)
        grid = np.linspace(0.0, self.s_max, self.n_bracket + 1)
        for i, (c, e) in enumerate(zip(seeds, dirs)):
            vals = H.phi(c[None, :] + grid[:, None] * e[None, :])
            if not vals[0] > 0:
                raise ValueError(f"probe seed {c} is not inside the domain")
            neg = np.nonzero(~(vals > 0))[0]
            if neg.size == 0:
                raise ValueError(f"probe from {c} along {e} never leaves the domain")
            k = neg[0]
            f = lambda s: float(H.phi(c + s * e))
            s_star = brentq(f, grid[k - 1], grid[k], xtol=1e-15, rtol=1e-15, maxiter=200)
            out[i] = c + s_star * e
        return out


def boundary_points(H: Hypersurface, sampler):
    if isinstance(sampler, RadialProbes):
        return sampler.points(H)
    if callable(sampler):
        return np.atleast_2d(np.asarray(sampler(H), dtype=float))
    return np.atleast_2d(np.asarray(sampler, dtype=float))


def h_hessian_matrix(h, H: Hypersurface, x):
    """Matrix of the h-Hessian ``d^2 phi - Gamma^k d_k phi``."""
    x = np.asarray(x, dtype=float)
    Gam = christoffel_from_derivatives(h(x), h.gradient(x))
    return H.hessian(x) - np.einsum("...kij,...k->...ij", Gam, H.gradient(x))


def h_hessian(h, H: Hypersurface, x, y):
    """``H^h_phi(y, y) = d^2 phi(y, y) - Gamma^k_ij d_k phi y^i y^j``."""
    y = np.asarray(y, dtype=float)
    return np.einsum("...i,...ij,...j->...", y, h_hessian_matrix(h, H, x), y)


@dataclass
class _BoundaryData:
    x: np.ndarray
    hm: np.ndarray
    hess: np.ndarray        # h-Hessian matrix of phi
    dphi: np.ndarray
    grad: np.ndarray        # h-gradient of phi
    mag: np.ndarray         # covector  grad^i Omega_ij
    beta: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None   # h(grad phi, grad beta)

    def quad(self, m, y):
        return np.einsum("...i,...ij,...j->...", y, m, y)

    def project(self, y):
        """h-orthogonal projection onto ker dphi."""
        y = np.asarray(y, dtype=float)
        num = np.einsum("...i,...i->...", self.dphi, y)
        den = np.einsum("...i,...i->...", self.dphi, self.grad)
        return y - (num / den)[..., None] * self.grad

    def hess_norm(self):
        ev = np.linalg.eigvals(np.linalg.solve(self.hm, self.hess))
        return np.max(np.abs(ev), axis=-1)

    def dphi_norm(self):
        return np.sqrt(np.einsum("...i,...i->...", self.dphi, self.grad))


def _boundary_data(R: RandersMetric, H: Hypersurface, X, S: Optional[StationarySplitting] = None):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    hm = R.h(X)
    dphi = H.gradient(X)
    grad = np.linalg.solve(hm, dphi[..., None])[..., 0]
    hess = h_hessian_matrix(R.h, H, X)
    mag = np.einsum("...i,...ij->...j", grad, R.omega.exterior(X))
    data = _BoundaryData(X, hm, hess, dphi, grad, mag)
    if S is not None:
        data.beta = S.beta(X)
        data.b = np.einsum("...i,...i->...", grad, S.beta.gradient(X))
    return data


def _check_on_boundary(H, X, tol=BOUNDARY_TOL):
    vals = H.phi(X)
    bad = np.abs(vals) > tol
    if np.any(bad):
        i = int(np.nonzero(np.atleast_1d(bad))[0][0])
        raise NotOnBoundary(f"|phi(x)| = {abs(np.atleast_1d(vals)[i]):.3g} exceeds {tol:g}")


def randers_boundary_margin(R: RandersMetric, H: Hypersurface, x, y, signed=False):
    """Convexity margin at a boundary point; ``<= 0`` means convex in direction ``y``.

    ``y`` is first projected h-orthogonally onto ``ker dphi``.  With
    ``signed=True`` the magnetic term keeps its sign, giving ``(phi o gamma)''``
    for the pregeodesic with initial velocity ``y``.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    _check_on_boundary(H, X)
    data = _boundary_data(R, H, X)
    Y = data.project(np.broadcast_to(np.asarray(y, dtype=float), X.shape))
    out = _light_margin(data, Y, signed)
    return float(out[0]) if single else out


def _light_margin(data, Y, signed=False, sign=1.0):
    alpha = np.sqrt(np.maximum(data.quad(data.hm, Y), 0.0))
    m = np.einsum("...i,...i->...", data.mag, Y)
    H = data.quad(data.hess, Y)
    return H + alpha * (sign * m if signed else np.abs(m))


def tangent_frames(data: _BoundaryData):
    """h-orthonormal bases of ``ker dphi``, shape (P, d-1, d)."""
    P, d = data.x.shape
    frames = np.empty((P, d - 1, d))
    for p in range(P):
        hm = data.hm[p]
        grad, dphi = data.grad[p], data.dphi[p]
        basis = []
        for k in range(d):
            e = np.zeros(d)
            e[k] = 1.0
            v = e - (dphi @ e) / (dphi @ grad) * grad
            for b in basis:
                v = v - (b @ hm @ v) * b
            nrm = np.sqrt(v @ hm @ v)
            if nrm > 1e-8 * np.sqrt(e @ hm @ e):
                basis.append(v / nrm)
            if len(basis) == d - 1:
                break
        frames[p] = np.array(basis)
    return frames


def direction_grid(k, n_dirs):
    """Unit coefficient vectors in R^k: +-1 for k=1, a circle for k=2, Fibonacci sphere for k=3."""
    if k == 1:
        return np.array([[1.0], [-1.0]])
    if k == 2:
        ang = 2 * np.pi * np.arange(n_dirs) / n_dirs
        return np.column_stack([np.cos(ang), np.sin(ang)])
    if k == 3:
        i = np.arange(n_dirs) + 0.5
        zc = 1 - 2 * i / n_dirs
        r = np.sqrt(1 - zc ** 2)
        ang = np.pi * (1 + 5 ** 0.5) * i
        return np.column_stack([r * np.cos(ang), r * np.sin(ang), zc])
    g = np.random.default_rng(0).normal(size=(n_dirs, k))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


CLASSES = ("strongly_convex", "infinitesimally_convex", "violated", "inconclusive")


def classify(margins, tol):
    m = np.asarray(margins, dtype=float)
    if m.size == 0 or not np.all(np.isfinite(m)):
        return "inconclusive"
    if np.any(m > tol):
        return "violated"
    if np.all(m < -tol):
        return "strongly_convex"
    return "infinitesimally_convex"


@dataclass
class ConvexityReport:
    """Sampled convexity margins with classification.

    ``x``, ``y`` are flat sample arrays; ``v`` holds the u-velocity of
    time-convexity samples (``None`` for light-convexity).  Margins are the
    quantities whose nonpositivity is convexity; time margins are divided by
    ``h(y, y) + v^2/beta``.
    """

    kind: str
    x: np.ndarray
    y: np.ndarray
    margins: np.ndarray
    tolerance: float
    v: Optional[np.ndarray] = None
    sampling: dict = field(default_factory=dict)
    point_conditions: Optional[np.ndarray] = None

    @property
    def classification(self):
        return classify(self.margins, self.tolerance)

    @property
    def num_samples(self):
        return int(self.margins.size)

    @property
    def worst_index(self):
        return int(np.argmax(self.margins))

    @property
    def worst_witness(self):
        i = self.worst_index
        w = {"x": self.x[i].tolist(), "y": self.y[i].tolist(), "margin": float(self.margins[i])}
        if self.v is not None:
            w["v"] = float(self.v[i])
        return w

    @property
    def samples(self):
        return list(zip(self.x, self.y, self.margins))

    def margins_histogram(self, bins=20):
        m = self.margins
        lo, hi = float(np.min(m)), float(np.max(m))
        if hi - lo <= 1e-9 * max(abs(lo), abs(hi), 1e-300):
            pad = max(abs(lo), 1.0) * 1e-9
            lo, hi = lo - pad, hi + pad
        counts, edges = np.histogram(m, bins=bins, range=(lo, hi))
        return {"edges": edges.tolist(), "counts": counts.tolist()}

    def to_dict(self):
        return {
            "kind": self.kind,
            "classification": self.classification,
            "tolerance": float(self.tolerance),
            "num_samples": self.num_samples,
            "worst_witness": self.worst_witness,
            "margins_histogram": self.margins_histogram(),
            "sampling": self.sampling,
        }


def check_randers_convexity(R: RandersMetric, H: Hypersurface, sampler, n_dirs=64,
                            kind="light") -> ConvexityReport:
    """Sample the boundary margin of a Randers metric over points and tangent directions.

    In dimension 2 the tangent line has only the two unit directions ``+-y``.
    """
    X = boundary_points(H, sampler)
    _check_on_boundary(H, X)
    data = _boundary_data(R, H, X)
    frames = tangent_frames(data)
    coef = direction_grid(X.shape[1] - 1, n_dirs)
    Y = np.einsum("ck,pkd->pcd", coef, frames)
    Xs = np.repeat(X[:, None, :], coef.shape[0], axis=1)
    rep = lambda a: np.repeat(a[:, None], coef.shape[0], axis=1)
    sub = _BoundaryData(Xs, rep(data.hm), rep(data.hess), rep(data.dphi), rep(data.grad), rep(data.mag))
    margins = _light_margin(sub, Y)
    scale = max(float(np.median(data.hess_norm())), 1e-12 * float(np.median(data.dphi_norm())))
    return ConvexityReport(kind, Xs.reshape(-1, X.shape[1]), Y.reshape(-1, X.shape[1]),
                           margins.reshape(-1), TOL_FACTOR * scale,
                           sampling={"points": int(X.shape[0]), "directions": int(coef.shape[0])})


def check_light_convexity(S: StationarySplitting, H: Hypersurface, sampler, n_dirs=64) -> ConvexityReport:
    """Light-convexity of ``dD x R`` via the boundary margin of the Fermat metric."""
    return check_randers_convexity(fermat_from_stationary(S), H, sampler, n_dirs)


def margin_terms(S: StationarySplitting, H: Hypersurface, x, y, v=0.0, F=None):
    """Separate terms ``(H^h_phi(y,y), -(v^2/2beta^2) b, sqrt(h(y,y)+v^2/beta) m(y))``."""
    F = F or fermat_from_stationary(S)
    X = np.atleast_2d(np.asarray(x, dtype=float))
    data = _boundary_data(F, H, X, S)
    Y = data.project(np.broadcast_to(np.asarray(y, dtype=float), X.shape))
    v = np.broadcast_to(np.asarray(v, dtype=float), X.shape[:-1])
    hy = data.quad(data.hm, Y)
    t1 = data.quad(data.hess, Y)
    t2 = -(v ** 2) / (2 * data.beta ** 2) * data.b
    t3 = np.sqrt(hy + v ** 2 / data.beta) * np.einsum("...i,...i->...", data.mag, Y)
    return t1, t2, t3


def tcon_direct(S: StationarySplitting, H: Hypersurface, x, y, v, orientation="future", F=None):
    """``H^h_phi(y,y) - (v^2/2 beta^2) h(grad phi, grad beta) + sqrt(h(y,y)+v^2/beta) m(y)``.

    For past-pointing vectors the magnetic term changes sign.
    """
    X = np.atleast_2d(np.asarray(x, dtype=float))
    _check_on_boundary(H, X)
    t1, t2, t3 = margin_terms(S, H, X, y, v, F)
    sign = 1.0 if orientation == "future" else -1.0
    out = t1 + t2 + sign * t3
    return float(out[0]) if np.ndim(x) == 1 else out


def _conditions(data, Y, tol_b):
    hy = data.quad(data.hm, Y)
    Hy = data.quad(data.hess, Y)
    m = np.einsum("...i,...i->...", data.mag, Y)
    beta, b = data.beta, data.b
    cond_i = Hy + np.sqrt(np.maximum(hy, 0)) * np.abs(m)
    cond_ii = -b * np.ones_like(Hy)
    roots = m ** 2 + (b / beta) * Hy
    with np.errstate(divide="ignore", invalid="ignore"):
        quad2 = 2 * Hy + (beta / b) * m ** 2 + (b / beta) * hy
    cond_iii = np.where(b > tol_b, np.minimum(roots, quad2), roots)
    return cond_i, cond_ii, cond_iii


def time_convexity_conditions(S: StationarySplitting, H: Hypersurface, x, y, F=None):
    """The three pointwise conditions; time-convex at ``(x, y)`` iff all are ``<= 0``.

    cond_i: the light margin.  cond_ii: ``-h(grad phi, grad beta)``.
    cond_iii: ``m^2 + (b/beta) H`` or, when ``b > 0``, the smaller of that and
    ``2H + (beta/b) m^2 + (b/beta) h(y,y)``, with ``m = grad phi . Omega . y``.
    """
    F = F or fermat_from_stationary(S)
    X = np.atleast_2d(np.asarray(x, dtype=float))
    _check_on_boundary(H, X)
    data = _boundary_data(F, H, X, S)
    Y = data.project(np.broadcast_to(np.asarray(y, dtype=float), X.shape))
    tol_b = 1e-10 * data.dphi_norm() * np.sqrt(np.einsum(
        "...i,...ij,...j->...", S.beta.gradient(X), np.linalg.inv(data.hm), S.beta.gradient(X)))
    out = _conditions(data, Y, tol_b)
    if np.ndim(x) == 1:
        return tuple(float(c[0]) for c in out)
    return out


def check_time_convexity(S: StationarySplitting, H: Hypersurface, sampler, n_dirs=64,
                         v_grid=V_GRID) -> ConvexityReport:
    """Time-convexity of ``dD x R`` sampled over tangent ``y``, u-velocities ``v > 0`` and ``y = 0``.

    Margins are the product-space Hessian normalized by ``h(y,y) + v^2/beta``
    (the margin is 2-homogeneous in ``(y, v)``).  ``point_conditions`` records,
    per boundary point, whether all three pointwise conditions hold on the
    sampled directions.
    """
    F = fermat_from_stationary(S)
    X = boundary_points(H, sampler)
    _check_on_boundary(H, X)
    P, d = X.shape
    data = _boundary_data(F, H, X, S)
    frames = tangent_frames(data)
    coef = direction_grid(d - 1, n_dirs)
    Ydir = np.einsum("ck,pkd->pcd", coef, frames)                      # (P, C, d)
    Y = np.concatenate([Ydir, np.zeros((P, 1, d))], axis=1)             # y = 0 appended
    V = np.asarray(v_grid, dtype=float)
    nC = Y.shape[1]
    Yf = np.repeat(Y[:, :, None, :], V.size, axis=2)                    # (P, C+1, V, d)
    Vf = np.broadcast_to(V, (P, nC, V.size))
    hy = np.einsum("pci,pij,pcj->pc", Y, data.hm, Y)[:, :, None]
    Hy = np.einsum("pci,pij,pcj->pc", Y, data.hess, Y)[:, :, None]
    m = np.einsum("pi,pci->pc", data.mag, Y)[:, :, None]
    beta = data.beta[:, None, None]
    b = data.b[:, None, None]
    norm2 = hy + Vf ** 2 / beta
    tcon = Hy - Vf ** 2 / (2 * beta ** 2) * b + np.sqrt(norm2) * np.abs(m)
    margins = tcon / norm2
    # the y = 0 column does not depend on v; keep one entry per point
    keep = np.ones((P, nC, V.size), dtype=bool)
    keep[:, -1, 1:] = False
    Xs = np.broadcast_to(X[:, None, None, :], Yf.shape)
    scale = max(float(np.median(np.maximum(data.hess_norm(), np.abs(data.b) / (2 * data.beta)))),
                1e-12 * float(np.median(data.dphi_norm())))
    tol_b = 1e-10 * np.abs(data.b).max()
    rep = lambda a: np.repeat(a[:, None], coef.shape[0], axis=1)
    sub = _BoundaryData(None, rep(data.hm), rep(data.hess), rep(data.dphi), rep(data.grad), rep(data.mag),
                        rep(data.beta), rep(data.b))
    conds = _conditions(sub, Ydir, tol_b)
    ok = np.all((conds[0] <= 0) & (conds[1] <= 0) & (conds[2] <= 0), axis=1)
    return ConvexityReport("time", Xs[keep], Yf[keep], margins[keep], TOL_FACTOR * scale, v=Vf[keep],
                           sampling={"points": int(P), "directions": int(coef.shape[0]),
                                     "v_grid": [float(V[0]), float(V[-1]), int(V.size)]},
                           point_conditions=ok)


def lorentz_hessian_oracle(S: StationarySplitting, H: Hypersurface, x0, y, v=0.0, orientation="future",
                           t0=0.0, delta=None, nsub=4):
    """Second derivative of ``phi`` along the ``g_L`` geodesic with initial velocity ``(y, tdot)``.

    ``tdot = omega(y) +- sqrt(h(y,y) + v^2/beta)`` makes the vector lightlike
    (``v = 0``) or timelike with ``g_L = -v^2``.  The geodesic is integrated
    with a fixed-step RK4 on the spacetime Christoffel symbols, sampled at
    ``s = 0, +-delta, +-2 delta`` and differentiated with a five-point stencil;
    two step sizes are combined by Richardson extrapolation.  Batched over rows.
    """
    F = fermat_from_stationary(S)
    X = np.atleast_2d(np.asarray(x0, dtype=float))
    Y = np.broadcast_to(np.asarray(y, dtype=float), X.shape).copy()
    P, n = X.shape
    v = np.broadcast_to(np.asarray(v, dtype=float), (P,))
    hy = np.einsum("pi,pij,pj->p", Y, F.h(X), Y)
    wy = np.einsum("pi,pi->p", F.omega(X), Y)
    root = np.sqrt(hy + v ** 2 / S.beta(X))
    tdot = wy + root if orientation == "future" else wy - root
    z0 = np.column_stack([X, np.full(P, float(t0))])
    w0 = np.column_stack([Y, tdot])
    if delta is None:
        delta = 1e-3 / np.maximum(np.linalg.norm(Y, axis=1), 1e-300)
    delta = np.broadcast_to(np.asarray(delta, dtype=float), (P,))

    def second_derivative(dl):
        vals = {0: H.phi(X)}
        for k in (1, 2):
            for sgn in (1, -1):
                z, _ = rk4_geodesic(S, z0, w0, sgn * k * dl, nsub * k)
                vals[sgn * k] = H.phi(z[:, :n])
        return (-vals[2] + 16 * vals[1] - 30 * vals[0] + 16 * vals[-1] - vals[-2]) / (12 * dl ** 2)

    d1 = second_derivative(delta)
    d2 = second_derivative(0.5 * delta)
    out = d2 + (d2 - d1) / 15.0
    return float(out[0]) if np.ndim(x0) == 1 else out
