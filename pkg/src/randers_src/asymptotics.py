"""Decay exponents of an asymptotically flat end and large-sphere verdicts.

Exponents are estimated by least-squares fits of ``log|deviation|`` against
``log r`` on logarithmically spaced radii, taking the maximum over a fixed set
of directions at each radius.  Boyer-Lindquist models are examined in the
pseudo-Cartesian chart ``(r sin th cos ph, r sin th sin ph, r cos th)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .convexity import check_light_convexity
from .core_metric import (Chart, MetricField, OneFormField, RandersMetric, ScalarField, StationarySplitting,
                          fermat_from_stationary)
from .errors import InsufficientSpan
from .models import Model, pullback_splitting, spherical_to_cartesian_map

EXACT_TOL = 1e-14
RESIDUAL_BAR = 0.1
MIN_RULE_TOL = 0.1


@dataclass
class DecayFit:
    """Power law ``value ~ coefficient * r**(-exponent)``.

    ``exact`` marks deviations that vanish to rounding on every radius; the
    exponent is then ``inf``.
    """

    quantity: str
    exponent: float
    coefficient: float
    residual: float
    radii: np.ndarray
    exact: bool = False

    def __post_init__(self):
        self.radii = np.asarray(self.radii, dtype=float)
        if self.radii.size < 3 or np.any(np.diff(self.radii) <= 0):
            raise ValueError("radii must be strictly increasing with at least 3 samples")
        if not self.residual >= 0:
            raise ValueError("residual must be non-negative")

    @property
    def r_range(self):
        return float(self.radii[0]), float(self.radii[-1])

    def to_dict(self):
        return {
            "quantity": self.quantity,
            "exponent": "exact" if self.exact else float(self.exponent),
            "coefficient": float(self.coefficient),
            "residual": float(self.residual),
            "r_range": list(self.r_range),
            "n_radii": int(self.radii.size),
        }


def fit_decay(samples, quantity="value"):
    """Fit ``log|value|`` against ``log r``; ``samples`` is a sequence of ``(r, value)`` pairs."""
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("samples must be (r, value) pairs")
    arr = arr[np.argsort(arr[:, 0])]
    r, val = arr[:, 0], np.abs(arr[:, 1])
    if r.size < 3:
        raise InsufficientSpan("at least 3 radii are needed")
    if r[0] <= 0 or r[-1] / r[0] < 10.0:
        raise InsufficientSpan(f"radii span {r[-1] / max(r[0], 1e-300):.3g} is less than one decade")
    if np.all(val < EXACT_TOL):
        return DecayFit(quantity, np.inf, 0.0, 0.0, r, exact=True)
    if np.any(val <= 0):
        raise ValueError(f"{quantity}: zero deviation at some radii but not all")
    A = np.column_stack([np.ones_like(r), np.log(r)])
    coef, *_ = np.linalg.lstsq(A, np.log(val), rcond=None)
    res = np.log(val) - A @ coef
    return DecayFit(quantity, float(-coef[1]), float(np.exp(coef[0])), float(np.sqrt(np.mean(res ** 2))), r)


@dataclass
class EndSpec:
    """Sampling window of an end.

    ``chart_map`` (optional) maps Cartesian end coordinates ``X`` to the
    metric's chart and returns ``(x, dx/dX)``.  ``sphere(radius)`` returns a
    ``(Hypersurface, sampler)`` pair in the metric's own chart, used for the
    convexity scan that locates ``r0``.
    """

    r_min: float = 100.0
    r_max: float = 1e4
    per_decade: int = 32
    n_dirs: int = 8
    chart_map: Optional[Callable] = None
    sphere: Optional[Callable] = None
    scan_radii: Optional[np.ndarray] = None

    def radii(self):
        if not (self.r_max / self.r_min >= 10.0):
            raise InsufficientSpan("end window must span at least one decade")
        n = int(np.ceil(self.per_decade * np.log10(self.r_max / self.r_min))) + 1
        return np.geomspace(self.r_min, self.r_max, n)

    def directions(self, dim):
        k = np.arange(self.n_dirs)
        if dim == 2:
            ang = 2 * np.pi * (k + 0.3) / self.n_dirs
            return np.column_stack([np.cos(ang), np.sin(ang)])
        # two latitude bands away from the polar axis of spherical charts
        th = np.where(k % 2 == 0, np.pi / 3, 2 * np.pi / 3)
        ph = 2 * np.pi * (k + 0.3) / self.n_dirs
        return np.column_stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])


def end_spec_for(model: Model, **kwargs) -> EndSpec:
    """Default end window for a built-in model."""
    bl = model.chart.coordinate_names[:1] == ("r",) and model.chart.dim == 3
    opts = dict(chart_map=spherical_to_cartesian_map if bl else None,
                sphere=lambda radius, density=1: model.boundary("sphere", density, radius=radius))
    opts.update(kwargs)
    return EndSpec(**opts)


def _sample(fun, spec, dim):
    """``[(r, max over directions of |fun|)]`` on the end window radii."""
    r = spec.radii()
    D = spec.directions(dim)
    X = r[:, None, None] * D[None, :, :]
    v = np.abs(fun(X.reshape(-1, dim))).reshape(r.size, D.shape[0], -1)
    return np.column_stack([r, v.max(axis=(1, 2))])


def _cartesian(obj, spec):
    S = obj.splitting if isinstance(obj, RandersMetric) else obj
    if spec.chart_map is None:
        return obj
    if S is None:
        raise ValueError("a chart map needs stationary data")
    return pullback_splitting(S, spec.chart_map, Chart(3))


@dataclass
class FlatnessReport:
    is_conformally_flat: bool
    is_flat: bool
    fits: list
    p: float
    q: float
    q_prime: Optional[float]
    min_rule: Optional[dict] = None

    def fit(self, quantity):
        return next(f for f in self.fits if f.quantity == quantity)

    def __getitem__(self, key):
        return getattr(self, key)

    def to_dict(self):
        def num(x):
            return "exact" if x is not None and np.isinf(x) else x
        return {
            "is_conformally_flat": self.is_conformally_flat,
            "is_flat": self.is_flat,
            "p": num(self.p),
            "q": num(self.q),
            "q_prime": num(self.q_prime),
            "fits": [f.to_dict() for f in self.fits],
            "min_rule": self.min_rule,
        }


def _ok(fit):
    return fit.exact or (fit.exponent > 0 and fit.residual < RESIDUAL_BAR)


def verify_flatness(obj, spec: EndSpec, exponents0=None) -> FlatnessReport:
    """Fit the decay of ``h - delta``, ``dh``, ``d omega`` and ``beta - 1``.

    ``obj`` is a StationarySplitting or a RandersMetric (its splitting, when
    present, supplies ``beta``).  ``p`` is the smaller of the exponents from
    ``h - delta`` and ``dh`` (the latter shifted by one), ``q`` comes from
    ``d omega`` shifted by one and ``q'`` from ``beta - 1``.  With
    ``exponents0 = (p0, q0, q')`` describing ``(g0, omega0, beta)``, the
    derived ``p = min(p0, 2 q0, q')`` and ``q = min(q0, q')`` are compared with
    the direct fits.
    """
    C = _cartesian(obj, spec)
    S = C if isinstance(C, StationarySplitting) else C.splitting
    R = C if isinstance(C, RandersMetric) else fermat_from_stationary(C)
    n = R.dim
    eye = np.eye(n)
    fits = [
        fit_decay(_sample(lambda X: R.h(X) - eye, spec, n), "h-delta"),
        fit_decay(_sample(lambda X: R.h.gradient(X), spec, n), "dh"),
        fit_decay(_sample(lambda X: R.omega.exterior(X), spec, n), "d_omega"),
    ]
    p = min(fits[0].exponent, fits[1].exponent - 1.0)
    q = fits[2].exponent - 1.0
    conformal = _ok(fits[0]) and _ok(fits[1]) and _ok(fits[2]) and p > 0 and q > 0
    qp = None
    flat = conformal
    if S is not None:
        fb = fit_decay(_sample(lambda X: S.beta(X) - 1.0, spec, n), "beta-1")
        fdb = fit_decay(_sample(lambda X: S.beta.gradient(X), spec, n), "d_beta")
        fits += [fb, fdb]
        qp = fb.exponent
        flat = conformal and _ok(fb) and _ok(fdb) and qp > 0
    min_rule = None
    if exponents0 is not None:
        p0, q0, qp0 = exponents0
        dp, dq = min(p0, 2 * q0, qp0), min(q0, qp0)
        min_rule = {
            "p0": p0, "q0": q0, "q_prime": qp0,
            "derived_p": dp, "derived_q": dq,
            "direct_p": p, "direct_q": q,
            "p_agrees": bool(abs(p - dp) <= MIN_RULE_TOL),
            "q_agrees": bool(abs(q - dq) <= MIN_RULE_TOL),
            "q_bound_holds": bool(q >= dq - MIN_RULE_TOL),
        }
    return FlatnessReport(bool(conformal), bool(flat), fits, float(p), float(q), qp, min_rule)


@dataclass
class EndClassification:
    p: float
    q: float
    q_prime: Optional[float]
    C_sign: str
    light_verdict: str
    time_verdict: str
    r0_estimate: Optional[float]
    r_range: tuple
    fits: list = field(default_factory=list)
    scan: list = field(default_factory=list)

    def to_dict(self):
        def num(x):
            return "exact" if x is not None and np.isinf(x) else x
        return {
            "p": num(self.p), "q": num(self.q), "q_prime": num(self.q_prime),
            "C_sign": self.C_sign,
            "light_verdict": self.light_verdict,
            "time_verdict": self.time_verdict,
            "r0_estimate": self.r0_estimate,
            "r_range": list(self.r_range),
            "fits": [f.to_dict() for f in self.fits],
            "scan": self.scan,
        }


def radial_beta_derivative(S: StationarySplitting, spec: EndSpec):
    """Samples of ``d_r beta`` (Cartesian end chart): array (radii, directions)."""
    C = _cartesian(S, spec)
    n = C.dim if hasattr(C, "dim") else C.chart.dim
    r = spec.radii()
    D = spec.directions(n)
    X = r[:, None, None] * D[None, :, :]
    g = C.beta.gradient(X.reshape(-1, n)).reshape(r.size, D.shape[0], n)
    return np.einsum("rdi,di->rd", g, D)


def _scan_r0(S, spec, n_dirs):
    if spec.sphere is None:
        return None, []
    radii = spec.scan_radii
    if radii is None:
        radii = np.geomspace(spec.r_min / 40.0, spec.r_min, 33)
    scan = []
    for R in radii:
        H, sampler = spec.sphere(float(R))
        rep = check_light_convexity(S, H, sampler, n_dirs=n_dirs)
        scan.append({"radius": float(R), "classification": rep.classification,
                     "max_margin": float(np.max(rep.margins))})
        if rep.classification == "strongly_convex":
            return float(R), scan
    return None, scan


def classify_large_spheres(S: StationarySplitting, spec: EndSpec, n_dirs=16) -> EndClassification:
    """Verdicts for coordinate spheres of large radius.

    Light convexity follows from conformal flatness.  Time convexity follows
    the sign of the leading coefficient of ``d_r beta``: negative with
    ``q' < 2q`` gives convexity, positive gives violation, and a vanishing or
    sign-changing coefficient leaves the verdict unknown.
    """
    flat = verify_flatness(S, spec)
    dbr = radial_beta_derivative(S, spec)
    if np.all(np.abs(dbr) < EXACT_TOL):
        sign = "zero"
    elif np.all(dbr > 0):
        sign = "positive"
    elif np.all(dbr < 0):
        sign = "negative"
    else:
        sign = "zero"
    light = "convex_for_large_r" if flat.is_conformally_flat else "unknown"
    qp = flat.q_prime
    if sign == "positive":
        time = "violated_for_large_r"
    elif sign == "negative" and qp is not None and 0 < qp < 2 * flat.q and flat.is_flat:
        time = "convex_for_large_r"
    else:
        time = "unknown"
    r0, scan = None, []
    if light == "convex_for_large_r" and spec.sphere is not None:
        r0, scan = _scan_r0(S, spec, n_dirs)
    return EndClassification(flat.p, flat.q, qp, sign, light, time, r0,
                             (float(spec.r_min), float(spec.r_max)), flat.fits, scan)


# ---------------------------------------------------------------- synthetic ends


def synthetic_end(p0, q0, q_prime, A=0.5, B=0.3, C=0.5, dim=3) -> StationarySplitting:
    """``g0 = delta + A r^-p0 xx/r^2``, ``omega0 = B r^-q0 dx1``, ``beta = 1 + C r^-q'``.

    The data satisfy the decay hypotheses of the stationary-to-Fermat exponent rule
    with exactly the prescribed exponents.
    """
    eye = np.eye(dim)

    def g0(x):
        r = np.linalg.norm(x, axis=-1)[..., None, None]
        return eye + A * r ** (-p0 - 2) * x[..., :, None] * x[..., None, :]

    def w0(x):
        r = np.linalg.norm(x, axis=-1)
        out = np.zeros(x.shape)
        out[..., 0] = B * r ** (-q0)
        return out

    def beta(x):
        return 1.0 + C * np.linalg.norm(x, axis=-1) ** (-q_prime)

    def dbeta(x):
        r = np.linalg.norm(x, axis=-1)[..., None]
        return -C * q_prime * r ** (-q_prime - 2) * x

    return StationarySplitting(MetricField(g0), OneFormField(w0), ScalarField(beta, dbeta), Chart(dim),
                               f"synthetic({p0:g},{q0:g},{q_prime:g})")


def closed_nondecaying_end(c=0.5, A=0.5, dim=3) -> RandersMetric:
    """``h = delta + A xx/|x|^3`` with the closed, non-decaying ``omega = c dx1``."""
    eye = np.eye(dim)

    def h(x):
        r = np.linalg.norm(x, axis=-1)[..., None, None]
        return eye + A * x[..., :, None] * x[..., None, :] / r ** 3

    def w(x):
        out = np.zeros(x.shape)
        out[..., 0] = c
        return out

    return RandersMetric(MetricField(h), OneFormField(w, lambda x: np.zeros(x.shape[:-1] + (dim, dim))),
                         Chart(dim), name="closed_nondecaying")
