"""Riemannian metrics, one-forms and Randers metrics on a single coordinate chart.

Every field evaluator is vectorized: it takes points of shape ``(..., dim)``
and returns arrays with the same leading batch shape.  Derivative arrays put
the differentiation index right after the batch axes, so for a metric field
``gradient(x)[..., k, i, j]`` is ``d_k h_ij``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DegenerateDirection, InvariantViolation

FD_REL_STEP = 1e-5
NORM_MARGIN = 1e-9


def fd_steps(x):
    """Per-coordinate central-difference steps, ``1e-5 * max(1, |x_i|)``."""
    return FD_REL_STEP * np.maximum(1.0, np.abs(x))


def central_gradient(fun, x):
    """Central finite-difference gradient of a vectorized field.

    ``fun`` maps ``(..., d)`` to ``(..., *V)``; the result has shape
    ``(..., d, *V)``.
    """
    x = np.asarray(x, dtype=float)
    batch = x.shape[:-1]
    d = x.shape[-1]
    steps = fd_steps(x)
    cols = []
    for k in range(d):
        xp = x.copy()
        xm = x.copy()
        xp[..., k] += steps[..., k]
        xm[..., k] -= steps[..., k]
        fp = np.asarray(fun(xp))
        fm = np.asarray(fun(xm))
        width = (xp[..., k] - xm[..., k]).reshape(batch + (1,) * (fp.ndim - len(batch)))
        cols.append((fp - fm) / width)
    return np.stack(cols, axis=len(batch))


@dataclass(frozen=True)
class Chart:
    dim: int
    bounds: Optional[tuple] = None
    coordinate_names: tuple = ()
    periods: Optional[tuple] = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("chart dimension must be >= 1")
        if self.bounds is not None:
            if len(self.bounds) != self.dim:
                raise ValueError("one bound pair per coordinate is required")
            for lo, hi in self.bounds:
                if not lo < hi:
                    raise ValueError(f"empty coordinate interval ({lo}, {hi})")
        if not self.coordinate_names:
            object.__setattr__(self, "coordinate_names",
                               tuple(f"x{i + 1}" for i in range(self.dim)))

    def lower(self):
        if self.bounds is None:
            return np.full(self.dim, -np.inf)
        return np.array([b[0] for b in self.bounds], dtype=float)

    def upper(self):
        if self.bounds is None:
            return np.full(self.dim, np.inf)
        return np.array([b[1] for b in self.bounds], dtype=float)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return np.all((x > self.lower()) & (x < self.upper()), axis=-1)

    def period(self, k):
        if self.periods is None:
            return None
        return self.periods[k]

    def prepend(self, name="u"):
        """Chart of R x (this chart), with the new coordinate first."""
        bounds = None
        if self.bounds is not None:
            bounds = ((-np.inf, np.inf),) + tuple(self.bounds)
        periods = None
        if self.periods is not None:
            periods = (None,) + tuple(self.periods)
        return Chart(self.dim + 1, bounds, (name,) + tuple(self.coordinate_names), periods)


@dataclass(frozen=True)
class ScalarField:
    evaluator: Callable
    gradient_fn: Optional[Callable] = None

    def __call__(self, x):
        return np.asarray(self.evaluator(np.asarray(x, dtype=float)), dtype=float)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        if self.gradient_fn is not None:
            return np.asarray(self.gradient_fn(x), dtype=float)
        return central_gradient(self.evaluator, x)

    @property
    def derivative_mode(self):
        return "analytic" if self.gradient_fn is not None else "central-difference"

    def numeric(self):
        """Same field with finite-difference derivatives (for cross-checks)."""
        return ScalarField(self.evaluator)

    @staticmethod
    def constant(c):
        return ScalarField(lambda x: np.full(np.shape(x)[:-1], float(c)),
                           lambda x: np.zeros(np.shape(x)))


@dataclass(frozen=True)
class MetricField:
    """Symmetric positive definite matrix field ``h_ij``."""

    evaluator: Callable
    derivative: Optional[Callable] = None

    def __call__(self, x):
        return np.asarray(self.evaluator(np.asarray(x, dtype=float)), dtype=float)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        if self.derivative is not None:
            return np.asarray(self.derivative(x), dtype=float)
        return central_gradient(self.evaluator, x)

    @property
    def derivative_mode(self):
        return "analytic" if self.derivative is not None else "central-difference"

    def numeric(self):
        return MetricField(self.evaluator)

    def validate(self, x):
        """Raise InvariantViolation unless h(x) is symmetric positive definite."""
        m = self(x)
        scale = np.max(np.abs(m), axis=(-2, -1))
        asym = np.max(np.abs(m - np.swapaxes(m, -1, -2)), axis=(-2, -1))
        if np.any(asym > 1e-12 * scale):
            raise InvariantViolation("metric matrix is not symmetric")
        if np.any(np.linalg.eigvalsh(m)[..., 0] <= 0.0):
            raise InvariantViolation("metric matrix is not positive definite")
        return m

    @staticmethod
    def euclidean(dim):
        eye = np.eye(dim)
        return MetricField(lambda x: np.broadcast_to(eye, np.shape(x)[:-1] + (dim, dim)).copy(),
                           lambda x: np.zeros(np.shape(x)[:-1] + (dim, dim, dim)))


@dataclass(frozen=True)
class OneFormField:
    """Covector field ``omega_i``; ``gradient(x)[..., k, j] = d_k omega_j``."""

    evaluator: Callable
    derivative: Optional[Callable] = None

    def __call__(self, x):
        return np.asarray(self.evaluator(np.asarray(x, dtype=float)), dtype=float)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        if self.derivative is not None:
            return np.asarray(self.derivative(x), dtype=float)
        return central_gradient(self.evaluator, x)

    def exterior(self, x):
        """``Omega_ij = d_i omega_j - d_j omega_i``."""
        d = self.gradient(x)
        return d - np.swapaxes(d, -1, -2)

    @property
    def derivative_mode(self):
        return "analytic" if self.derivative is not None else "central-difference"

    def numeric(self):
        return OneFormField(self.evaluator)

    def __neg__(self):
        deriv = None
        if self.derivative is not None:
            deriv = lambda x, d=self.derivative: -d(x)
        return OneFormField(lambda x, f=self.evaluator: -f(x), deriv)

    def minus_exact(self, f: ScalarField):
        """Gauge-transformed form ``omega - df``."""
        return OneFormField(lambda x: self(x) - f.gradient(x))

    @staticmethod
    def zero(dim):
        return OneFormField(lambda x: np.zeros(np.shape(x)),
                            lambda x: np.zeros(np.shape(x)[:-1] + (dim, dim)))


def _quad(m, y):
    return np.einsum("...i,...ij,...j->...", y, m, y)


@dataclass(frozen=True)
class StationarySplitting:
    """Data ``(g0, omega0, beta)`` of ``g_L = g0 + 2 omega0 dt - beta dt^2``."""

    g0: MetricField
    omega0: OneFormField
    beta: ScalarField
    chart: Chart
    name: str = ""

    def spacetime_metric(self, x):
        """``g_L`` in coordinates ``(x^1..x^n, t)``, shape ``(..., n+1, n+1)``."""
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        out = np.zeros(x.shape[:-1] + (n + 1, n + 1))
        out[..., :n, :n] = self.g0(x)
        w = self.omega0(x)
        out[..., :n, n] = w
        out[..., n, :n] = w
        out[..., n, n] = -self.beta(x)
        return out

    def spacetime_metric_gradient(self, x):
        """Spatial derivatives of ``g_L``, shape ``(..., n, n+1, n+1)``."""
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        out = np.zeros(x.shape[:-1] + (n, n + 1, n + 1))
        out[..., :n, :n] = self.g0.gradient(x)
        dw = self.omega0.gradient(x)
        out[..., :n, n] = dw
        out[..., n, :n] = dw
        out[..., n, n] = -self.beta.gradient(x)
        return out

    def lorentz_norm(self, x, y, tdot):
        """``g_L((y, tdot), (y, tdot))``."""
        return (_quad(self.g0(x), y) + 2.0 * np.einsum("...i,...i->...", self.omega0(x), y) * tdot
                - self.beta(x) * tdot ** 2)

    def scaled(self, lam: ScalarField):
        """Conformal rescaling of g_L by a positive function."""
        return StationarySplitting(
            MetricField(lambda x: lam(x)[..., None, None] * self.g0(x)),
            OneFormField(lambda x: lam(x)[..., None] * self.omega0(x)),
            ScalarField(lambda x: lam(x) * self.beta(x)),
            self.chart, self.name)


@dataclass(frozen=True)
class RandersMetric:
    """``F(y) = sqrt(h(y, y)) + omega(y)`` with ``||omega||_h < 1``.

    ``splitting`` is set when the metric is the Fermat metric of a stationary
    splitting; ``base`` and ``lapse`` are set on product metrics ``F_beta``.
    """

    h: MetricField
    omega: OneFormField
    chart: Chart
    splitting: Optional[StationarySplitting] = None
    base: Optional["RandersMetric"] = None
    lapse: Optional[ScalarField] = None
    name: str = ""

    @property
    def dim(self):
        return self.chart.dim

    def norm_omega(self, x):
        hm = self.h(x)
        w = self.omega(x)
        return np.sqrt(np.einsum("...i,...i->...", w, np.linalg.solve(hm, w[..., None])[..., 0]))

    def check_norm(self, x):
        nrm = self.norm_omega(x)
        if np.any(~(nrm < 1.0 - NORM_MARGIN)):
            raise InvariantViolation(
                f"||omega||_h = {float(np.max(nrm)):.12g} is not below 1 at a queried point")
        return nrm

    def __call__(self, x, y):
        return eval_randers(self, x, y)

    def evaluate_unchecked(self, x, y):
        y = np.asarray(y, dtype=float)
        return np.sqrt(np.maximum(_quad(self.h(x), y), 0.0)) + np.einsum("...i,...i->...", self.omega(x), y)

    def reverse(self):
        return reverse_metric(self)


def eval_randers(R: RandersMetric, x, y):
    """Randers norm ``sqrt(h_x(y, y)) + omega_x(y)``."""
    x = np.asarray(x, dtype=float)
    R.check_norm(x)
    return R.evaluate_unchecked(x, y)


def reverse_metric(R: RandersMetric) -> RandersMetric:
    """Reverse metric ``(h, -omega)``."""
    return RandersMetric(R.h, -R.omega, R.chart, splitting=None, name=R.name + "~")


def _randers_fundamental_closed_form(h, w, y):
    a = np.sqrt(y @ h @ y)
    ell = h @ y / a
    F = a + w @ y
    m = ell + w
    return (F / a) * (h - np.outer(ell, ell)) + np.outer(m, m)


def fundamental_tensor(R: RandersMetric, x, y, mode="fd"):
    """``g_y = 1/2 d^2 F^2 / dy^i dy^j`` at a single point.

    ``mode="fd"`` uses central differences with ``eps = 1e-4 max(1, |y|)``;
    ``mode="analytic"`` uses the closed form for Randers norms.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not np.any(y != 0.0):
        raise DegenerateDirection("fundamental tensor needs a nonzero direction")
    R.check_norm(x)
    h = R.h(x)
    w = R.omega(x)
    if mode == "analytic":
        return _randers_fundamental_closed_form(h, w, y)
    d = y.size
    eps = 1e-4 * max(1.0, float(np.linalg.norm(y)))
    eye = np.eye(d) * eps
    # y + s_i e_i + s_j e_j for the four sign pairs, all i, j at once
    pts = []
    for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
        pts.append(y[None, None, :] + si * eye[:, None, :] + sj * eye[None, :, :])
    pts = np.stack(pts)
    F2 = (np.sqrt(np.einsum("...i,ij,...j->...", pts, h, pts)) + pts @ w) ** 2
    g = 0.5 * (F2[0] - F2[1] - F2[2] + F2[3]) / (4.0 * eps * eps)
    return 0.5 * (g + g.T)


def fermat_from_stationary(S: StationarySplitting) -> RandersMetric:
    """Fermat metric ``h = omega0^2/beta^2 + g0/beta``, ``omega = omega0/beta``.

    Derivatives of ``h`` and ``omega`` are assembled from those of the
    splitting by the product rule, so analytic inputs give analytic outputs.
    """
    g0, w0, beta = S.g0, S.omega0, S.beta

    def h_eval(x):
        b = beta(x)[..., None, None]
        w = w0(x)
        return g0(x) / b + w[..., :, None] * w[..., None, :] / b ** 2

    def h_grad(x):
        b = beta(x)
        db = beta.gradient(x)
        w = w0(x)
        dw = w0.gradient(x)
        ww = w[..., :, None] * w[..., None, :]
        dww = dw[..., :, :, None] * w[..., None, None, :] + w[..., None, :, None] * dw[..., :, None, :]
        B = b[..., None, None, None]
        dB = db[..., :, None, None]
        return (g0.gradient(x) / B - g0(x)[..., None, :, :] * dB / B ** 2
                + dww / B ** 2 - 2.0 * ww[..., None, :, :] * dB / B ** 3)

    def w_eval(x):
        return w0(x) / beta(x)[..., None]

    def w_grad(x):
        b = beta(x)[..., None, None]
        return w0.gradient(x) / b - beta.gradient(x)[..., :, None] * w0(x)[..., None, :] / b ** 2

    return RandersMetric(MetricField(h_eval, h_grad), OneFormField(w_eval, w_grad), S.chart,
                         splitting=S, name=S.name)


def fermat_norm_direct(S: StationarySplitting, x, y):
    """Fermat norm from the splitting without building ``h``:

    ``(sqrt(omega0(y)^2 + beta g0(y, y)) + omega0(y)) / beta``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.einsum("...i,...i->...", S.omega0(x), y)
    b = S.beta(x)
    return (np.sqrt(w * w + b * _quad(S.g0(x), y)) + w) / b


def product_randers_beta(R: RandersMetric, beta: ScalarField) -> RandersMetric:
    """``F_beta`` on ``R_u x chart``: ``h_beta = du^2/beta + h``, ``omega_1 = pullback of omega``.

    Coordinates are ordered ``(u, x^1, ..., x^n)``.
    """
    n = R.dim

    def h_eval(X):
        x = X[..., 1:]
        out = np.zeros(X.shape[:-1] + (n + 1, n + 1))
        out[..., 0, 0] = 1.0 / beta(x)
        out[..., 1:, 1:] = R.h(x)
        return out

    def h_grad(X):
        x = X[..., 1:]
        out = np.zeros(X.shape[:-1] + (n + 1, n + 1, n + 1))
        b = beta(x)
        out[..., 1:, 0, 0] = -beta.gradient(x) / (b ** 2)[..., None]
        out[..., 1:, 1:, 1:] = R.h.gradient(x)
        return out

    def w_eval(X):
        out = np.zeros(X.shape)
        out[..., 1:] = R.omega(X[..., 1:])
        return out

    def w_grad(X):
        out = np.zeros(X.shape[:-1] + (n + 1, n + 1))
        out[..., 1:, 1:] = R.omega.gradient(X[..., 1:])
        return out

    return RandersMetric(MetricField(h_eval, h_grad), OneFormField(w_eval, w_grad),
                         R.chart.prepend("u"), base=R, lapse=beta, name=R.name + "_beta")


def splitting_from_randers(R: RandersMetric) -> StationarySplitting:
    """Static-lapse splitting ``beta = 1``, ``g0 = h - omega^2``, ``omega0 = omega``.

    Its Fermat metric is ``R`` again.
    """
    def g0_eval(x):
        w = R.omega(x)
        return R.h(x) - w[..., :, None] * w[..., None, :]

    def g0_grad(x):
        w = R.omega(x)
        dw = R.omega.gradient(x)
        return (R.h.gradient(x) - dw[..., :, :, None] * w[..., None, None, :]
                - w[..., None, :, None] * dw[..., :, None, :])

    return StationarySplitting(MetricField(g0_eval, g0_grad), R.omega, ScalarField.constant(1.0),
                               R.chart, R.name)
