"""Built-in stationary splittings, Randers metrics and boundary hypersurfaces.

Boyer-Lindquist models (Schwarzschild, Kerr, Kerr-Newman) use coordinates
``(r, theta, phi)``; the Fermat data are derived from the spacetime components
``(g0, omega0, beta)`` by ``fermat_from_stationary``.

``neck_annulus`` is a synthetic surface of revolution ``dr^2 + cosh(r-2)^2 dtheta^2``
whose circle ``r = 2`` is a closed geodesic and whose boundary circles
``r = 1, 3`` are convex.  Its angular coordinate is unwrapped, so the chart is
the universal cover and homotopy classes of paths correspond to lifted
endpoints.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .convexity import Hypersurface, RadialProbes, direction_grid, sphere
from .core_metric import (Chart, MetricField, OneFormField, RandersMetric, ScalarField,
                          StationarySplitting, fermat_from_stationary, splitting_from_randers)
from .errors import ParamOutOfRange

POLE_CLAMP = 1e-3
MODEL_NAMES = ("minkowski", "schwarzschild", "kerr", "kerr_newman", "example_r1", "example_r2",
               "attractive_lapse", "neck_annulus")


@dataclass(frozen=True)
class ModelSpec:
    name: str
    params: dict = field(default_factory=dict)


@dataclass
class Model:
    """A built model: metric data plus named boundary hypersurfaces.

    ``boundary(kind, density, **params)`` returns ``(Hypersurface, sampler)``.
    """

    spec: ModelSpec
    chart: Chart
    randers: RandersMetric
    splitting: Optional[StationarySplitting]
    boundaries: dict
    extras: dict = field(default_factory=dict)

    def boundary(self, kind=None, density=1, **params):
        if kind is None:
            kind = next(iter(self.boundaries))
        if kind not in self.boundaries:
            raise ParamOutOfRange(f"model {self.spec.name!r} has no boundary kind {kind!r}; "
                                  f"available: {sorted(self.boundaries)}")
        return self.boundaries[kind](density=density, **params)


def _require(cond, msg):
    if not cond:
        raise ParamOutOfRange(msg)


def _diag_metric(diag_fn, ddiag_fn):
    """Metric field with diagonal entries ``diag_fn(x)[..., i]``; ``ddiag_fn(x)[..., k, i]``."""
    def ev(x):
        dg = diag_fn(x)
        return dg[..., :, None] * np.eye(dg.shape[-1])
    def grad(x):
        dd = ddiag_fn(x)
        return dd[..., :, :, None] * np.eye(dd.shape[-1])
    return MetricField(ev, grad)


# ---------------------------------------------------------------- Boyer-Lindquist


def _bl_splitting(m, a, Q):
    """Kerr-Newman ``(g0, omega0, beta)``; ``Q`` is the squared charge."""

    def parts(x):
        r, th = x[..., 0], x[..., 1]
        s, c = np.sin(th), np.cos(th)
        rho2 = r * r + a * a * c * c
        delta = r * r - 2 * m * r + a * a + Q
        N = 2 * m * r - Q
        return r, s, c, rho2, delta, N

    def beta(x):
        r, s, c, rho2, delta, N = parts(x)
        return 1.0 - N / rho2

    def dbeta(x):
        r, s, c, rho2, delta, N = parts(x)
        out = np.zeros(x.shape)
        out[..., 0] = (2 * r * N - 2 * m * rho2) / rho2 ** 2
        out[..., 1] = -N * 2 * a * a * c * s / rho2 ** 2
        return out

    def omega0(x):
        r, s, c, rho2, delta, N = parts(x)
        out = np.zeros(x.shape)
        out[..., 2] = -a * s * s * N / rho2
        return out

    def domega0(x):
        r, s, c, rho2, delta, N = parts(x)
        out = np.zeros(x.shape[:-1] + (3, 3))
        out[..., 0, 2] = -a * s * s * (2 * m * rho2 - 2 * r * N) / rho2 ** 2
        out[..., 1, 2] = -a * N * 2 * s * c * (rho2 + a * a * s * s) / rho2 ** 2
        return out

    def g0diag(x):
        r, s, c, rho2, delta, N = parts(x)
        A = (r * r + a * a) ** 2 - delta * a * a * s * s
        return np.stack([rho2 / delta, rho2, s * s * A / rho2], axis=-1)

    def dg0diag(x):
        r, s, c, rho2, delta, N = parts(x)
        A = (r * r + a * a) ** 2 - delta * a * a * s * s
        dA_r = 4 * r * (r * r + a * a) - (2 * r - 2 * m) * a * a * s * s
        dA_t = -delta * a * a * 2 * s * c
        drho_t = -2 * a * a * c * s
        out = np.zeros(x.shape[:-1] + (3, 3))
        out[..., 0, 0] = (2 * r * delta - rho2 * (2 * r - 2 * m)) / delta ** 2
        out[..., 1, 0] = drho_t / delta
        out[..., 0, 1] = 2 * r
        out[..., 1, 1] = drho_t
        out[..., 0, 2] = s * s * (dA_r * rho2 - A * 2 * r) / rho2 ** 2
        out[..., 1, 2] = (2 * s * c * A + s * s * dA_t) / rho2 - s * s * A * drho_t / rho2 ** 2
        return out

    return _diag_metric(g0diag, dg0diag), OneFormField(omega0, domega0), ScalarField(beta, dbeta)


def bl_fermat_omega_closed_form(m, a, x):
    """Fermat one-form of Kerr, ``-2 m r a sin^2(theta) / (rho^2 - 2 m r) dphi``."""
    x = np.asarray(x, dtype=float)
    r, th = x[..., 0], x[..., 1]
    rho2 = r * r + a * a * np.cos(th) ** 2
    out = np.zeros(x.shape)
    out[..., 2] = -2 * m * r * a * np.sin(th) ** 2 / (rho2 - 2 * m * r)
    return out


def _bl_sphere(R):
    return Hypersurface(
        lambda x: R * R - x[..., 0] ** 2,
        lambda x: np.stack([-2 * x[..., 0], np.zeros(x.shape[:-1]), np.zeros(x.shape[:-1])], axis=-1),
        lambda x: np.broadcast_to(np.diag([-2.0, 0.0, 0.0]), x.shape[:-1] + (3, 3)).copy(),
        f"r<{R:g}")


def _bl_shell(rs, drs, d2rs, label):
    """``phi = r^2 - r_s(theta)^2`` with ``D = {r > r_s(theta)}``."""
    def phi(x):
        return x[..., 0] ** 2 - rs(x[..., 1]) ** 2

    def grad(x):
        th = x[..., 1]
        return np.stack([2 * x[..., 0], -2 * rs(th) * drs(th), np.zeros(x.shape[:-1])], axis=-1)

    def hess(x):
        th = x[..., 1]
        out = np.zeros(x.shape[:-1] + (3, 3))
        out[..., 0, 0] = 2.0
        out[..., 1, 1] = -2 * (drs(th) ** 2 + rs(th) * d2rs(th))
        return out

    return Hypersurface(phi, grad, hess, label)


def _bl_grid(density):
    nth = 9 * density
    nph = 4 * density
    th = np.linspace(POLE_CLAMP, np.pi - POLE_CLAMP, nth)
    ph = 2 * np.pi * np.arange(nph) / nph
    T, Ph = np.meshgrid(th, ph, indexing="ij")
    return T.ravel(), Ph.ravel()


def _build_bl(spec, m, a, Q, shell_rule):
    _require(m > 0, "m > 0 required")
    _require(a * a + Q < m * m, f"a^2 + q^2 < m^2 required (got a={a}, q^2={Q})")
    r_out = m + np.sqrt(m * m - Q)  # outermost ergosurface radius (equator)
    chart = Chart(3, ((r_out, np.inf), (0.0, np.pi), (-np.inf, np.inf)), ("r", "theta", "phi"),
                  (None, None, 2 * np.pi))
    g0, w0, beta = _bl_splitting(m, a, Q)
    S = StationarySplitting(g0, w0, beta, chart, spec.name)
    F = fermat_from_stationary(S)

    def sphere_boundary(density=1, radius=50.0):
        _require(radius > r_out, f"sphere radius must exceed {r_out:g}")
        T, Ph = _bl_grid(density)
        r0 = 0.5 * (radius + r_out)
        seeds = np.column_stack([np.full(T.size, r0), T, Ph])
        dirs = np.tile([1.0, 0.0, 0.0], (T.size, 1))
        return _bl_sphere(radius), RadialProbes(seeds, dirs, s_max=radius - r0 + 1.0)

    def shell_boundary(density=1, epsilon=0.5):
        _require(epsilon > 0, "epsilon > 0 required")
        rs, drs, d2rs = shell_rule(epsilon)
        T, Ph = _bl_grid(density)
        r0 = float(np.max(rs(T))) + 1.0
        seeds = np.column_stack([np.full(T.size, r0), T, Ph])
        dirs = np.tile([-1.0, 0.0, 0.0], (T.size, 1))
        # near the poles the shell may dip below the equatorial ergosurface radius;
        # it always stays outside the horizon, so probes run down to r_+
        r_hor = m + np.sqrt(m * m - a * a - Q)
        return _bl_shell(rs, drs, d2rs, f"shell(eps={epsilon:g})"), RadialProbes(seeds, dirs, s_max=r0 - r_hor)

    return Model(spec, chart, F, S, {"sphere": sphere_boundary, "shell": shell_boundary},
                 {"m": m, "a": a, "q2": Q, "r_out": r_out})


def _schwarzschild_shell(m):
    def rule(eps):
        r = 2 * m + eps
        return (lambda th: np.full(np.shape(th), r), lambda th: np.zeros(np.shape(th)),
                lambda th: np.zeros(np.shape(th)))
    return rule


def _kerr_shell(m, a, Q):
    def rule(eps):
        _require(m * m + eps - a * a - Q > 0, "shell radicand must be positive")

        def rad(th):
            return m * m + eps - a * a * np.cos(th) ** 2 - Q

        def rs(th):
            return m + np.sqrt(rad(th))

        def drs(th):
            return a * a * np.cos(th) * np.sin(th) / np.sqrt(rad(th))

        def d2rs(th):
            num = a * a * np.cos(2 * th)
            dnum = a * a * np.cos(th) * np.sin(th)
            return num / np.sqrt(rad(th)) - dnum ** 2 / rad(th) ** 1.5
        return rs, drs, d2rs
    return rule


def schwarzschild(spec):
    m = float(spec.params.get("m", 1.0))
    return _build_bl(spec, m, 0.0, 0.0, _schwarzschild_shell(m))


def kerr(spec):
    m = float(spec.params.get("m", 1.0))
    a = float(spec.params.get("a", 0.5))
    return _build_bl(spec, m, a, 0.0, _kerr_shell(m, a, 0.0))


def kerr_newman(spec):
    m = float(spec.params.get("m", 1.0))
    a = float(spec.params.get("a", 0.5))
    q = float(spec.params.get("q_charge", 0.3))
    return _build_bl(spec, m, a, q * q, _kerr_shell(m, a, q * q))


# ---------------------------------------------------------------- Cartesian models


def _cartesian_probes(center, dim, density, base=64):
    n = base * density
    if dim == 2:
        ang = 2 * np.pi * np.arange(n) / n
        dirs = np.column_stack([np.cos(ang), np.sin(ang)])
    else:
        dirs = direction_grid(dim, n)
    seeds = np.tile(np.asarray(center, dtype=float), (dirs.shape[0], 1))
    return seeds, dirs


def _cartesian_sphere_boundary(dim, default_radius, scale=1.0, base=64):
    def build(density=1, radius=default_radius, center=None):
        c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
        seeds, dirs = _cartesian_probes(c, dim, density, base)
        return sphere(c, radius, scale), RadialProbes(seeds, dirs, s_max=2 * radius)
    return build


def minkowski(spec):
    dim = int(spec.params.get("dim", 2))
    _require(dim in (2, 3), "dim must be 2 or 3")
    chart = Chart(dim)
    S = StationarySplitting(MetricField.euclidean(dim), OneFormField.zero(dim), ScalarField.constant(1.0),
                            chart, "minkowski")
    return Model(spec, chart, fermat_from_stationary(S), S,
                 {"sphere": _cartesian_sphere_boundary(dim, 10.0, base=64 if dim == 2 else 128)})


def attractive_lapse(spec):
    k = float(spec.params.get("k", 1.0))
    dim = int(spec.params.get("dim", 3))
    _require(k > 0, "k > 0 required")
    _require(dim in (2, 3), "dim must be 2 or 3")
    chart = Chart(dim)
    eye = np.eye(dim)

    def beta(x):
        return 1.0 + k / np.linalg.norm(x, axis=-1)

    def dbeta(x):
        r = np.linalg.norm(x, axis=-1)
        return -k * x / r[..., None] ** 3

    g0 = MetricField(lambda x: beta(x)[..., None, None] * eye,
                     lambda x: dbeta(x)[..., :, None, None] * eye)
    S = StationarySplitting(g0, OneFormField.zero(dim), ScalarField(beta, dbeta), chart, "attractive_lapse")
    return Model(spec, chart, fermat_from_stationary(S), S,
                 {"sphere": _cartesian_sphere_boundary(dim, 5.0, base=64 if dim == 2 else 128)}, {"k": k})


def example_r1(spec):
    """``h = delta``, ``omega = A sin(x2) dx1`` on R^2.

    The disc boundary uses ``phi = (rho^2 - |x|^2)/2``.
    """
    A = float(spec.params.get("A", 0.9))
    rho = float(spec.params.get("rho", np.pi))
    _require(0 < A < 1, "amplitude A must lie in (0, 1)")
    _require(rho > 0, "rho > 0 required")
    chart = Chart(2)

    def w(x):
        out = np.zeros(x.shape)
        out[..., 0] = A * np.sin(x[..., 1])
        return out

    def dw(x):
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 1, 0] = A * np.cos(x[..., 1])
        return out

    R = RandersMetric(MetricField.euclidean(2), OneFormField(w, dw), chart, name="example_r1")
    S = splitting_from_randers(R)
    R = RandersMetric(R.h, R.omega, chart, splitting=S, name="example_r1")
    return Model(spec, chart, R, S, {"sphere": _cartesian_sphere_boundary(2, rho, scale=0.5)},
                 {"A": A, "rho": rho})


def example_r2(spec):
    """``h = delta``, ``omega = f(x1) dx1`` with ``f = A sin(k x1)``; ``h0 = h - omega^2``."""
    A = float(spec.params.get("A", 0.9))
    k = float(spec.params.get("k", 6.0))
    rho = float(spec.params.get("rho", 1.0))
    _require(0 < A < 1, "amplitude A must lie in (0, 1)")
    chart = Chart(2)
    f = lambda s: A * np.sin(k * s)
    df = lambda s: A * k * np.cos(k * s)

    def w(x):
        out = np.zeros(x.shape)
        out[..., 0] = f(x[..., 0])
        return out

    def dw(x):
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = df(x[..., 0])
        return out

    def h0diag(x):
        return np.stack([1 - f(x[..., 0]) ** 2, np.ones(x.shape[:-1])], axis=-1)

    def dh0diag(x):
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = -2 * f(x[..., 0]) * df(x[..., 0])
        return out

    R = RandersMetric(MetricField.euclidean(2), OneFormField(w, dw), chart, name="example_r2")
    S = splitting_from_randers(R)
    R = RandersMetric(R.h, R.omega, chart, splitting=S, name="example_r2")
    h0 = RandersMetric(_diag_metric(h0diag, dh0diag), OneFormField.zero(2), chart, name="example_r2_h0")
    return Model(spec, chart, R, S, {"sphere": _cartesian_sphere_boundary(2, rho)},
                 {"h0": h0, "f": f, "df": df})


def neck_annulus(spec):
    eps = float(spec.params.get("epsilon", 0.0))
    _require(0 <= abs(eps) < 1, "|epsilon| < 1 required")
    chart = Chart(2, ((0.25, 3.75), (-np.inf, np.inf)), ("r", "theta"), (None, 2 * np.pi))

    def hdiag(x):
        return np.stack([np.ones(x.shape[:-1]), np.cosh(x[..., 0] - 2) ** 2], axis=-1)

    def dhdiag(x):
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 1] = 2 * np.cosh(x[..., 0] - 2) * np.sinh(x[..., 0] - 2)
        return out

    def w(x):
        out = np.zeros(x.shape)
        out[..., 1] = eps * np.cosh(x[..., 0] - 2)
        return out

    def dw(x):
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 1] = eps * np.sinh(x[..., 0] - 2)
        return out

    R = RandersMetric(_diag_metric(hdiag, dhdiag), OneFormField(w, dw), chart, name="neck_annulus")
    S = splitting_from_randers(R)
    R = RandersMetric(R.h, R.omega, chart, splitting=S, name="neck_annulus")

    def annulus(density=1, inner=1.0, outer=3.0):
        H = Hypersurface(lambda x: (x[..., 0] - inner) * (outer - x[..., 0]),
                         lambda x: np.stack([inner + outer - 2 * x[..., 0], np.zeros(x.shape[:-1])], axis=-1),
                         lambda x: np.broadcast_to(np.diag([-2.0, 0.0]), x.shape[:-1] + (2, 2)).copy(),
                         "annulus")
        n = 32 * density
        th = 2 * np.pi * np.arange(n) / n
        mid = 0.5 * (inner + outer)
        seeds = np.column_stack([np.full(2 * n, mid), np.concatenate([th, th])])
        dirs = np.concatenate([np.tile([1.0, 0.0], (n, 1)), np.tile([-1.0, 0.0], (n, 1))])
        return H, RadialProbes(seeds, dirs, s_max=outer - inner)

    return Model(spec, chart, R, S, {"annulus": annulus}, {"epsilon": eps})


BUILDERS = {
    "minkowski": minkowski,
    "schwarzschild": schwarzschild,
    "kerr": kerr,
    "kerr_newman": kerr_newman,
    "example_r1": example_r1,
    "example_r2": example_r2,
    "attractive_lapse": attractive_lapse,
    "neck_annulus": neck_annulus,
}


def build(spec) -> Model:
    """Build a model from a ModelSpec (or a ``{"name", "params"}`` mapping)."""
    if isinstance(spec, dict):
        spec = ModelSpec(spec["name"], dict(spec.get("params", {})))
    if spec.name not in BUILDERS:
        raise ParamOutOfRange(f"unknown model {spec.name!r}; choose from {list(BUILDERS)}")
    return BUILDERS[spec.name](spec)


# ---------------------------------------------------------------- restrictions and pullbacks


def fixed_coordinate_slice(S: StationarySplitting, index: int, value: float, chart: Chart) -> StationarySplitting:
    """Restriction of a splitting to ``{x^index = value}``.

    Geodesics of the restriction are geodesics of the full metric when the
    slice is totally geodesic (e.g. the equator of an equatorially symmetric
    Boyer-Lindquist model).
    """
    keep = [k for k in range(chart.dim + 1) if k != index]

    def lift(y):
        x = np.insert(y, index, value, axis=-1)
        return x

    def sub2(a):
        return a[..., keep, :][..., :, keep]

    g0 = MetricField(lambda y: sub2(S.g0(lift(y))),
                     lambda y: S.g0.gradient(lift(y))[..., keep, :, :][..., :, keep, :][..., :, :, keep])
    w0 = OneFormField(lambda y: S.omega0(lift(y))[..., keep],
                      lambda y: sub2(S.omega0.gradient(lift(y))))
    beta = ScalarField(lambda y: S.beta(lift(y)), lambda y: S.beta.gradient(lift(y))[..., keep])
    return StationarySplitting(g0, w0, beta, chart, S.name + "_slice")


def equatorial(model: Model):
    """Equatorial plane ``theta = pi/2`` of a Boyer-Lindquist model, coordinates ``(r, phi)``."""
    lo = model.chart.lower()[0]
    chart = Chart(2, ((lo, np.inf), (-np.inf, np.inf)), ("r", "phi"), (None, 2 * np.pi))
    S = fixed_coordinate_slice(model.splitting, 1, np.pi / 2, chart)
    F = fermat_from_stationary(S)

    def ring(density=1, inner=None, outer=20.0):
        """``inner < r < outer``; omit ``inner`` for a disc ``r < outer``."""
        if inner is None:
            H = Hypersurface(lambda x: outer ** 2 - x[..., 0] ** 2,
                             lambda x: np.stack([-2 * x[..., 0], np.zeros(x.shape[:-1])], axis=-1),
                             lambda x: np.broadcast_to(np.diag([-2.0, 0.0]), x.shape[:-1] + (2, 2)).copy(),
                             f"r<{outer:g}")
        else:
            H = Hypersurface(lambda x: (x[..., 0] - inner) * (outer - x[..., 0]),
                             lambda x: np.stack([inner + outer - 2 * x[..., 0], np.zeros(x.shape[:-1])], axis=-1),
                             lambda x: np.broadcast_to(np.diag([-2.0, 0.0]), x.shape[:-1] + (2, 2)).copy(),
                             f"{inner:g}<r<{outer:g}")
        n = 32 * density
        th = 2 * np.pi * np.arange(n) / n
        mid = 0.5 * ((inner if inner is not None else lo) + outer)
        seeds = np.column_stack([np.full(n, mid), th])
        return H, RadialProbes(seeds, np.tile([1.0, 0.0], (n, 1)), s_max=outer)

    return Model(ModelSpec(model.spec.name + "_equatorial", model.spec.params), chart, F, S,
                 {"ring": ring}, dict(model.extras))


def spherical_to_cartesian_map(X):
    """``(r, theta, phi)`` of Cartesian points and the Jacobian ``d(r,theta,phi)/dX``."""
    X = np.asarray(X, dtype=float)
    x, y, z = X[..., 0], X[..., 1], X[..., 2]
    r = np.linalg.norm(X, axis=-1)
    rho = np.hypot(x, y)
    sph = np.stack([r, np.arccos(np.clip(z / r, -1, 1)), np.arctan2(y, x)], axis=-1)
    J = np.zeros(X.shape[:-1] + (3, 3))
    J[..., 0, :] = X / r[..., None]
    J[..., 1, 0] = z * x / (r * r * rho)
    J[..., 1, 1] = z * y / (r * r * rho)
    J[..., 1, 2] = -rho / (r * r)
    J[..., 2, 0] = -y / rho ** 2
    J[..., 2, 1] = x / rho ** 2
    return sph, J


def pullback_splitting(S: StationarySplitting, chart_map: Callable, chart: Chart) -> StationarySplitting:
    """Express a splitting in new coordinates ``X`` with ``x = chart_map(X)[0]``.

    ``chart_map`` returns ``(x, J)`` with ``J = dx/dX``.  Derivatives of the
    pulled-back fields are taken by central differences.
    """
    def g0(X):
        x, J = chart_map(X)
        return np.einsum("...ai,...ab,...bj->...ij", J, S.g0(x), J)

    def w0(X):
        x, J = chart_map(X)
        return np.einsum("...ai,...a->...i", J, S.omega0(x))

    def beta(X):
        return S.beta(chart_map(X)[0])

    return StationarySplitting(MetricField(g0), OneFormField(w0), ScalarField(beta), chart, S.name + "_pullback")


def cartesian_end(model: Model) -> StationarySplitting:
    """Splitting of a Boyer-Lindquist or Cartesian model in asymptotically Cartesian coordinates."""
    if model.chart.coordinate_names[:1] == ("r",) and model.chart.dim == 3:
        return pullback_splitting(model.splitting, spherical_to_cartesian_map, Chart(3))
    return model.splitting
