import numpy as np
import pytest

from randers_src import (SingularMetric, discrete_energy_oracle, integrate_pregeodesic,
                         lift_lightlike, lift_timelike, reverse_metric)
from randers_src.convexity import randers_boundary_margin
from randers_src.core_metric import Chart, MetricField, OneFormField, RandersMetric, product_randers_beta
from randers_src.errors import NotFermat
from randers_src.geodesic import christoffel_h, integrate_batch, pregeodesic_rhs, randers_distance_estimate

from conftest import model


def flat(w=(0.0, 0.0)):
    w = np.asarray(w, dtype=float)
    return RandersMetric(MetricField.euclidean(2), OneFormField(lambda x: np.broadcast_to(w, np.shape(x)).copy()),
                         Chart(2))


def polar():
    def h(x):
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = x[..., 0] ** 2
        return out

    def dh(x):
        out = np.zeros(x.shape[:-1] + (2, 2, 2))
        out[..., 0, 1, 1] = 2 * x[..., 0]
        return out
    return MetricField(h, dh)


# -------------------------------------------------------------- Christoffel symbols
def test_flat_christoffel_vanishes(rng):
    assert np.all(christoffel_h(MetricField.euclidean(3), rng.normal(size=(10, 3))) == 0)


def test_polar_christoffel():
    G = christoffel_h(polar(), np.array([2.0, 0.3]))
    assert G[0, 1, 1] == pytest.approx(-2.0, abs=1e-14)
    assert G[1, 0, 1] == pytest.approx(0.5, abs=1e-14)
    assert G[1, 1, 0] == pytest.approx(0.5, abs=1e-14)
    # finite-difference derivatives give the same symbols
    h = polar()
    num = christoffel_h(MetricField(h.evaluator), np.array([2.0, 0.3]))
    assert np.allclose(num, G, atol=1e-8)


def test_schwarzschild_gamma_r_thetatheta():
    M = model("schwarzschild", m=1.0)
    x = np.array([2.5, np.pi / 2, 0.0])
    beta = M.splitting.beta(x)
    G = christoffel_h(M.randers.h, x)
    assert G[0, 1, 1] == pytest.approx(1.0 - 2.5 * beta, abs=1e-12)
    assert G[0, 1, 1] == pytest.approx(0.5, abs=1e-12)


def test_singular_metric_raises():
    h = MetricField(lambda x: np.broadcast_to(np.diag([1.0, 1e-14]), x.shape[:-1] + (2, 2)).copy())
    with pytest.raises(SingularMetric):
        christoffel_h(h, np.zeros(2))


# -------------------------------------------------------------- pregeodesic field
def test_closed_omega_gives_straight_lines(rng):
    M = model("example_r2")
    X, V = rng.normal(size=(50, 2)), rng.normal(size=(50, 2))
    assert np.allclose(pregeodesic_rhs(M.randers, X, V), 0.0, atol=1e-14)


def test_magnetic_circle():
    b = 2.0
    R = RandersMetric(MetricField.euclidean(2),
                      OneFormField(lambda x: 0.5 * b * np.stack([-x[..., 1], x[..., 0]], axis=-1)), Chart(2))
    traj = integrate_pregeodesic(R, np.array([0.5, 0.0]), np.array([0.0, 1.0]), 2 * np.pi / b)
    # h-curvature |b|: algebraic circle fit, then all points at distance 1/|b| from its center
    X = traj.x
    A = np.column_stack([2 * X, np.ones(len(X))])
    sol = np.linalg.lstsq(A, np.sum(X ** 2, axis=1), rcond=None)[0]
    radii = np.linalg.norm(X - sol[:2], axis=1)
    assert np.allclose(radii, 1 / b, atol=1e-8)
    assert np.allclose(traj.x[-1], traj.x[0], atol=1e-8)


def test_force_is_h_orthogonal(rng):
    M = model("kerr", m=1.0, a=0.5)
    R = M.randers
    X = np.column_stack([rng.uniform(4, 30, 1000), rng.uniform(0.2, 2.9, 1000), rng.uniform(0, 6, 1000)])
    V = rng.normal(size=(1000, 3))
    V /= np.sqrt(np.einsum("pi,pij,pj->p", V, R.h(X), V))[:, None]
    hm = R.h(X)
    force = np.linalg.solve(hm, np.einsum("pij,pj->pi", R.omega.exterior(X), V)[..., None])[..., 0]
    assert np.allclose(np.einsum("pi,pij,pj->p", force, hm, V), 0.0, atol=1e-14)


# -------------------------------------------------------------- integration
def test_flat_straight_line():
    traj = integrate_pregeodesic(flat(), np.zeros(2), np.array([1.0, 0.0]), 5.0)
    assert np.allclose(traj.endpoint, [5.0, 0.0], atol=1e-10)
    assert traj.randers_length == pytest.approx(5.0, abs=1e-10)
    assert traj.exit_flag == "completed"


def test_neck_clairaut_confinement():
    M = model("neck_annulus", epsilon=0.0)
    G = lambda r: np.cosh(r - 2)
    traj = integrate_pregeodesic(M.randers, np.array([2.8, 0.0]), np.array([0.0, 1 / G(2.8)]), 10.0)
    assert traj.x[:, 0].min() >= 2.8 - 1e-8
    clairaut = G(traj.x[:, 0]) ** 2 * traj.v[:, 1]
    assert np.max(np.abs(clairaut - clairaut[0])) < 1e-8


def test_neck_clairaut_general(rng):
    M = model("neck_annulus", epsilon=0.0)
    G = lambda r: np.cosh(r - 2)
    for _ in range(10):
        traj = integrate_pregeodesic(M.randers, np.array([rng.uniform(1.5, 2.5), 0.0]), rng.normal(size=2), 8.0)
        clairaut = G(traj.x[:, 0]) ** 2 * traj.v[:, 1]
        assert np.max(np.abs(clairaut - clairaut[0])) < 1e-8


def test_example_r1_geodesic_enters_disc():
    M = model("example_r1", A=0.9, rho=np.pi)
    H, _ = M.boundary("sphere")
    x0, v0 = np.array([0.0, np.pi]), np.array([1.0, 0.0])
    traj = integrate_pregeodesic(M.randers, x0, v0, 0.05)
    assert np.all(np.linalg.norm(traj.x[1:], axis=1) < np.pi)
    # (phi o gamma)'' from the trajectory agrees with the signed margin, which is 0.9 pi - 1
    res = integrate_batch(M.randers, np.tile(x0, (3, 1)), np.tile(v0, (3, 1)), np.array([1e-3, 2e-3, 3e-3]))
    ds = 1e-3
    phi = np.concatenate([[H.phi(x0)], H.phi(res.y[:, :2])])
    second = (2 * phi[0] - 5 * phi[1] + 4 * phi[2] - phi[3]) / ds ** 2
    signed = randers_boundary_margin(M.randers, H, x0, v0, signed=True)
    assert signed == pytest.approx(0.9 * np.pi - 1, abs=1e-9)
    assert second == pytest.approx(signed, rel=1e-4)


def test_speed_conservation(rng):
    for name, lo, hi in (("kerr", 5, 20), ("schwarzschild", 4, 20)):
        M = model(name, m=1.0) if name == "schwarzschild" else model(name, m=1.0, a=0.5)
        for _ in range(5):
            x0 = np.array([rng.uniform(lo, hi), rng.uniform(0.5, 2.6), rng.uniform(0, 6)])
            traj = integrate_pregeodesic(M.randers, x0, rng.normal(size=3), 20.0)
            assert traj.speed_drift(M.randers) < 1e-8


def test_reverse_metric_retraces(rng):
    M = model("kerr", m=1.0, a=0.5)
    F, Fr = M.randers, reverse_metric(M.randers)
    for _ in range(5):
        x0 = np.array([rng.uniform(8, 15), rng.uniform(0.6, 2.5), rng.uniform(0, 6)])
        fw = integrate_pregeodesic(F, x0, rng.normal(size=3), 10.0)
        L = fw.s[-1]
        back = integrate_pregeodesic(Fr, fw.x[-1], -fw.v[-1], L)
        assert np.allclose(back.x[-1], x0, atol=1e-6)
        half = integrate_pregeodesic(Fr, fw.x[-1], -fw.v[-1], L / 2)
        mid = integrate_pregeodesic(F, x0, fw.v[0], L / 2)
        assert np.allclose(half.x[-1], mid.x[-1], atol=1e-6)
        # F~(-v) = F(v): the retraced curve has the forward Randers length
        assert back.lengths[-1, 0] == pytest.approx(fw.lengths[-1, 0], rel=1e-8)


def test_domain_exit_flag():
    M = model("schwarzschild", m=1.0)
    H, _ = M.boundary("sphere", radius=20.0)
    traj = integrate_pregeodesic(M.randers, np.array([10.0, 1.0, 0.0]), np.array([1.0, 0.0, 0.0]), 100.0, domain=H)
    assert traj.exit_flag == "left_domain"
    assert traj.x[-1, 0] == pytest.approx(20.0, abs=1e-8)


# -------------------------------------------------------------- lifts
def test_minkowski_lightlike_arrival():
    M = model("minkowski", dim=2)
    traj = integrate_pregeodesic(M.randers, np.zeros(2), np.array([3.0, 4.0]), 5.0)
    lift = lift_lightlike(M.randers, traj, 0.0)
    assert lift.arrival_time == pytest.approx(5.0, abs=1e-12)
    assert np.allclose(lift.z[-1, :2], [3.0, 4.0], atol=1e-12)


def test_kerr_equatorial_lift():
    M = model("kerr", m=1.0, a=0.5)
    H, _ = M.boundary("sphere", radius=50.0)
    traj = integrate_pregeodesic(M.randers, np.array([10.0, np.pi / 2, 0.0]), np.array([1.0, 0.0, 0.03]), 200.0,
                                 domain=H)
    assert traj.exit_flag == "left_domain"
    assert np.allclose(traj.x[:, 1], np.pi / 2, atol=1e-12)
    lift = lift_lightlike(M.randers, traj, 0.0)
    assert lift.max_residual < 1e-8
    assert lift.conserved_drift < 1e-6


def test_past_lift_uses_reverse_metric(rng):
    M = model("kerr", m=1.0, a=0.5)
    Fr = reverse_metric(M.randers)
    traj = integrate_pregeodesic(Fr, np.array([12.0, 1.2, 0.4]), rng.normal(size=3), 10.0)
    lift = lift_lightlike(M.randers, traj, 3.0, "past")
    assert lift.max_residual < 1e-8
    assert lift.conserved_drift < 1e-6
    assert lift.arrival_time == pytest.approx(3.0 - traj.randers_length)
    assert np.all(np.diff(lift.z[:, -1]) < 0)
    with pytest.raises(NotFermat):
        lift_lightlike(Fr, traj, 0.0)


def test_timelike_lift_static_observer():
    M = model("minkowski", dim=2)
    P = product_randers_beta(M.randers, M.splitting.beta)
    traj = integrate_pregeodesic(P, np.zeros(3), np.array([1.0, 0.0, 0.0]), 1.0)
    lift = lift_timelike(M.splitting, traj, 2.0, ell=1.0)
    assert lift.arrival_time == pytest.approx(3.0, abs=1e-12)
    traj = integrate_pregeodesic(P, np.zeros(3), np.array([1.0, 1.0, 0.0]), np.sqrt(2.0))
    lift = lift_timelike(M.splitting, traj, 0.0, ell=1.0)
    assert lift.arrival_time == pytest.approx(np.sqrt(2.0), abs=1e-12)


def test_timelike_lift_kerr_affine_udot(rng):
    from randers_src.integrate import Event

    M = model("kerr", m=1.0, a=0.5)
    P = product_randers_beta(M.randers, M.splitting.beta)
    stop = Event("u", lambda s, y, r: y[:, 0] - 2.0, 1, True)
    traj = integrate_pregeodesic(P, np.array([0.0, 9.0, 1.1, 0.2]), np.array([1.0, 0.3, -0.1, 0.05]), 80.0,
                                 extra_events=[stop])
    lift = lift_timelike(M.splitting, traj, 0.0, ell=2.0)
    assert np.max(np.abs(lift.residual)) < 1e-6 * 4
    assert np.max(np.abs(lift.zdot[:, 0] - 2.0)) < 1e-8
    assert lift.conserved_drift < 1e-6


# -------------------------------------------------------------- distance
def test_distance_estimates():
    p, q = np.zeros(2), np.array([3.0, 4.0])
    assert randers_distance_estimate(flat(), p, q) == pytest.approx(5.0, abs=1e-6)
    R = flat((0.5, 0.0))
    assert randers_distance_estimate(R, np.zeros(2), np.array([1.0, 0.0])) == pytest.approx(1.5, abs=1e-6)
    assert randers_distance_estimate(R, np.array([1.0, 0.0]), np.zeros(2)) == pytest.approx(0.5, abs=1e-6)


def test_neck_distance_matches_energy_oracle():
    M = model("neck_annulus", epsilon=0.0)
    H, _ = M.boundary("annulus")
    p, q = np.array([2.0, 0.0]), np.array([2.0, np.pi])
    d = randers_distance_estimate(M.randers, p, q, domain=H)
    seed = lambda s: np.column_stack([2.0 + 0.6 * np.sin(np.pi * s), np.pi * s])
    oracle = discrete_energy_oracle(M.randers, p, q, H, n_nodes=300, seed_path=seed)
    assert d == pytest.approx(np.pi, rel=1e-8)
    assert abs(oracle.length - d) / d < 1e-3
