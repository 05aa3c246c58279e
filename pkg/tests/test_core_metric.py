import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from randers_src import (InvariantViolation, DegenerateDirection, eval_randers, fermat_from_stationary,
                         fundamental_tensor, product_randers_beta, reverse_metric)
from randers_src.core_metric import (Chart, MetricField, OneFormField, RandersMetric, ScalarField,
                                     StationarySplitting, central_gradient, fermat_norm_direct,
                                     splitting_from_randers)
from randers_src.models import bl_fermat_omega_closed_form

from conftest import model


def flat(dim=2, w=(0.5, 0.0)):
    w = np.asarray(w, dtype=float)
    return RandersMetric(MetricField.euclidean(dim), OneFormField(lambda x: np.broadcast_to(w, np.shape(x)).copy()),
                         Chart(dim))


def wavy(dim=3, amp=0.3, seed=0):
    """Non-flat h >= 0.49 delta and omega with |omega| <= amp sqrt(dim)."""
    g = np.random.default_rng(seed)
    A, B = 0.3 * g.normal(size=(dim, dim)), 0.3 * g.normal(size=(dim, dim))

    def h(x):
        L = np.eye(dim) + 0.3 * np.sin(x @ A)[..., :, None] * np.eye(dim)
        return L @ np.swapaxes(L, -1, -2)
    return RandersMetric(MetricField(h), OneFormField(lambda x: amp * np.cos(x @ B)), Chart(dim))


vec3 = st.lists(st.floats(-5, 5, allow_nan=False), min_size=3, max_size=3).map(np.array)


# -------------------------------------------------------------- examples
def test_eval_examples():
    R = flat()
    assert eval_randers(R, np.zeros(2), np.array([1.0, 0.0])) == pytest.approx(1.5, abs=1e-15)
    assert eval_randers(R, np.zeros(2), np.array([-1.0, 0.0])) == pytest.approx(0.5, abs=1e-15)
    R0 = flat(w=(0.0, 0.0))
    assert eval_randers(R0, np.zeros(2), np.array([3.0, 4.0])) == 5.0


def test_norm_violation_raises():
    with pytest.raises(InvariantViolation):
        eval_randers(flat(w=(1.0, 0.0)), np.zeros(2), np.array([1.0, 0.0]))


def test_reverse_examples(rng):
    R = flat()
    Rr = reverse_metric(R)
    assert np.allclose(Rr.omega(np.zeros(2)), [-0.5, 0.0])
    RR = reverse_metric(Rr)
    X, Y = rng.normal(size=(100, 2)), rng.normal(size=(100, 2))
    assert np.array_equal(eval_randers(RR, X, Y), eval_randers(R, X, Y))
    W = wavy()
    X3, Y3 = rng.normal(size=(100, 3)), rng.normal(size=(100, 3))
    assert np.allclose(eval_randers(reverse_metric(W), X3, Y3), eval_randers(W, X3, -Y3), rtol=1e-14, atol=0)


def test_fundamental_tensor_examples(rng):
    R = flat()
    g = fundamental_tensor(R, np.zeros(2), np.array([1.0, 0.0]))
    y = np.array([1.0, 0.0])
    assert y @ g @ y == pytest.approx(2.25, rel=1e-6)
    # Riemannian case: g_y = h exactly
    Rh = RandersMetric(wavy().h, OneFormField.zero(3), Chart(3))
    x, y3 = rng.normal(size=3), rng.normal(size=3)
    assert np.allclose(fundamental_tensor(Rh, x, y3, mode="analytic"), Rh.h(x), rtol=1e-13, atol=1e-13)
    assert np.allclose(fundamental_tensor(Rh, x, y3), Rh.h(x), rtol=1e-6, atol=1e-7)
    with pytest.raises(DegenerateDirection):
        fundamental_tensor(R, np.zeros(2), np.zeros(2))


def test_fundamental_tensor_positive_definite(rng):
    W = wavy(amp=0.4)
    X, Y = rng.normal(size=(1000, 3)), rng.normal(size=(1000, 3))
    assert np.all(W.norm_omega(X) < 1)
    ev = np.array([np.linalg.eigvalsh(fundamental_tensor(W, x, y, mode="analytic")).min() for x, y in zip(X, Y)])
    assert ev.min() > 0


def test_fundamental_tensor_fd_matches_closed_form(rng):
    W = wavy()
    for x, y in zip(rng.normal(size=(50, 3)), rng.normal(size=(50, 3))):
        fd = fundamental_tensor(W, x, y)
        an = fundamental_tensor(W, x, y, mode="analytic")
        assert np.allclose(fd, an, rtol=1e-6, atol=1e-6 * np.abs(an).max())


def test_fermat_examples():
    d = 2
    eye = ScalarField.constant
    S = StationarySplitting(MetricField.euclidean(d), OneFormField.zero(d), eye(1.0), Chart(d))
    F = fermat_from_stationary(S)
    assert eval_randers(F, np.zeros(2), np.array([3.0, 4.0])) == pytest.approx(5.0, rel=1e-15)
    S4 = StationarySplitting(MetricField.euclidean(d), OneFormField.zero(d), eye(4.0), Chart(d))
    F4 = fermat_from_stationary(S4)
    assert np.allclose(F4.h(np.zeros(2)), np.eye(2) / 4)
    assert eval_randers(F4, np.zeros(2), np.array([3.0, 4.0])) == pytest.approx(2.5, rel=1e-15)


def test_fermat_kerr_omega_matches_closed_form():
    M = model("kerr", m=1.0, a=0.5)
    x = np.array([10.0, np.pi / 2, 0.0])
    closed = bl_fermat_omega_closed_form(1.0, 0.5, x)
    assert np.allclose(M.randers.omega(x), closed, rtol=1e-10, atol=1e-14)


def test_product_examples(rng):
    R0 = flat(w=(0.0, 0.0))
    P = product_randers_beta(R0, ScalarField.constant(1.0))
    V = rng.normal(size=(20, 3))
    assert np.allclose(eval_randers(P, np.zeros((20, 3)), V), np.linalg.norm(V, axis=1), rtol=1e-14)
    M = model("kerr", m=1.0, a=0.5)
    Pk = product_randers_beta(M.randers, M.splitting.beta)
    X = np.column_stack([rng.normal(size=100), rng.uniform(5, 20, 100), rng.uniform(0.3, 2.8, 100),
                         rng.uniform(0, 6, 100)])
    v = rng.normal(size=100)
    U = np.zeros((100, 4))
    U[:, 0] = v
    assert np.all(np.einsum("pi,pi->p", Pk.omega(X), U) == 0)
    Y = rng.normal(size=(100, 4))
    hb = np.einsum("pi,pij,pj->p", Y, Pk.h(X), Y)
    x = X[:, 1:]
    expect = np.einsum("pi,pij,pj->p", Y[:, 1:], M.randers.h(x), Y[:, 1:]) + Y[:, 0] ** 2 / M.splitting.beta(x)
    assert np.allclose(hb, expect, rtol=1e-13)


def test_splitting_from_randers_roundtrip(rng):
    W = wavy()
    F = fermat_from_stationary(splitting_from_randers(W))
    X, Y = rng.normal(size=(50, 3)), rng.normal(size=(50, 3))
    assert np.allclose(eval_randers(F, X, Y), eval_randers(W, X, Y), rtol=1e-12)


def test_central_gradient_accuracy():
    f = lambda x: np.sin(x[..., 0]) * np.exp(x[..., 1])
    x = np.array([[0.3, -0.2], [10.0, 1.0]])
    g = central_gradient(f, x)
    exact = np.stack([np.cos(x[:, 0]) * np.exp(x[:, 1]), np.sin(x[:, 0]) * np.exp(x[:, 1])], axis=-1)
    assert np.allclose(g, exact, rtol=1e-8)


# -------------------------------------------------------------- properties
@settings(max_examples=200, deadline=None)
@given(x=vec3, y=vec3, lam=st.floats(1e-3, 1e3))
def test_homogeneity(x, y, lam):
    W = wavy()
    a, b = eval_randers(W, x, lam * y), lam * eval_randers(W, x, y)
    assert abs(a - b) <= 1e-12 * max(abs(b), 1e-300)


@settings(max_examples=200, deadline=None)
@given(x=vec3, y=vec3)
def test_positivity(x, y):
    if np.linalg.norm(y) < 1e-8:
        return
    assert eval_randers(wavy(amp=0.4), x, y) > 0


@settings(max_examples=100, deadline=None)
@given(x=vec3, y=vec3)
def test_fundamental_tensor_consistency(x, y):
    if np.linalg.norm(y) < 1e-3:
        return
    W = wavy()
    g = fundamental_tensor(W, x, y)
    assert y @ g @ y == pytest.approx(eval_randers(W, x, y) ** 2, rel=1e-6)


def _random_splitting(seed):
    g = np.random.default_rng(seed)
    A = 0.2 * g.normal(size=(3, 3))
    c = 0.2 * g.normal(size=3)
    g0 = MetricField(lambda x: np.eye(3) * (1.5 + np.sin(x @ A)[..., :1, None]))
    w0 = OneFormField(lambda x: 0.4 * np.cos(x @ A + c))
    beta = ScalarField(lambda x: 1.2 + 0.5 * np.tanh(x @ c))
    return StationarySplitting(g0, w0, beta, Chart(3))


@settings(max_examples=100, deadline=None)
@given(x=vec3, y=vec3, seed=st.integers(0, 50))
def test_fermat_two_formulas(x, y, seed):
    S = _random_splitting(seed)
    F = fermat_from_stationary(S)
    assert eval_randers(F, x, y) == pytest.approx(fermat_norm_direct(S, x, y), rel=1e-12, abs=1e-14)


@settings(max_examples=100, deadline=None)
@given(x=vec3, y=vec3, seed=st.integers(0, 50))
def test_fermat_conformal_invariance(x, y, seed):
    S = _random_splitting(seed)
    lam = ScalarField(lambda z: np.exp(0.7 * np.sin(z[..., 0] + 2 * z[..., 2])))
    F, Fs = fermat_from_stationary(S), fermat_from_stationary(S.scaled(lam))
    assert np.allclose(Fs.h(x), F.h(x), rtol=1e-12, atol=1e-14)
    assert np.allclose(Fs.omega(x), F.omega(x), rtol=1e-12, atol=1e-14)
    assert eval_randers(Fs, x, y) == pytest.approx(eval_randers(F, x, y), rel=1e-12, abs=1e-14)


def test_gauge_invariance_of_dOmega(rng):
    W = wavy()
    f = ScalarField(lambda x: np.sin(x[..., 0] * x[..., 1]) + x[..., 2] ** 3)
    Wg = RandersMetric(W.h, W.omega.minus_exact(f), W.chart)
    X = rng.normal(size=(50, 3))
    assert np.allclose(W.omega.exterior(X), Wg.omega.exterior(X), atol=1e-5)
