import numpy as np
import pytest

from randers_src import InsufficientSpan
from randers_src.asymptotics import (EndSpec, classify_large_spheres, closed_nondecaying_end, end_spec_for,
                                     fit_decay, radial_beta_derivative, synthetic_end, verify_flatness)
from randers_src.convexity import check_light_convexity

from conftest import model


def test_fit_decay_power_law():
    r = np.geomspace(10, 1e4, 40)
    fit = fit_decay(np.column_stack([r, 2.0 / r]))
    assert fit.exponent == pytest.approx(1.0, abs=1e-6)
    assert fit.coefficient == pytest.approx(2.0, rel=1e-6)
    assert fit.residual < 1e-10


def test_fit_decay_exact_and_span():
    r = np.geomspace(10, 1e4, 10)
    assert fit_decay(np.column_stack([r, np.zeros_like(r)])).exact
    with pytest.raises(InsufficientSpan):
        fit_decay(np.column_stack([np.linspace(10, 50, 10), np.ones(10)]))
    with pytest.raises(InsufficientSpan):
        EndSpec(r_min=100, r_max=500).radii()


def test_schwarzschild_exponents():
    M = model("schwarzschild", m=1.0)
    rep = verify_flatness(M.splitting, end_spec_for(M))
    assert rep.is_flat
    assert rep.q_prime == pytest.approx(1.0, abs=0.02)
    assert rep.fit("beta-1").coefficient == pytest.approx(2.0, rel=0.05)
    assert rep.fit("d_omega").exact


def test_kerr_metric_decay():
    M = model("kerr", m=1.0, a=0.5)
    rep = verify_flatness(M.splitting, end_spec_for(M))
    assert rep.is_conformally_flat
    assert rep.fit("h-delta").exponent == pytest.approx(1.0, abs=0.05)
    assert rep.p == pytest.approx(1.0, abs=0.05)


def test_minkowski_is_exact():
    M = model("minkowski")
    rep = verify_flatness(M.splitting, EndSpec())
    assert all(f.exact for f in rep.fits)
    assert rep.to_dict()["p"] == "exact"


def test_closed_omega_is_conformally_flat():
    rep = verify_flatness(closed_nondecaying_end(), EndSpec())
    assert rep.is_conformally_flat
    assert rep.fit("d_omega").exact


@pytest.mark.parametrize("name,params", [("kerr", {"a": 0.5}), ("kerr_newman", {"a": 0.5, "q_charge": 0.3})])
def test_kerr_family_large_spheres(name, params):
    M = model(name, m=1.0, **params)
    cls = classify_large_spheres(M.splitting, end_spec_for(M))
    assert cls.light_verdict == "convex_for_large_r"
    assert cls.time_verdict == "violated_for_large_r"
    assert cls.C_sign == "positive"
    assert cls.r0_estimate is not None and cls.r0_estimate <= 100.0


def test_attractive_lapse_time_convex():
    M = model("attractive_lapse")
    cls = classify_large_spheres(M.splitting, end_spec_for(M))
    assert cls.C_sign == "negative"
    assert cls.time_verdict == "convex_for_large_r"


def test_positive_mass_gives_positive_radial_beta_derivative():
    for m in (0.5, 1.0, 3.0):
        M = model("schwarzschild", m=m)
        d = radial_beta_derivative(M.splitting, end_spec_for(M))
        r = end_spec_for(M).radii()
        # d_r (1 - 2m/r) = 2m / r^2
        assert np.allclose(d, (2 * m / r ** 2)[:, None], rtol=1e-6)


def test_fit_stable_under_window_shift():
    M = model("kerr", m=1.0, a=0.5)
    a = verify_flatness(M.splitting, end_spec_for(M, r_min=100.0, r_max=1e4))
    b = verify_flatness(M.splitting, end_spec_for(M, r_min=300.0, r_max=3e4))
    for fa, fb in zip(a.fits, b.fits):
        if fa.exact:
            continue
        assert abs(fa.exponent - fb.exponent) < max(2 * (fa.residual + fb.residual), 0.02), fa.quantity


def test_large_sphere_verdict_monotone():
    M = model("kerr", m=1.0, a=0.5)
    spec = end_spec_for(M)
    r0 = classify_large_spheres(M.splitting, spec).r0_estimate
    for R in (r0, 2 * r0, 4 * r0):
        H, sampler = M.boundary("sphere", radius=R)
        assert check_light_convexity(M.splitting, H, sampler).classification == "strongly_convex"


@pytest.mark.parametrize("triple", [(1.0, 1.0, 1.0), (2.0, 1.0, 1.0), (1.0, 2.0, 0.5), (0.5, 1.5, 2.0)])
def test_derived_exponents_are_bounds(triple):
    th = verify_flatness(synthetic_end(*triple), EndSpec(), exponents0=triple).min_rule
    assert th["p_agrees"]
    assert th["q_bound_holds"]


def test_sharp_q_follows_omega0():
    # d(omega0 / beta) decays one power faster than omega0 regardless of beta
    for q0, qp in [(1.0, 1.0), (2.0, 0.5), (1.5, 0.7)]:
        rep = verify_flatness(synthetic_end(1.0, q0, qp), EndSpec())
        assert rep.q == pytest.approx(q0, abs=0.05)
