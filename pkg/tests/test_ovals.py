import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nfrefractor.battery import random_oval
from nfrefractor.errors import CapViolation, DomainError
from nfrefractor.ovals import (OvalSpec, cap_threshold, oval_jet, oval_radial, oval_radial_many,
                               oval_refraction_check, oval_residual)
from nfrefractor.oracles import AnalyticRho
from nfrefractor.refraction import MediaPair, refracted_direction
from nfrefractor.sphere import lift, rotation_about_axis, unit


def test_collinear_radius():
    d, kappa = 3.0, 0.7
    b = 0.5 * (d + d / kappa)
    oval = OvalSpec(np.array([0.0, 0.0, d]), b, kappa)
    r = oval_radial(np.array([0.0, 0.0, 1.0]), oval)
    assert r == pytest.approx((d - b * kappa) / (1 - kappa), rel=1e-14)


def test_defining_identity(rng):
    for _ in range(500):
        oval, X = random_oval(rng)
        r = oval_radial(X, oval)
        assert abs(oval_residual(r, X, oval)) <= 1e-10


def test_shrinks_to_the_focus():
    # the cap closes around P/|P| like eps^2 while the radius converges like eps
    P = np.array([0.2, -0.1, 3.0])
    nP = np.linalg.norm(P)
    X = unit(P)
    eps = np.array([1e-2, 1e-3, 1e-4, 1e-5])
    errors = np.array([abs(oval_radial(X, OvalSpec(P, nP * (1 + e), 0.7)) - nP) for e in eps])
    assert np.all(np.diff(errors) < 0)
    ratio = errors / (eps * nP)
    assert ratio.max() / ratio.min() < 1.01


def test_oval_parameter_validation():
    P = np.array([0.0, 0.0, 3.0])
    with pytest.raises(DomainError):
        OvalSpec(P, 2.0, 0.7)  # b below |P|
    with pytest.raises(DomainError):
        OvalSpec(P, 5.0, 0.7)  # b above |P|/kappa
    with pytest.raises(DomainError):
        OvalSpec(P, 3.5, 1.3)
    with pytest.raises(DomainError):
        OvalSpec(P, 3.5, 0.7, tau=0.5)


def test_cap_violation():
    oval = OvalSpec(np.array([0.0, 0.0, 3.0]), 3.5, 0.7)
    with pytest.raises(CapViolation):
        oval_radial(unit(np.array([1.0, 0.0, 0.1])), oval)
    X = unit(np.array([1.0, 0.0, 0.1]))
    assert np.isnan(oval_radial_many(X[None, :], oval.P, oval.b, oval.kappa)[0])


def test_vectorised_matches_scalar(rng):
    oval, _ = random_oval(rng)
    Xs = np.array([random_oval(np.random.default_rng(k))[1] for k in range(20)])
    many = oval_radial_many(Xs, oval.P, oval.b, oval.kappa)
    for X, r in zip(Xs, many):
        if np.isnan(r):
            assert not oval.in_cap(X)
        else:
            assert r == pytest.approx(oval_radial(X, oval), rel=1e-15)


def test_axial_deviation_is_zero():
    oval = OvalSpec(np.array([0.0, 0.0, 3.0]), 3.6, 0.7, tau=0.05)
    assert oval_refraction_check(np.array([0.0, 0.0, 1.0]), oval) <= 1e-12


def test_deviation_at_margin(rng):
    for _ in range(200):
        oval, X = random_oval(rng, tau=0.05)
        assert oval_refraction_check(X, oval, MediaPair.from_kappa(oval.kappa)) <= 1e-7


def test_visibility_margin_enforced():
    oval = OvalSpec(np.array([0.0, 0.0, 3.0]), 3.6, 0.7, tau=0.05)
    c = 0.7 + 0.01
    X = np.array([np.sqrt(1 - c * c), 0.0, c])
    with pytest.raises(CapViolation):
        oval_refraction_check(X, oval)


@given(st.floats(0.0, 2 * np.pi))
def test_deviation_invariant_under_rotation_about_P(angle):
    P = np.array([0.0, 0.0, 3.0])
    oval = OvalSpec(P, 3.6, 0.7, tau=0.05)
    X = lift([0.15, 0.05])
    R = rotation_about_axis(2, angle)
    d0 = oval_refraction_check(X, oval)
    d1 = oval_refraction_check(R @ X, oval)
    assert abs(d0 - d1) <= 1e-8


def test_cap_threshold_limits():
    P = np.array([0.0, 0.0, 2.0])
    kappa = 0.6
    # at b = |P|/kappa the cap is the whole visibility cone X·P >= kappa |P|
    assert cap_threshold(P, 2.0 / kappa, kappa) == pytest.approx(kappa * 2.0)


def test_oval_jet_against_analytic_fixture(rng):
    checked = 0
    while checked < 50:
        oval, X = random_oval(rng)
        if X @ oval.P - oval.cap_threshold < 0.05 * np.linalg.norm(oval.P):
            continue  # derivatives of h blow up at the cap boundary
        checked += 1
        rho = AnalyticRho.oval(oval.P, oval.b, oval.kappa)
        g_err, H_err = rho.self_test(X[:-1], step=1e-4)
        jet = oval_jet(X[:-1], oval)
        assert g_err <= 1e-6 * max(1.0, np.abs(jet.grad_rho).max())
        assert H_err <= 1e-4 * max(1.0, np.abs(jet.hess_rho).max())


def test_oval_jet_refracts_to_the_focus(rng):
    for _ in range(100):
        oval, X = random_oval(rng)
        jet = oval_jet(X[:-1], oval)
        Y, _ = refracted_direction(jet, oval.kappa)
        np.testing.assert_allclose(Y, unit(oval.P - jet.rho * X), atol=1e-12)
