import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from nfrefractor.errors import DomainError, TotalInternalReflection
from nfrefractor.oracles import AnalyticRho, FDSpec, fd_grad_b
from nfrefractor.refraction import (MediaPair, RadialJet, grad_b, refracted_direction, refractor_normal,
                                    scalar_coeffs, scalar_coeffs_from_definitions, snell)
from nfrefractor.sphere import lift, unit


@st.composite
def jets(draw, x_max=0.5, kappas=(0.5, 0.7, 0.9, 1.3, 1.5)):
    kappa = draw(st.sampled_from(kappas))
    r = draw(st.floats(0.0, x_max))
    a = draw(st.floats(0.0, 2 * np.pi))
    rho = draw(st.floats(0.3, 3.0))
    p = np.array([draw(st.floats(-0.4, 0.4)), draw(st.floats(-0.4, 0.4))]) * rho
    h = [draw(st.floats(-2.0, 2.0)) for _ in range(3)]
    H = np.array([[h[0], h[1]], [h[1], h[2]]])
    jet = RadialJet(r * np.array([np.cos(a), np.sin(a)]), rho, p, H)
    if kappa > 1.0:
        assume(p @ p < 0.95 * rho ** 2 / (kappa ** 2 - 1.0))
    return jet, kappa


def test_media_pair():
    assert MediaPair(1.0, 1.5).kappa == pytest.approx(2 / 3)
    assert MediaPair(1.5, 1.0).regime == "kappa>1"
    with pytest.raises(DomainError):
        MediaPair(1.0, 1.0)
    with pytest.raises(DomainError):
        MediaPair(-1.0, 1.0)


def test_radial_jet_validation():
    with pytest.raises(DomainError):
        RadialJet([0.0, 0.0], -1.0, [0, 0], np.zeros((2, 2)))
    with pytest.raises(DomainError):
        RadialJet([0.0, 0.0], 1.0, [0, 0], [[0, 1], [0, 0]])
    with pytest.raises(DomainError):
        RadialJet([1.0, 0.0], 1.0, [0, 0], np.zeros((2, 2)))


def test_normal_at_apex():
    jet = RadialJet([0.0, 0.0], 2.0, [0.0, 0.0], np.zeros((2, 2)))
    np.testing.assert_allclose(refractor_normal(jet), [0, 0, 1.0], atol=1e-15)


def test_normal_plug_in():
    jet = RadialJet([0.0, 0.0], 1.0, [1.0, 0.0], np.zeros((2, 2)))
    np.testing.assert_allclose(refractor_normal(jet), np.array([-1.0, 0.0, 1.0]) / np.sqrt(2), atol=1e-15)


@given(jets())
def test_normal_dot_X(case):
    jet, _ = case
    c = scalar_coeffs(jet, 0.5)
    assert refractor_normal(jet) @ jet.X == pytest.approx(jet.rho / np.sqrt(c.a), rel=1e-12)
    assert np.linalg.norm(refractor_normal(jet)) == pytest.approx(1.0, abs=1e-14)


def test_snell_normal_incidence():
    X = lift([0.2, -0.1])
    np.testing.assert_allclose(snell(X, X, 0.7), X, atol=1e-15)


def test_snell_at_visibility_boundary():
    kappa, tau = 0.7, 0.05
    nu = np.array([0.0, 0.0, 1.0])
    c = kappa + tau
    X = np.array([np.sqrt(1 - c * c), 0.0, c])
    Y = snell(X, nu, kappa)
    assert np.linalg.norm(Y) == pytest.approx(1.0, abs=1e-14)
    assert Y @ nu > 0


def test_snell_classical_law(rng):
    kappa = 0.7
    for _ in range(500):
        nu = unit(rng.normal(size=3))
        X = unit(nu + 0.8 * rng.normal(size=3))
        if X @ nu <= 0.05:
            continue
        Y = snell(X, nu, kappa)
        s1 = np.linalg.norm(np.cross(X, nu))
        s2 = np.linalg.norm(np.cross(Y, nu))
        assert s2 == pytest.approx(kappa * s1, abs=1e-11)
        # X, nu and Y are coplanar
        assert abs(np.linalg.det(np.stack([X, nu, Y]))) <= 1e-12


def test_snell_total_internal_reflection():
    X = unit(np.array([1.0, 0.0, 0.2]))
    with pytest.raises(TotalInternalReflection):
        snell(X, np.array([0.0, 0.0, 1.0]), 1.5)


def test_snell_wrong_side():
    with pytest.raises(DomainError):
        snell(np.array([0, 0, 1.0]), np.array([0, 0, -1.0]), 0.7)


@pytest.mark.parametrize("kappa", [0.5, 0.7, 1.3])
def test_apex_coefficients(kappa):
    rho = 1.7
    jet = RadialJet([0.0, 0.0], rho, [0.0, 0.0], np.zeros((2, 2)))
    Y, c = refracted_direction(jet, kappa)
    assert c.q == pytest.approx(rho)
    assert c.b == pytest.approx((kappa - 1) / rho)
    np.testing.assert_allclose(Y, [0, 0, 1.0], atol=1e-15)
    assert c.sigma == pytest.approx(1.0)


def test_route_equivalence_plug_in():
    jet = RadialJet([0.0, 0.0], 1.0, [0.3, 0.0], np.zeros((2, 2)))
    Y, _ = refracted_direction(jet, 0.7)
    np.testing.assert_allclose(Y, snell(jet.X, refractor_normal(jet), 0.7), atol=1e-11)


@given(jets())
def test_route_equivalence(case):
    jet, kappa = case
    Y, c = refracted_direction(jet, kappa)
    np.testing.assert_allclose(Y, snell(jet.X, refractor_normal(jet), kappa), atol=1e-11)
    assert np.linalg.norm(Y) == pytest.approx(1.0, abs=1e-12)


@given(jets())
def test_sign_of_b(case):
    jet, kappa = case
    b = scalar_coeffs(jet, kappa).b
    assert (b < 0) if kappa < 1 else (b > 0)


@given(jets(kappas=(0.5, 0.7, 0.9)))
def test_transmitted_ray_leaves_through_the_normal(case):
    jet, kappa = case
    Y, _ = refracted_direction(jet, kappa)
    assert Y @ refractor_normal(jet) > 0


@given(jets())
def test_double_entry_coefficients(case):
    jet, kappa = case
    a = scalar_coeffs(jet, kappa)
    b = scalar_coeffs_from_definitions(jet, kappa)
    for name in ("a", "q", "b", "alpha", "beta", "Q", "sigma", "gamma", "F"):
        va, vb = getattr(a, name), getattr(b, name)
        assert va == pytest.approx(vb, rel=1e-8, abs=1e-10), name


def test_y_last_component_is_sigma_x_last(rng):
    for _ in range(200):
        jet = RadialJet(rng.uniform(-0.3, 0.3, 2), rng.uniform(0.5, 2), rng.uniform(-0.3, 0.3, 2), np.zeros((2, 2)))
        Y, c = refracted_direction(jet, 0.7)
        assert Y[-1] == pytest.approx(c.sigma * jet.X[-1], rel=1e-13)


def test_tir_gradient_bound():
    jet = RadialJet([0.0, 0.0], 1.0, [2.0, 0.0], np.zeros((2, 2)))
    with pytest.raises(TotalInternalReflection):
        scalar_coeffs(jet, 1.5)


def test_grad_b_vanishes_for_flat_jet():
    jet = RadialJet([0.2, 0.1], 1.3, [0.0, 0.0], np.zeros((2, 2)))
    np.testing.assert_array_equal(grad_b(jet, 0.7), [0.0, 0.0])


@pytest.mark.parametrize("kappa", [0.5, 0.7, 1.3])
def test_grad_b_radial_quadratic_against_fd(kappa):
    rho = AnalyticRho.radial_quadratic(1.0, 0.1)
    x = np.zeros(2)
    media = MediaPair.from_kappa(kappa)
    np.testing.assert_allclose(grad_b(rho.radial_jet(x), media), fd_grad_b(rho, media, x, FDSpec(1e-5)), atol=1e-7)


def test_grad_b_against_fd_off_axis(rng):
    media = MediaPair.from_kappa(0.7)
    for _ in range(50):
        S = rng.normal(size=(2, 2))
        rho = AnalyticRho.taylor_quadratic(1.2, 0.2 * rng.normal(size=2), S)
        x = rng.uniform(-0.3, 0.3, 2)
        np.testing.assert_allclose(grad_b(rho.radial_jet(x), media), fd_grad_b(rho, media, x), atol=1e-8)
