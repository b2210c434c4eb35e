import numpy as np
import pytest

from nfrefractor.errors import DomainError, HypothesisViolation
from nfrefractor.ovals import OvalSpec, cap_threshold, oval_radial_many
from nfrefractor.receiver import plane, quadratic_graph
from nfrefractor.refraction import MediaPair
from nfrefractor.solver import (DiskDomain, EnergyProblem, RefractorEnvelope, SolverSettings, SourceDensity,
                                TargetPoint, b_bounds, cell_masses, consistency_report, envelope_eval,
                                legendre_b, legendre_tolerance, make_grid, random_targets, solve,
                                supporting_sums, trace_energy)

MEDIA = MediaPair.from_kappa(0.7)
DOMAIN = DiskDomain((0.0, 0.0), 0.2)
SURFACE = plane(3.0)


def problem(Zs, masses=None, density=None, surface=SURFACE):
    masses = np.ones(len(Zs)) if masses is None else masses
    targets = [TargetPoint(np.asarray(Z, float), float(m)) for Z, m in zip(Zs, masses)]
    return EnergyProblem(density or SourceDensity.constant(), DOMAIN, targets, MEDIA, surface)


def test_grid_weights():
    grid = make_grid(DOMAIN, SourceDensity.constant(), 64)
    # sphere measure of the cap {|x| <= r} is 2 pi (1 - sqrt(1 - r^2))
    exact = 2 * np.pi * (1 - np.sqrt(1 - 0.2 ** 2))
    assert grid.total == pytest.approx(exact, rel=5e-3)
    assert np.all(np.linalg.norm(grid.points, axis=1) <= 0.2)


def test_grid_and_domain_validation():
    with pytest.raises(DomainError):
        make_grid(DOMAIN, SourceDensity.constant(), 4)
    with pytest.raises(DomainError):
        DiskDomain((0.5, 0.0), 0.6)


def test_density_polynomial():
    f = SourceDensity((1.0, 2.0))
    assert f(np.array([0.3, 0.4])) == pytest.approx(1.0 + 2.0 * 0.25)


def test_single_target_is_immediate():
    grid = make_grid(DOMAIN, SourceDensity.constant(), 32)
    pb = problem([[0.1, -0.1, 3.0]]).normalized(grid)
    env, rep = solve(pb, grid)
    assert rep.iterations == 0
    assert rep.traced_masses[0] == pytest.approx(grid.total, rel=1e-14)
    assert rep.focusing_max_dev <= 1e-10


def test_unnormalized_problem_is_rejected():
    grid = make_grid(DOMAIN, SourceDensity.constant(), 16)
    with pytest.raises(DomainError):
        solve(problem([[0.1, -0.1, 3.0]], [5.0]), grid)


def test_ties_go_to_the_lowest_index():
    Z = np.array([0.1, 0.0, 3.0])
    env = RefractorEnvelope(np.stack([Z, Z]), [4.0, 4.0], 0.7)
    grid = make_grid(DOMAIN, SourceDensity.constant(), 16)
    _, istar = env.evaluate(grid.directions)
    assert np.all(istar == 0)


def test_envelope_dominates_every_oval(rng):
    Zs = np.array([[0.2, 0.0, 3.0], [-0.1, 0.2, 3.0], [0.0, -0.2, 3.0]])
    env = RefractorEnvelope(Zs, [4.0, 4.05, 4.02], 0.7)
    grid = make_grid(DOMAIN, SourceDensity.constant(), 32)
    rho, istar = env.evaluate(grid.directions)
    H = env.radii(grid.directions)
    assert np.all(np.nan_to_num(H, nan=-np.inf) <= rho + 1e-15)
    np.testing.assert_array_equal(H[istar, np.arange(rho.size)], rho)


def test_raising_b_shrinks_the_cell():
    Zs = np.array([[0.2, 0.0, 3.0], [-0.2, 0.0, 3.0]])
    grid = make_grid(DOMAIN, SourceDensity.constant(), 32)
    env = RefractorEnvelope(Zs, [4.0, 4.0], 0.7)
    m0 = cell_masses(env, grid)[1]
    for db in (5e-3, 1e-2, 2e-2):
        assert cell_masses(env.with_b(1, 4.0 + db), grid)[1] < m0
        assert cell_masses(env.with_b(1, 4.0 - db), grid)[1] > m0


def test_symmetric_pair_splits_evenly():
    grid = make_grid(DOMAIN, SourceDensity.constant(), 32)
    pb = problem([[0.3, 0.0, 3.0], [-0.3, 0.0, 3.0]]).normalized(grid)
    env, rep = solve(pb, grid)
    assert env.b_vec[0] == pytest.approx(env.b_vec[1], rel=1e-14)
    assert rep.traced_masses[0] == pytest.approx(rep.traced_masses[1], rel=1e-12)


def test_grid_refinement_converges():
    Zs = np.array([[0.2, 0.0, 3.0], [-0.1, 0.2, 3.0], [0.0, -0.2, 3.0]])
    env = RefractorEnvelope(Zs, [4.0, 4.05, 4.02], 0.7)
    fine = cell_masses(env, make_grid(DOMAIN, SourceDensity.constant(), 512))
    errs = [np.abs(cell_masses(env, make_grid(DOMAIN, SourceDensity.constant(), m)) - fine).max()
            for m in (32, 64, 128)]
    assert errs[2] < errs[0]
    assert errs[2] < 2e-3 * fine.sum()


def test_b_bounds_bracket_the_cap():
    Z = np.array([0.3, 0.0, 3.0])
    grid = make_grid(DOMAIN, SourceDensity.constant(), 16)
    lo, hi = b_bounds(Z, 0.7, grid.directions)
    assert np.linalg.norm(Z) <= lo < hi < np.linalg.norm(Z) / 0.7
    assert np.min(grid.directions @ Z) >= cap_threshold(Z, lo, 0.7)


def test_b_bounds_reject_invisible_target():
    Z = np.array([3.0, 0.0, 0.5])
    grid = make_grid(DOMAIN, SourceDensity.constant(), 16)
    with pytest.raises(HypothesisViolation):
        b_bounds(Z, 0.7, grid.directions)


def test_legendre_recovers_a_single_oval():
    grid = make_grid(DOMAIN, SourceDensity.constant(), 32)
    Z = np.array([0.1, -0.1, 3.0])
    b = 4.1
    rho = oval_radial_many(grid.directions, Z, b, 0.7)
    val, _ = legendre_b(rho, grid.directions, Z, 0.7)
    assert abs(val - b) <= legendre_tolerance(rho, grid, Z, 0.7)
    assert abs(val - b) <= 1e-13


def test_legendre_empty_grid():
    with pytest.raises(DomainError):
        legendre_b(np.array([]), np.zeros((0, 3)), np.ones(3), 0.7)


@pytest.fixture(scope="module")
def solved():
    rng = np.random.default_rng(7)
    grid = make_grid(DOMAIN, SourceDensity.constant(), 48)
    Zs = random_targets(SURFACE, 5, 0.5, rng)
    pb = problem(Zs, rng.uniform(0.5, 1.5, 5)).normalized(grid)
    env, rep = solve(pb, grid, SolverSettings(tol=1e-3))
    return pb, grid, env, rep


def test_solver_balances_energy(solved):
    pb, grid, env, rep = solved
    assert rep.converged
    assert rep.sup_error <= 1e-3 * grid.total
    assert rep.max_conservation_error <= 1e-12
    assert rep.focusing_max_dev <= 1e-6
    assert env.b_vec[0] == pytest.approx(np.linalg.norm(0.05 * np.array([0, 0, 1.0]) - pb.Zs[0]) / 0.7 + 0.05)


def test_solver_history_ends_below_target(solved):
    pb, grid, env, rep = solved
    assert rep.history[-1][1] <= 1e-3 * grid.total
    assert rep.history[0][1] > rep.history[-1][1]


def test_consistency_of_solution(solved):
    pb, grid, env, rep = solved
    cons = consistency_report(env, grid)
    assert cons.legendre_ratio <= 1.0
    assert cons.globality_violations == 0
    assert cons.control_detected
    assert cons.max_supporting_excess <= 1e-12 * env.b_vec.max()


def test_supporting_sums_equal_b_on_own_cell(solved):
    pb, grid, env, rep = solved
    S, istar = supporting_sums(env, grid.directions)
    own = S[istar, np.arange(istar.size)]
    np.testing.assert_allclose(own, env.b_vec[istar], rtol=1e-13)


def test_trace_energy_strict_flags_empty_cells():
    from nfrefractor.errors import QuadratureError
    grid = make_grid(DOMAIN, SourceDensity.constant(), 16)
    pb = problem([[0.1, 0.0, 3.0], [0.1, 0.0, 3.0]]).normalized(grid)
    env = RefractorEnvelope(pb.Zs, [4.0, 4.0], 0.7)
    with pytest.raises(QuadratureError):
        trace_energy(pb, env, grid)


def test_problem_validation():
    grid = make_grid(DOMAIN, SourceDensity.constant(), 16)
    with pytest.raises(DomainError):
        problem([[0.1, 0.0, 2.9]]).check(grid)
    with pytest.raises(HypothesisViolation):
        problem([[0.0, 0.0, 0.0]])
    with pytest.raises(HypothesisViolation):
        problem([[0.1, 0.0, -1.0]], surface=plane(-1.0)).check(grid)
    with pytest.raises(DomainError):
        EnergyProblem(SourceDensity.constant(), DOMAIN, [TargetPoint(np.ones(3), 1.0)],
                      MediaPair.from_kappa(1.3), SURFACE)


def test_envelope_point_evaluation():
    env = RefractorEnvelope(np.array([[0.0, 0.0, 3.0]]), [3.6], 0.7)
    rho, i = envelope_eval(env, np.zeros(2))
    assert i == 0
    assert rho == pytest.approx((3.0 - 3.6 * 0.7) / 0.3)


def test_random_targets_lie_on_receiver(rng):
    surf = quadratic_graph(3.0, 0.1)
    Zs = random_targets(surf, 50, 0.5, rng)
    assert np.abs([surf.psi(Z) for Z in Zs]).max() <= 1e-14
    assert np.linalg.norm(Zs[:, :2], axis=1).max() <= 0.5
