import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from instances import feasible_l2_instance, feasible_linf_instance, regularized_instance
from oracles import (
    grid_search,
    lasso_pattern_enumeration,
    minnorm_l2_multiplier_search,
    minnorm_linf_vertex_enumeration,
    regularized_objective,
)
from sobolev_sysid.errors import InfeasibleError
from sobolev_sysid.solver import (
    SolverConfig,
    project_ball,
    solve_constrained_minnorm,
    solve_regularized,
    within_ball,
)


def test_project_ball_examples():
    np.testing.assert_allclose(project_ball([2.0, -0.5], 1.0, math.inf), [1.0, -0.5])
    np.testing.assert_allclose(project_ball([3.0, 4.0], 5.0, 2), [3.0, 4.0])
    np.testing.assert_allclose(project_ball([3.0, 4.0], 1.0, 2), [0.6, 0.8])


def test_project_ball_rejects_bad_radius():
    with pytest.raises(ValueError):
        project_ball([1.0], -1.0, 2)
    with pytest.raises(ValueError):
        project_ball([1.0], 1.0, 3)


@settings(max_examples=50, deadline=None)
@given(v=st.lists(st.floats(-100, 100), min_size=1, max_size=6), radius=st.floats(0, 50),
       q=st.sampled_from([2, math.inf]))
def test_projection_is_idempotent_and_inside(v, radius, q):
    p = project_ball(v, radius, q)
    norm = np.max(np.abs(p)) if q == math.inf else np.linalg.norm(p)
    assert norm <= radius * (1 + 1e-12) + 1e-12
    np.testing.assert_allclose(project_ball(p, radius, q), p, atol=1e-12)


def test_soft_threshold_example():
    rep = solve_regularized([(1.0, np.eye(2), np.array([3.0, 1.0]))], 2.0, 1)
    np.testing.assert_allclose(rep.alpha, [2.0, 0.0], atol=1e-10)
    assert rep.converged


def test_unregularized_interpolation():
    rng = np.random.default_rng(3)
    Phi = rng.normal(size=(6, 3))
    a = np.array([1.0, -2.0, 0.5])
    rep = solve_regularized([(1.0, Phi, Phi @ a)], 0.0, 1)
    np.testing.assert_allclose(rep.alpha, a, atol=1e-9)
    assert rep.objective < 1e-16


def test_group_penalty_zero_threshold():
    rep = solve_regularized([(1.0, np.eye(2), np.array([0.3, 0.4]))], 1.0, 2)
    np.testing.assert_allclose(rep.alpha, [0.0, 0.0], atol=1e-12)


def test_square_penalty_is_ridge():
    rng = np.random.default_rng(4)
    Phi = rng.normal(size=(8, 3))
    z = rng.normal(size=8)
    rep = solve_regularized([(1.0, Phi, z)], 0.7, 2, SolverConfig(square_penalty=True))
    ridge = np.linalg.solve(Phi.T @ Phi + 0.7 * np.eye(3), Phi.T @ z)
    np.testing.assert_allclose(rep.alpha, ridge, atol=1e-10)


def test_square_penalty_requires_two_norm():
    with pytest.raises(ValueError):
        solve_regularized([(1.0, np.eye(2), np.ones(2))], 1.0, 1, SolverConfig(square_penalty=True))


def test_nan_input_rejected():
    with pytest.raises(ValueError):
        solve_regularized([(1.0, np.eye(2), np.array([np.nan, 1.0]))], 1.0, 1)
    with pytest.raises(ValueError):
        solve_constrained_minnorm([(np.eye(2), np.array([np.inf, 1.0]), 1.0)])


def test_non_convergence_is_reported():
    rng = np.random.default_rng(5)
    Phi = rng.normal(size=(30, 10)) @ np.diag(np.logspace(0, -4, 10))
    with pytest.warns(RuntimeWarning):
        rep = solve_regularized([(1.0, Phi, rng.normal(size=30))], 1e-3, 1,
                                SolverConfig(max_iterations=3, polish=False))
    assert not rep.converged
    assert rep.status == "max_iterations"


def test_residuals_recomputed_from_alpha():
    rng = np.random.default_rng(6)
    blocks = [(1.0, rng.normal(size=(5, 2)), rng.normal(size=5)), (2.0, rng.normal(size=(5, 2)), rng.normal(size=5))]
    rep = solve_regularized(blocks, 0.5, 1)
    for (w, Phi, z), r in zip(blocks, rep.residuals):
        assert r == pytest.approx(np.linalg.norm(z - Phi @ rep.alpha), rel=1e-14)


def test_two_block_grid_search_example():
    rng = np.random.default_rng(7)
    blocks = [(1.0, rng.normal(size=(4, 2)), rng.normal(size=4)), (1.0, rng.normal(size=(4, 2)), rng.normal(size=4))]
    rep = solve_regularized(blocks, 1.0, 1)
    _, f_grid = grid_search(lambda a: regularized_objective(blocks, 1.0, 1, a), 2, 5.0, points=101)
    assert rep.objective == pytest.approx(f_grid, abs=1e-5)
    assert rep.objective <= f_grid + 1e-9


def test_minnorm_examples():
    one = np.ones((1, 1))
    rep = solve_constrained_minnorm([(one, np.array([5.0]), 0.0)], 2, 2)
    np.testing.assert_allclose(rep.alpha, [5.0], atol=1e-7)
    rep = solve_constrained_minnorm([(one, np.array([5.0]), 1.0)], 2, 2)
    np.testing.assert_allclose(rep.alpha, [4.0], atol=1e-7)


def test_minnorm_infeasible():
    # two blocks demanding a = 0 and a = 10 within 1
    one = np.ones((1, 1))
    with pytest.raises(InfeasibleError) as info:
        solve_constrained_minnorm([(one, np.array([0.0]), 1.0), (one, np.array([10.0]), 1.0)], 2, 1,
                                  SolverConfig(plateau_window=200))
    assert info.value.report is not None


def test_zero_matrix_block_with_violated_data_is_infeasible():
    with pytest.raises(InfeasibleError):
        solve_constrained_minnorm([(np.zeros((2, 2)), np.array([3.0, 0.0]), 1.0)], math.inf, 1)


def test_determinism():
    rng = np.random.default_rng(8)
    blocks = [(rng.normal(size=(6, 3)), rng.normal(size=6), 0.8)]
    a = solve_constrained_minnorm(blocks, math.inf, 1)
    b = solve_constrained_minnorm(blocks, math.inf, 1)
    np.testing.assert_array_equal(a.alpha, b.alpha)
    assert a.iterations == b.iterations


@pytest.mark.parametrize("seed", range(30))
def test_lasso_matches_pattern_enumeration(seed):
    blocks, lam = regularized_instance(seed)
    rep = solve_regularized(blocks, lam, 1)
    _, f_star = lasso_pattern_enumeration(blocks, lam)
    assert rep.converged
    assert rep.objective == pytest.approx(f_star, abs=1e-5)


@pytest.mark.parametrize("seed", range(30))
def test_group_penalty_matches_grid_search(seed):
    blocks, lam = regularized_instance(100 + seed)
    N = blocks[0][1].shape[1]
    rep = solve_regularized(blocks, lam, 2)
    _, f_grid = grid_search(lambda a: regularized_objective(blocks, lam, 2, a), N, 6.0, points=21)
    assert rep.objective <= f_grid + 1e-5
    assert rep.objective == pytest.approx(f_grid, abs=1e-5)


@pytest.mark.parametrize("seed", range(30))
def test_minnorm_linf_l1_matches_vertex_enumeration(seed):
    blocks = feasible_linf_instance(200 + seed)
    rep = solve_constrained_minnorm(blocks, math.inf, 1)
    _, f_star = minnorm_linf_vertex_enumeration(blocks)
    assert rep.converged
    assert rep.objective == pytest.approx(f_star, abs=1e-5)
    for (Phi, z, mu), r in zip(blocks, rep.residuals):
        assert within_ball(np.max(np.abs(z - Phi @ rep.alpha)), mu)


@pytest.mark.parametrize("seed", range(30))
def test_minnorm_l2_l2_matches_multiplier_search(seed):
    Phi, z, mu = feasible_l2_instance(300 + seed)
    rep = solve_constrained_minnorm([(Phi, z, mu)], 2, 2)
    _, f_star = minnorm_l2_multiplier_search(Phi, z, mu)
    assert rep.converged
    assert rep.objective == pytest.approx(f_star, abs=1e-5)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_regularized_objective_not_above_zero_vector(seed):
    blocks, lam = regularized_instance(seed)
    rep = solve_regularized(blocks, lam, 1)
    assert rep.objective <= regularized_objective(blocks, lam, 1, np.zeros_like(rep.alpha)) + 1e-12


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("q,r", [(math.inf, 1), (math.inf, 2), (2, 1), (2, 2)])
def test_certificate_accepts_optimum_and_rejects_worse_points(seed, q, r):
    from sobolev_sysid.solver import _certify

    blocks = feasible_linf_instance(400 + seed)
    if q == 2:
        Phi, z, mu = blocks[0]
        blocks = [(Phi, z, mu * np.sqrt(len(z)))]
    rep = solve_constrained_minnorm(blocks, q, r)
    assert _certify(blocks, q, r, False, rep.alpha, 1e-7)
    # a feasible but larger point: scale toward a strictly interior solution
    Phi, z, _ = blocks[0]
    inner = np.linalg.lstsq(Phi, z, rcond=None)[0]
    worse = 0.5 * rep.alpha + 0.5 * inner
    if np.linalg.norm(worse, r) > rep.objective * (1 + 1e-3) + 1e-3:
        assert not _certify(blocks, q, r, False, worse, 1e-7)
