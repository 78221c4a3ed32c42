import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _instances import FOUR, GAMMAS, best_completion, milp_band, random_instance, sample_budget_at
from robust_bands.band import BetaVector, BudgetParams, compute_beta
from robust_bands.pathset import SamplePathSet, covered_mask, empirical_quantiles, naive_band
from robust_bands.solver import (
    InstanceTooLarge,
    SolveOptions,
    _Lagrangian,
    _node_bound,
    _Problem,
    brute_force,
    cover_target,
    greedy_incumbent,
    solve,
    solve_nominal,
    solve_robust,
)

EXACT = SolveOptions(gap_tolerance=0.0)


# -- cover target ------------------------------------------------------------

@pytest.mark.parametrize("n, alpha, mode, k", [
    (100, 0.1, "paper-beta", 90), (100, 0.1, "ceiling", 90),
    (10, 0.15, "paper-beta", 8), (10, 0.15, "ceiling", 9),
])
def test_cover_target(n, alpha, mode, k):
    assert cover_target(n, alpha, mode) == k


def test_options_validation():
    with pytest.raises(ValueError):
        SolveOptions(gap_tolerance=1.0)
    with pytest.raises(ValueError):
        SolveOptions(cover_mode="floor")
    with pytest.raises(ValueError):
        SolveOptions(cover_target=0)


# -- fixed examples ----------------------------------------------------------

def test_four_path_nominal():
    res = solve_nominal(FOUR, 0.5, EXACT)
    assert res.objective == 2 and res.subset == (1, 2)
    assert res.proven_optimal and res.gap == 0


def test_four_path_robust_with_lifted_upper():
    q = empirical_quantiles(FOUR, 0.5)
    # cU = (1, 1) at gamma 1 gives betaU = (1, 1); cL at the floor gives betaL ~ 0.
    budget = BudgetParams(np.ones(2), np.full(2, 1e-9), 1.0)
    res = solve_robust(FOUR, 0.5, budget, EXACT)
    assert res.objective == pytest.approx(4, abs=1e-8)
    assert np.all(res.band.upper >= q.qU)


def test_single_path():
    ps = SamplePathSet(np.array([[1.0, -2.0, 3.0]]))
    res = solve_nominal(ps, 0.5, EXACT)
    assert res.objective == 0
    np.testing.assert_array_equal(res.band.upper, ps.paths[0])


def test_cover_all_gives_clipped_envelope():
    rng = np.random.default_rng(0)
    ps = SamplePathSet(rng.standard_normal((9, 3)))
    res = solve(ps, 0.1, opts=SolveOptions(cover_target=9, gap_tolerance=0))
    np.testing.assert_allclose(res.band.upper, ps.paths.max(axis=0))
    np.testing.assert_allclose(res.band.lower, ps.paths.min(axis=0))


def test_gamma_one_objective_formula():
    rng = np.random.default_rng(4)
    for _ in range(20):
        ps, alpha = random_instance(rng, n_range=(4, 8), h_range=(1, 4), max_excl=2)
        b = sample_budget_at(ps, alpha, 1.0)
        res = brute_force(ps, alpha, b)
        q = empirical_quantiles(ps, alpha)
        lenv = np.minimum(q.qL, ps.paths[list(res.subset)].min(axis=0)).sum()
        expected = ps.paths.max(axis=0).sum() - min(lenv, np.sum(q.qL - b.cL))
        # allowances floored at 1e-9 (where qU is already the max) add up to H * 1e-9
        tol = 2e-9 * ps.H
        assert res.objective == pytest.approx(expected, abs=tol)
        assert solve_robust(ps, alpha, b, EXACT).objective == pytest.approx(expected, abs=tol)


# -- brute force -------------------------------------------------------------

def test_brute_force_guard():
    with pytest.raises(InstanceTooLarge, match="n=21"):
        brute_force(SamplePathSet(np.zeros((21, 1))), 0.1)
    with pytest.raises(InstanceTooLarge, match="exclusions"):
        brute_force(SamplePathSet(np.random.default_rng(0).standard_normal((20, 1))), 0.4)


def test_brute_force_is_exhaustive_minimum():
    rng = np.random.default_rng(5)
    ps, alpha = random_instance(rng, n_range=(7, 7), h_range=(3, 3), max_excl=2)
    res = brute_force(ps, alpha)
    from itertools import combinations
    from robust_bands.band import subset_objective

    q = empirical_quantiles(ps, alpha)
    for s in combinations(range(ps.n), res.k):
        assert res.objective <= subset_objective(ps, s, q, BetaVector.zeros(ps.H))[0] + 1e-12


# -- oracle equivalence ------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(GAMMAS))
def test_solver_matches_brute_force(seed, gamma):
    ps, alpha = random_instance(np.random.default_rng(seed))
    budget = sample_budget_at(ps, alpha, gamma)
    res = solve_robust(ps, alpha, budget, EXACT)
    assert res.objective == pytest.approx(brute_force(ps, alpha, budget).objective, abs=1e-9)
    if gamma == 0:
        assert solve_nominal(ps, alpha, EXACT).objective == res.objective


def test_solver_matches_big_m_program():
    rng = np.random.default_rng(17)
    for i in range(30):
        ps, alpha = random_instance(rng, n_range=(4, 9), h_range=(1, 4), max_excl=3)
        gamma = GAMMAS[i % 4]
        budget = sample_budget_at(ps, alpha, gamma)
        res = solve_robust(ps, alpha, budget, EXACT)
        assert res.objective == pytest.approx(milp_band(ps, alpha, res.k, budget), rel=1e-6, abs=1e-6)


def test_larger_instances_match_brute_force():
    rng = np.random.default_rng(23)
    for _ in range(10):
        ps, alpha = random_instance(rng, n_range=(16, 20), h_range=(3, 6), max_excl=5)
        for gamma in (0.0, 0.5):
            budget = sample_budget_at(ps, alpha, gamma)
            assert solve_robust(ps, alpha, budget, EXACT).objective == pytest.approx(
                brute_force(ps, alpha, budget).objective, abs=1e-9)


# -- properties --------------------------------------------------------------

def test_zero_budget_equals_nominal():
    rng = np.random.default_rng(31)
    for _ in range(40):
        ps, alpha = random_instance(rng)
        nom = solve_nominal(ps, alpha, EXACT)
        rob = solve_robust(ps, alpha, sample_budget_at(ps, alpha, 0.0), EXACT)
        assert nom.objective == rob.objective


def test_width_monotone_in_gamma():
    rng = np.random.default_rng(37)
    for _ in range(10):
        ps, alpha = random_instance(rng, n_range=(8, 14), h_range=(2, 5))
        objs = [solve_robust(ps, alpha, sample_budget_at(ps, alpha, g), EXACT).objective
                for g in np.linspace(0, 1, 11)]
        assert all(b >= a - 1e-9 for a, b in zip(objs, objs[1:]))


def test_exact_coverage_when_naive_band_is_tight():
    # Any feasible band contains the naive band, so paths inside it are always
    # covered; exactness can only hold when the naive band covers fewer than k.
    rng = np.random.default_rng(41)
    checked = 0
    for _ in range(200):
        ps, alpha = random_instance(rng, h_range=(2, 5))
        k = cover_target(ps.n, alpha)
        if covered_mask(naive_band(ps, alpha), ps).sum() >= k:
            continue
        res = solve_nominal(ps, alpha, EXACT)
        assert len(res.covered) == k
        checked += 1
    assert checked >= 100


def test_result_invariants():
    rng = np.random.default_rng(43)
    for i in range(40):
        ps, alpha = random_instance(rng, n_range=(6, 30), h_range=(1, 6), max_excl=4)
        budget = sample_budget_at(ps, alpha, GAMMAS[i % 4])
        res = solve_robust(ps, alpha, budget, SolveOptions(gap_tolerance=0.05))
        assert len(res.covered) >= res.k
        assert covered_mask(res.band, ps)[list(res.covered)].all()
        assert res.lower_bound <= res.objective + 1e-12
        assert res.gap == pytest.approx((res.objective - res.lower_bound) / res.objective, abs=1e-12)
        nb = naive_band(ps, alpha)
        assert np.all(res.band.upper >= nb.upper) and np.all(res.band.lower <= nb.lower)


def test_gap_tolerance_is_respected():
    rng = np.random.default_rng(47)
    for _ in range(10):
        ps, alpha = random_instance(rng, n_range=(12, 18), h_range=(2, 5), max_excl=4)
        exact = brute_force(ps, alpha).objective
        res = solve_nominal(ps, alpha, SolveOptions(gap_tolerance=0.05))
        assert res.objective <= exact / (1 - 0.05) + 1e-9


def test_node_limit_returns_incumbent():
    rng = np.random.default_rng(53)
    ps = SamplePathSet(rng.standard_t(2, size=(200, 12)))
    res = solve_nominal(ps, 0.1, SolveOptions(gap_tolerance=0.0, node_limit=1))
    assert len(res.covered) >= res.k
    if not res.proven_optimal:
        assert res.gap > 0 and res.nodes_explored == 1


def test_warm_start_does_not_change_objective():
    rng = np.random.default_rng(59)
    for _ in range(10):
        ps, alpha = random_instance(rng)
        budget = sample_budget_at(ps, alpha, 0.4)
        cold = solve_robust(ps, alpha, budget, EXACT)
        warm_seed = brute_force(ps, alpha, budget.with_gamma(0.8)).subset
        warm = solve_robust(ps, alpha, budget, SolveOptions(gap_tolerance=0.0, warm_start=warm_seed))
        assert warm.objective == pytest.approx(cold.objective, abs=1e-12)


def test_to_dict_keys():
    d = solve_nominal(FOUR, 0.5, EXACT).to_dict()
    for key in ("alpha", "gamma", "lower", "upper", "width", "covered_count", "n", "H",
                "covered", "objective", "lower_bound", "gap", "nodes", "proven_optimal"):
        assert key in d
    assert d["covered"] == [1, 2] and d["proven_optimal"] is True


# -- incumbent ---------------------------------------------------------------

def test_greedy_drops_outlier():
    rng = np.random.default_rng(61)
    X = rng.standard_normal((10, 4))
    X[6] += 25
    ps = SamplePathSet(X)
    # alpha 0.3 keeps the outlier above the upper quantile; k = n - 1.
    q = empirical_quantiles(ps, 0.3)
    assert 6 not in greedy_incumbent(ps, q, BetaVector.zeros(4), 9)


def test_greedy_edge_cases():
    ps = SamplePathSet(np.random.default_rng(0).standard_normal((5, 2)))
    q = empirical_quantiles(ps, 0.2)
    assert greedy_incumbent(ps, q, BetaVector.zeros(2), 5) == (0, 1, 2, 3, 4)
    same = SamplePathSet(np.ones((5, 2)))
    s = greedy_incumbent(same, empirical_quantiles(same, 0.2), BetaVector.zeros(2), 3)
    assert len(s) == 3


# -- bound validity ----------------------------------------------------------

def _random_node(rng, n):
    while True:
        status = rng.choice([0, 0, 0, 1, 2], size=n).astype(np.int8)
        if (status == 0).sum() >= 2:
            return status


def test_node_bounds_never_exceed_best_completion():
    rng = np.random.default_rng(67)
    checked = 0
    for i in range(300):
        ps, alpha = random_instance(rng, n_range=(5, 10), h_range=(1, 4), max_excl=4)
        k = cover_target(ps.n, alpha)
        q = empirical_quantiles(ps, alpha)
        beta = compute_beta(sample_budget_at(ps, alpha, GAMMAS[i % 4]))
        prob = _Problem(ps.paths, q, beta)
        status = _random_node(rng, ps.n)
        remaining = (ps.n - k) - int((status == 2).sum())
        if remaining < 0:
            continue
        truth = best_completion(prob.subset_value, status, remaining)
        bound, st2, leaf = _node_bound(prob, status, remaining)
        assert bound <= truth + 1e-9
        if leaf is not None:
            assert bound == pytest.approx(truth, abs=1e-9)
            continue
        # free inclusion must not change the best completion
        assert best_completion(prob.subset_value, st2, remaining) == pytest.approx(truth, abs=1e-9)
        lag = _Lagrangian(prob, st2, remaining)
        lval, _ = lag.bound(truth, np.inf, iters=200)
        assert lval <= truth + 1e-9
        for _ in range(5):
            lam = rng.exponential(size=lag.drop.shape)
            assert lag.value(lam, rng.uniform(), rng.uniform())[0] <= truth + 1e-9
        checked += 1
    assert checked > 100
