import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from _instances import FOUR, budget, knapsack_lp, lp_subset_band
from robust_bands.band import (
    POSITIVITY_FLOOR,
    BetaVector,
    BudgetParams,
    compute_beta,
    default_budget,
    spread_slack,
    subset_objective,
    t_star,
    worst_case_widening,
)
from robust_bands.pathset import QuantileBounds, SamplePathSet, covered_mask, empirical_quantiles, envelope

pos = st.floats(1e-3, 1e3, allow_nan=False)
cvec = arrays(float, st.integers(1, 12), elements=pos)
unit = st.floats(0.0, 1.0)


# -- t* and beta -------------------------------------------------------------

@pytest.mark.parametrize("gamma, H, expected", [(0, 12, 1), (1, 12, 12), (0.25, 30, 8), (1 / 3, 3, 1)])
def test_t_star(gamma, H, expected):
    assert t_star(gamma, H) == expected


@pytest.mark.parametrize("gamma", [-0.01, 1.01])
def test_t_star_gamma_domain(gamma):
    with pytest.raises(ValueError):
        t_star(gamma, 4)


def test_beta_examples():
    c = [3.0, 1.0, 2.0]
    b = compute_beta(budget(c, c, 1 / 3))
    assert b.tStar == 1
    np.testing.assert_allclose(b.betaU, [1, 1, 1])
    b = compute_beta(budget(c, c, 2 / 3))
    assert b.tStar == 2
    np.testing.assert_allclose(b.betaU, [7 / 3, 4 / 3, 4 / 3])


@settings(max_examples=80, deadline=None)
@given(cvec)
def test_beta_endpoints(c):
    b0 = compute_beta(budget(c, c[::-1], 0.0))
    assert np.all(b0.betaU == 0) and np.all(b0.betaL == 0)
    b1 = compute_beta(budget(c, c[::-1], 1.0))
    np.testing.assert_allclose(b1.betaU, c)
    np.testing.assert_allclose(b1.betaL, c[::-1])


@settings(max_examples=300, deadline=None)
@given(cvec, unit)
def test_beta_sum_equals_worst_case(c, gamma):
    b = compute_beta(budget(c, c, gamma))
    assert b.betaU.sum() == pytest.approx(worst_case_widening(c, gamma), rel=1e-10, abs=1e-10)
    assert np.all(b.betaU >= 0)
    assert b.betaU.sum() <= c.sum() * (1 + 1e-12)


def test_beta_can_exceed_its_allowance():
    # The closed form spreads gamma * pivot over every step, so a small
    # allowance can be exceeded; only the sum is pinned.
    b = compute_beta(budget([3.0, 1.0], [1.0, 1.0], 0.5))
    np.testing.assert_allclose(b.betaU, [1.5, 1.5])


def test_beta_not_componentwise_monotone():
    c = [3.0, 1.0]
    lo = compute_beta(budget(c, c, 0.5)).betaU
    hi = compute_beta(budget(c, c, 0.51)).betaU
    assert hi[1] < lo[1]
    assert hi.sum() > lo.sum()


def test_beta_ties_are_harmless():
    c = np.array([2.0, 2.0, 2.0, 1.0])
    for g in np.linspace(0, 1, 21):
        assert compute_beta(budget(c, c, g)).betaU.sum() == pytest.approx(worst_case_widening(c, g))


@settings(max_examples=100, deadline=None)
@given(cvec, unit, unit)
def test_beta_sum_nondecreasing(c, g1, g2):
    lo, hi = sorted((g1, g2))
    s1 = compute_beta(budget(c, c, lo)).betaU.sum()
    s2 = compute_beta(budget(c, c, hi)).betaU.sum()
    assert s1 <= s2 + 1e-9 * max(1.0, s2)


# -- worst-case widening -----------------------------------------------------

@pytest.mark.parametrize("gamma, expected", [(1 / 3, 3.0), (2 / 3, 5.0), (0.0, 0.0), (1.0, 6.0)])
def test_worst_case_examples(gamma, expected):
    assert worst_case_widening([3.0, 1.0, 2.0], gamma) == pytest.approx(expected)


def test_worst_case_matches_linear_program():
    rng = np.random.default_rng(3)
    for _ in range(150):
        H = int(rng.integers(1, 9))
        c = rng.exponential(size=H) + 1e-3
        g = float(rng.uniform())
        assert worst_case_widening(c, g) == pytest.approx(knapsack_lp(c, g), rel=1e-8, abs=1e-9)


# -- budget parameters -------------------------------------------------------

def test_budget_params_validation():
    with pytest.raises(ValueError):
        BudgetParams(np.array([1.0, 0.0]), np.array([1.0, 1.0]), 0.5)
    with pytest.raises(ValueError):
        BudgetParams(np.array([1.0]), np.array([1.0, 1.0]), 0.5)
    with pytest.raises(ValueError):
        BudgetParams(np.array([1.0]), np.array([1.0]), 1.5)


def test_budget_params_json_round_trip():
    b = budget([1.0, 2.0], [0.5, 0.25], 0.3)
    d = b.to_dict()
    assert d == {"cU": [1.0, 2.0], "cL": [0.5, 0.25], "gamma": 0.3}
    back = BudgetParams.from_dict(d)
    assert np.array_equal(back.cU, b.cU) and back.gamma == 0.3
    assert b.with_gamma(0.9).gamma == 0.9


def test_default_budget_zero_to_ten():
    ps = SamplePathSet(np.arange(0.0, 11.0)[:, None])
    q = QuantileBounds(qU=np.array([9.0]), qL=np.array([2.0]), alpha=0.2)
    b = default_budget(ps, q)
    assert (b.cU[0], b.cL[0]) == (1.0, 2.0)
    b = default_budget(ps, q, margin=0.5)
    assert (b.cU[0], b.cL[0]) == (1.5, 2.5)


def test_default_budget_hard_bounds():
    rng = np.random.default_rng(0)
    ps = SamplePathSet(rng.integers(0, 15, size=(40, 6)).astype(float))
    q = empirical_quantiles(ps, 0.1)
    b = default_budget(ps, q, upper_bound=20, lower_bound=0)
    np.testing.assert_allclose(b.cU, 20 - q.qU)
    np.testing.assert_allclose(b.cL, np.maximum(q.qL, POSITIVITY_FLOOR))


def test_default_budget_constant_column():
    ps = SamplePathSet(np.full((5, 2), 3.0))
    b = default_budget(ps, empirical_quantiles(ps, 0.2))
    assert np.all(b.cU == POSITIVITY_FLOOR) and np.all(b.cL == POSITIVITY_FLOOR)


def test_default_budget_errors():
    ps = SamplePathSet(np.zeros((3, 2)))
    q = empirical_quantiles(SamplePathSet(np.zeros((3, 3))), 0.2)
    with pytest.raises(ValueError):
        default_budget(ps, q)
    with pytest.raises(ValueError):
        default_budget(ps, empirical_quantiles(ps, 0.2), margin=-1)


def test_full_budget_floor_reaches_sample_max():
    rng = np.random.default_rng(1)
    ps = SamplePathSet(rng.standard_normal((30, 5)))
    q = empirical_quantiles(ps, 0.1)
    b = default_budget(ps, q, gamma=1.0)
    beta = compute_beta(b)
    assert np.sum(q.qU + beta.betaU) == pytest.approx(ps.paths.max(axis=0).sum())


# -- slack -------------------------------------------------------------------

@pytest.mark.parametrize("how", ["uniform", "last-step", "proportional-to-c"])
def test_spread_slack_sums(how):
    out = spread_slack(3.0, 4, how, weights=np.array([1.0, 2.0, 3.0, 4.0]))
    assert out.sum() == pytest.approx(3.0) and np.all(out >= 0)


def test_spread_slack_shapes():
    np.testing.assert_allclose(spread_slack(2.0, 4), [0.5] * 4)
    np.testing.assert_allclose(spread_slack(2.0, 3, "last-step"), [0, 0, 2])
    np.testing.assert_allclose(spread_slack(3.0, 2, "proportional-to-c", [1.0, 2.0]), [1, 2])
    with pytest.raises(ValueError):
        spread_slack(1.0, 2, "sideways")


# -- fixed-subset closed form ------------------------------------------------

def test_subset_objective_four_paths():
    q = empirical_quantiles(FOUR, 0.5)
    assert q.qU.tolist() == [2, 2] and q.qL.tolist() == [1, 1]
    obj, b = subset_objective(FOUR, [1, 2], q, BetaVector.zeros(2))
    assert obj == 2 and b.lower.tolist() == [1, 1] and b.upper.tolist() == [2, 2]
    beta = BetaVector(np.array([1.0, 1.0]), np.zeros(2), 1)
    obj, b = subset_objective(FOUR, [1, 2], q, beta)
    assert obj == 4 and b.upper.tolist() == [3, 3]


def test_subset_objective_empty_subset():
    with pytest.raises(ValueError):
        subset_objective(FOUR, [], empirical_quantiles(FOUR, 0.5), BetaVector.zeros(2))


def _random_case(rng):
    n = int(rng.integers(2, 9))
    H = int(rng.integers(1, 5))
    X = rng.standard_normal((n, H)) * rng.uniform(0.5, 3)
    ps = SamplePathSet(X)
    alpha = float(rng.uniform(0.05, 0.6))
    q = empirical_quantiles(ps, alpha)
    m = int(rng.integers(1, n + 1))
    subset = sorted(rng.choice(n, size=m, replace=False).tolist())
    cU = rng.exponential(size=H) + 0.01
    cL = rng.exponential(size=H) + 0.01
    beta = compute_beta(BudgetParams(cU, cL, float(rng.choice([0.0, rng.uniform(), 1.0]))))
    return ps, q, subset, beta


def test_subset_objective_matches_linear_program():
    rng = np.random.default_rng(2024)
    for _ in range(150):
        ps, q, subset, beta = _random_case(rng)
        obj, _ = subset_objective(ps, subset, q, beta)
        assert obj == pytest.approx(lp_subset_band(ps, subset, q, beta), rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("spread", ["uniform", "last-step", "proportional-to-c"])
def test_subset_band_is_feasible(spread):
    rng = np.random.default_rng(7)
    for _ in range(100):
        ps, q, subset, beta = _random_case(rng)
        obj, b = subset_objective(ps, subset, q, beta, spread=spread)
        assert covered_mask(b, ps)[subset].all()
        assert np.all(b.upper >= q.qU) and np.all(b.lower <= q.qL)
        assert b.upper.sum() >= np.sum(q.qU + beta.betaU) - 1e-9
        assert b.lower.sum() <= np.sum(q.qL - beta.betaL) + 1e-9
        assert b.width == pytest.approx(obj, abs=1e-9)


def test_subset_objective_without_beta_is_envelope_width():
    rng = np.random.default_rng(11)
    for _ in range(50):
        ps, q, subset, _ = _random_case(rng)
        mx, mn = envelope(ps, subset)
        obj, _ = subset_objective(ps, subset, q, BetaVector.zeros(ps.H))
        assert obj == pytest.approx(np.sum(np.maximum(mx, q.qU) - np.minimum(mn, q.qL)))
