"""Random small instances and independent optimization oracles for the tests."""

import itertools

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from robust_bands.band import BudgetParams, compute_beta, default_budget
from robust_bands.pathset import SamplePathSet, empirical_quantiles

GAMMAS = (0.0, 0.3, 0.7, 1.0)

FOUR = SamplePathSet(np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [10.0, 10.0]]))


def random_instance(rng, n_range=(4, 12), h_range=(1, 5), max_excl=3, heavy=None):
    """Continuous instance with an alpha chosen so that ``n - k <= max_excl``."""
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    H = int(rng.integers(h_range[0], h_range[1] + 1))
    heavy = bool(rng.integers(2)) if heavy is None else heavy
    X = rng.standard_t(2, size=(n, H)) if heavy else rng.standard_normal((n, H))
    excl = int(rng.integers(1, max_excl + 1))
    alpha = excl / n
    return SamplePathSet(X), alpha


def sample_budget_at(paths, alpha, gamma, margin=0.0):
    q = empirical_quantiles(paths, alpha)
    return default_budget(paths, q, margin, gamma)


def lp_subset_band(paths, subset, q, beta):
    """Optimal band covering ``subset`` by linear programming (no closed form)."""
    X = paths.paths[list(subset)]
    H = paths.H
    # variables: u (H), l (H); minimize sum u - sum l
    c = np.concatenate([np.ones(H), -np.ones(H)])
    A, b = [], []
    # sum u >= sum(qU + betaU)  ->  -sum u <= -floor
    A.append(np.concatenate([-np.ones(H), np.zeros(H)]))
    b.append(-float(np.sum(q.qU + beta.betaU)))
    A.append(np.concatenate([np.zeros(H), np.ones(H)]))
    b.append(float(np.sum(q.qL - beta.betaL)))
    lo_u = np.maximum(q.qU, X.max(axis=0))
    hi_l = np.minimum(q.qL, X.min(axis=0))
    bounds = [(v, None) for v in lo_u] + [(None, v) for v in hi_l]
    res = linprog(c, A_ub=np.array(A), b_ub=np.array(b), bounds=bounds, method="highs")
    assert res.status == 0
    return res.fun


def knapsack_lp(c, gamma):
    """max c.z over z in [0,1]^H with sum z <= gamma H, by linear programming."""
    c = np.asarray(c, float)
    H = c.size
    res = linprog(-c, A_ub=np.ones((1, H)), b_ub=[gamma * H], bounds=[(0, 1)] * H, method="highs")
    assert res.status == 0
    return -res.fun


def milp_band(paths, alpha, k, budget=None):
    """Big-M mixed-integer formulation of the band problem (independent oracle)."""
    X = paths.paths
    n, H = X.shape
    q = empirical_quantiles(paths, alpha)
    if budget is None:
        bu = bl = np.zeros(H)
    else:
        beta = compute_beta(budget, H)
        bu, bl = beta.betaU, beta.betaL
    M = 2 * (X.max() - X.min()) + 1.0
    nv = 2 * H + n  # u, l, delta
    c = np.concatenate([np.ones(H), -np.ones(H), np.zeros(n)])
    rows, lb, ub = [], [], []
    for i in range(n):
        for t in range(H):
            r = np.zeros(nv)  # u_t >= x - M(1 - d)  ->  u_t - M d >= x - M
            r[t] = 1
            r[2 * H + i] = -M
            rows.append(r); lb.append(X[i, t] - M); ub.append(np.inf)
            r = np.zeros(nv)  # l_t <= x + M(1 - d)  ->  l_t + M d <= x + M
            r[H + t] = 1
            r[2 * H + i] = M
            rows.append(r); lb.append(-np.inf); ub.append(X[i, t] + M)
    r = np.zeros(nv); r[2 * H:] = 1
    rows.append(r); lb.append(k); ub.append(np.inf)
    r = np.zeros(nv); r[:H] = 1
    rows.append(r); lb.append(float(np.sum(q.qU + bu))); ub.append(np.inf)
    r = np.zeros(nv); r[H:2 * H] = 1
    rows.append(r); lb.append(-np.inf); ub.append(float(np.sum(q.qL - bl)))
    lo = np.concatenate([q.qU, np.full(H, -np.inf), np.zeros(n)])
    hi = np.concatenate([np.full(H, np.inf), q.qL, np.ones(n)])
    integ = np.concatenate([np.zeros(2 * H), np.ones(n)])
    res = milp(c, constraints=LinearConstraint(np.array(rows), lb, ub), integrality=integ,
               bounds=Bounds(lo, hi), options={"mip_rel_gap": 0.0})
    assert res.status == 0
    return res.fun


def best_completion(value_of_mask, status, remaining):
    """Minimum over every consistent completion with exactly ``remaining`` more exclusions."""
    und = np.flatnonzero(status == 0)
    best = np.inf
    for ex in itertools.combinations(und, min(remaining, und.size)):
        mask = status != 2
        mask[list(ex)] = False
        best = min(best, value_of_mask(mask))
    return best


def budget(cU, cL, gamma):
    return BudgetParams(np.asarray(cU, float), np.asarray(cL, float), gamma)
