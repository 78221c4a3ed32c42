"""Bisection with K-fold cross-validation for the robustness budget.

The held-out coverage of the robust band, minus the target ``1 - alpha``,
is estimated at the midpoint of the current bracket; a negative estimate
moves the bracket right, otherwise left. After a fixed number of halvings
the midpoint is used to solve once more on every path.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .band import BudgetParams, default_budget
from .pathset import ConfidenceBand, QuantileBounds, SamplePathSet, coverage_rate, empirical_quantiles
from .solver import SolveOptions, SolveResult, solve_robust

__all__ = [
    "BUDGET_SCOPES",
    "BudgetRule",
    "TunerConfig",
    "TunerResult",
    "FoldSolveError",
    "sample_budget",
    "kfold_partition",
    "estimate_f",
    "tune_gamma",
    "worker_count",
]

BUDGET_SCOPES = ("full", "fold")

BudgetRule = Callable[[SamplePathSet, QuantileBounds, float], BudgetParams]


class FoldSolveError(RuntimeError):
    """A fold solve failed; ``fold`` is the 0-based held-out partition."""

    def __init__(self, fold: int, cause: Exception):
        super().__init__(f"fold {fold}: {cause}")
        self.fold = fold


def sample_budget(margin: float = 0.0, upper_bound=None, lower_bound=None) -> BudgetRule:
    """Budget rule built on :func:`default_budget` with fixed options."""

    def rule(paths: SamplePathSet, q: QuantileBounds, gamma: float) -> BudgetParams:
        return default_budget(paths, q, margin, gamma, upper_bound=upper_bound, lower_bound=lower_bound)

    return rule


def worker_count() -> int:
    """Thread cap from ``ROBUST_BANDS_THREADS`` (default 1)."""
    raw = os.environ.get("ROBUST_BANDS_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True)
class TunerConfig:
    K: int = 2
    max_iterations: int = 10
    seed: int = 0
    gap_tolerance: float = 0.01
    final_gap_tolerance: float | None = None
    node_limit: int | None = 200_000
    warm_start: bool = False
    slack_spread: str = "uniform"
    cover_mode: str = "paper-beta"
    # "full": widening allowances fixed once from all n paths; "fold": rebuilt
    # from each fold's training paths.
    budget_scope: str = "full"

    def __post_init__(self):
        if self.budget_scope not in BUDGET_SCOPES:
            raise ValueError(f"budget_scope must be one of {BUDGET_SCOPES}")
        if self.K < 2:
            raise ValueError(f"K must be at least 2, got {self.K}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")

    def solve_options(self, final: bool = False, warm: Sequence[int] | None = None) -> SolveOptions:
        gap = self.gap_tolerance
        if final and self.final_gap_tolerance is not None:
            gap = self.final_gap_tolerance
        return SolveOptions(
            gap_tolerance=gap,
            node_limit=self.node_limit,
            slack_spread=self.slack_spread,
            cover_mode=self.cover_mode,
            warm_start=None if warm is None else tuple(warm),
        )


@dataclass(frozen=True)
class TunerResult:
    gamma_hat: float
    trace: tuple[tuple[float, float], ...]
    final_band: ConfidenceBand
    final: SolveResult | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        band = self.final.to_dict() if self.final is not None else None
        return {
            "gamma_hat": self.gamma_hat,
            "trace": [[g, f] for g, f in self.trace],
            "band": band,
        }


def kfold_partition(n: int, K: int, seed: int) -> list[np.ndarray]:
    """Shuffle ``0..n-1`` and cut into ``K`` equal folds.

    When ``K`` does not divide ``n`` the ``n mod K`` highest indices are left
    out, so every fold has ``n // K`` paths.
    """
    if K < 2:
        raise ValueError(f"K must be at least 2, got {K}")
    if K > n:
        raise ValueError(f"cannot split {n} paths into {K} folds")
    m = n // K
    perm = np.random.default_rng(seed).permutation(m * K)
    return [np.sort(perm[j * m:(j + 1) * m]) for j in range(K)]


def _fold_solve(paths, train_idx, test_idx, alpha, gamma, budget_rule, opts):
    train = paths.subset(train_idx)
    q = empirical_quantiles(train, alpha, method=opts.quantile_method)
    budget = budget_rule(train, q, gamma)
    res = solve_robust(train, alpha, budget, opts)
    return coverage_rate(res.band, paths.subset(test_idx)), res


def estimate_f(gamma: float, paths: SamplePathSet, partitions: Sequence[np.ndarray], alpha: float,
               budget_rule: BudgetRule | None = None, opts: SolveOptions | None = None,
               warm: list | None = None, workers: int | None = None) -> float:
    """Mean held-out coverage across folds minus ``1 - alpha``.

    ``warm`` (one entry per fold, updated in place) carries covered subsets,
    as positions within each fold's training set, between calls.
    """
    budget_rule = budget_rule or sample_budget()
    opts = opts or SolveOptions()
    workers = worker_count() if workers is None else workers
    folds = [np.asarray(p, dtype=int) for p in partitions]
    pool_idx = np.sort(np.concatenate(folds))

    def job(k):
        train_idx = np.setdiff1d(pool_idx, folds[k])
        o = opts
        if warm is not None and warm[k] is not None:
            o = replace(opts, warm_start=tuple(warm[k]))
        try:
            return _fold_solve(paths, train_idx, folds[k], alpha, gamma, budget_rule, o)
        except Exception as exc:  # noqa: BLE001 - re-raised with the fold attached
            raise FoldSolveError(k, exc) from exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=min(workers, len(folds))) as ex:
            results = list(ex.map(job, range(len(folds))))
    else:
        results = [job(k) for k in range(len(folds))]
    if warm is not None:
        for k, (_, res) in enumerate(results):
            warm[k] = res.subset
    return float(np.mean([c for c, _ in results])) - (1 - alpha)


def tune_gamma(paths: SamplePathSet, alpha: float, config: TunerConfig | None = None,
               budget_rule: BudgetRule | None = None, f_hat: Callable[[float], float] | None = None) -> TunerResult:
    """Estimate the budget that makes held-out coverage hit ``1 - alpha``.

    ``f_hat`` overrides the cross-validated estimator (used for testing the
    bisection arithmetic).
    """
    config = config or TunerConfig()
    budget_rule = budget_rule or sample_budget()
    opts = config.solve_options()
    q = empirical_quantiles(paths, alpha)
    fold_rule = budget_rule
    if config.budget_scope == "full":
        # The same uncertainty set is scaled by gamma in every fold and in the
        # final solve; only the quantiles follow the training paths.
        fixed = budget_rule(paths, q, 0.0)

        def fold_rule(_train, _q, g):
            return fixed.with_gamma(g)

    # A covered subset is feasible at every budget (the floors are met by
    # lifting the envelope), so each fold's last subset is a valid seed.
    warm = [None] * config.K if config.warm_start else None
    if f_hat is None:
        partitions = kfold_partition(paths.n, config.K, config.seed)

        def f_hat(g):
            return estimate_f(g, paths, partitions, alpha, fold_rule, opts, warm=warm)

    lo, hi = 0.0, 1.0
    trace = []
    for _ in range(config.max_iterations):
        mid = (lo + hi) / 2
        f = f_hat(mid)
        trace.append((mid, f))
        if f < 0:
            lo = mid
        else:
            hi = mid
    gamma_hat = trace[-1][0]

    budget = budget_rule(paths, q, gamma_hat)
    final = solve_robust(paths, alpha, budget, config.solve_options(final=True))
    return TunerResult(gamma_hat=gamma_hat, trace=tuple(trace), final_band=final.band, final=final)
