"""Exact minimum-width bands by branch-and-bound over coverage subsets.

For a fixed covered subset ``S`` the optimal band is the quantile-clipped
envelope of ``S`` lifted to meet the aggregate robust floors (see
:func:`robust_bands.band.subset_objective`). Minimizing over ``|S| = k``
therefore solves both the nominal and the robust problem without big-M
constraints.

Internally each path is stored as a row of ``Y = [x, -x]`` so that upper and
lower envelopes are both per-column maxima: the width of the clipped envelope
of ``S`` is ``sum_s max(thr_s, max_{i in S} Y_is)``.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .band import BetaVector, BudgetParams, compute_beta, subset_objective
from .pathset import (
    ConfidenceBand,
    QuantileBounds,
    SamplePathSet,
    band_to_dict,
    covered_mask,
    empirical_quantiles,
)

__all__ = [
    "COVER_MODES",
    "BRUTE_FORCE_MAX_N",
    "BRUTE_FORCE_MAX_EXCLUDED",
    "SolveOptions",
    "SolveResult",
    "InstanceTooLarge",
    "cover_target",
    "solve_nominal",
    "solve_robust",
    "solve",
    "greedy_incumbent",
    "brute_force",
]

COVER_MODES = ("paper-beta", "ceiling")
BRUTE_FORCE_MAX_N = 20
BRUTE_FORCE_MAX_EXCLUDED = 6

_REL_TOL = 1e-12
# Upper bound on elements materialized per vectorized swap-evaluation chunk.
_SWAP_CHUNK = 2_000_000


class InstanceTooLarge(ValueError):
    """Raised when exhaustive enumeration is refused."""


def cover_target(n: int, alpha: float, mode: str = "paper-beta") -> int:
    """Number of paths a band must cover at level ``1 - alpha``.

    When ``n(1 - alpha)`` is not an integer, ``"paper-beta"`` rounds down
    (the smallest adjusted level with an integral count) and ``"ceiling"``
    rounds up.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if mode not in COVER_MODES:
        raise ValueError(f"unknown cover mode {mode!r}; choose from {COVER_MODES}")
    target = n * (1 - alpha)
    nearest = round(target)
    if abs(target - nearest) < 1e-9:
        k = int(nearest)
    elif mode == "paper-beta":
        k = math.floor(target)
    else:
        k = math.ceil(target)
    return min(max(k, 1), n)


@dataclass(frozen=True)
class SolveOptions:
    """Search controls.

    ``cover_target`` fixes ``k`` directly; when ``None`` it is derived from
    ``alpha`` with ``cover_mode``. ``warm_start`` seeds the incumbent with a
    covered subset (0-based indices) from an earlier solve.
    """

    cover_target: int | None = None
    gap_tolerance: float = 0.01
    node_limit: int | None = 200_000
    time_limit: float | None = None
    cover_mode: str = "paper-beta"
    slack_spread: str = "uniform"
    quantile_method: str = "order"
    warm_start: tuple[int, ...] | None = None
    local_search: bool = True

    def __post_init__(self):
        if not 0 <= self.gap_tolerance < 1:
            raise ValueError("gap_tolerance must lie in [0, 1)")
        if self.cover_target is not None and self.cover_target < 1:
            raise ValueError("cover_target must be at least 1")
        if self.node_limit is not None and self.node_limit < 1:
            raise ValueError("node_limit must be positive")
        if self.cover_mode not in COVER_MODES:
            raise ValueError(f"unknown cover mode {self.cover_mode!r}")


@dataclass(frozen=True)
class SolveResult:
    band: ConfidenceBand
    covered: tuple[int, ...]
    objective: float
    lower_bound: float
    gap: float
    nodes_explored: int
    proven_optimal: bool
    subset: tuple[int, ...] = field(default=())
    k: int = 0
    n: int = 0

    def to_dict(self) -> dict:
        out = band_to_dict(self.band, covered_count=len(self.covered), n=self.n)
        out.update(
            covered=list(self.covered),
            objective=self.objective,
            lower_bound=self.lower_bound,
            gap=self.gap,
            nodes=self.nodes_explored,
            proven_optimal=self.proven_optimal,
        )
        return out


class _Problem:
    """Array view of one instance shared by the heuristics and the search."""

    def __init__(self, X: np.ndarray, q: QuantileBounds, beta: BetaVector):
        self.n, self.H = X.shape
        self.Y = np.hstack([X, -X])
        self.thr = np.concatenate([q.qU, -q.qL])
        self.floor_u = float(np.sum(q.qU + beta.betaU))
        self.floor_l = -float(np.sum(q.qL - beta.betaL))

    def value(self, env: np.ndarray):
        """Robust width for side envelope(s) ``env`` (last axis = sides)."""
        H = self.H
        up = np.maximum(env[..., :H].sum(axis=-1), self.floor_u)
        lo = np.maximum(env[..., H:].sum(axis=-1), self.floor_l)
        return up + lo

    def env(self, mask: np.ndarray) -> np.ndarray:
        if not mask.any():
            return self.thr.copy()
        return np.maximum(self.thr, self.Y[mask].max(axis=0))

    def subset_value(self, mask: np.ndarray) -> float:
        return float(self.value(self.env(mask)))

    def leave_one_out(self, mask: np.ndarray):
        """Envelopes of ``S - {i}`` for every ``i`` in ``S`` (rows follow ``S``)."""
        Z = self.Y[mask]
        m = Z.shape[0]
        raw = Z.max(axis=0)
        if m >= 2:
            second = np.partition(Z, m - 2, axis=0)[m - 2]
        else:
            second = np.full_like(raw, -np.inf)
        # A tied maximum has second == raw, so dropping one copy changes nothing.
        env_wo = np.where(Z == raw, second, raw)
        return np.maximum(env_wo, self.thr)


def _greedy_mask(prob: _Problem, k: int) -> np.ndarray:
    mask = np.ones(prob.n, dtype=bool)
    for _ in range(prob.n - k):
        idx = np.flatnonzero(mask)
        env_wo = prob.leave_one_out(mask)
        vals = prob.value(env_wo)
        # Ties on the robust width (floors binding) fall back to raw envelope size.
        order = np.lexsort((idx, env_wo.sum(axis=1), vals))
        mask[idx[order[0]]] = False
    return mask


def _swap_improve(prob: _Problem, mask: np.ndarray, max_passes: int = 1000) -> np.ndarray:
    """Best-improvement 1-for-1 swaps between covered and excluded paths."""
    mask = mask.copy()
    current = prob.subset_value(mask)
    for _ in range(max_passes):
        inside = np.flatnonzero(mask)
        outside = np.flatnonzero(~mask)
        if outside.size == 0 or inside.size == 0:
            break
        env_wo = prob.leave_one_out(mask)
        best = (current - _REL_TOL * max(1.0, abs(current)), -1, -1)
        per_chunk = max(1, _SWAP_CHUNK // max(1, env_wo.size))
        for start in range(0, outside.size, per_chunk):
            js = outside[start:start + per_chunk]
            cand = np.maximum(env_wo[None, :, :], prob.Y[js][:, None, :])
            vals = prob.value(cand)
            flat = int(np.argmin(vals))
            a, b = divmod(flat, vals.shape[1])
            if vals[a, b] < best[0]:
                best = (float(vals[a, b]), int(inside[b]), int(js[a]))
        if best[1] < 0:
            break
        mask[best[1]] = False
        mask[best[2]] = True
        current = prob.subset_value(mask)
    return mask


def greedy_incumbent(paths: SamplePathSet, q: QuantileBounds, beta: BetaVector, k: int) -> tuple[int, ...]:
    """Start from every path and repeatedly drop the one whose removal shrinks
    the robust width most, until ``k`` remain."""
    if not 1 <= k <= paths.n:
        raise ValueError(f"cover target {k} outside [1, {paths.n}]")
    prob = _Problem(paths.paths, q, beta)
    return tuple(int(i) for i in np.flatnonzero(_greedy_mask(prob, k)))


def _node_bound(prob: _Problem, status: np.ndarray, remaining: int):
    """Per-coordinate relaxation value of a node, after free inclusion.

    ``status`` holds 0 (undecided), 1 (covered), 2 (excluded). Any undecided
    path already inside the covered envelope is moved to covered: excluding it
    would waste an exclusion. Returns ``(bound, status, leaf_env)``;
    ``leaf_env`` is not ``None`` when the node has a single completion worth
    considering, and ``bound`` is then its exact value.

    The bound lets each coordinate drop its own ``remaining`` largest
    undecided values, so per coordinate the envelope is at least the
    ``(remaining + 1)``-th largest.
    """
    inc = status == 1
    e0 = prob.env(inc)
    und = np.flatnonzero(status == 0)
    if und.size:
        free = np.all(prob.Y[und] <= e0, axis=1)
        if free.any():
            status = status.copy()
            status[und[free]] = 1
            und = und[~free]
    if remaining == 0:
        env = e0 if und.size == 0 else np.maximum(e0, prob.Y[und].max(axis=0))
        return float(prob.value(env)), status, env
    if und.size <= remaining:
        return float(prob.value(e0)), status, e0
    pos = und.size - remaining - 1
    kth = np.partition(prob.Y[und], pos, axis=0)[pos]
    return float(prob.value(np.maximum(e0, kth))), status, None


class _Lagrangian:
    """Dual bound that shares the exclusion budget across coordinates.

    Coordinate ``s`` can only lower its envelope by excluding a prefix of its
    undecided paths ranked by value; excluding ``j`` of them saves
    ``sum_{m<=j} drop[s, m]``. Relaxing the link "coordinate ``s`` uses path
    ``i`` => ``i`` is excluded" with prices ``lam[s, m] >= 0`` separates the
    problem into one prefix choice per coordinate plus picking the
    ``remaining`` paths with the largest total price. Every ``lam`` gives a
    valid lower bound; subgradient ascent tightens it.

    The robust floors enter through ``max(A, F) >= theta A + (1 - theta) F``
    for ``theta`` in [0, 1], one weight for the upper sides and one for the
    lower; the dual is concave jointly in the prices and both weights.
    """

    def __init__(self, prob: _Problem, status: np.ndarray, remaining: int):
        self.prob = prob
        self.und = np.flatnonzero(status == 0)
        self.r = remaining
        e0 = prob.env(status == 1)
        Yu = prob.Y[self.und]
        R = remaining
        # Per side: the R+1 largest undecided values, descending.
        top = np.argpartition(-Yu, R, axis=0)[: R + 1]
        vals = np.take_along_axis(Yu, top, axis=0)
        order = np.argsort(-vals, axis=0, kind="stable")
        top = np.take_along_axis(top, order, axis=0)
        vals = np.maximum(np.take_along_axis(vals, order, axis=0), e0)
        self.paths = top[:R].T  # (sides, R) positions within und
        self.drop = (vals[:-1] - vals[1:]).T  # (sides, R), nonnegative
        self.head = vals[0]  # envelope with nothing excluded

    def value(self, lam: np.ndarray, theta: float, phi: float):
        """Dual value and supergradients ``(d lam, d theta, d phi)``."""
        prob = self.prob
        H = prob.H
        weights = np.repeat((theta, phi), H)
        c = lam - weights[:, None] * self.drop
        cs = np.cumsum(c, axis=1)
        low = cs.min(axis=1)
        # Prefix length per side (0 when the empty prefix is best).
        j = np.where(low < 0.0, np.argmin(cs, axis=1) + 1, 0)
        used = np.arange(self.r)[None, :] < j[:, None]
        totals = np.bincount(self.paths.ravel(), weights=lam.ravel(), minlength=self.und.size)
        chosen = np.argpartition(-totals, self.r - 1)[: self.r]
        env = self.head - (self.drop * used).sum(axis=1)
        A, B = env[:H].sum(), env[H:].sum()
        val = ((1 - theta) * prob.floor_u + (1 - phi) * prob.floor_l + theta * A + phi * B
               + float((lam * used).sum()) - float(totals[chosen].sum()))
        y = np.zeros(self.und.size)
        y[chosen] = 1.0
        grad = used - y[self.paths]
        return val, grad, A - prob.floor_u, B - prob.floor_l, chosen

    def bound(self, target: float, cutoff: float, iters: int = 150):
        """Best dual value found and the excluded-path guess attaining it.

        Polyak steps aim at ``target`` (an upper bound on the optimum); the
        ascent stops early once the dual value reaches ``cutoff``.
        """
        lam = np.zeros_like(self.drop)
        # Start each floor weight at whichever endpoint is better with zero prices.
        starts = {(t, f): self.value(lam, t, f)[0] for t in (0.0, 1.0) for f in (0.0, 1.0)}
        theta, phi = max(starts, key=starts.get)
        best_val, best_ex = -np.inf, None
        step = 2.0
        stall = 0
        for _ in range(iters):
            val, grad, g_theta, g_phi, chosen = self.value(lam, theta, phi)
            if val > best_val + 1e-12 * max(1.0, abs(val)):
                best_val, best_ex = val, chosen
                stall = 0
            else:
                stall += 1
                if stall >= 10:
                    step *= 0.5
                    stall = 0
                    if step < 1e-4:
                        break
            if val >= cutoff:
                break
            norm = float((grad * grad).sum()) + g_theta * g_theta + g_phi * g_phi
            if norm == 0.0:
                break
            t = step * (target - val) / norm
            lam = np.maximum(lam + t * grad, 0.0)
            theta = min(max(theta + t * g_theta, 0.0), 1.0)
            phi = min(max(phi + t * g_phi, 0.0), 1.0)
        return best_val, (self.und[best_ex] if best_ex is not None else None)


def _leaf_mask(status: np.ndarray, remaining: int) -> np.ndarray:
    if remaining == 0:
        return status != 2
    return status == 1


def _branch_and_bound(prob: _Problem, k: int, start_mask: np.ndarray, opts: SolveOptions,
                      root_iters: int = 400, node_iters: int = 60):
    """Depth-first search, "exclude" child first.

    Returns ``(mask, value, lower_bound, nodes, completed)``.
    """
    best_mask = start_mask.copy()
    best = prob.subset_value(best_mask)
    gap_tol = opts.gap_tolerance
    t0 = time.perf_counter()

    def cutoff():
        return best * (1 - gap_tol) - _REL_TOL * max(1.0, abs(best))

    def try_exclusion(status, excluded):
        nonlocal best, best_mask
        mask = status != 2
        mask[excluded] = False
        val = prob.subset_value(mask)
        if val < best - _REL_TOL * max(1.0, abs(best)):
            best, best_mask = val, mask

    stack = [(np.zeros(prob.n, dtype=np.int8), prob.n - k, -np.inf)]
    pruned_min = np.inf
    nodes = 0
    exhausted = False
    while stack:
        if opts.node_limit is not None and nodes >= opts.node_limit:
            exhausted = True
            break
        if opts.time_limit is not None and time.perf_counter() - t0 > opts.time_limit:
            exhausted = True
            break
        status, remaining, _ = stack.pop()
        nodes += 1
        bound, status, leaf_env = _node_bound(prob, status, remaining)
        if leaf_env is not None:
            if bound < best - _REL_TOL * max(1.0, abs(best)):
                best = bound
                best_mask = _leaf_mask(status, remaining)
            continue
        if bound < cutoff():
            lag = _Lagrangian(prob, status, remaining)
            lval, guess = lag.bound(best, cutoff(), iters=root_iters if nodes == 1 else node_iters)
            if guess is not None:
                try_exclusion(status, guess)
            bound = max(bound, lval)
        if bound >= cutoff():
            pruned_min = min(pruned_min, bound)
            continue
        und = np.flatnonzero(status == 0)
        protrusion = (prob.Y[und] - prob.env(status == 1)).max(axis=1)
        b = und[int(np.argmax(protrusion))]
        keep = status.copy()
        keep[b] = 1
        drop = status.copy()
        drop[b] = 2
        stack.append((keep, remaining, bound))
        stack.append((drop, remaining - 1, bound))

    lower = min(best, pruned_min)
    if stack:
        lower = min(lower, min(s[2] for s in stack))
    return best_mask, best, min(lower, best), nodes, not exhausted


def _resolve_k(paths: SamplePathSet, alpha: float, opts: SolveOptions) -> int:
    k = opts.cover_target if opts.cover_target is not None else cover_target(paths.n, alpha, opts.cover_mode)
    if not 1 <= k <= paths.n:
        raise ValueError(f"cover target {k} outside [1, {paths.n}]")
    return k


def solve(paths: SamplePathSet, alpha: float, budget: BudgetParams | None = None,
          opts: SolveOptions | None = None, q: QuantileBounds | None = None) -> SolveResult:
    """Minimum-width band covering at least ``k`` paths.

    ``budget=None`` gives the nominal problem; otherwise the robust
    aggregate floors derived from ``budget`` are imposed.
    """
    opts = opts or SolveOptions()
    k = _resolve_k(paths, alpha, opts)
    if q is None:
        q = empirical_quantiles(paths, alpha, method=opts.quantile_method)
    if budget is None:
        beta, gamma = BetaVector.zeros(paths.H), None
    else:
        beta, gamma = compute_beta(budget, paths.H), budget.gamma
    prob = _Problem(paths.paths, q, beta)

    start = _greedy_mask(prob, k)
    if opts.warm_start is not None:
        warm = np.zeros(prob.n, dtype=bool)
        warm[np.asarray(opts.warm_start, dtype=int)] = True
        if warm.sum() >= k and prob.subset_value(warm) < prob.subset_value(start):
            start = warm
    if opts.local_search:
        start = _swap_improve(prob, start)

    mask, _, lower, nodes, complete = _branch_and_bound(prob, k, start, opts)
    subset = tuple(int(i) for i in np.flatnonzero(mask))
    objective, band = subset_objective(paths, subset, q, beta, spread=opts.slack_spread, gamma=gamma)
    lower = min(lower, objective)
    gap = (objective - lower) / max(objective, 1e-12)
    covered = tuple(int(i) for i in np.flatnonzero(covered_mask(band, paths)))
    return SolveResult(
        band=band,
        covered=covered,
        objective=objective,
        lower_bound=lower,
        gap=max(gap, 0.0),
        nodes_explored=nodes,
        proven_optimal=complete,
        subset=subset,
        k=k,
        n=paths.n,
    )


def solve_nominal(paths: SamplePathSet, alpha: float, opts: SolveOptions | None = None) -> SolveResult:
    return solve(paths, alpha, None, opts)


def solve_robust(paths: SamplePathSet, alpha: float, budget: BudgetParams,
                 opts: SolveOptions | None = None) -> SolveResult:
    if budget.H != paths.H:
        raise ValueError(f"budget has {budget.H} steps but paths have {paths.H}")
    return solve(paths, alpha, budget, opts)


def brute_force(paths: SamplePathSet, alpha: float, budget: BudgetParams | None = None,
                opts: SolveOptions | None = None) -> SolveResult:
    """Exhaustive optimum over all subsets of exactly ``k`` paths.

    Only for small instances: ``n <= 20`` and at most six exclusions.
    Ties resolve to the lexicographically smallest subset.
    """
    opts = opts or SolveOptions()
    n = paths.n
    if n > BRUTE_FORCE_MAX_N:
        raise InstanceTooLarge(f"brute force refuses n={n} > {BRUTE_FORCE_MAX_N}")
    k = _resolve_k(paths, alpha, opts)
    if n - k > BRUTE_FORCE_MAX_EXCLUDED:
        raise InstanceTooLarge(
            f"brute force refuses n-k={n - k} > {BRUTE_FORCE_MAX_EXCLUDED} exclusions")
    q = empirical_quantiles(paths, alpha, method=opts.quantile_method)
    if budget is None:
        beta, gamma = BetaVector.zeros(paths.H), None
    else:
        beta, gamma = compute_beta(budget, paths.H), budget.gamma
    best = None
    for subset in itertools.combinations(range(n), k):
        obj, band = subset_objective(paths, subset, q, beta, spread=opts.slack_spread, gamma=gamma)
        if best is None or obj < best[0] - _REL_TOL * max(1.0, abs(best[0])):
            best = (obj, band, subset)
    obj, band, subset = best
    covered = tuple(int(i) for i in np.flatnonzero(covered_mask(band, paths)))
    nodes = math.comb(n, k)
    return SolveResult(band, covered, obj, obj, 0.0, nodes, True, tuple(subset), k, n)


def subset_width(paths: SamplePathSet, subset: Sequence[int] | Iterable[int], alpha: float,
                 budget: BudgetParams | None = None) -> float:
    """Robust width of the optimal band covering ``subset`` (convenience)."""
    q = empirical_quantiles(paths, alpha)
    beta = BetaVector.zeros(paths.H) if budget is None else compute_beta(budget, paths.H)
    return subset_objective(paths, list(subset), q, beta)[0]
