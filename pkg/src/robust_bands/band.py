"""Budget-uncertainty widening for robust bands.

The robust problem asks that the summed upper envelope stays above
``sum_t (qU_t + cU_t z_t)`` for every ``z`` in the budget set

    Z(gamma) = { z in [0, 1]^H : mean(z) <= gamma },

and symmetrically for the lower envelope. The worst case over ``Z(gamma)``
collapses to one aggregate linear constraint per side with right-hand side
``sum_t (qU_t + betaU_t)``, where

    betaU_t = (cU_t - cU_(t*))^+ + gamma * cU_(t*),    t* = max(ceil(gamma H), 1)

and ``cU_(j)`` is the ``j``-th largest widening allowance.

For a fixed set of covered paths the optimal band has a closed form (see
:func:`subset_objective`), which is what the branch-and-bound solver searches
over.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .pathset import ConfidenceBand, QuantileBounds, SamplePathSet

__all__ = [
    "POSITIVITY_FLOOR",
    "SLACK_SPREADS",
    "BudgetParams",
    "BetaVector",
    "t_star",
    "compute_beta",
    "worst_case_widening",
    "default_budget",
    "subset_objective",
    "spread_slack",
]

POSITIVITY_FLOOR = 1e-9
SLACK_SPREADS = ("uniform", "last-step", "proportional-to-c")

_SNAP = 1e-12


def _check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    return gamma


def _budget_mass(gamma: float, H: int) -> float:
    """``gamma * H`` snapped to the nearest integer when within rounding noise."""
    m = gamma * H
    r = round(m)
    return float(r) if abs(m - r) < _SNAP * max(1.0, H) else m


@dataclass(frozen=True)
class BudgetParams:
    """Per-step widening allowances ``cU``, ``cL`` and the budget ``gamma``."""

    cU: np.ndarray
    cL: np.ndarray
    gamma: float

    def __post_init__(self):
        cU = np.array(self.cU, dtype=float)
        cL = np.array(self.cL, dtype=float)
        if cU.ndim != 1 or cU.shape != cL.shape:
            raise ValueError("cU and cL must be vectors of equal length")
        if np.any(~np.isfinite(cU)) or np.any(~np.isfinite(cL)):
            raise ValueError("widening allowances must be finite")
        if np.any(cU <= 0) or np.any(cL <= 0):
            raise ValueError("widening allowances must be strictly positive")
        cU.setflags(write=False)
        cL.setflags(write=False)
        object.__setattr__(self, "cU", cU)
        object.__setattr__(self, "cL", cL)
        object.__setattr__(self, "gamma", _check_gamma(self.gamma))

    @property
    def H(self) -> int:
        return self.cU.shape[0]

    def with_gamma(self, gamma: float) -> "BudgetParams":
        return BudgetParams(self.cU, self.cL, gamma)

    def to_dict(self) -> dict:
        return {"cU": self.cU.tolist(), "cL": self.cL.tolist(), "gamma": self.gamma}

    @classmethod
    def from_dict(cls, obj: dict) -> "BudgetParams":
        return cls(np.asarray(obj["cU"], float), np.asarray(obj["cL"], float), float(obj["gamma"]))


@dataclass(frozen=True)
class BetaVector:
    """Per-step widening terms for a given budget.

    ``cU``/``cL`` are carried along so the solver can spread aggregate slack
    in proportion to them; they are zero for the nominal problem.
    """

    betaU: np.ndarray
    betaL: np.ndarray
    tStar: int
    cU: np.ndarray | None = None
    cL: np.ndarray | None = None

    @classmethod
    def zeros(cls, H: int) -> "BetaVector":
        z = np.zeros(H)
        return cls(z, z.copy(), 1, z.copy(), z.copy())

    @property
    def H(self) -> int:
        return len(self.betaU)


def t_star(gamma: float, H: int) -> int:
    """Rank of the pivot allowance: ``max(ceil(gamma H), 1)``."""
    gamma = _check_gamma(gamma)
    if H < 1:
        raise ValueError("H must be positive")
    return max(math.ceil(_budget_mass(gamma, H)), 1)


def _beta_side(c: np.ndarray, gamma: float, ts: int) -> np.ndarray:
    # Ties leave the pivot value unchanged, so a stable descending sort is
    # equivalent to any infinitesimal tie-breaking perturbation.
    pivot = np.sort(c, kind="stable")[::-1][ts - 1]
    return np.maximum(c - pivot, 0.0) + gamma * pivot


def compute_beta(params: BudgetParams, H: int | None = None) -> BetaVector:
    H = params.H if H is None else H
    if H != params.H:
        raise ValueError(f"budget has {params.H} steps, expected {H}")
    ts = t_star(params.gamma, H)
    return BetaVector(
        betaU=_beta_side(params.cU, params.gamma, ts),
        betaL=_beta_side(params.cL, params.gamma, ts),
        tStar=ts,
        cU=params.cU,
        cL=params.cL,
    )


def worst_case_widening(c, gamma: float) -> float:
    """``max_{z in Z(gamma)} sum_t c_t z_t`` for positive ``c``.

    A fractional knapsack with unit weights and capacity ``gamma H``: take the
    ``floor(gamma H)`` largest entries whole and the next one fractionally.
    """
    c = np.asarray(c, dtype=float)
    gamma = _check_gamma(gamma)
    H = c.shape[0]
    mass = _budget_mass(gamma, H)
    whole = min(int(math.floor(mass)), H)
    desc = np.sort(c)[::-1]
    total = float(desc[:whole].sum())
    if whole < H:
        total += (mass - whole) * float(desc[whole])
    return total


def default_budget(paths: SamplePathSet, q: QuantileBounds, margin: float = 0.0,
                   gamma: float = 0.0, upper_bound=None, lower_bound=None) -> BudgetParams:
    """Widening allowances reaching the sample extremes, or hard bounds.

    By default ``cU_t = max_i x_t^i - qU_t + margin`` and
    ``cL_t = qL_t - min_i x_t^i + margin``, so that ``qU + cU`` and
    ``qL - cL`` bracket every observed path. ``upper_bound`` / ``lower_bound``
    (scalar or per-step) replace the sample extremes, e.g. a ward capacity
    and a zero floor. Every allowance is floored at ``POSITIVITY_FLOOR``.
    """
    if q.H != paths.H:
        raise ValueError(f"quantiles have {q.H} steps but paths have {paths.H}")
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    X = paths.paths
    top = X.max(axis=0) if upper_bound is None else np.broadcast_to(np.asarray(upper_bound, float), (paths.H,))
    bot = X.min(axis=0) if lower_bound is None else np.broadcast_to(np.asarray(lower_bound, float), (paths.H,))
    cU = np.maximum(top - q.qU + margin, POSITIVITY_FLOOR)
    cL = np.maximum(q.qL - bot + margin, POSITIVITY_FLOOR)
    return BudgetParams(cU, cL, gamma)


def spread_slack(deficit: float, H: int, how: str = "uniform", weights=None) -> np.ndarray:
    """Distribute a nonnegative aggregate deficit over ``H`` steps."""
    if how == "uniform":
        return np.full(H, deficit / H)
    if how == "last-step":
        out = np.zeros(H)
        out[-1] = deficit
        return out
    if how == "proportional-to-c":
        w = np.zeros(H) if weights is None else np.asarray(weights, float)
        s = w.sum()
        if s <= 0:
            return np.full(H, deficit / H)
        return deficit * w / s
    raise ValueError(f"unknown slack spread {how!r}; choose from {SLACK_SPREADS}")


def subset_objective(paths: SamplePathSet, subset: Iterable[int], q: QuantileBounds,
                     beta: BetaVector, spread: str = "uniform",
                     gamma: float | None = None) -> tuple[float, ConfidenceBand]:
    """Minimum robust width of a band forced to cover ``subset``.

    With ``uEnv = max(qU, max_S x)`` and ``lEnv = min(qL, min_S x)`` the
    optimum is ``max(sum uEnv, sum(qU + betaU)) - min(sum lEnv, sum(qL - betaL))``.
    The realizing band adds any aggregate deficit on top of the envelope,
    distributed according to ``spread``.
    """
    uS, lS = _subset_extremes(paths, subset)
    uEnv = np.maximum(q.qU, uS)
    lEnv = np.minimum(q.qL, lS)
    floor_u = float(np.sum(q.qU + beta.betaU))
    floor_l = float(np.sum(q.qL - beta.betaL))
    d_u = max(floor_u - float(uEnv.sum()), 0.0)
    d_l = max(float(lEnv.sum()) - floor_l, 0.0)
    upper = uEnv + spread_slack(d_u, paths.H, spread, beta.cU)
    lower = lEnv - spread_slack(d_l, paths.H, spread, beta.cL)
    obj = max(float(uEnv.sum()), floor_u) - min(float(lEnv.sum()), floor_l)
    return obj, ConfidenceBand(lower=lower, upper=upper, alpha=q.alpha, gamma=gamma)


def _subset_extremes(paths: SamplePathSet, subset: Iterable[int]):
    idx = np.fromiter((int(i) for i in subset), dtype=int)
    if idx.size == 0:
        raise ValueError("subset must be nonempty")
    rows = paths.paths[idx]
    return rows.max(axis=0), rows.min(axis=0)
