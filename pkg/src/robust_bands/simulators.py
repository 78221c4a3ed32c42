"""Seeded sample-path generators for the two case studies.

* A bivariate VAR(1) process ``x_t = A0 + A1 x_{t-1} + eps_t`` observed in one
  component.
* The Erlang-R queue: ``s`` exponential servers fed by a non-homogeneous
  Poisson process, where each served patient returns after an exponential
  "content" delay with probability ``p``.

Every path draws from its own random stream, keyed by ``(seed, stream_id,
path index)``, so path ``i`` is the same whether 10 or 10,000 paths are
generated.
"""

from __future__ import annotations

import heapq
import json
from collections import deque
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .pathset import SamplePathSet

__all__ = [
    "RandomSource",
    "VarModel",
    "ErlangRModel",
    "PiecewiseRate",
    "MCE_RATE",
    "MCE_AVERAGE_RATE",
    "CASE_STUDY_VAR",
    "MCE_ERLANG_R",
    "simulate_var",
    "var_innovations",
    "stationary_mean",
    "mce_arrival_rate",
    "nhpp_thinning",
    "simulate_erlang_r",
    "erlang_r_trace",
    "average_rate_model",
    "load_model",
    "model_to_dict",
]


@dataclass(frozen=True)
class RandomSource:
    """A reproducible family of random streams.

    ``generator(i)`` returns the ``i``-th sub-stream; distinct ``stream_id``
    values give disjoint families under the same seed.
    """

    seed: int
    stream_id: int = 0

    def generator(self, index: int | None = None) -> np.random.Generator:
        key = (self.stream_id,) if index is None else (self.stream_id, int(index))
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=key)))


def _as_source(rng) -> RandomSource:
    if isinstance(rng, RandomSource):
        return rng
    return RandomSource(int(rng))


# ---------------------------------------------------------------------------
# VAR(1)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VarModel:
    A0: tuple = (1.0, 1.0)
    A1: tuple = ((0.5, 0.3), (-0.6, 1.3))
    sigma_eps: tuple = ((1.0, 0.5), (0.5, 1.0))
    horizon: int = 12
    # "stationary-mean", "zero", or an explicit 2-vector
    initial_condition: str | tuple = "stationary-mean"
    observed_component: int = 1

    def __post_init__(self):
        S = np.asarray(self.sigma_eps, float)
        if S.shape != (2, 2) or not np.allclose(S, S.T):
            raise ValueError("sigma_eps must be a symmetric 2x2 matrix")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")
        if self.observed_component not in (1, 2):
            raise ValueError("observed_component must be 1 or 2")

    def cholesky(self) -> np.ndarray:
        S = np.asarray(self.sigma_eps, float)
        try:
            return np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            # Semidefinite covariances (e.g. all zeros) have no strict Cholesky factor.
            w, V = np.linalg.eigh(S)
            if w.min() < -1e-12 * max(1.0, abs(w).max()):
                raise ValueError("sigma_eps is not positive semidefinite") from None
            return V @ np.diag(np.sqrt(np.clip(w, 0, None)))

    def x0(self) -> np.ndarray:
        ic = self.initial_condition
        if isinstance(ic, str):
            if ic == "stationary-mean":
                return stationary_mean(self)
            if ic == "zero":
                return np.zeros(2)
            raise ValueError(f"unknown initial condition {ic!r}")
        return np.asarray(ic, float)


CASE_STUDY_VAR = VarModel()


def stationary_mean(model: VarModel) -> np.ndarray:
    """Fixed point ``(I - A1)^{-1} A0`` of the deterministic recursion."""
    return np.linalg.solve(np.eye(2) - np.asarray(model.A1, float), np.asarray(model.A0, float))


def var_innovations(model: VarModel, size: int, rng) -> np.ndarray:
    """``size`` correlated Gaussian innovations, shape ``(size, 2)``."""
    g = _as_source(rng).generator()
    return g.standard_normal((size, 2)) @ model.cholesky().T


def simulate_var(model: VarModel, n: int, rng) -> SamplePathSet:
    if n < 1:
        raise ValueError("n must be positive")
    src = _as_source(rng)
    L = model.cholesky()
    A0 = np.asarray(model.A0, float)
    A1 = np.asarray(model.A1, float)
    x0 = model.x0()
    comp = model.observed_component - 1
    out = np.empty((n, model.horizon))
    for i in range(n):
        eps = src.generator(i).standard_normal((model.horizon, 2)) @ L.T
        x = x0
        for t in range(model.horizon):
            x = A0 + A1 @ x + eps[t]
            out[i, t] = x[comp]
    return SamplePathSet(out)


# ---------------------------------------------------------------------------
# Arrival rates and NHPP thinning
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PiecewiseRate:
    """Sum of half-open windows ``rate * 1{start <= t < end}`` (per minute)."""

    windows: tuple = ()

    def __post_init__(self):
        wins = tuple((float(a), float(b), float(r)) for a, b, r in self.windows)
        for a, b, r in wins:
            if b < a or r < 0:
                raise ValueError(f"invalid rate window {(a, b, r)}")
        object.__setattr__(self, "windows", wins)

    def __call__(self, t: float) -> float:
        return sum(r for a, b, r in self.windows if a <= t < b)

    @property
    def peak(self) -> float:
        # Overlapping windows add, so check every window start.
        if not self.windows:
            return 0.0
        return max(self(a) for a, _, _ in self.windows)

    def integral(self, t0: float, t1: float) -> float:
        return sum(r * max(0.0, min(b, t1) - max(a, t0)) for a, b, r in self.windows)


MCE_RATE = PiecewiseRate(((0, 22, 0.773), (44, 69, 0.884), (102, 117, 0.5)))
MCE_AVERAGE_RATE = 0.388
MCE_HORIZON = 120.0


def mce_arrival_rate(t: float) -> float:
    """Estimated drill arrival rate (patients per minute), ``0 <= t <= 120``."""
    if not 0 <= t <= MCE_HORIZON:
        raise ValueError(f"t={t} outside [0, {MCE_HORIZON:g}] minutes")
    return MCE_RATE(t)


def nhpp_thinning(rate: PiecewiseRate, horizon: float, gen: np.random.Generator) -> np.ndarray:
    """Arrival times on ``[0, horizon)`` by thinning a rate-``peak`` Poisson process."""
    lam = rate.peak
    if lam <= 0:
        return np.empty(0)
    times = []
    t = 0.0
    while True:
        t += gen.exponential(1.0 / lam)
        if t >= horizon:
            break
        if gen.random() * lam < rate(t):
            times.append(t)
    return np.asarray(times)


# ---------------------------------------------------------------------------
# Erlang-R
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ErlangRModel:
    servers: int = 4
    mean_service: float = 5.4
    mean_content_delay: float = 24.6
    p_return: float = 0.662
    arrival_rate: PiecewiseRate = field(default_factory=lambda: MCE_RATE)
    horizon_minutes: float = MCE_HORIZON
    sample_steps: int = 30
    observable: str = "needy"
    # (needy, content) at time 0
    initial_state: tuple = (0, 0)

    def __post_init__(self):
        if not isinstance(self.arrival_rate, PiecewiseRate):
            object.__setattr__(self, "arrival_rate", PiecewiseRate(self.arrival_rate))
        if self.servers < 1:
            raise ValueError("servers must be at least 1")
        if not 0 <= self.p_return < 1:
            raise ValueError("p_return must lie in [0, 1)")
        if self.mean_service <= 0 or self.mean_content_delay <= 0:
            raise ValueError("mean times must be positive")
        if self.horizon_minutes <= 0 or self.sample_steps < 1:
            raise ValueError("horizon and sample_steps must be positive")
        if self.observable not in ("needy", "total"):
            raise ValueError("observable must be 'needy' or 'total'")
        if len(self.initial_state) != 2 or min(self.initial_state) < 0:
            raise ValueError("initial_state must be two nonnegative counts")

    @property
    def service_rate_per_hour(self) -> float:
        return 60.0 / self.mean_service

    @property
    def return_rate_per_hour(self) -> float:
        return 60.0 / self.mean_content_delay

    def sample_times(self) -> np.ndarray:
        """Left endpoints of ``sample_steps`` equal intervals of the horizon."""
        return np.arange(self.sample_steps) * (self.horizon_minutes / self.sample_steps)


MCE_ERLANG_R = ErlangRModel()

_ARRIVAL, _SERVICE_DONE, _RETURN = 0, 1, 2


def erlang_r_trace(model: ErlangRModel, gen: np.random.Generator, check=None):
    """Run one Erlang-R path; returns ``(event_times, needy, content)`` after each event.

    ``check`` is an optional callback ``check(needy, content, busy)`` invoked
    after every event.
    """
    s = model.servers
    arrivals = nhpp_thinning(model.arrival_rate, model.horizon_minutes, gen)
    events: list = []
    seq = 0
    for t in arrivals:
        events.append((t, seq, _ARRIVAL))
        seq += 1
    heapq.heapify(events)

    needy0, content0 = (int(v) for v in model.initial_state)
    queue: deque = deque()
    busy = 0

    def push(t, kind):
        nonlocal seq
        heapq.heappush(events, (t, seq, kind))
        seq += 1

    def admit(t):
        nonlocal busy
        if busy < s:
            busy += 1
            push(t + gen.exponential(model.mean_service), _SERVICE_DONE)
        else:
            queue.append(t)

    for _ in range(needy0):
        admit(0.0)
    for _ in range(content0):
        push(gen.exponential(model.mean_content_delay), _RETURN)
    needy, content = needy0, content0

    times, needy_hist, content_hist = [0.0], [needy], [content]
    while events:
        t, _, kind = heapq.heappop(events)
        if t >= model.horizon_minutes:
            break
        if kind == _SERVICE_DONE:
            busy -= 1
            needy -= 1
            if gen.random() < model.p_return:
                content += 1
                push(t + gen.exponential(model.mean_content_delay), _RETURN)
            if queue:
                queue.popleft()
                busy += 1
                push(t + gen.exponential(model.mean_service), _SERVICE_DONE)
        else:
            if kind == _RETURN:
                content -= 1
            needy += 1
            admit(t)
        if check is not None:
            check(needy, content, busy)
        times.append(t)
        needy_hist.append(needy)
        content_hist.append(content)
    return np.asarray(times), np.asarray(needy_hist), np.asarray(content_hist)


def _sample_state(times, values, grid):
    # State at each grid time = value after the last event at or before it.
    idx = np.searchsorted(times, grid, side="right") - 1
    return values[idx]


def simulate_erlang_r(model: ErlangRModel, n: int, rng) -> SamplePathSet:
    """``n`` paths of the observable sampled at the start of each interval."""
    if n < 1:
        raise ValueError("n must be positive")
    src = _as_source(rng)
    grid = model.sample_times()
    out = np.empty((n, model.sample_steps))
    for i in range(n):
        times, needy, content = erlang_r_trace(model, src.generator(i))
        obs = needy if model.observable == "needy" else needy + content
        out[i] = _sample_state(times, obs, grid)
    return SamplePathSet(out)


def average_rate_model(model: ErlangRModel, rate: float = MCE_AVERAGE_RATE) -> ErlangRModel:
    """Same queue with a constant arrival rate over the whole horizon."""
    return replace(model, arrival_rate=PiecewiseRate(((0.0, model.horizon_minutes, rate),)))


# ---------------------------------------------------------------------------
# Model descriptors
# ---------------------------------------------------------------------------


def model_to_dict(model) -> dict:
    d = asdict(model)
    if isinstance(model, ErlangRModel):
        d["arrival_rate"] = [list(w) for w in model.arrival_rate.windows]
        d["initial_state"] = list(model.initial_state)
    return json.loads(json.dumps(d))


def _tuplify(v):
    if isinstance(v, list):
        return tuple(_tuplify(x) for x in v)
    return v


def load_model(obj: dict | str, kind: str):
    """Build a model from a mapping or a JSON/TOML file path.

    ``kind`` is ``"var"`` or ``"erlang-r"``. Missing keys take the case-study
    defaults.
    """
    if isinstance(obj, str):
        obj = _read_config(obj)
    obj = {k.replace("-", "_"): _tuplify(v) for k, v in obj.items()}
    if kind == "var":
        return VarModel(**obj)
    if kind == "erlang-r":
        if "arrival_rate" in obj:
            obj["arrival_rate"] = PiecewiseRate(obj["arrival_rate"])
        return ErlangRModel(**obj)
    raise ValueError(f"unknown model kind {kind!r}")


def _read_config(path: str) -> dict:
    if path.endswith(".toml"):
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
