"""Sample-path sets, confidence bands, coverage, and the naive pointwise band.

A sample-path set is an ``n x H`` array of real values: row ``i`` is the
``i``-th simulated path observed at times ``1..H``. A band ``(lower, upper)``
covers a path when ``lower_t <= x_t <= upper_t`` at every step (both
boundaries inclusive).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np

__all__ = [
    "PathFormatError",
    "SamplePathSet",
    "QuantileBounds",
    "ConfidenceBand",
    "load_paths",
    "save_paths",
    "is_covered",
    "covered_mask",
    "coverage_rate",
    "empirical_quantiles",
    "naive_band",
    "envelope",
    "band_to_dict",
    "band_from_dict",
]

# Tolerance used when snapping n*p to an integer before ceil/floor.
_INDEX_SNAP = 1e-9


class PathFormatError(ValueError):
    """Raised when a sample-path CSV cannot be parsed."""


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SamplePathSet:
    """``n`` sample paths of a discrete-time process over ``H`` steps."""

    paths: np.ndarray

    def __post_init__(self):
        arr = np.array(self.paths, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"paths must be a non-empty n x H matrix, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            bad = np.argwhere(~np.isfinite(arr))[0]
            raise ValueError(f"non-finite value at path {bad[0]}, step {bad[1] + 1}")
        arr.setflags(write=False)
        object.__setattr__(self, "paths", arr)

    @property
    def n(self) -> int:
        return self.paths.shape[0]

    @property
    def H(self) -> int:
        return self.paths.shape[1]

    def subset(self, indices: Iterable[int]) -> "SamplePathSet":
        return SamplePathSet(self.paths[np.asarray(list(indices), dtype=int)])

    def __len__(self):
        return self.n


@dataclass(frozen=True)
class QuantileBounds:
    """Per-step upper and lower quantile estimates."""

    qU: np.ndarray
    qL: np.ndarray
    alpha: float

    def __post_init__(self):
        qU, qL = _frozen(self.qU), _frozen(self.qL)
        if qU.shape != qL.shape or qU.ndim != 1:
            raise ValueError("qU and qL must be vectors of equal length")
        if np.any(qL > qU):
            raise ValueError("lower quantile exceeds upper quantile")
        object.__setattr__(self, "qU", qU)
        object.__setattr__(self, "qL", qL)

    @property
    def H(self) -> int:
        return self.qU.shape[0]


@dataclass(frozen=True)
class ConfidenceBand:
    """Lower and upper envelopes over ``H`` steps.

    ``gamma`` is ``None`` for a nominal (non-robust) band.
    """

    lower: np.ndarray
    upper: np.ndarray
    alpha: float
    gamma: float | None = None
    width: float = field(init=False)

    def __post_init__(self):
        lo, up = _frozen(self.lower), _frozen(self.upper)
        if lo.shape != up.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be vectors of equal length")
        if np.any(lo > up):
            t = int(np.argmax(lo > up))
            raise ValueError(f"lower exceeds upper at step {t + 1}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)
        object.__setattr__(self, "width", float(np.sum(up - lo)))

    @property
    def H(self) -> int:
        return self.lower.shape[0]


# ---------------------------------------------------------------------------
# CSV I/O
# ---------------------------------------------------------------------------


def load_paths(source: IO[str] | IO[bytes] | str) -> SamplePathSet:
    """Parse a sample-path CSV (header ``t1,...,tH``; one row per path).

    ``source`` is a text or binary stream, or a filesystem path.
    """
    if isinstance(source, str):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            return load_paths(fh)
    text = source.read()
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise PathFormatError("empty input: missing header row") from None
    H = len(header)
    rows = []
    for row_idx, row in enumerate(reader, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != H:
            raise PathFormatError(f"row {row_idx}: expected {H} values, found {len(row)}")
        values = []
        for col, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise PathFormatError(
                    f"row {row_idx}, column {header[col].strip() or col + 1}: non-numeric cell {cell!r}"
                ) from None
            if not math.isfinite(v):
                raise PathFormatError(
                    f"row {row_idx}, column {header[col].strip() or col + 1}: non-finite value {cell!r}"
                )
            values.append(v)
        rows.append(values)
    if not rows:
        raise PathFormatError("no data rows")
    return SamplePathSet(np.array(rows, dtype=float))


def save_paths(paths: SamplePathSet, dest: IO[str] | str) -> None:
    """Write paths in the CSV layout read by :func:`load_paths`.

    Values use ``repr`` formatting, which round-trips doubles exactly.
    """
    if isinstance(dest, str):
        with open(dest, "w", encoding="utf-8", newline="") as fh:
            save_paths(paths, fh)
        return
    writer = csv.writer(dest, lineterminator="\n")
    writer.writerow([f"t{t}" for t in range(1, paths.H + 1)])
    for row in paths.paths:
        writer.writerow([_fmt(v) for v in row])


def _fmt(v: float) -> str:
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


# ---------------------------------------------------------------------------
# Coverage
# ---------------------------------------------------------------------------


def is_covered(band: ConfidenceBand, path: Sequence[float]) -> bool:
    x = np.asarray(path, dtype=float)
    if x.shape != (band.H,):
        raise ValueError(f"path has {x.size} steps but the band has {band.H}")
    return bool(np.all((band.lower <= x) & (x <= band.upper)))


def covered_mask(band: ConfidenceBand, paths: SamplePathSet | np.ndarray) -> np.ndarray:
    """Boolean vector marking which rows of ``paths`` the band covers."""
    X = paths.paths if isinstance(paths, SamplePathSet) else np.atleast_2d(np.asarray(paths, dtype=float))
    if X.shape[1] != band.H:
        raise ValueError(f"paths have {X.shape[1]} steps but the band has {band.H}")
    return np.all((band.lower <= X) & (X <= band.upper), axis=1)


def coverage_rate(band: ConfidenceBand, paths: SamplePathSet) -> float:
    return int(covered_mask(band, paths).sum()) / paths.n


# ---------------------------------------------------------------------------
# Quantiles and the naive band
# ---------------------------------------------------------------------------


def order_stat_ranks(n: int, alpha: float) -> tuple[int, int]:
    """1-based ranks ``(lower, upper)`` of the order-statistic quantile pair.

    upper = ceil(n (1 - alpha/2)), lower = floor(n alpha / 2) + 1, both
    clamped to ``[1, n]``.
    """
    upper = math.ceil(n * (1 - alpha / 2) - _INDEX_SNAP)
    lower = math.floor(n * alpha / 2 + _INDEX_SNAP) + 1
    return min(max(lower, 1), n), min(max(upper, 1), n)


def empirical_quantiles(paths: SamplePathSet, alpha: float, method: str = "order") -> QuantileBounds:
    """Per-step ``(1 - alpha/2)`` and ``alpha/2`` quantile estimates.

    Parameters
    ----------
    paths : SamplePathSet
    alpha : float
        Miscoverage level in ``(0, 1)``.
    method : str
        ``"order"`` (default) uses pure order statistics: the
        ``ceil(n(1-alpha/2))``-th smallest value for the upper quantile and
        the ``(floor(n alpha/2)+1)``-th smallest for the lower one. Any other
        value is passed to :func:`numpy.quantile` as its ``method``.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    X = paths.paths
    if method == "order":
        lo_rank, up_rank = order_stat_ranks(paths.n, alpha)
        srt = np.sort(X, axis=0)
        qU, qL = srt[up_rank - 1], srt[lo_rank - 1]
    else:
        qU = np.quantile(X, 1 - alpha / 2, axis=0, method=method)
        qL = np.quantile(X, alpha / 2, axis=0, method=method)
    return QuantileBounds(qU=qU, qL=qL, alpha=alpha)


def naive_band(paths: SamplePathSet, alpha: float, method: str = "order") -> ConfidenceBand:
    """Pointwise quantile intervals joined across time.

    Each step holds ``1 - alpha`` marginally, so the joint coverage is lower.
    """
    q = empirical_quantiles(paths, alpha, method=method)
    return ConfidenceBand(lower=q.qL, upper=q.qU, alpha=alpha)


def envelope(paths: SamplePathSet, subset: Iterable[int]) -> tuple[np.ndarray, np.ndarray]:
    """Per-step (max, min) over the rows in ``subset`` (0-based indices)."""
    idx = np.asarray(sorted(set(int(i) for i in subset)), dtype=int)
    if idx.size == 0:
        raise ValueError("envelope of an empty subset is undefined")
    if idx[0] < 0 or idx[-1] >= paths.n:
        raise IndexError(f"subset indices must lie in [0, {paths.n - 1}]")
    rows = paths.paths[idx]
    return rows.max(axis=0), rows.min(axis=0)


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------


def band_to_dict(band: ConfidenceBand, paths: SamplePathSet | None = None,
                 covered_count: int | None = None, n: int | None = None) -> dict:
    """Band JSON object. Counts come from ``paths`` when given."""
    if paths is not None:
        covered_count = int(covered_mask(band, paths).sum())
        n = paths.n
    return {
        "alpha": band.alpha,
        "gamma": band.gamma,
        "lower": [float(v) for v in band.lower],
        "upper": [float(v) for v in band.upper],
        "width": band.width,
        "covered_count": covered_count,
        "n": n,
        "H": band.H,
    }


def band_from_dict(obj: dict) -> ConfidenceBand:
    gamma = obj.get("gamma")
    return ConfidenceBand(
        lower=np.asarray(obj["lower"], dtype=float),
        upper=np.asarray(obj["upper"], dtype=float),
        alpha=float(obj["alpha"]),
        gamma=None if gamma is None else float(gamma),
    )
