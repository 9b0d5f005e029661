"""Domain types and deterministic uplift-curve mathematics.

The cumulative gain of selecting the top ``k`` units under a ranking model
is the observed mean outcome difference between arms within the selection,
scaled by the selection size::

    gain(k) = (mean Y over treated  -  mean Y over control) * k

evaluated on the ``k`` highest-ranked units. The Qini value rescales the
gain by the treated fraction of the selection, ``gain(k) * n_treated / k``.
Both are undefined when either arm is empty within the top ``k``; such
points carry the ``nan`` missing sentinel rather than a silent zero, and
downstream aggregation skips them.

Selection sizes are derived from percentiles as ``k = max(1, floor(q*N/100))``
so that k is monotone in q, never exceeds N, and never selects nothing.

Ranking is by descending score with ties broken by ascending unit id, which
makes every rank assignment a deterministic bijection onto ``1..N``.

All operations here are pure functions over immutable inputs and are safe
to call concurrently.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

DEFAULT_GRID: tuple[float, ...] = tuple(float(q) for q in range(5, 105, 5))

#: Missing-value sentinel for gain values where an arm is empty.
MISSING = math.nan


class UpliftBandError(Exception):
    """Base class for library errors."""


class SchemaError(UpliftBandError):
    """A CSV file does not match its declared schema."""


class ConfigurationError(UpliftBandError):
    """Inputs are structurally valid but inconsistent with the requested run."""


class DesignError(UpliftBandError):
    """A sampling design violates its invariants."""


class ConsistencyError(UpliftBandError):
    """An internal cross-check (e.g. a probability checksum) failed."""


class EstimationError(UpliftBandError):
    """Estimation could not produce a usable result."""


def is_missing(value: float) -> bool:
    """True when ``value`` is the missing sentinel."""
    return math.isnan(value)


@dataclass(frozen=True)
class UnitRecord:
    """One population member."""

    id: int
    treatment: int
    outcome: float
    scores: tuple[float, ...]
    observed: bool = True


@dataclass(frozen=True)
class Dataset:
    """Columnar collection of units sharing one score-model layout.

    ``scores`` has one column per model; ``model_labels`` names the columns
    (defaults to "1", "2", ...). Binary outcomes are stored as 0/1 floats so
    binary and continuous outcomes share one code path.
    """

    ids: np.ndarray
    treatment: np.ndarray
    outcome: np.ndarray
    scores: np.ndarray
    observed: np.ndarray
    model_labels: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        ids = np.asarray(self.ids, dtype=np.int64)
        treatment = np.asarray(self.treatment, dtype=np.int8)
        outcome = np.asarray(self.outcome, dtype=np.float64)
        scores = np.atleast_2d(np.asarray(self.scores, dtype=np.float64))
        observed = np.asarray(self.observed, dtype=bool)
        n = ids.shape[0]
        if n == 0:
            raise ValueError("dataset must contain at least one unit")
        if scores.shape[0] != n and scores.shape == (1, n):
            scores = scores.T
        for name, arr in (("treatment", treatment), ("outcome", outcome), ("observed", observed)):
            if arr.shape != (n,):
                raise ValueError(f"{name} must have shape ({n},), got {arr.shape}")
        if scores.shape[0] != n or scores.ndim != 2:
            raise ValueError(f"scores must have shape ({n}, S), got {scores.shape}")
        if np.unique(ids).size != n:
            raise ValueError("unit ids must be unique")
        bad = ~np.isin(treatment, (0, 1))
        if bad.any():
            raise ValueError(f"treatment must be 0/1; offending id {ids[bad][0]}")
        if not np.isfinite(scores).all():
            raise ValueError("scores must be finite")
        if not np.isfinite(outcome[observed]).all():
            raise ValueError("observed units must carry a finite outcome")
        labels = tuple(self.model_labels) or tuple(str(s + 1) for s in range(scores.shape[1]))
        if len(labels) != scores.shape[1]:
            raise ValueError("model_labels length must match the number of score columns")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "treatment", treatment)
        object.__setattr__(self, "outcome", outcome)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "observed", observed)
        object.__setattr__(self, "model_labels", labels)

    def __len__(self) -> int:
        return self.ids.shape[0]

    @property
    def n_models(self) -> int:
        return self.scores.shape[1]

    @property
    def fully_observed(self) -> bool:
        return bool(self.observed.all())

    def unit(self, position: int) -> UnitRecord:
        """Row view of the unit at ``position``."""
        return UnitRecord(
            id=int(self.ids[position]),
            treatment=int(self.treatment[position]),
            outcome=float(self.outcome[position]),
            scores=tuple(float(v) for v in self.scores[position]),
            observed=bool(self.observed[position]),
        )

    def model_index(self, label: str) -> int:
        """Resolve a model label to its score-column index."""
        try:
            return self.model_labels.index(str(label))
        except ValueError:
            raise ConfigurationError(
                f"unknown model {label!r}; available models: {', '.join(self.model_labels)}"
            ) from None

    def positions_of(self, ids: np.ndarray) -> np.ndarray:
        """Positions of ``ids`` within this dataset (error on unknown ids)."""
        ids = np.asarray(ids, dtype=np.int64)
        order = np.argsort(self.ids, kind="stable")
        pos = np.searchsorted(self.ids, ids, sorter=order)
        if (pos >= len(self)).any() or not (self.ids[order[np.minimum(pos, len(self) - 1)]] == ids).all():
            missing = ids[~np.isin(ids, self.ids)]
            raise ValueError(f"ids not present in dataset: {missing[:5].tolist()} ...")
        return order[pos]

    def subset(self, positions: np.ndarray) -> "Dataset":
        """New dataset restricted to ``positions`` (order preserved)."""
        positions = np.asarray(positions, dtype=np.int64)
        return Dataset(
            ids=self.ids[positions],
            treatment=self.treatment[positions],
            outcome=self.outcome[positions],
            scores=self.scores[positions],
            observed=self.observed[positions],
            model_labels=self.model_labels,
        )


@dataclass(frozen=True)
class RankAssignment:
    """Ranks of every unit under one model; rank 1 is the top candidate."""

    model_index: int
    ranks: np.ndarray

    def __post_init__(self) -> None:
        ranks = np.asarray(self.ranks, dtype=np.int64)
        n = ranks.shape[0]
        if n == 0:
            raise ValueError("rank assignment cannot be empty")
        counts = np.bincount(ranks, minlength=n + 1)
        if counts[0] != 0 or (counts[1:] != 1).any():
            raise ValueError("ranks must be a bijection onto 1..N")
        object.__setattr__(self, "ranks", ranks)

    def order(self) -> np.ndarray:
        """Unit positions sorted from rank 1 to rank N."""
        return np.argsort(self.ranks, kind="stable")


@dataclass(frozen=True)
class UpliftCurve:
    """Gain values on a percentile grid; ``nan`` marks missing points."""

    percentiles: np.ndarray
    ks: np.ndarray
    gain: np.ndarray
    qini: np.ndarray | None = None

    def __post_init__(self) -> None:
        percentiles = np.asarray(self.percentiles, dtype=np.float64)
        ks = np.asarray(self.ks, dtype=np.int64)
        gain = np.asarray(self.gain, dtype=np.float64)
        if not (percentiles.shape == ks.shape == gain.shape) or percentiles.ndim != 1:
            raise ValueError("percentiles, ks and gain must be 1-d arrays of one length")
        if (np.diff(ks) <= 0).any():
            raise ValueError("selection sizes must be strictly increasing")
        if (ks < 1).any():
            raise ValueError("selection sizes must be >= 1")
        qini = self.qini
        if qini is not None:
            qini = np.asarray(qini, dtype=np.float64)
            if qini.shape != gain.shape:
                raise ValueError("qini must match the grid length")
        object.__setattr__(self, "percentiles", percentiles)
        object.__setattr__(self, "ks", ks)
        object.__setattr__(self, "gain", gain)
        object.__setattr__(self, "qini", qini)

    @property
    def mean_uplift(self) -> np.ndarray:
        """Gain per selected unit, gain(k)/k."""
        return self.gain / self.ks

    def __len__(self) -> int:
        return self.percentiles.shape[0]


@dataclass(frozen=True)
class CurveBand:
    """Pointwise band (lower, median, upper) on the shared grid."""

    percentiles: np.ndarray
    ks: np.ndarray
    lower: np.ndarray
    median: np.ndarray
    upper: np.ndarray
    alpha: float
    label: str = ""

    def __post_init__(self) -> None:
        percentiles = np.asarray(self.percentiles, dtype=np.float64)
        ks = np.asarray(self.ks, dtype=np.int64)
        lower = np.asarray(self.lower, dtype=np.float64)
        median = np.asarray(self.median, dtype=np.float64)
        upper = np.asarray(self.upper, dtype=np.float64)
        shapes = {a.shape for a in (percentiles, ks, lower, median, upper)}
        if len(shapes) != 1 or percentiles.ndim != 1:
            raise ValueError("band arrays must be 1-d and share one length")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        ok = np.isnan(lower) | ((lower <= median) & (median <= upper))
        if not ok.all():
            raise ValueError("band ordering violated: lower <= median <= upper")
        for name, arr in (("percentiles", percentiles), ("ks", ks), ("lower", lower),
                          ("median", median), ("upper", upper)):
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.percentiles.shape[0]


def selection_size(percentile: float, n_population: int) -> int:
    """Map a percentile in (0, 100] to a selection size."""
    if not (0.0 < percentile <= 100.0):
        raise ValueError(f"percentile must lie in (0, 100], got {percentile}")
    if n_population < 1:
        raise ValueError("population size must be positive")
    # +1e-9 guards against float round-down on exactly-integral products
    return max(1, int(math.floor(percentile * n_population / 100.0 + 1e-9)))


def grid_selection_sizes(percentiles: Sequence[float], n_population: int) -> np.ndarray:
    """Selection sizes for an ascending percentile grid."""
    qs = np.asarray(list(percentiles), dtype=np.float64)
    if qs.size == 0:
        raise ValueError("grid must contain at least one percentile")
    if (np.diff(qs) <= 0).any():
        raise ValueError("grid percentiles must be strictly ascending")
    ks = np.array([selection_size(q, n_population) for q in qs], dtype=np.int64)
    if (np.diff(ks) <= 0).any():
        raise ValueError(
            "grid maps to non-increasing selection sizes at this population size; "
            "use a coarser percentile grid"
        )
    return ks


def rank_by_model(units: Dataset, model_index: int) -> RankAssignment:
    """Rank all units by one model's score, descending, ties by ascending id."""
    if not (0 <= model_index < units.n_models):
        raise ConfigurationError(
            f"model index {model_index} out of range for {units.n_models} score column(s)"
        )
    order = np.lexsort((units.ids, -units.scores[:, model_index]))
    ranks = np.empty(len(units), dtype=np.int64)
    ranks[order] = np.arange(1, len(units) + 1)
    return RankAssignment(model_index=model_index, ranks=ranks)


def _arm_means(treatment: np.ndarray, outcome: np.ndarray) -> tuple[float, float] | None:
    n_t = int(np.count_nonzero(treatment))
    n_c = treatment.shape[0] - n_t
    if n_t == 0 or n_c == 0:
        return None
    treated = treatment == 1
    return float(outcome[treated].mean()), float(outcome[~treated].mean())


def cumulative_gain(topk_units: Iterable[tuple[int, float]], k: int) -> float:
    """Gain of a top-k selection given its (treatment, outcome) pairs.

    Returns the missing sentinel when either arm is empty.
    """
    if k <= 0:
        raise ValueError(f"selection size must be positive, got {k}")
    pairs = list(topk_units)
    if len(pairs) != k:
        raise ValueError(f"expected exactly {k} units, got {len(pairs)}")
    treatment = np.array([int(t) for t, _ in pairs], dtype=np.int8)
    outcome = np.array([float(y) for _, y in pairs], dtype=np.float64)
    means = _arm_means(treatment, outcome)
    if means is None:
        return MISSING
    mean_t, mean_c = means
    return (mean_t - mean_c) * k


def qini_value(topk_units: Iterable[tuple[int, float]], k: int) -> float:
    """Qini value of a top-k selection: gain scaled by the treated fraction."""
    if k <= 0:
        raise ValueError(f"selection size must be positive, got {k}")
    pairs = list(topk_units)
    if len(pairs) != k:
        raise ValueError(f"expected exactly {k} units, got {len(pairs)}")
    gain = cumulative_gain(pairs, k)
    if is_missing(gain):
        return MISSING
    n_t = sum(int(t) for t, _ in pairs)
    return gain * n_t / k


def build_curve(
    units: Dataset,
    ranks: RankAssignment,
    grid_percentiles: Sequence[float] = DEFAULT_GRID,
    *,
    with_qini: bool = True,
) -> UpliftCurve:
    """Evaluate the curve of ``units`` under ``ranks`` on a percentile grid."""
    if len(units) == 0:
        raise ValueError("dataset must contain at least one unit")
    if ranks.ranks.shape[0] != len(units):
        raise ValueError("rank assignment does not cover the dataset")
    if not units.fully_observed:
        raise ValueError("curve evaluation needs a fully observed dataset")
    n = len(units)
    ks = grid_selection_sizes(grid_percentiles, n)
    order = ranks.order()
    treated = units.treatment[order] == 1
    y = units.outcome[order]
    cnt_t = np.cumsum(treated)
    cnt_c = np.cumsum(~treated)
    sum_t = np.cumsum(np.where(treated, y, 0.0))
    sum_c = np.cumsum(np.where(treated, 0.0, y))
    idx = ks - 1
    n_t = cnt_t[idx].astype(np.float64)
    n_c = cnt_c[idx].astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        gain = (sum_t[idx] / n_t - sum_c[idx] / n_c) * ks
        qini = gain * n_t / ks
    empty = (n_t == 0) | (n_c == 0)
    gain[empty] = MISSING
    qini[empty] = MISSING
    qs = np.asarray(list(grid_percentiles), dtype=np.float64)
    return UpliftCurve(percentiles=qs, ks=ks, gain=gain, qini=qini if with_qini else None)


def curve_difference(a: UpliftCurve, b: UpliftCurve) -> UpliftCurve:
    """Pointwise difference ``a - b``; missing propagates."""
    if not np.array_equal(a.percentiles, b.percentiles) or not np.array_equal(a.ks, b.ks):
        raise ValueError("curves must share an identical grid")
    qini = None
    if a.qini is not None and b.qini is not None:
        qini = a.qini - b.qini
    return UpliftCurve(percentiles=a.percentiles, ks=a.ks, gain=a.gain - b.gain, qini=qini)


# ---------------------------------------------------------------------------
# CSV interchange
# ---------------------------------------------------------------------------

def _fmt(value: float) -> str:
    """Full-precision float field; missing becomes an empty field."""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    if value == 0.0:
        return "0.0"
    return repr(float(value))


def write_comment_header(handle, metadata: dict[str, object] | None) -> None:
    for key, val in (metadata or {}).items():
        handle.write(f"# {key}={val}\n")


def read_dataset_csv(path: str | Path) -> Dataset:
    """Read a unit dataset.

    Expected header: ``id,treatment,outcome,score_1,...,score_S[,observed]``.
    The outcome field may be empty only when the unit is marked unobserved.
    """
    import pandas as pd

    path = Path(path)
    try:
        frame = pd.read_csv(path, comment="#", float_precision="round_trip")
    except Exception as exc:
        raise SchemaError(f"{path}: cannot parse CSV ({exc})") from exc
    cols = list(frame.columns)
    score_cols = [c for c in cols if c.startswith("score_")]
    required = ["id", "treatment", "outcome"]
    missing_cols = [c for c in required if c not in cols]
    if missing_cols or not score_cols:
        raise SchemaError(
            f"{path}: header must be id,treatment,outcome,score_1,...[,observed]; "
            f"missing {missing_cols or ['score_*']}"
        )
    labels = tuple(c[len("score_"):] for c in score_cols)
    if "observed" in cols:
        observed = frame["observed"].fillna(0).astype(int).to_numpy(dtype=bool)
    else:
        observed = np.ones(len(frame), dtype=bool)
    outcome = pd.to_numeric(frame["outcome"], errors="coerce").to_numpy(dtype=np.float64)
    bad_rows = np.nonzero(observed & ~np.isfinite(outcome))[0]
    if bad_rows.size:
        raise SchemaError(
            f"{path}: observed unit with missing/non-numeric outcome at data row "
            f"{int(bad_rows[0]) + 1}"
        )
    try:
        return Dataset(
            ids=frame["id"].to_numpy(dtype=np.int64),
            treatment=frame["treatment"].to_numpy(dtype=np.int8),
            outcome=outcome,
            scores=frame[score_cols].to_numpy(dtype=np.float64),
            observed=observed,
            model_labels=labels,
        )
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}") from exc


def write_dataset_csv(path: str | Path, units: Dataset,
                      metadata: dict[str, object] | None = None) -> None:
    with open(path, "w", newline="") as handle:
        write_comment_header(handle, metadata)
        writer = csv.writer(handle)
        writer.writerow(
            ["id", "treatment", "outcome"]
            + [f"score_{label}" for label in units.model_labels]
            + ["observed"]
        )
        for i in range(len(units)):
            outcome = units.outcome[i]
            writer.writerow(
                [int(units.ids[i]), int(units.treatment[i]),
                 _fmt(float(outcome)) if units.observed[i] else ""]
                + [_fmt(float(v)) for v in units.scores[i]]
                + [int(units.observed[i])]
            )


def write_curve_csv(path: str | Path, curve: UpliftCurve,
                    metadata: dict[str, object] | None = None) -> None:
    """Emit ``percentile,k,gain,qini,mean_uplift`` rows (missing -> empty)."""
    with open(path, "w", newline="") as handle:
        write_comment_header(handle, metadata)
        writer = csv.writer(handle)
        writer.writerow(["percentile", "k", "gain", "qini", "mean_uplift"])
        mean_uplift = curve.mean_uplift
        for i in range(len(curve)):
            qini = curve.qini[i] if curve.qini is not None else MISSING
            writer.writerow([
                _fmt(float(curve.percentiles[i])),
                int(curve.ks[i]),
                _fmt(float(curve.gain[i])),
                _fmt(float(qini)),
                _fmt(float(mean_uplift[i])),
            ])
