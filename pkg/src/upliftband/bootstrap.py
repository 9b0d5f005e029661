"""Nested bootstrap: curve point estimates and pointwise confidence bands.

For each of B outer replicates, the sample is resampled with replacement at
its own size n with equal weights. Within an outer replicate, D inner
resamples of the full population size N are drawn with replacement using
inverse inclusion probabilities as weights; each inner resample acts as a
pseudo-population on which every model's curve is evaluated (re-ranked by
the stored scores). The D inner curves are consolidated pointwise by
median, skipping missing points, giving one aggregated curve per model per
outer replicate. Band edges and the point estimate are pointwise empirical
quantiles (linear interpolation) over the B aggregates: alpha/2, 0.5 and
1 - alpha/2.

Model differences are paired within each outer replicate before taking
quantiles. Pairing uses the shared inner draws, which is also what makes
the difference at the 100th percentile exactly zero: a full-population
selection is ranking-invariant, so every model sees the same gain there.

Missing-point policy: a grid point missing in all D inner curves is missing
in that outer aggregate; a point missing in more than half of the B outer
aggregates is degenerate and is carried as missing with a warning.

Determinism: outer replicate b draws from its own counter-based stream, so
results are identical for any thread count. Inner resampling uses an alias
table built once per outer replicate (O(n) build, O(1) per draw, one
uniform variate per draw).
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import _kernels
from ._streams import SCOPE_BOOTSTRAP, derive_key, stream
from .curves import (
    DEFAULT_GRID,
    ConfigurationError,
    CurveBand,
    Dataset,
    grid_selection_sizes,
    write_comment_header,
)


@dataclass(frozen=True)
class BootstrapConfig:
    """Replication counts, band level, grid and seeding for one run."""

    n_outer: int = 100
    n_inner: int = 10
    alpha: float = 0.05
    grid: tuple[float, ...] = DEFAULT_GRID
    seed: int = 0
    threads: int = 1

    def __post_init__(self) -> None:
        if self.n_outer < 1 or self.n_inner < 1:
            raise ValueError("replication counts must be at least 1")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")
        object.__setattr__(self, "grid", tuple(float(q) for q in self.grid))


class AliasTable:
    """Walker/Vose alias table for O(1) weighted draws with replacement.

    Construction is deterministic (explicit index stacks, ascending order),
    and each draw consumes exactly one uniform variate: the integer part
    picks a column, the fractional part decides between it and its alias.
    """

    def __init__(self, weights: np.ndarray) -> None:
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or w.shape[0] == 0:
            raise ValueError("weights must be a non-empty 1-d array")
        if not np.isfinite(w).all() or (w < 0).any():
            raise ValueError("weights must be finite and non-negative")
        total = w.sum()
        if total <= 0:
            raise ValueError("at least one weight must be positive")
        n = w.shape[0]
        prob = w * (n / total)
        alias = np.arange(n, dtype=np.int64)
        small = [i for i in range(n) if prob[i] < 1.0]
        large = [i for i in range(n) if prob[i] >= 1.0]
        while small and large:
            s = small.pop()
            l = large.pop()
            alias[s] = l
            prob[l] = (prob[l] + prob[s]) - 1.0
            (small if prob[l] < 1.0 else large).append(l)
        for i in large + small:
            prob[i] = 1.0
        self._prob = prob
        self._alias = alias
        self.size = n

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` indices with replacement."""
        u = rng.random(size) * self.size
        col = u.astype(np.int64)
        frac = u - col
        return np.where(frac < self._prob[col], col, self._alias[col])


def outer_resample(n_members: int, rng: np.random.Generator) -> np.ndarray:
    """Equal-weight resample of the sample with replacement, as counts.

    Returns the multiset encoded as a multiplicity vector of length
    ``n_members`` summing to ``n_members``.
    """
    if n_members < 1:
        raise ValueError("sample must contain at least one member")
    draws = rng.integers(0, n_members, size=n_members)
    return np.bincount(draws, minlength=n_members)


def inner_resample(
    multiplicities: np.ndarray,
    p_inclusion: np.ndarray,
    population_size: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Pseudo-population of ``population_size`` draws, weighted by mult/p.

    Returns a multiplicity vector over the sample members summing to
    ``population_size``.
    """
    mult = np.asarray(multiplicities, dtype=np.int64)
    p = np.asarray(p_inclusion, dtype=np.float64)
    if mult.shape != p.shape:
        raise ValueError("multiplicities and probabilities must align")
    if np.isnan(p).any() or (p <= 0).any():
        raise ConfigurationError(
            "every member needs a positive inclusion probability; "
            "run the sampler or provide a design plus ranks to recompute them"
        )
    table = AliasTable(mult / p)
    draws = table.sample(rng, population_size)
    return np.bincount(draws, minlength=mult.shape[0])


@dataclass(frozen=True)
class CurveEnsemble:
    """B aggregated curves per model on a shared grid (nan = missing)."""

    gains: np.ndarray  # (S, B, G)
    percentiles: np.ndarray
    ks: np.ndarray
    model_labels: tuple[str, ...]
    config: BootstrapConfig

    @property
    def n_models(self) -> int:
        return self.gains.shape[0]

    @property
    def n_outer(self) -> int:
        return self.gains.shape[1]

    def model_index(self, label: str) -> int:
        try:
            return self.model_labels.index(str(label))
        except ValueError:
            raise ConfigurationError(
                f"unknown model {label!r}; available models: {', '.join(self.model_labels)}"
            ) from None


def _outer_aggregate(
    b: int,
    key: int,
    treatment: np.ndarray,
    outcome: np.ndarray,
    p: np.ndarray,
    orders: np.ndarray,
    ks: np.ndarray,
    n_inner: int,
    population_size: int,
) -> np.ndarray:
    """One outer replicate: D inner pseudo-populations, median-aggregated."""
    rng = stream(key, b)
    n = treatment.shape[0]
    mult = outer_resample(n, rng)
    table = AliasTable(mult / p)
    counts = np.empty((n_inner, n), dtype=np.int64)
    for d in range(n_inner):
        counts[d] = np.bincount(table.sample(rng, population_size), minlength=n)
    gains = _kernels.curve_gains_from_counts(counts, orders, treatment, outcome, ks)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-nan medians are legal
        return np.nanmedian(gains, axis=0)  # (S, G)


def nested_bootstrap(
    sample: Dataset,
    p_inclusion: np.ndarray,
    population_size: int,
    config: BootstrapConfig,
) -> CurveEnsemble:
    """Run the nested bootstrap over an observed sample.

    ``sample`` holds the chosen units with arms, outcomes and all score
    columns; ``p_inclusion`` aligns with it positionally.
    """
    if not sample.fully_observed:
        raise ValueError("every sampled member must be observed (arm and outcome)")
    p = np.asarray(p_inclusion, dtype=np.float64)
    if p.shape != (len(sample),):
        raise ValueError("p_inclusion must align with the sample")
    if np.isnan(p).any() or (p <= 0).any() or (p > 1).any():
        raise ConfigurationError(
            "every member needs an inclusion probability in (0, 1]; "
            "run the sampler or provide a design plus ranks to recompute them"
        )
    if population_size < len(sample):
        raise ValueError("population size cannot be smaller than the sample")
    ks = grid_selection_sizes(config.grid, population_size)
    n = len(sample)
    n_models = sample.n_models
    orders = np.empty((n_models, n), dtype=np.int64)
    for s in range(n_models):
        orders[s] = np.lexsort((sample.ids, -sample.scores[:, s]))
    key = derive_key(config.seed, SCOPE_BOOTSTRAP)
    args = (key, sample.treatment, sample.outcome, p, orders, ks,
            config.n_inner, population_size)

    results: list[np.ndarray | None] = [None] * config.n_outer
    if config.threads == 1:
        for b in range(config.n_outer):
            results[b] = _outer_aggregate(b, *args)
    else:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            futures = {pool.submit(_outer_aggregate, b, *args): b for b in range(config.n_outer)}
            for fut, b in futures.items():
                results[b] = fut.result()
    gains = np.stack(results, axis=1)  # (S, B, G)

    degenerate = np.isnan(gains).sum(axis=1) > config.n_outer / 2  # (S, G)
    if degenerate.any():
        s_idx, g_idx = np.nonzero(degenerate)
        warnings.warn(
            "grid point(s) missing in more than half of the outer replicates: "
            + ", ".join(
                f"model {sample.model_labels[s]} at percentile {config.grid[g]:g}"
                for s, g in zip(s_idx[:5], g_idx[:5])
            ),
            RuntimeWarning,
            stacklevel=2,
        )
    return CurveEnsemble(
        gains=gains,
        percentiles=np.asarray(config.grid, dtype=np.float64),
        ks=ks,
        model_labels=sample.model_labels,
        config=config,
    )


def _band_from_values(
    values: np.ndarray,
    percentiles: np.ndarray,
    ks: np.ndarray,
    alpha: float,
    label: str,
) -> CurveBand:
    """Pointwise (alpha/2, 0.5, 1-alpha/2) quantiles over outer replicates."""
    n_outer, n_grid = values.shape
    lower = np.full(n_grid, np.nan)
    median = np.full(n_grid, np.nan)
    upper = np.full(n_grid, np.nan)
    degenerate = []
    for g in range(n_grid):
        col = values[:, g]
        valid = col[~np.isnan(col)]
        if n_outer - valid.shape[0] > n_outer / 2:
            degenerate.append(percentiles[g])
            continue
        lower[g], median[g], upper[g] = np.quantile(
            valid, [alpha / 2.0, 0.5, 1.0 - alpha / 2.0], method="linear"
        )
    if degenerate:
        warnings.warn(
            f"band {label or '(unnamed)'}: degenerate grid point(s) at percentile(s) "
            + ", ".join(f"{q:g}" for q in degenerate[:5])
            + "; carried as missing",
            RuntimeWarning,
            stacklevel=3,
        )
    return CurveBand(
        percentiles=percentiles, ks=ks, lower=lower, median=median, upper=upper,
        alpha=alpha, label=label,
    )


def summarize_band(ensemble: CurveEnsemble, model: int | str, alpha: float | None = None) -> CurveBand:
    """Band and point estimate for one model."""
    s = ensemble.model_index(model) if isinstance(model, str) else int(model)
    if not (0 <= s < ensemble.n_models):
        raise ConfigurationError(
            f"unknown model index {s}; available models: {', '.join(ensemble.model_labels)}"
        )
    alpha = ensemble.config.alpha if alpha is None else alpha
    return _band_from_values(
        ensemble.gains[s], ensemble.percentiles, ensemble.ks, alpha,
        label=ensemble.model_labels[s],
    )


def difference_band(
    ensemble: CurveEnsemble,
    model_a: int | str,
    model_b: int | str,
    alpha: float | None = None,
) -> CurveBand:
    """Band of the paired pointwise difference ``model_a - model_b``."""
    a = ensemble.model_index(model_a) if isinstance(model_a, str) else int(model_a)
    b = ensemble.model_index(model_b) if isinstance(model_b, str) else int(model_b)
    for s in (a, b):
        if not (0 <= s < ensemble.n_models):
            raise ConfigurationError(
                f"unknown model index {s}; available models: {', '.join(ensemble.model_labels)}"
            )
    alpha = ensemble.config.alpha if alpha is None else alpha
    diffs = ensemble.gains[a] - ensemble.gains[b]
    label = f"{ensemble.model_labels[a]}-{ensemble.model_labels[b]}"
    return _band_from_values(diffs, ensemble.percentiles, ensemble.ks, alpha, label=label)


# ---------------------------------------------------------------------------
# CSV interchange
# ---------------------------------------------------------------------------

def write_band_csv(path: str | Path, bands: list[CurveBand],
                   metadata: dict[str, object] | None = None,
                   verdicts: dict[str, list[str]] | None = None) -> None:
    """Emit ``model,percentile,k,lower,median,upper[,verdict]`` rows."""
    from .curves import _fmt

    with open(path, "w", newline="") as handle:
        write_comment_header(handle, metadata)
        writer = csv.writer(handle)
        header = ["model", "percentile", "k", "lower", "median", "upper"]
        if verdicts is not None:
            header.append("verdict")
        writer.writerow(header)
        for band in bands:
            verdict_col = (verdicts or {}).get(band.label)
            for g in range(len(band)):
                row = [
                    band.label,
                    _fmt(float(band.percentiles[g])),
                    int(band.ks[g]),
                    _fmt(float(band.lower[g])),
                    _fmt(float(band.median[g])),
                    _fmt(float(band.upper[g])),
                ]
                if verdicts is not None:
                    row.append(verdict_col[g] if verdict_col else "")
                writer.writerow(row)


def write_ensemble_csv(path: str | Path, ensemble: CurveEnsemble,
                       metadata: dict[str, object] | None = None) -> None:
    """Audit dump: ``model,b,percentile,gain`` for every outer aggregate."""
    from .curves import _fmt

    with open(path, "w", newline="") as handle:
        write_comment_header(handle, metadata)
        writer = csv.writer(handle)
        writer.writerow(["model", "b", "percentile", "gain"])
        for s in range(ensemble.n_models):
            for b in range(ensemble.n_outer):
                for g in range(ensemble.percentiles.shape[0]):
                    writer.writerow([
                        ensemble.model_labels[s],
                        b,
                        _fmt(float(ensemble.percentiles[g])),
                        _fmt(float(ensemble.gains[s, b, g])),
                    ])
