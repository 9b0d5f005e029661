"""Simulation harness: data generator, built-in scorers, Monte Carlo oracle
curves and the coverage experiment grid.

The synthetic population draws 40 standardized covariates with pairwise
correlation 0.2 via the one-factor construction
``X_q = sqrt(0.2) * Z0 + sqrt(0.8) * Z_q`` (exact for this covariance, O(NQ),
no factorization). The outcome is Bernoulli with a logistic link on

    2*(X1^2 - 0.2*I(X2>0))*T - 0.8*I(X3>0) + 0.8*X4 - 0.4*X5^2 + eps - 3

where ``eps ~ N(0, sigma^2)``. Each arm's stored probability uses its own
eps draw; only the allocated arm's draw reaches the realized outcome, so
realized data does not depend on that bookkeeping choice.

Two built-in scorers stand in for externally trained ranking models:

* model "1": the per-unit true uplift plus N(0, 0.05^2) noise, a strong
  ranker whose curve dominates;
* model "2": a logistic S-learner on (X, T, X*T) features, trained by
  full-batch gradient descent with momentum on an independent draw, scored
  as p(x, T=1) - p(x, T=0).

Oracle curves are averages of full-information curve estimates over many
independent populations; the coverage experiment replays the whole pipeline
(generate, allocate, two-step sample on model 1's ranks, inclusion table,
nested bootstrap, bands) K times and reports band coverage of the oracle
plus bias and SE of the difference point estimate on the mean-uplift scale.

Replications are independent and run on split counter-based streams, so the
report is identical for any worker count.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ._streams import (
    SCOPE_BOOTSTRAP,
    SCOPE_DGP,
    SCOPE_ORACLE,
    SCOPE_REPLICATION,
    SCOPE_SAMPLE,
    SCOPE_SCORE_NOISE,
    SCOPE_TRAIN,
    derive_key,
    stream,
)
from .bootstrap import BootstrapConfig, difference_band, nested_bootstrap, summarize_band
from .curves import (
    Dataset,
    EstimationError,
    build_curve,
    grid_selection_sizes,
    rank_by_model,
    write_comment_header,
)
from .inclusion import inclusion_table
from .sampling import SamplingDesign, allocate_treatment, two_step_sample

N_COVARIATES = 40
COMMON_VARIANCE = 0.2
UNIQUE_VARIANCE = 0.8
ORACLE_NOISE_SCALE = 0.05

LogitFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


def default_outcome_logit(X: np.ndarray, treated: np.ndarray) -> np.ndarray:
    """Noise-free outcome logit of the built-in data generating process."""
    t = np.asarray(treated, dtype=np.float64)
    base = (
        -0.8 * (X[:, 2] > 0)
        + 0.8 * X[:, 3]
        - 0.4 * X[:, 4] ** 2
        - 3.0
    )
    return base + 2.0 * (X[:, 0] ** 2 - 0.2 * (X[:, 1] > 0)) * t


def _sigmoid(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


@dataclass(frozen=True)
class DgpSpec:
    """Parameters of one synthetic population."""

    n_units: int
    n_covariates: int = N_COVARIATES
    sigma: float = 1.0
    treat_ratio: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_units < 1:
            raise ValueError("population size must be positive")
        if self.n_covariates < 5:
            raise ValueError("the outcome function uses the first five covariates")
        if self.sigma <= 0:
            raise ValueError("noise scale must be positive")
        if not (0.0 < self.treat_ratio < 1.0):
            raise ValueError("treatment ratio must lie in (0, 1)")


@dataclass(frozen=True)
class Population:
    """A realized population with both arms' outcome probabilities stored."""

    covariates: np.ndarray
    treatment: np.ndarray
    outcome: np.ndarray
    p_control: np.ndarray
    p_treated: np.ndarray
    spec: DgpSpec

    def __len__(self) -> int:
        return self.covariates.shape[0]

    @property
    def true_uplift(self) -> np.ndarray:
        """Per-unit difference of the stored arm probabilities."""
        return self.p_treated - self.p_control

    def to_dataset(self, scores: np.ndarray,
                   model_labels: tuple[str, ...] = ()) -> Dataset:
        n = len(self)
        return Dataset(
            ids=np.arange(n, dtype=np.int64),
            treatment=self.treatment,
            outcome=self.outcome,
            scores=scores,
            observed=np.ones(n, dtype=bool),
            model_labels=model_labels,
        )


def generate_population(
    spec: DgpSpec,
    rng: np.random.Generator | None = None,
    logit_fn: LogitFn = default_outcome_logit,
) -> Population:
    """Draw covariates, per-arm outcome probabilities and realized outcomes.

    Stream consumption order: shared factor, unique factors, control eps,
    treated eps, treatment allocation, outcome uniforms.
    """
    if rng is None:
        rng = stream(derive_key(spec.seed, SCOPE_DGP))
    n, q = spec.n_units, spec.n_covariates
    shared = rng.standard_normal(n)
    unique = rng.standard_normal((n, q))
    X = math.sqrt(COMMON_VARIANCE) * shared[:, None] + math.sqrt(UNIQUE_VARIANCE) * unique
    eps_control = rng.normal(0.0, spec.sigma, n)
    eps_treated = rng.normal(0.0, spec.sigma, n)
    p_control = _sigmoid(logit_fn(X, np.zeros(n)) + eps_control)
    p_treated = _sigmoid(logit_fn(X, np.ones(n)) + eps_treated)
    treatment = allocate_treatment(n, spec.treat_ratio, rng)
    p_realized = np.where(treatment == 1, p_treated, p_control)
    outcome = (rng.random(n) < p_realized).astype(np.float64)
    return Population(
        covariates=X,
        treatment=treatment,
        outcome=outcome,
        p_control=p_control,
        p_treated=p_treated,
        spec=spec,
    )


# ---------------------------------------------------------------------------
# Built-in scorers
# ---------------------------------------------------------------------------

def _slearner_features(X: np.ndarray, treatment: np.ndarray) -> np.ndarray:
    t = np.asarray(treatment, dtype=np.float64)[:, None]
    return np.hstack([np.ones((X.shape[0], 1)), X, t, X * t])


def _train_logistic_gd(
    X: np.ndarray,
    treatment: np.ndarray,
    outcome: np.ndarray,
    *,
    learning_rate: float = 0.5,
    momentum: float = 0.9,
    n_iterations: int = 400,
) -> np.ndarray:
    """Full-batch gradient descent with momentum on the logistic loss."""
    features = _slearner_features(X, treatment)
    w = np.zeros(features.shape[1])
    velocity = np.zeros_like(w)
    m = outcome.shape[0]
    for _ in range(n_iterations):
        grad = features.T @ (_sigmoid(features @ w) - outcome) / m
        velocity = momentum * velocity - learning_rate * grad
        w = w + velocity
        if not np.isfinite(w).all():
            raise EstimationError("scorer training diverged (non-finite parameters)")
    return w


@dataclass(frozen=True)
class ScorerPair:
    """Pre-trained stand-ins for two externally built ranking models."""

    slearner_weights: np.ndarray
    noise_scale: float = ORACLE_NOISE_SCALE
    model_labels: tuple[str, str] = ("1", "2")

    def predicted_uplift(self, X: np.ndarray) -> np.ndarray:
        """S-learner score: predicted p(x, T=1) - p(x, T=0)."""
        n = X.shape[0]
        f1 = _slearner_features(X, np.ones(n))
        f0 = _slearner_features(X, np.zeros(n))
        w = self.slearner_weights
        return _sigmoid(f1 @ w) - _sigmoid(f0 @ w)

    def scores_for(self, population: Population, rng: np.random.Generator) -> np.ndarray:
        """Score matrix (model 1 = noisy truth, model 2 = S-learner)."""
        noisy = population.true_uplift + self.noise_scale * rng.standard_normal(len(population))
        learned = self.predicted_uplift(population.covariates)
        return np.column_stack([noisy, learned])


def train_builtin_scorers(
    seed: int,
    *,
    n_train: int = 50_000,
    sigma: float = 1.0,
    treat_ratio: float = 0.5,
    noise_scale: float = ORACLE_NOISE_SCALE,
    logit_fn: LogitFn = default_outcome_logit,
) -> ScorerPair:
    """Train the S-learner on an independent draw; the noisy-truth ranker
    needs no training."""
    spec = DgpSpec(n_units=n_train, sigma=sigma, treat_ratio=treat_ratio, seed=seed)
    rng = stream(derive_key(seed, SCOPE_TRAIN))
    population = generate_population(spec, rng, logit_fn=logit_fn)
    weights = _train_logistic_gd(population.covariates, population.treatment, population.outcome)
    return ScorerPair(slearner_weights=weights, noise_scale=noise_scale)


def builtin_scorers(
    population: Population,
    trained: ScorerPair,
    rng: np.random.Generator,
) -> np.ndarray:
    """Score columns for the two built-in models on ``population``."""
    return trained.scores_for(population, rng)


# ---------------------------------------------------------------------------
# Scenario grid
# ---------------------------------------------------------------------------

#: scenario id -> (rank-based selection percent, SRS percent)
SCENARIO_TABLE: dict[int, tuple[float, float]] = {
    0: (5.0, 1.0),
    1: (10.0, 5.0),
    2: (5.0, 0.5),
    3: (10.0, 1.0),
    4: (5.0, 5.0),
    5: (1.0, 0.1),
    6: (5.0, 10.0),
    7: (1.0, 10.0),
}


@dataclass(frozen=True)
class ScenarioSpec:
    """One coverage-experiment configuration."""

    scenario_id: int
    rank_pct: float
    srs_pct: float
    population_size: int
    treat_ratio: float = 0.5
    sigma: float = 1.0
    n_sims: int = 100
    oracle_reps: int = 200
    bootstrap: BootstrapConfig = field(default_factory=BootstrapConfig)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_sims < 1 or self.oracle_reps < 1:
            raise ValueError("replication counts must be positive")
        self.design()  # validates integral sizes

    @classmethod
    def from_table(cls, scenario_id: int, population_size: int, **kwargs) -> "ScenarioSpec":
        if scenario_id not in SCENARIO_TABLE:
            raise ValueError(
                f"unknown scenario id {scenario_id}; known ids: {sorted(SCENARIO_TABLE)}"
            )
        rank_pct, srs_pct = SCENARIO_TABLE[scenario_id]
        return cls(
            scenario_id=scenario_id,
            rank_pct=rank_pct,
            srs_pct=srs_pct,
            population_size=population_size,
            **kwargs,
        )

    def _integral(self, pct: float, what: str) -> int:
        exact = pct * self.population_size / 100.0
        rounded = round(exact)
        if abs(exact - rounded) > 1e-9:
            from .curves import DesignError

            raise DesignError(
                f"{what} {pct}% of N={self.population_size} is not integral ({exact})"
            )
        return int(rounded)

    def design(self) -> SamplingDesign:
        """Single-ranking-model two-step design implied by the percentages."""
        n_r = self._integral(self.srs_pct, "SRS percent")
        ranked = self._integral(self.rank_pct, "rank-based percent")
        return SamplingDesign.single_model(
            population_size=self.population_size,
            sample_size=n_r + ranked,
            srs_size=n_r,
        )


# ---------------------------------------------------------------------------
# Oracle curves
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OracleCurves:
    """Monte Carlo oracle mean-uplift values with their standard errors."""

    percentiles: np.ndarray
    ks: np.ndarray
    mean_uplift: np.ndarray  # (S, G)
    se: np.ndarray  # (S, G)
    diff_mean: np.ndarray  # (G,) model 1 - model 2
    diff_se: np.ndarray  # (G,)
    n_reps: int
    model_labels: tuple[str, ...]


def oracle_curves(
    scenario: ScenarioSpec,
    scorers: ScorerPair,
    n_reps: int | None = None,
    grid: Sequence[float] | None = None,
) -> OracleCurves:
    """Average full-information curve estimates over fresh populations."""
    n_reps = scenario.oracle_reps if n_reps is None else int(n_reps)
    if n_reps < 1:
        raise ValueError("oracle needs at least one replication")
    grid = tuple(grid) if grid is not None else scenario.bootstrap.grid
    N = scenario.population_size
    ks = grid_selection_sizes(grid, N)
    values = np.empty((n_reps, 2, len(ks)))
    for r in range(n_reps):
        spec = DgpSpec(
            n_units=N, sigma=scenario.sigma, treat_ratio=scenario.treat_ratio,
            seed=scenario.seed,
        )
        rng = stream(derive_key(scenario.seed, SCOPE_ORACLE, r, SCOPE_DGP))
        population = generate_population(spec, rng)
        noise_rng = stream(derive_key(scenario.seed, SCOPE_ORACLE, r, SCOPE_SCORE_NOISE))
        scores = scorers.scores_for(population, noise_rng)
        ds = population.to_dataset(scores, scorers.model_labels)
        for s in range(2):
            curve = build_curve(ds, rank_by_model(ds, s), grid, with_qini=False)
            values[r, s] = curve.mean_uplift
    mean = values.mean(axis=0)
    se = values.std(axis=0, ddof=1) / math.sqrt(n_reps) if n_reps > 1 else np.zeros_like(mean)
    diffs = values[:, 0, :] - values[:, 1, :]
    diff_se = diffs.std(axis=0, ddof=1) / math.sqrt(n_reps) if n_reps > 1 else np.zeros(len(ks))
    return OracleCurves(
        percentiles=np.asarray(grid, dtype=np.float64),
        ks=ks,
        mean_uplift=mean,
        se=se,
        diff_mean=diffs.mean(axis=0),
        diff_se=diff_se,
        n_reps=n_reps,
        model_labels=scorers.model_labels,
    )


# ---------------------------------------------------------------------------
# Coverage experiment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoverageReport:
    """Coverage, bias and SE per percentile for one scenario."""

    scenario: ScenarioSpec
    percentiles: np.ndarray
    ks: np.ndarray
    coverage: np.ndarray  # (3, G): model 1, model 2, difference
    diff_bias: np.ndarray  # (G,)
    diff_se: np.ndarray  # (G,)
    n_effective: int
    n_failed: int
    failures: tuple[str, ...] = ()

    def to_csv(self, path: str | Path, metadata: dict[str, object] | None = None) -> None:
        from .curves import _fmt

        with open(path, "w", newline="") as handle:
            write_comment_header(handle, metadata)
            writer = csv.writer(handle)
            writer.writerow(
                ["percentile", "N", "model1_cov", "model2_cov", "diff_cov",
                 "diff_bias", "diff_se"]
            )
            for g in range(self.percentiles.shape[0]):
                writer.writerow([
                    _fmt(float(self.percentiles[g])),
                    self.scenario.population_size,
                    _fmt(float(self.coverage[0, g])),
                    _fmt(float(self.coverage[1, g])),
                    _fmt(float(self.coverage[2, g])),
                    _fmt(float(self.diff_bias[g])),
                    _fmt(float(self.diff_se[g])),
                ])

    def summary(self) -> str:
        lines = [
            f"scenario {self.scenario.scenario_id} "
            f"(rank {self.scenario.rank_pct}% + SRS {self.scenario.srs_pct}%), "
            f"N={self.scenario.population_size}, "
            f"{self.n_effective} effective replications, {self.n_failed} failed",
            f"{'pct':>5} {'model1':>8} {'model2':>8} {'diff':>8} "
            f"{'diff_bias':>10} {'diff_se':>8}",
        ]
        for g in range(self.percentiles.shape[0]):
            lines.append(
                f"{self.percentiles[g]:5.0f} "
                f"{self.coverage[0, g]:8.3f} {self.coverage[1, g]:8.3f} "
                f"{self.coverage[2, g]:8.3f} {self.diff_bias[g]:+10.4f} "
                f"{self.diff_se[g]:8.4f}"
            )
        return "\n".join(lines)


def _coverage_replication(
    scenario: ScenarioSpec,
    scorers: ScorerPair,
    rep: int,
) -> np.ndarray:
    """One replication: returns (3 targets, 3 band rows, G) mean-uplift values.

    Target order: model 1, model 2, difference; rows are lower/median/upper.
    """
    design = scenario.design()
    N = scenario.population_size
    spec = DgpSpec(
        n_units=N, sigma=scenario.sigma, treat_ratio=scenario.treat_ratio,
        seed=scenario.seed,
    )
    rng_pop = stream(derive_key(scenario.seed, SCOPE_REPLICATION, rep, SCOPE_DGP))
    population = generate_population(spec, rng_pop)
    noise_rng = stream(derive_key(scenario.seed, SCOPE_REPLICATION, rep, SCOPE_SCORE_NOISE))
    scores = scorers.scores_for(population, noise_rng)
    ds = population.to_dataset(scores, scorers.model_labels)
    ranks = rank_by_model(ds, 0)
    rng_sample = stream(derive_key(scenario.seed, SCOPE_REPLICATION, rep, SCOPE_SAMPLE))
    chosen = two_step_sample(ds, design, ranks, rng_sample)
    table = inclusion_table(ranks, design)
    chosen = chosen.with_probabilities(table.probabilities)
    sample_ds = ds.subset(chosen.positions)
    cfg = replace(
        scenario.bootstrap,
        seed=derive_key(scenario.seed, SCOPE_REPLICATION, rep, SCOPE_BOOTSTRAP),
        threads=1,
    )
    ensemble = nested_bootstrap(sample_ds, chosen.p_inclusion, N, cfg)
    bands = [
        summarize_band(ensemble, 0),
        summarize_band(ensemble, 1),
        difference_band(ensemble, 0, 1),
    ]
    out = np.empty((3, 3, ensemble.ks.shape[0]))
    for i, band in enumerate(bands):
        out[i, 0] = band.lower / ensemble.ks
        out[i, 1] = band.median / ensemble.ks
        out[i, 2] = band.upper / ensemble.ks
    return out


def coverage_experiment(
    scenario: ScenarioSpec,
    oracle: OracleCurves | None = None,
    scorers: ScorerPair | None = None,
    threads: int = 1,
) -> CoverageReport:
    """Replicate the pipeline K times and score band coverage of the oracle."""
    if scorers is None:
        scorers = train_builtin_scorers(
            scenario.seed, sigma=scenario.sigma, treat_ratio=scenario.treat_ratio
        )
    if oracle is None:
        oracle = oracle_curves(scenario, scorers)
    if not np.array_equal(
        oracle.ks, grid_selection_sizes(scenario.bootstrap.grid, scenario.population_size)
    ):
        raise ValueError("oracle grid does not match the scenario grid")

    results: dict[int, np.ndarray] = {}
    failures: list[str] = []
    reps = list(range(scenario.n_sims))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = {
                pool.submit(_coverage_replication, scenario, scorers, rep): rep
                for rep in reps
            }
            for fut, rep in futures.items():
                try:
                    results[rep] = fut.result()
                except Exception as exc:  # recorded and excluded below
                    failures.append(f"replication {rep}: {exc}")
    else:
        for rep in reps:
            try:
                results[rep] = _coverage_replication(scenario, scorers, rep)
            except Exception as exc:
                failures.append(f"replication {rep}: {exc}")

    good = []
    for rep in sorted(results):
        values = results[rep]
        if np.isnan(values).any():
            failures.append(f"replication {rep}: band has missing grid points")
        else:
            good.append(values)
    n_failed = scenario.n_sims - len(good)
    if n_failed >= 0.05 * scenario.n_sims and n_failed > 0:
        raise EstimationError(
            f"{n_failed} of {scenario.n_sims} replications failed "
            f"(limit 5%): {'; '.join(failures[:5])}"
        )
    stacked = np.stack(good)  # (K, 3, 3, G)
    targets = np.stack([
        oracle.mean_uplift[0],
        oracle.mean_uplift[1],
        oracle.diff_mean,
    ])  # (3, G)
    lower, median, upper = stacked[:, :, 0, :], stacked[:, :, 1, :], stacked[:, :, 2, :]
    covered = (lower <= targets) & (targets <= upper)  # (K, 3, G)
    coverage = covered.mean(axis=0)
    diff_est = median[:, 2, :]
    diff_bias = diff_est.mean(axis=0) - oracle.diff_mean
    diff_se = diff_est.std(axis=0, ddof=1) if len(good) > 1 else np.zeros_like(oracle.diff_mean)
    return CoverageReport(
        scenario=scenario,
        percentiles=oracle.percentiles,
        ks=oracle.ks,
        coverage=coverage,
        diff_bias=diff_bias,
        diff_se=diff_se,
        n_effective=len(good),
        n_failed=n_failed,
        failures=tuple(failures),
    )
