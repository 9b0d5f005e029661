"""Exact per-unit inclusion probabilities for the two-step sampling scheme.

With a single ranking model, a unit whose rank is ``m`` (rank 1 = top) is
included with probability

* 1                       when ``m <= n - n_r`` (guaranteed by Step 2),
* ``n_r / N``             when ``m > n``       (reachable in Step 1 only),
* ``n_r/N + (1 - n_r/N) * P(Z <= n - n_r - 1)`` otherwise, where
  ``Z ~ Hypergeometric(N-1, m-1, N-1-n_r)`` counts the better-ranked units
  that survive Step 1 alongside the unit.

With ``S0 >= 2`` ranking models, the Step-2 term becomes a sum over
sub-universes, each contributing ``(1 - n_r/N) * N'_s/(N - n_r)`` times the
CDF of ``Hypergeometric(N-1, m_s - 1, N'_s - 1)`` at ``n'_s - 1`` (or the
constant 0/1 boundary cases).

The hypergeometric kernel works in log space via ``lgamma`` so population
sizes in the millions neither overflow nor underflow; CDFs are accumulated
in probability space from the distribution mode outward with a relative
tail cut of 1e-16, using the term ratio recurrence so each additional term
costs O(1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .curves import ConsistencyError, RankAssignment
from .sampling import SamplingDesign

_TAIL_CUT = 1e-16


@dataclass(frozen=True)
class HypergeomParams:
    """Parameters (population, successes, draws) of a hypergeometric law."""

    population: int
    successes: int
    draws: int

    def __post_init__(self) -> None:
        if self.population < 0:
            raise ValueError("population must be non-negative")
        if not (0 <= self.successes <= self.population):
            raise ValueError("successes must lie in [0, population]")
        if not (0 <= self.draws <= self.population):
            raise ValueError("draws must lie in [0, population]")

    @property
    def support_min(self) -> int:
        return max(0, self.draws - (self.population - self.successes))

    @property
    def support_max(self) -> int:
        return min(self.successes, self.draws)


def _log_choose(a: int, b: int) -> float:
    return math.lgamma(a + 1) - math.lgamma(b + 1) - math.lgamma(a - b + 1)


def hypergeom_log_pmf(params: HypergeomParams, k: int) -> float:
    """Log pmf at ``k``; exactly ``-inf`` outside the support."""
    if not (params.support_min <= k <= params.support_max):
        return -math.inf
    return (
        _log_choose(params.successes, k)
        + _log_choose(params.population - params.successes, params.draws - k)
        - _log_choose(params.population, params.draws)
    )


def hypergeom_cdf(params: HypergeomParams, upper: int) -> float:
    """P(Z <= upper), accumulated mode-outward in probability space."""
    lo, hi = params.support_min, params.support_max
    if upper >= hi:
        return 1.0
    if upper < lo:
        return 0.0
    N, K, n = params.population, params.successes, params.draws
    mode = min(max((n + 1) * (K + 1) // (N + 2), lo), hi)

    term_mode = math.exp(hypergeom_log_pmf(params, mode))
    total = term_mode if mode <= upper else 0.0
    # ascending from the mode
    term = term_mode
    for k in range(mode + 1, hi + 1):
        term *= (K - k + 1) * (n - k + 1) / (k * (N - K - n + k))
        if k <= upper:
            total += term
        elif term < _TAIL_CUT * max(total, term_mode):
            break
    # descending from the mode
    term = term_mode
    for k in range(mode - 1, lo - 1, -1):
        term *= ((k + 1) * (N - K - n + k + 1)) / ((K - k) * (n - k))
        if k <= upper:
            total += term
        if term < _TAIL_CUT * max(total, term_mode):
            break
    return min(total, 1.0)


@lru_cache(maxsize=None)
def _step2_single(m: int, N: int, n: int, n_r: int) -> float:
    """Step-2 inclusion term for a middle-case rank under one ranking model."""
    params = HypergeomParams(population=N - 1, successes=m - 1, draws=N - 1 - n_r)
    return (1.0 - n_r / N) * hypergeom_cdf(params, n - n_r - 1)


def inclusion_prob_single(m: int, design: SamplingDesign) -> float:
    """Inclusion probability of the unit ranked ``m`` when one model ranks."""
    if design.n_models != 1:
        raise ValueError("inclusion_prob_single requires a single-model design")
    if not (1 <= m <= design.population_size):
        raise ValueError(f"rank must lie in 1..{design.population_size}, got {m}")
    N, n, n_r = design.population_size, design.sample_size, design.srs_size
    if m > n:
        return n_r / N
    if m <= n - n_r:
        return 1.0
    return n_r / N + _step2_single(m, N, n, n_r)


@lru_cache(maxsize=None)
def _step2_multi(m: int, N: int, n_r: int, sub_size: int, quota: int) -> float:
    """Step-2 inclusion term contributed by one sub-universe."""
    if m > N - sub_size + quota:
        return 0.0
    base = (1.0 - n_r / N) * sub_size / (N - n_r)
    if m <= quota:
        return base
    params = HypergeomParams(population=N - 1, successes=m - 1, draws=sub_size - 1)
    return base * hypergeom_cdf(params, quota - 1)


def inclusion_prob_multi(ranks: Sequence[int], design: SamplingDesign) -> float:
    """Inclusion probability from per-model ranks when several models rank."""
    if design.n_models < 2:
        raise ValueError("inclusion_prob_multi requires at least two ranking models")
    if len(ranks) != design.n_models:
        raise ValueError(
            f"need one rank per ranking model ({design.n_models}), got {len(ranks)}"
        )
    N, n_r = design.population_size, design.srs_size
    quotas = design.rank_quotas
    for m in ranks:
        if not (1 <= m <= N):
            raise ValueError(f"rank must lie in 1..{N}, got {m}")
    # Boundary shortcuts keep the exact values 1 and n_r/N free of float drift.
    if all(m <= q for m, q in zip(ranks, quotas)):
        return 1.0
    if all(m > N - Ns + q for m, Ns, q in zip(ranks, design.sub_sizes, quotas)):
        return n_r / N
    total = n_r / N
    for m, sub_size, quota in zip(ranks, design.sub_sizes, quotas):
        total += _step2_multi(int(m), N, n_r, sub_size, quota)
    return total


@dataclass(frozen=True)
class InclusionTable:
    """Per-unit inclusion probabilities under a design, checksum-validated."""

    probabilities: np.ndarray
    design: SamplingDesign

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "probabilities", np.asarray(self.probabilities, dtype=np.float64)
        )


def _middle_cdf_bulk(m: int, N: int, draws: int, upper: int) -> float:
    """One middle-case CDF via vectorized mode-outward ratio products.

    Numerically equivalent to ``hypergeom_cdf`` (same recurrence, same tail
    cut) but with the per-term loop in numpy; used for large tables where
    the scalar loop would dominate runtime.
    """
    K = m - 1
    lo = max(0, draws - (N - 1 - K))
    hi = min(K, draws)
    if upper >= hi:
        return 1.0
    if upper < lo:
        return 0.0
    mode = min(max((draws + 1) * (K + 1) // (N + 1), lo), hi)
    mean = draws * K / (N - 1)
    sd = math.sqrt(
        max(draws * (K / (N - 1)) * (1 - K / (N - 1)) * ((N - 1 - draws) / max(N - 2, 1)), 1.0)
    )
    window = int(16 * sd + 50)
    if upper >= mean + window:
        return 1.0
    if upper <= mean - window:
        return 0.0
    params = HypergeomParams(population=N - 1, successes=K, draws=draws)
    term_mode = math.exp(hypergeom_log_pmf(params, mode))
    total = term_mode if mode <= upper else 0.0
    up_hi = min(hi, upper)
    if up_hi > mode:
        k = np.arange(mode + 1, up_hi + 1, dtype=np.float64)
        ratios = (K - k + 1) * (draws - k + 1) / (k * (N - 1 - K - draws + k))
        total += (term_mode * np.cumprod(ratios)).sum()
    down_lo = max(lo, mode - window)
    if mode > down_lo:
        k = np.arange(mode - 1, down_lo - 1, -1, dtype=np.float64)
        ratios = ((k + 1) * (N - 1 - K - draws + k + 1)) / ((K - k) * (draws - k))
        terms = term_mode * np.cumprod(ratios)
        start = max(0, mode - 1 - upper)
        total += terms[start:].sum()
    return min(total, 1.0)


_BULK_THRESHOLD = 5000


def single_model_rank_probabilities(design: SamplingDesign) -> np.ndarray:
    """Inclusion probability indexed by rank (entry ``m-1`` is rank ``m``)."""
    N, n, n_r = design.population_size, design.sample_size, design.srs_size
    middle = range(max(1, n - n_r + 1), min(n, N) + 1)
    if len(middle) <= _BULK_THRESHOLD:
        return np.array([inclusion_prob_single(m, design) for m in range(1, N + 1)])
    probs = np.full(N, n_r / N)
    probs[: max(0, n - n_r)] = 1.0
    scale = 1.0 - n_r / N
    for m in middle:
        probs[m - 1] = n_r / N + scale * _middle_cdf_bulk(m, N, N - 1 - n_r, n - n_r - 1)
    return probs


def inclusion_table(
    ranks: RankAssignment | Sequence[RankAssignment],
    design: SamplingDesign,
) -> InclusionTable:
    """Probabilities for every unit given its rank(s); validates the checksum."""
    rank_list = [ranks] if isinstance(ranks, RankAssignment) else list(ranks)
    if len(rank_list) != design.n_models:
        raise ValueError(
            f"need ranks for all {design.n_models} ranking model(s), got {len(rank_list)}"
        )
    n_units = rank_list[0].ranks.shape[0]
    if n_units != design.population_size:
        raise ValueError("rank assignments must cover the whole population")
    if design.n_models == 1:
        by_rank = single_model_rank_probabilities(design)
        probs = by_rank[rank_list[0].ranks - 1]
    else:
        matrix = np.stack([r.ranks for r in rank_list], axis=1)
        probs = np.array(
            [inclusion_prob_multi(tuple(row), design) for row in matrix]
        )
    total = float(probs.sum())
    if abs(total - design.sample_size) > 1e-9 * design.sample_size:
        raise ConsistencyError(
            f"inclusion probabilities sum to {total!r}, expected {design.sample_size}"
        )
    return InclusionTable(probabilities=probs, design=design)
