"""Shared test helpers: exact-rational oracles and small utilities."""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest


def comb(a: int, b: int) -> int:
    if b < 0 or b > a:
        return 0
    return math.comb(a, b)


def exact_hypergeom_pmf(population: int, successes: int, draws: int, k: int) -> Fraction:
    """Rational pmf via integer binomials."""
    num = comb(successes, k) * comb(population - successes, draws - k)
    return Fraction(num, comb(population, draws))


def exact_hypergeom_cdf(population: int, successes: int, draws: int, upper: int) -> Fraction:
    lo = max(0, draws - (population - successes))
    hi = min(successes, draws)
    total = Fraction(0)
    for k in range(lo, min(upper, hi) + 1):
        total += exact_hypergeom_pmf(population, successes, draws, k)
    return total


def enumerate_inclusion(N: int, n: int, n_r: int) -> list[Fraction]:
    """Exhaustive single-model inclusion probabilities.

    Unit i carries rank i+1. Every Step-1 subset is equally likely; Step 2
    deterministically takes the n - n_r best-ranked survivors.
    """
    total = comb(N, n_r)
    counts = [0] * N
    quota = n - n_r
    units = list(range(N))
    for srs in itertools.combinations(units, n_r):
        srs_set = set(srs)
        survivors = [u for u in units if u not in srs_set]
        chosen = srs_set | set(survivors[:quota])
        for u in chosen:
            counts[u] += 1
    return [Fraction(c, total) for c in counts]


def rank_correlation(a: np.ndarray, b: np.ndarray) -> float:
    ra = np.argsort(np.argsort(a))
    rb = np.argsort(np.argsort(b))
    return float(np.corrcoef(ra, rb)[0, 1])


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
