"""Hypergeometric kernel and inclusion-probability formulas.

Oracles: exact rational evaluation via integer binomials, and exhaustive
enumeration of every Step-1 subset on small populations.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest

from conftest import enumerate_inclusion, exact_hypergeom_cdf, exact_hypergeom_pmf
from upliftband import (
    ConsistencyError,
    Dataset,
    HypergeomParams,
    RankAssignment,
    SamplingDesign,
    hypergeom_cdf,
    hypergeom_log_pmf,
    inclusion_prob_multi,
    inclusion_prob_single,
    inclusion_table,
    rank_by_model,
)
from upliftband.inclusion import _step2_single, single_model_rank_probabilities


# ---------------------------------------------------------------------------
# hypergeometric kernel
# ---------------------------------------------------------------------------

def test_pmf_hand_value():
    # C(4,1) C(6,2) / C(10,3) = 4*15/120 = 0.5
    params = HypergeomParams(population=10, successes=4, draws=3)
    assert hypergeom_log_pmf(params, 1) == pytest.approx(math.log(0.5), rel=1e-12)


def test_pmf_no_successes():
    params = HypergeomParams(population=9, successes=0, draws=4)
    assert hypergeom_log_pmf(params, 0) == 0.0


def test_pmf_outside_support_is_neg_inf():
    params = HypergeomParams(population=10, successes=4, draws=3)
    assert hypergeom_log_pmf(params, 4) == -math.inf
    assert hypergeom_log_pmf(params, -1) == -math.inf


def test_params_validation():
    with pytest.raises(ValueError):
        HypergeomParams(population=5, successes=6, draws=1)
    with pytest.raises(ValueError):
        HypergeomParams(population=5, successes=2, draws=6)


def test_cdf_full_support_is_exactly_one():
    params = HypergeomParams(population=10, successes=4, draws=3)
    assert hypergeom_cdf(params, 3) == 1.0
    assert hypergeom_cdf(params, 99) == 1.0


def test_cdf_below_support_is_zero():
    params = HypergeomParams(population=10, successes=8, draws=9)
    assert hypergeom_cdf(params, params.support_min - 1) == 0.0


def test_cdf_hand_value():
    # pmf(0) + pmf(1) = 20/120 + 60/120 = 2/3
    params = HypergeomParams(population=10, successes=4, draws=3)
    assert hypergeom_cdf(params, 1) == pytest.approx(2.0 / 3.0, rel=1e-12)


@pytest.mark.parametrize("population", [1, 2, 7, 19, 40])
def test_kernel_matches_exact_rational_small(population):
    for successes in range(population + 1):
        for draws in range(population + 1):
            params = HypergeomParams(population, successes, draws)
            running = Fraction(0)
            for k in range(params.support_min, params.support_max + 1):
                exact = exact_hypergeom_pmf(population, successes, draws, k)
                got = math.exp(hypergeom_log_pmf(params, k))
                assert got == pytest.approx(float(exact), rel=1e-12)
                running += exact
                got_cdf = hypergeom_cdf(params, k)
                assert got_cdf == pytest.approx(float(running), rel=1e-12)


def test_kernel_large_population_no_overflow():
    params = HypergeomParams(population=2_000_000, successes=150_000, draws=400_000)
    mode = (params.draws + 1) * (params.successes + 1) // (params.population + 2)
    lp = hypergeom_log_pmf(params, mode)
    assert math.isfinite(lp) and lp < 0
    cdf = hypergeom_cdf(params, mode)
    assert 0.0 < cdf < 1.0
    assert hypergeom_cdf(params, params.support_max) == 1.0


# ---------------------------------------------------------------------------
# single ranking model (A.1-style three-case formula)
# ---------------------------------------------------------------------------

def _design(N, n, n_r):
    return SamplingDesign.single_model(N, n, n_r)


def test_single_case_low_rank_probability():
    # rank beyond n: only the random step can select it
    assert inclusion_prob_single(60, _design(100, 20, 10)) == pytest.approx(0.1)


def test_single_case_top_rank_is_one():
    assert inclusion_prob_single(5, _design(100, 20, 10)) == 1.0


def test_single_middle_case_frozen_value():
    # exhaustive enumeration over all C(12,4) Step-1 subsets gives 97/165
    assert inclusion_prob_single(10, _design(12, 10, 4)) == pytest.approx(
        97.0 / 165.0, abs=1e-12
    )


def test_single_rank_out_of_range():
    with pytest.raises(ValueError):
        inclusion_prob_single(0, _design(12, 6, 3))
    with pytest.raises(ValueError):
        inclusion_prob_single(13, _design(12, 6, 3))


@pytest.mark.parametrize("N,n,n_r", [(12, 6, 3), (12, 10, 4), (8, 5, 2), (10, 7, 5), (15, 9, 4)])
def test_single_matches_exhaustive_enumeration(N, n, n_r):
    expected = enumerate_inclusion(N, n, n_r)
    design = _design(N, n, n_r)
    for m in range(1, N + 1):
        assert inclusion_prob_single(m, design) == pytest.approx(
            float(expected[m - 1]), abs=1e-12
        )


def test_single_monotone_in_rank():
    design = _design(200, 60, 25)
    probs = [inclusion_prob_single(m, design) for m in range(1, 201)]
    assert all(a >= b - 1e-15 for a, b in zip(probs, probs[1:]))


def test_single_two_summation_forms_agree():
    """The direct selection-count sum and the tail-identity CDF must agree."""
    for N, n, n_r in [(50, 20, 8), (200, 70, 30), (120, 119, 60)]:
        design = _design(N, n, n_r)
        for m in range(n - n_r + 1, n + 1):
            tail = _step2_single(m, N, n, n_r) / (1.0 - n_r / N)
            j_sum = sum(
                math.exp(
                    hypergeom_log_pmf(
                        HypergeomParams(population=N - 1, successes=m - 1, draws=n_r), j
                    )
                )
                for j in range(m - (n - n_r), min(m - 1, n_r) + 1)
            )
            assert tail == pytest.approx(j_sum, rel=1e-12)


def test_single_boundary_continuity():
    """Middle-case expression extends continuously to both case boundaries."""
    N, n, n_r = 80, 30, 12
    # at m = n - n_r the Step-2 term covers the whole support: probability 1
    m = n - n_r
    full = n_r / N + _step2_single(m, N, n, n_r)
    assert full == 1.0
    # at m = n the middle expression still exceeds the SRS floor
    assert inclusion_prob_single(n, _design(N, n, n_r)) > n_r / N


def test_single_pure_srs_degenerate():
    design = _design(100, 10, 10)
    for m in (1, 5, 10, 11, 50, 100):
        assert inclusion_prob_single(m, design) == pytest.approx(0.1, abs=1e-15)


# ---------------------------------------------------------------------------
# multiple ranking models (sub-universe decomposition)
# ---------------------------------------------------------------------------

def _multi_design():
    return SamplingDesign(population_size=20, sample_size=8, srs_size=2, sub_sizes=(9, 9))


def test_multi_all_top_ranks_exactly_one():
    assert inclusion_prob_multi((1, 2), _multi_design()) == 1.0


def test_multi_all_bottom_ranks_floor():
    d = _multi_design()
    # quota is 3 per block of 9: unreachable in Step 2 when rank > N - N' + n' = 14
    assert inclusion_prob_multi((20, 19), d) == pytest.approx(2.0 / 20.0, abs=1e-15)


def test_multi_exact_rational_check():
    """Middle-case value against the exact rational sub-universe decomposition."""
    d = _multi_design()
    N, n_r = 20, 2
    quota = 3

    def exact_term(m):
        if m > N - 9 + quota:
            return Fraction(0)
        base = (1 - Fraction(n_r, N)) * Fraction(9, N - n_r)
        if m <= quota:
            return base
        return base * exact_hypergeom_cdf(N - 1, m - 1, 9 - 1, quota - 1)

    for ranks in [(5, 12), (4, 4), (9, 17), (14, 2), (6, 20)]:
        expected = Fraction(n_r, N) + exact_term(ranks[0]) + exact_term(ranks[1])
        assert inclusion_prob_multi(ranks, d) == pytest.approx(float(expected), rel=1e-12)


def test_multi_requires_matching_rank_count():
    with pytest.raises(ValueError):
        inclusion_prob_multi((1,), _multi_design())
    with pytest.raises(ValueError):
        inclusion_prob_multi((1, 2), _design(10, 5, 2))


# ---------------------------------------------------------------------------
# inclusion tables
# ---------------------------------------------------------------------------

def _identity_ranks(n):
    return RankAssignment(model_index=0, ranks=np.arange(1, n + 1))


def test_table_pure_srs_all_equal():
    design = _design(50, 5, 5)
    table = inclusion_table(_identity_ranks(50), design)
    assert np.allclose(table.probabilities, 0.1, atol=1e-15)


def test_table_top_rank_probability_one():
    design = _design(40, 12, 4)
    table = inclusion_table(_identity_ranks(40), design)
    assert table.probabilities[0] == 1.0  # rank 1
    assert (table.probabilities >= 4 / 40 - 1e-15).all()
    assert table.probabilities.sum() == pytest.approx(12.0, abs=1e-9)


def test_table_checksum_rejects_corruption(monkeypatch):
    design = _design(30, 9, 3)
    import upliftband.inclusion as inc

    def broken(m, d):
        return 0.5

    monkeypatch.setattr(inc, "inclusion_prob_single", broken)
    with pytest.raises(ConsistencyError):
        inc.inclusion_table(_identity_ranks(30), design)


def test_table_scenario3_checksum_20000():
    design = _design(20000, 2200, 200)
    probs = single_model_rank_probabilities(design)
    assert probs.sum() == pytest.approx(2200.0, abs=1e-9 * 2200)


def test_table_multi_model_sums_to_n(rng):
    design = SamplingDesign(population_size=20, sample_size=8, srs_size=2, sub_sizes=(9, 9))
    ids = np.arange(20)
    scores = rng.random((20, 2))
    ds = Dataset(ids=ids, treatment=np.zeros(20, dtype=np.int8),
                 outcome=np.zeros(20), scores=scores,
                 observed=np.ones(20, dtype=bool))
    ranks = [rank_by_model(ds, 0), rank_by_model(ds, 1)]
    table = inclusion_table(ranks, design)
    assert table.probabilities.sum() == pytest.approx(8.0, abs=1e-9 * 8)
    assert (table.probabilities >= 0.1 - 1e-12).all()


def test_bulk_table_path_matches_scalar_kernel():
    """The vectorized large-table path and the scalar kernel are one route
    to 1e-12; the scalar kernel stays the enumeration-checked reference."""
    from upliftband.inclusion import _middle_cdf_bulk

    for N, n, n_r in [(200, 70, 30), (4000, 900, 400), (20000, 2200, 200)]:
        design = SamplingDesign.single_model(N, n, n_r)
        scale = 1.0 - n_r / N
        for m in range(n - n_r + 1, n + 1):
            bulk = n_r / N + scale * _middle_cdf_bulk(m, N, N - 1 - n_r, n - n_r - 1)
            assert bulk == pytest.approx(inclusion_prob_single(m, design), abs=1e-12)
