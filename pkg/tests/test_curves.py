"""Core curve mathematics: ranking, gains, Qini, grids, differences, CSV."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from upliftband import (
    ConfigurationError,
    Dataset,
    SchemaError,
    build_curve,
    cumulative_gain,
    curve_difference,
    is_missing,
    qini_value,
    rank_by_model,
    read_dataset_csv,
    write_dataset_csv,
)
from upliftband.curves import grid_selection_sizes, selection_size, write_curve_csv


def make_dataset(ids, treatment, outcome, scores, observed=None, labels=()):
    n = len(ids)
    return Dataset(
        ids=np.array(ids),
        treatment=np.array(treatment),
        outcome=np.array(outcome, dtype=float),
        scores=np.array(scores, dtype=float),
        observed=np.ones(n, dtype=bool) if observed is None else np.array(observed),
        model_labels=labels,
    )


# ---------------------------------------------------------------------------
# rank_by_model
# ---------------------------------------------------------------------------

def test_rank_strict_ordering():
    ds = make_dataset([1, 2, 3], [1, 0, 1], [0, 0, 0], [[0.9], [0.1], [0.5]])
    assert rank_by_model(ds, 0).ranks.tolist() == [1, 3, 2]


def test_rank_tie_broken_by_ascending_id():
    ds = make_dataset([7, 3], [1, 0], [0, 0], [[0.5], [0.5]])
    ranks = rank_by_model(ds, 0).ranks
    assert ranks.tolist() == [2, 1]  # id 3 outranks id 7


def test_rank_all_equal_scores_degenerate():
    ids = [11, 5, 9, 1, 3]
    ds = make_dataset(ids, [1] * 5, [0] * 5, [[2.0]] * 5)
    ranks = rank_by_model(ds, 0).ranks
    by_rank = [ids[i] for i in np.argsort(ranks)]
    assert by_rank == sorted(ids)


def test_rank_model_index_out_of_range():
    ds = make_dataset([1], [1], [0], [[0.5]])
    with pytest.raises(ConfigurationError):
        rank_by_model(ds, 3)


def test_rank_is_bijection_and_idempotent(rng):
    n = 200
    ds = make_dataset(
        rng.permutation(n), rng.integers(0, 2, n), rng.random(n),
        rng.random((n, 1)).round(1),  # rounding forces ties
    )
    ranks = rank_by_model(ds, 0).ranks
    assert sorted(ranks.tolist()) == list(range(1, n + 1))
    assert np.array_equal(rank_by_model(ds, 0).ranks, ranks)


# ---------------------------------------------------------------------------
# cumulative_gain / qini_value
# ---------------------------------------------------------------------------

def test_gain_hand_evaluated_two_units():
    assert cumulative_gain([(1, 1.0), (0, 0.0)], 2) == pytest.approx(2.0)


def test_gain_equal_arm_cancellation():
    assert cumulative_gain([(1, 3.0), (0, 3.0), (1, 3.0), (0, 3.0)], 4) == pytest.approx(0.0)


def test_gain_hand_evaluated_three_units():
    assert cumulative_gain([(1, 1.0), (1, 0.0), (0, 1.0)], 3) == pytest.approx(-1.5)


def test_gain_missing_when_arm_empty():
    assert is_missing(cumulative_gain([(1, 1.0), (1, 0.0)], 2))


def test_gain_argument_errors():
    with pytest.raises(ValueError):
        cumulative_gain([], 0)
    with pytest.raises(ValueError):
        cumulative_gain([(1, 1.0)], 2)


def test_qini_hand_evaluated():
    assert qini_value([(1, 1.0), (0, 0.0)], 2) == pytest.approx(1.0)


def test_qini_missing_propagates():
    assert is_missing(qini_value([(1, 1.0), (1, 0.0)], 2))


def test_qini_four_units():
    units = [(1, 1.0), (1, 1.0), (0, 0.0), (0, 0.0)]
    assert cumulative_gain(units, 4) == pytest.approx(4.0)
    assert qini_value(units, 4) == pytest.approx(2.0)


@given(
    data=st.lists(
        st.tuples(st.integers(0, 1), st.floats(-50, 50)),
        min_size=2, max_size=30,
    ).filter(lambda d: len({t for t, _ in d}) == 2),
    shift=st.floats(-10, 10),
    scale=st.floats(0.1, 10),
)
@settings(max_examples=200, deadline=None)
def test_gain_properties(data, shift, scale):
    k = len(data)
    base = cumulative_gain(data, k)
    # permutation invariance
    assert cumulative_gain(list(reversed(data)), k) == pytest.approx(base, abs=1e-9)
    # affine shift invariance, scale equivariance
    shifted = [(t, y + shift) for t, y in data]
    assert cumulative_gain(shifted, k) == pytest.approx(base, abs=1e-7)
    scaled = [(t, y * scale) for t, y in data]
    assert cumulative_gain(scaled, k) == pytest.approx(base * scale, rel=1e-9, abs=1e-9)
    # Qini identity at 1e-12 relative
    n_t = sum(t for t, _ in data)
    q = qini_value(data, k)
    assert q == pytest.approx(base * n_t / k, rel=1e-12, abs=1e-12)


# ---------------------------------------------------------------------------
# selection sizes and build_curve
# ---------------------------------------------------------------------------

def test_selection_size_minimum_one():
    assert selection_size(5, 10) == 1  # floor(0.5) -> clamped to 1


def test_selection_size_floor_and_bounds():
    assert selection_size(100, 7) == 7
    assert selection_size(33, 10) == 3
    with pytest.raises(ValueError):
        selection_size(0, 10)
    with pytest.raises(ValueError):
        selection_size(101, 10)


def test_grid_sizes_default_grid_200k():
    ks = grid_selection_sizes(tuple(range(5, 105, 5)), 200000)
    assert len(ks) == 20
    assert ks[-1] == 200000
    assert ks[0] == 10000


def test_grid_rejects_collisions_on_tiny_population():
    with pytest.raises(ValueError):
        grid_selection_sizes((5.0, 10.0), 10)  # both map to k=1


def test_build_curve_full_population_rank_invariant(rng):
    n = 400
    ds = make_dataset(
        np.arange(n), rng.integers(0, 2, n), rng.integers(0, 2, n).astype(float),
        rng.random((n, 2)),
    )
    c1 = build_curve(ds, rank_by_model(ds, 0), (25.0, 50.0, 100.0))
    c2 = build_curve(ds, rank_by_model(ds, 1), (25.0, 50.0, 100.0))
    assert c1.gain[-1] == c2.gain[-1]
    assert c1.ks[-1] == n


def test_build_curve_matches_scalar_ops(rng):
    n = 60
    ds = make_dataset(
        np.arange(n), rng.integers(0, 2, n), rng.random(n), rng.random((n, 1))
    )
    ranks = rank_by_model(ds, 0)
    curve = build_curve(ds, ranks, (10.0, 50.0, 100.0))
    order = ranks.order()
    for i, k in enumerate(curve.ks):
        top = [(int(ds.treatment[j]), float(ds.outcome[j])) for j in order[:k]]
        expected = cumulative_gain(top, int(k))
        assert curve.gain[i] == pytest.approx(expected, rel=1e-12)
        assert curve.qini[i] == pytest.approx(qini_value(top, int(k)), rel=1e-12)
    assert np.allclose(curve.mean_uplift, curve.gain / curve.ks, equal_nan=True)


def test_build_curve_missing_flagged_not_zero():
    ds = make_dataset([0, 1, 2, 3], [1, 1, 0, 0], [1, 1, 0, 0], [[4], [3], [2], [1]])
    curve = build_curve(ds, rank_by_model(ds, 0), (25.0, 50.0, 75.0, 100.0))
    assert is_missing(curve.gain[0])  # top-1 has no control units
    assert is_missing(curve.gain[1])
    assert curve.gain[3] == pytest.approx(4.0)


def test_build_curve_requires_observed():
    ds = make_dataset([0, 1], [1, 0], [1.0, 0.0], [[2], [1]], observed=[True, False])
    with pytest.raises(ValueError):
        build_curve(ds, rank_by_model(ds, 0), (100.0,))


def test_curve_difference_and_errors(rng):
    n = 100
    ds = make_dataset(
        np.arange(n), rng.integers(0, 2, n), rng.random(n), rng.random((n, 2))
    )
    a = build_curve(ds, rank_by_model(ds, 0), (50.0, 100.0))
    b = build_curve(ds, rank_by_model(ds, 1), (50.0, 100.0))
    diff = curve_difference(a, b)
    assert diff.gain[-1] == pytest.approx(0.0, abs=1e-12)
    self_diff = curve_difference(a, a)
    assert np.all(self_diff.gain == 0.0)
    c = build_curve(ds, rank_by_model(ds, 0), (25.0, 100.0))
    with pytest.raises(ValueError):
        curve_difference(a, c)


def test_curve_difference_missing_propagates():
    ds = make_dataset([0, 1, 2, 3], [1, 1, 0, 0], [1, 1, 0, 0], [[4, 1], [3, 2], [2, 3], [1, 4]])
    a = build_curve(ds, rank_by_model(ds, 0), (50.0, 100.0))
    b = build_curve(ds, rank_by_model(ds, 1), (50.0, 100.0))
    diff = curve_difference(a, b)
    assert is_missing(diff.gain[0])
    assert diff.gain[1] == pytest.approx(0.0, abs=1e-12)


# ---------------------------------------------------------------------------
# dataset validation and CSV round trip
# ---------------------------------------------------------------------------

def test_dataset_validation_errors():
    with pytest.raises(ValueError):
        make_dataset([1, 1], [0, 1], [0, 0], [[1], [2]])  # duplicate ids
    with pytest.raises(ValueError):
        make_dataset([1, 2], [0, 2], [0, 0], [[1], [2]])  # non-binary arm
    with pytest.raises(ValueError):
        make_dataset([1, 2], [0, 1], [0, 0], [[np.inf], [2]])  # non-finite score


def test_dataset_roundtrip(tmp_path, rng):
    n = 50
    ds = make_dataset(
        np.arange(n), rng.integers(0, 2, n), rng.random(n).round(6),
        rng.random((n, 2)), labels=("alpha", "beta"),
    )
    path = tmp_path / "units.csv"
    write_dataset_csv(path, ds, metadata={"seed": 7})
    back = read_dataset_csv(path)
    assert back.model_labels == ("alpha", "beta")
    assert np.array_equal(back.ids, ds.ids)
    assert np.array_equal(back.treatment, ds.treatment)
    assert np.array_equal(back.outcome, ds.outcome)
    assert np.array_equal(back.scores, ds.scores)


def test_dataset_csv_schema_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("id,outcome\n1,0\n")
    with pytest.raises(SchemaError):
        read_dataset_csv(bad)
    bad2 = tmp_path / "bad2.csv"
    bad2.write_text("id,treatment,outcome,score_1,observed\n1,1,,0.5,1\n")
    with pytest.raises(SchemaError, match="row 1"):
        read_dataset_csv(bad2)


def test_unobserved_outcome_allowed(tmp_path):
    path = tmp_path / "partial.csv"
    path.write_text(
        "id,treatment,outcome,score_1,observed\n1,1,0.5,0.9,1\n2,0,,0.1,0\n"
    )
    ds = read_dataset_csv(path)
    assert not ds.fully_observed
    assert math.isnan(ds.outcome[1])


def test_curve_csv_missing_encoded_empty(tmp_path):
    ds = make_dataset([0, 1, 2, 3], [1, 1, 0, 0], [1, 1, 0, 0], [[4], [3], [2], [1]])
    curve = build_curve(ds, rank_by_model(ds, 0), (25.0, 100.0))
    out = tmp_path / "curve.csv"
    write_curve_csv(out, curve, metadata={"seed": 0})
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# seed=0")
    assert lines[1] == "percentile,k,gain,qini,mean_uplift"
    assert lines[2].split(",")[2] == ""  # missing gain -> empty field
    assert lines[3].split(",")[2] != ""
