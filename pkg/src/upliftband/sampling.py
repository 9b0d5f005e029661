"""Two-step sample selection and randomized treatment allocation.

Step 1 draws a simple random sample of size ``n_r`` from the population of
``N`` units. Step 2 splits the remaining ``N - n_r`` units uniformly at
random into one block per ranking model (sizes ``N'_s``) and selects the
top ``(n - n_r) * N'_s / (N - n_r)`` units of each block under that model's
ranking. The union of both steps is the chosen set of exactly ``n`` units.

Both steps are realized from a single permutation of the population: its
first ``n_r`` entries are the Step-1 sample and the remainder, cut at the
block-size offsets, is the Step-2 partition. This is uniform over (sample,
partition) pairs and O(N).

Quotas must be integral; validation rejects designs that would need
rounding, since rounding would desynchronize the sampler from the
inclusion-probability formulas. ``n_r = 0`` is rejected as well: the
minimum inclusion probability ``n_r / N`` would vanish and inverse-
probability weights downstream would be undefined.

Sampling is sequential per replication (the RNG stream defines the
result); independent replications run concurrently on independent streams.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .curves import Dataset, DesignError, RankAssignment, SchemaError


@dataclass(frozen=True)
class SamplingDesign:
    """Sizes defining the two-step scheme.

    ``sub_sizes`` holds one block size per ranking model and must sum to
    ``N - n_r``.
    """

    population_size: int
    sample_size: int
    srs_size: int
    sub_sizes: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "sub_sizes", tuple(int(s) for s in self.sub_sizes))
        validate_design(self)

    @classmethod
    def single_model(cls, population_size: int, sample_size: int, srs_size: int) -> "SamplingDesign":
        """Design with one ranking model covering the whole remainder."""
        return cls(
            population_size=population_size,
            sample_size=sample_size,
            srs_size=srs_size,
            sub_sizes=(population_size - srs_size,),
        )

    @property
    def n_models(self) -> int:
        return len(self.sub_sizes)

    @property
    def rank_quotas(self) -> tuple[int, ...]:
        """Step-2 selection size per block, ``(n - n_r) * N'_s / (N - n_r)``."""
        remainder = self.population_size - self.srs_size
        if remainder == 0:
            return tuple(0 for _ in self.sub_sizes)
        ranked = self.sample_size - self.srs_size
        return tuple(ranked * s // remainder for s in self.sub_sizes)


def validate_design(design: SamplingDesign) -> SamplingDesign:
    """Check all design invariants; returns the design unchanged."""
    N, n, n_r = design.population_size, design.sample_size, design.srs_size
    subs = design.sub_sizes
    if N < 1:
        raise DesignError(f"population size must be positive, got {N}")
    if n_r <= 0:
        raise DesignError(
            "the simple-random step must draw at least one unit (n_r > 0); "
            "a pure rank-based selection has no usable inclusion probabilities"
        )
    if not (n_r <= n <= N):
        raise DesignError(f"need n_r <= n <= N, got n_r={n_r}, n={n}, N={N}")
    if len(subs) < 1:
        raise DesignError("at least one ranking model (sub-universe) is required")
    if any(s < 0 for s in subs):
        raise DesignError("sub-universe sizes must be non-negative")
    if sum(subs) != N - n_r:
        raise DesignError(
            f"sub-universe sizes must sum to N - n_r = {N - n_r}, got {sum(subs)}"
        )
    remainder = N - n_r
    ranked = n - n_r
    if remainder > 0:
        bad = [s for s in subs if (ranked * s) % remainder != 0]
        if bad:
            g = math.gcd(ranked, remainder) if ranked else remainder
            step = remainder // g if g else remainder
            raise DesignError(
                f"rank quota (n - n_r) * N'_s / (N - n_r) is not integral for "
                f"sub-universe size(s) {bad}; choose each N'_s as a multiple of {step}"
            )
    return design


def equal_sub_sizes(population_size: int, srs_size: int, n_models: int) -> tuple[int, ...]:
    """Equal split of the Step-2 remainder across ranking models."""
    remainder = population_size - srs_size
    if n_models < 1:
        raise DesignError("need at least one ranking model")
    if remainder % n_models != 0:
        raise DesignError(
            f"N - n_r = {remainder} is not divisible by {n_models} ranking models; "
            "pass explicit sub-universe sizes"
        )
    return tuple(remainder // n_models for _ in range(n_models))


PROVENANCE_SRS = 0
PROVENANCE_RANKED = 1
_PROVENANCE_NAMES = {PROVENANCE_SRS: "SRS", PROVENANCE_RANKED: "RANKED"}


@dataclass(frozen=True)
class ChosenSet:
    """Units selected by the two-step scheme, with selection provenance.

    ``sub_universe`` is 1-based for ranked units and 0 for SRS units.
    ``p_inclusion`` is ``nan`` until filled from an inclusion table.
    ``positions`` (indices into the source dataset) survive in-process use
    but not CSV round-trips; rejoin by id in that case.
    """

    ids: np.ndarray
    provenance: np.ndarray
    sub_universe: np.ndarray
    p_inclusion: np.ndarray
    design: SamplingDesign
    positions: np.ndarray | None = None

    def __post_init__(self) -> None:
        ids = np.asarray(self.ids, dtype=np.int64)
        provenance = np.asarray(self.provenance, dtype=np.int8)
        sub_universe = np.asarray(self.sub_universe, dtype=np.int32)
        p = np.asarray(self.p_inclusion, dtype=np.float64)
        n = self.design.sample_size
        if not (ids.shape == provenance.shape == sub_universe.shape == p.shape == (n,)):
            raise ValueError(f"chosen set must have exactly n={n} members")
        if int(np.count_nonzero(provenance == PROVENANCE_SRS)) != self.design.srs_size:
            raise ValueError("SRS provenance count must equal n_r")
        quotas = self.design.rank_quotas
        for s, quota in enumerate(quotas, start=1):
            if int(np.count_nonzero(sub_universe == s)) != quota:
                raise ValueError(f"ranked count in sub-universe {s} must equal {quota}")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "provenance", provenance)
        object.__setattr__(self, "sub_universe", sub_universe)
        object.__setattr__(self, "p_inclusion", p)
        if self.positions is not None:
            object.__setattr__(self, "positions", np.asarray(self.positions, dtype=np.int64))

    def __len__(self) -> int:
        return self.ids.shape[0]

    def with_probabilities(self, per_unit_probabilities: np.ndarray) -> "ChosenSet":
        """Fill ``p_inclusion`` from a population-indexed probability vector."""
        if self.positions is None:
            raise ValueError("positions unknown; fill probabilities by id instead")
        per_unit = np.asarray(per_unit_probabilities, dtype=np.float64)
        return replace(self, p_inclusion=per_unit[self.positions])


def allocate_treatment(n_units: int, treat_ratio: float, rng: np.random.Generator) -> np.ndarray:
    """Assign exactly ``round(ratio * N)`` units to treatment, uniformly."""
    if not (0.0 < treat_ratio < 1.0):
        raise ValueError(f"treatment ratio must lie in (0, 1), got {treat_ratio}")
    if n_units < 1:
        raise ValueError("need at least one unit")
    n_treated = int(round(treat_ratio * n_units))
    arms = np.zeros(n_units, dtype=np.int8)
    arms[rng.permutation(n_units)[:n_treated]] = 1
    return arms


def two_step_sample(
    units: Dataset,
    design: SamplingDesign,
    ranks: RankAssignment | Sequence[RankAssignment],
    rng: np.random.Generator,
) -> ChosenSet:
    """Draw a chosen set from ``units`` under ``design``.

    ``ranks`` supplies one assignment per ranking model, in sub-universe
    order. Probabilities are left unfilled; see the inclusion module.
    """
    validate_design(design)
    rank_list = [ranks] if isinstance(ranks, RankAssignment) else list(ranks)
    if len(rank_list) != design.n_models:
        raise ValueError(
            f"need one rank assignment per ranking model ({design.n_models}), "
            f"got {len(rank_list)}"
        )
    N = design.population_size
    if len(units) != N:
        raise ValueError(f"dataset size {len(units)} does not match design N={N}")
    for r in rank_list:
        if r.ranks.shape[0] != N:
            raise ValueError("rank assignments must cover the whole population")

    perm = rng.permutation(N)
    n_r = design.srs_size
    quotas = design.rank_quotas
    n = design.sample_size

    positions = np.empty(n, dtype=np.int64)
    provenance = np.empty(n, dtype=np.int8)
    sub_universe = np.zeros(n, dtype=np.int32)
    positions[:n_r] = perm[:n_r]
    provenance[:n_r] = PROVENANCE_SRS
    provenance[n_r:] = PROVENANCE_RANKED

    out = n_r
    offset = n_r
    for s, (block_size, quota) in enumerate(zip(design.sub_sizes, quotas), start=1):
        block = perm[offset:offset + block_size]
        offset += block_size
        if quota == 0:
            continue
        block_ranks = rank_list[s - 1].ranks[block]
        if quota < block_size:
            top = block[np.argpartition(block_ranks, quota - 1)[:quota]]
        else:
            top = block
        positions[out:out + quota] = top
        sub_universe[out:out + quota] = s
        out += quota

    return ChosenSet(
        ids=units.ids[positions],
        provenance=provenance,
        sub_universe=sub_universe,
        p_inclusion=np.full(n, np.nan),
        design=design,
        positions=positions,
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def design_to_json(design: SamplingDesign, seed: int | None = None) -> str:
    payload = {
        "N": design.population_size,
        "n": design.sample_size,
        "n_r": design.srs_size,
        "S0": design.n_models,
        "sub_sizes": list(design.sub_sizes),
        "seed": seed,
    }
    return json.dumps(payload, indent=2, sort_keys=True)


def design_from_json(text: str) -> tuple[SamplingDesign, int | None]:
    data = json.loads(text)
    try:
        design = SamplingDesign(
            population_size=int(data["N"]),
            sample_size=int(data["n"]),
            srs_size=int(data["n_r"]),
            sub_sizes=tuple(int(s) for s in data["sub_sizes"]),
        )
    except KeyError as exc:
        raise SchemaError(f"design JSON missing key {exc}") from exc
    seed = data.get("seed")
    return design, (int(seed) if seed is not None else None)


def write_chosen_csv(path: str | Path, chosen: ChosenSet,
                     metadata: dict[str, object] | None = None) -> None:
    """Emit ``id,provenance,sub_universe,p_inclusion`` rows."""
    from .curves import write_comment_header

    with open(path, "w", newline="") as handle:
        write_comment_header(handle, metadata)
        writer = csv.writer(handle)
        writer.writerow(["id", "provenance", "sub_universe", "p_inclusion"])
        for i in range(len(chosen)):
            ranked = chosen.provenance[i] == PROVENANCE_RANKED
            p = float(chosen.p_inclusion[i])
            writer.writerow([
                int(chosen.ids[i]),
                _PROVENANCE_NAMES[int(chosen.provenance[i])],
                int(chosen.sub_universe[i]) if ranked else "",
                "" if math.isnan(p) else f"{p:.17e}",
            ])


def read_chosen_csv(path: str | Path, design: SamplingDesign) -> ChosenSet:
    import pandas as pd

    path = Path(path)
    try:
        frame = pd.read_csv(path, comment="#", float_precision="round_trip")
    except Exception as exc:
        raise SchemaError(f"{path}: cannot parse CSV ({exc})") from exc
    required = ["id", "provenance", "sub_universe", "p_inclusion"]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise SchemaError(f"{path}: chosen-set CSV missing column(s) {missing}")
    names = {v: k for k, v in _PROVENANCE_NAMES.items()}
    try:
        provenance = frame["provenance"].map(names).to_numpy(dtype=np.int8)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: provenance must be SRS or RANKED") from exc
    return ChosenSet(
        ids=frame["id"].to_numpy(dtype=np.int64),
        provenance=provenance,
        sub_universe=frame["sub_universe"].fillna(0).to_numpy(dtype=np.int32),
        p_inclusion=frame["p_inclusion"].to_numpy(dtype=np.float64),
        design=design,
    )
