"""upliftband: population uplift-curve estimation with confidence bands.

Estimates cumulative-gain (uplift) curves for ranking models on a full
population from a subsample drawn by a two-step scheme (simple random
sampling plus rank-based top selection), using exact hypergeometric
inclusion probabilities and a nested bootstrap for pointwise confidence
bands and paired model-difference bands. A simulation harness reproduces
the accompanying Monte Carlo coverage study at desk scale.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND as kernel_backend
from .bootstrap import (
    AliasTable,
    BootstrapConfig,
    CurveEnsemble,
    difference_band,
    inner_resample,
    nested_bootstrap,
    outer_resample,
    summarize_band,
)
from .curves import (
    DEFAULT_GRID,
    ConfigurationError,
    ConsistencyError,
    CurveBand,
    Dataset,
    DesignError,
    EstimationError,
    MISSING,
    RankAssignment,
    SchemaError,
    UnitRecord,
    UpliftBandError,
    UpliftCurve,
    build_curve,
    cumulative_gain,
    curve_difference,
    is_missing,
    qini_value,
    rank_by_model,
    read_dataset_csv,
    write_dataset_csv,
)
from .inclusion import (
    HypergeomParams,
    InclusionTable,
    hypergeom_cdf,
    hypergeom_log_pmf,
    inclusion_prob_multi,
    inclusion_prob_single,
    inclusion_table,
)
from .sampling import (
    ChosenSet,
    SamplingDesign,
    allocate_treatment,
    two_step_sample,
    validate_design,
)
from .simulate import (
    CoverageReport,
    DgpSpec,
    OracleCurves,
    Population,
    SCENARIO_TABLE,
    ScenarioSpec,
    ScorerPair,
    builtin_scorers,
    coverage_experiment,
    generate_population,
    oracle_curves,
    train_builtin_scorers,
)

__all__ = [name for name in dir() if not name.startswith("_")]
