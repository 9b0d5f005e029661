"""Command-line surface.

Commands: ``sample``, ``estimate``, ``compare``, ``coverage`` (alias
``simulate``). Every option can also come from a JSON config file passed
with ``--config``; explicit flags override file values. Each output file
embeds the resolved-config hash and the seed in ``#`` comment lines.
Thread counts are execution hints and are excluded from the hash, so runs
at different parallelism produce byte-identical outputs.

Exit codes: 0 success, 2 schema violation, 3 design/configuration
validation failure, 4 estimation failure.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import __version__
from ._streams import SCOPE_SAMPLE, derive_key, stream
from .bootstrap import (
    BootstrapConfig,
    difference_band,
    nested_bootstrap,
    summarize_band,
    write_band_csv,
    write_ensemble_csv,
)
from .curves import (
    DEFAULT_GRID,
    ConfigurationError,
    ConsistencyError,
    Dataset,
    DesignError,
    EstimationError,
    SchemaError,
    rank_by_model,
    read_dataset_csv,
)
from .inclusion import inclusion_table
from .plotting import save_band_svg
from .sampling import (
    SamplingDesign,
    design_from_json,
    design_to_json,
    equal_sub_sizes,
    read_chosen_csv,
    two_step_sample,
    write_chosen_csv,
)
from .simulate import ScenarioSpec, coverage_experiment, oracle_curves, train_builtin_scorers

EXIT_SCHEMA = 2
EXIT_VALIDATION = 3
EXIT_ESTIMATION = 4


def _default_threads() -> int:
    return int(os.environ.get("UPLIFTBAND_THREADS", "1"))


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise SchemaError(f"config {path} must hold a JSON object")
    return data


def _resolve(flags: dict, config: dict, defaults: dict) -> dict:
    """Flags override config-file values, which override defaults."""
    out = dict(defaults)
    for key in defaults:
        if key in config and config[key] is not None:
            out[key] = config[key]
        if key in flags and flags[key] is not None:
            out[key] = flags[key]
    return out


#: execution hints and output locations do not determine results, so they
#: stay out of the config hash
_UNHASHED_KEYS = {"threads", "out", "svg", "dump_ensemble", "design_out"}


def _config_hash(resolved: dict) -> str:
    hashed = {k: v for k, v in resolved.items() if k not in _UNHASHED_KEYS}
    blob = json.dumps(hashed, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _metadata(resolved: dict, command: str) -> dict:
    return {
        "generator": f"upliftband {__version__}",
        "command": command,
        "config_hash": _config_hash(resolved),
        "seed": resolved.get("seed"),
    }


def _parse_grid(text) -> tuple[float, ...]:
    if text is None:
        return DEFAULT_GRID
    if isinstance(text, (list, tuple)):
        return tuple(float(q) for q in text)
    try:
        return tuple(float(part) for part in str(text).split(",") if part.strip())
    except ValueError as exc:
        raise ConfigurationError(f"cannot parse grid {text!r}: {exc}") from exc


def _parse_ints(text) -> tuple[int, ...] | None:
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    return tuple(int(part) for part in str(text).split(",") if part.strip())


@click.group()
@click.version_option(version=__version__)
def cli() -> None:
    """Estimate and compare population uplift curves from two-step samples."""


@cli.command()
@click.option("--data", required=True, type=click.Path(exists=True), help="Population CSV.")
@click.option("--config", "config_path", type=click.Path(exists=True), help="JSON config file.")
@click.option("--out", type=click.Path(), help="Chosen-set CSV path.")
@click.option("--design-out", type=click.Path(), help="Design sidecar JSON path.")
@click.option("--sample-size", type=int, help="Total sample size n.")
@click.option("--srs-size", type=int, help="Step-1 simple-random sample size n_r.")
@click.option("--rank-models", type=str, help="Comma list of score columns ranking Step 2.")
@click.option("--sub-sizes", type=str, help="Comma list of sub-universe sizes (default: equal).")
@click.option("--seed", type=int, help="Random seed.")
def sample(data, config_path, **flags) -> None:
    """Draw a two-step sample and attach exact inclusion probabilities."""
    config = _load_config(config_path)
    resolved = _resolve(flags, config, {
        "out": "chosen.csv",
        "design_out": None,
        "sample_size": None,
        "srs_size": None,
        "rank_models": "1",
        "sub_sizes": None,
        "seed": 0,
    })
    resolved["data"] = str(data)
    units = read_dataset_csv(data)
    if resolved["sample_size"] is None or resolved["srs_size"] is None:
        raise ConfigurationError("sample needs --sample-size and --srs-size")
    labels = [part.strip() for part in str(resolved["rank_models"]).split(",") if part.strip()]
    model_indices = [units.model_index(label) for label in labels]
    n = int(resolved["sample_size"])
    n_r = int(resolved["srs_size"])
    sub_sizes = _parse_ints(resolved["sub_sizes"])
    if sub_sizes is None:
        sub_sizes = equal_sub_sizes(len(units), n_r, len(model_indices))
    design = SamplingDesign(
        population_size=len(units), sample_size=n, srs_size=n_r, sub_sizes=sub_sizes
    )
    ranks = [rank_by_model(units, s) for s in model_indices]
    seed = int(resolved["seed"])
    rng = stream(derive_key(seed, SCOPE_SAMPLE))
    chosen = two_step_sample(units, design, ranks, rng)
    table = inclusion_table(ranks, design)
    chosen = chosen.with_probabilities(table.probabilities)
    meta = _metadata(resolved, "sample")
    write_chosen_csv(resolved["out"], chosen, metadata=meta)
    design_out = resolved["design_out"] or str(resolved["out"]) + ".design.json"
    Path(design_out).write_text(design_to_json(design, seed=seed) + "\n")
    click.echo(
        f"chosen set of {len(chosen)} units -> {resolved['out']} (design: {design_out})"
    )


def _load_estimation_inputs(resolved: dict) -> tuple[Dataset, np.ndarray, int]:
    """Sample dataset, aligned probabilities, and the population size."""
    units = read_dataset_csv(resolved["data"])
    design = None
    if resolved.get("design"):
        design, _ = design_from_json(Path(resolved["design"]).read_text())
    if resolved.get("chosen"):
        if design is None:
            raise ConfigurationError(
                "--chosen needs --design (the sampler's sidecar JSON) for the population size"
            )
        chosen = read_chosen_csv(resolved["chosen"], design)
        positions = units.positions_of(chosen.ids)
        sample_ds = units.subset(positions)
        return sample_ds, chosen.p_inclusion, design.population_size
    # single-file path: the data CSV must carry p_inclusion itself
    import pandas as pd

    frame = pd.read_csv(resolved["data"], comment="#", float_precision="round_trip")
    if "p_inclusion" not in frame.columns:
        raise ConfigurationError(
            "no p_inclusion available: pass --chosen (and --design), or add a "
            "p_inclusion column; run `upliftband sample` or supply ranks plus a "
            "design to recompute probabilities"
        )
    p = frame["p_inclusion"].to_numpy(dtype=np.float64)
    population_size = resolved.get("population_size")
    if design is not None:
        population_size = design.population_size
    if population_size is None:
        raise ConfigurationError("pass --population-size (or --design) with a single-file input")
    return units, p, int(population_size)


def _estimate_options(fn):
    options = [
        click.option("--data", required=True, type=click.Path(exists=True),
                     help="CSV with arms, outcomes and score columns for the sampled units."),
        click.option("--chosen", type=click.Path(exists=True), help="Chosen-set CSV from `sample`."),
        click.option("--design", type=click.Path(exists=True), help="Design sidecar JSON."),
        click.option("--config", "config_path", type=click.Path(exists=True)),
        click.option("--population-size", type=int, help="Population size N (single-file input)."),
        click.option("--out", type=click.Path(), help="Band CSV path."),
        click.option("--svg", type=click.Path(), help="Optional SVG plot path."),
        click.option("--outer", type=int, help="Outer bootstrap replications B."),
        click.option("--inner", type=int, help="Inner bootstrap replications D."),
        click.option("--alpha", type=float, help="Band level (default 0.05)."),
        click.option("--grid", type=str, help="Comma list of percentiles."),
        click.option("--seed", type=int),
        click.option("--threads", type=int, help="Worker threads (default $UPLIFTBAND_THREADS)."),
        click.option("--dump-ensemble", type=click.Path(), help="Audit dump of outer aggregates."),
    ]
    for opt in reversed(options):
        fn = opt(fn)
    return fn


_ESTIMATE_DEFAULTS = {
    "data": None,
    "chosen": None,
    "design": None,
    "population_size": None,
    "out": "bands.csv",
    "svg": None,
    "outer": 100,
    "inner": 10,
    "alpha": 0.05,
    "grid": None,
    "seed": 0,
    "threads": None,
    "dump_ensemble": None,
}


def _run_bootstrap(resolved: dict):
    sample_ds, p, population_size = _load_estimation_inputs(resolved)
    config = BootstrapConfig(
        n_outer=int(resolved["outer"]),
        n_inner=int(resolved["inner"]),
        alpha=float(resolved["alpha"]),
        grid=_parse_grid(resolved["grid"]),
        seed=int(resolved["seed"]),
        threads=int(resolved["threads"] or _default_threads()),
    )
    ensemble = nested_bootstrap(sample_ds, p, population_size, config)
    return sample_ds, ensemble


@cli.command()
@_estimate_options
def estimate(config_path, **flags) -> None:
    """Nested-bootstrap bands for every model in the data."""
    resolved = _resolve(flags, _load_config(config_path), _ESTIMATE_DEFAULTS)
    sample_ds, ensemble = _run_bootstrap(resolved)
    bands = [summarize_band(ensemble, s) for s in range(ensemble.n_models)]
    meta = _metadata(resolved, "estimate")
    write_band_csv(resolved["out"], bands, metadata=meta)
    if resolved["dump_ensemble"]:
        write_ensemble_csv(resolved["dump_ensemble"], ensemble, metadata=meta)
    if resolved["svg"]:
        save_band_svg(resolved["svg"], bands, title="uplift curve estimates", metadata=meta)
    click.echo(f"bands for {ensemble.n_models} model(s) -> {resolved['out']}")


def _verdicts(band) -> list[str]:
    out = []
    for g in range(len(band)):
        lo, hi = band.lower[g], band.upper[g]
        if np.isnan(lo) or np.isnan(hi):
            out.append("INCONCLUSIVE")
        elif lo > 0:
            out.append("ABOVE_ZERO")
        elif hi < 0:
            out.append("BELOW_ZERO")
        else:
            out.append("INCONCLUSIVE")
    return out


@cli.command()
@_estimate_options
@click.option("--models", type=str, help="Pair of model labels, e.g. '1,2'.")
def compare(config_path, models, **flags) -> None:
    """Difference band for a model pair with a per-percentile verdict."""
    resolved = _resolve(
        dict(flags, models=models), _load_config(config_path),
        dict(_ESTIMATE_DEFAULTS, models="1,2", out="difference.csv"),
    )
    sample_ds, ensemble = _run_bootstrap(resolved)
    pair = [part.strip() for part in str(resolved["models"]).split(",") if part.strip()]
    if len(pair) != 2:
        raise ConfigurationError(
            f"--models needs exactly two labels; available: {', '.join(sample_ds.model_labels)}"
        )
    band = difference_band(ensemble, pair[0], pair[1])
    meta = _metadata(resolved, "compare")
    write_band_csv(resolved["out"], [band], metadata=meta,
                   verdicts={band.label: _verdicts(band)})
    if resolved["svg"]:
        save_band_svg(resolved["svg"], [band], title=f"difference {band.label}",
                      difference=True, metadata=meta)
    click.echo(f"difference band {band.label} -> {resolved['out']}")


_COVERAGE_DEFAULTS = {
    "scenario": 3,
    "population_size": 20000,
    "treat_ratio": 0.5,
    "sigma": 1.0,
    "sims": 100,
    "oracle_reps": 200,
    "outer": 100,
    "inner": 10,
    "alpha": 0.05,
    "grid": None,
    "seed": 0,
    "threads": None,
    "out": "coverage.csv",
}


def _coverage_impl(config_path, flags) -> None:
    resolved = _resolve(flags, _load_config(config_path), _COVERAGE_DEFAULTS)
    scenario = ScenarioSpec.from_table(
        int(resolved["scenario"]),
        int(resolved["population_size"]),
        treat_ratio=float(resolved["treat_ratio"]),
        sigma=float(resolved["sigma"]),
        n_sims=int(resolved["sims"]),
        oracle_reps=int(resolved["oracle_reps"]),
        bootstrap=BootstrapConfig(
            n_outer=int(resolved["outer"]),
            n_inner=int(resolved["inner"]),
            alpha=float(resolved["alpha"]),
            grid=_parse_grid(resolved["grid"]),
            seed=int(resolved["seed"]),
        ),
        seed=int(resolved["seed"]),
    )
    threads = int(resolved["threads"] or _default_threads())
    started = time.perf_counter()
    click.echo(f"training built-in scorers and computing {scenario.oracle_reps}-rep oracle ...")
    scorers = train_builtin_scorers(
        scenario.seed, sigma=scenario.sigma, treat_ratio=scenario.treat_ratio
    )
    oracle = oracle_curves(scenario, scorers)
    click.echo(f"running {scenario.n_sims} replications on {threads} worker(s) ...")
    report = coverage_experiment(scenario, oracle=oracle, scorers=scorers, threads=threads)
    meta = _metadata(resolved, "coverage")
    report.to_csv(resolved["out"], metadata=meta)
    elapsed = time.perf_counter() - started
    click.echo(report.summary())
    click.echo(f"report -> {resolved['out']} ({elapsed:.1f}s, {report.n_failed} excluded)")


def _coverage_options(fn):
    options = [
        click.option("--config", "config_path", type=click.Path(exists=True)),
        click.option("--scenario", type=int, help="Scenario id 0-7."),
        click.option("--population-size", type=int),
        click.option("--treat-ratio", type=float),
        click.option("--sigma", type=float),
        click.option("--sims", type=int, help="Simulation replications K."),
        click.option("--oracle-reps", type=int),
        click.option("--outer", type=int, help="Outer bootstrap replications B."),
        click.option("--inner", type=int, help="Inner bootstrap replications D."),
        click.option("--alpha", type=float),
        click.option("--grid", type=str),
        click.option("--seed", type=int),
        click.option("--threads", type=int),
        click.option("--out", type=click.Path()),
    ]
    for opt in reversed(options):
        fn = opt(fn)
    return fn


@cli.command()
@_coverage_options
def coverage(config_path, **flags) -> None:
    """Monte Carlo coverage study over the scenario grid."""
    _coverage_impl(config_path, flags)


@cli.command()
@_coverage_options
def simulate(config_path, **flags) -> None:
    """Alias of `coverage`."""
    _coverage_impl(config_path, flags)


def main(argv: list[str] | None = None) -> int:
    """Entry point mapping library errors to stable exit codes."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except SchemaError as exc:
        click.echo(f"schema error: {exc}", err=True)
        return EXIT_SCHEMA
    except (DesignError, ConfigurationError, ValueError) as exc:
        click.echo(f"validation error: {exc}", err=True)
        return EXIT_VALIDATION
    except (EstimationError, ConsistencyError) as exc:
        click.echo(f"estimation error: {exc}", err=True)
        return EXIT_ESTIMATION
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.Abort:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
