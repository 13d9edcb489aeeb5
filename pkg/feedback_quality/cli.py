"""``feedback-quality`` command line: simulate | estimate | fit | compare | drift | experiment."""
from __future__ import annotations

import json
import sys
from functools import wraps
from pathlib import Path
from typing import Optional

import click
import numpy as np

from feedback_quality.core.config import ModelVariant, RunConfig, load_run_config
from feedback_quality.core.errors import ConfigError, EvaluationError, FeedbackQualityError
from feedback_quality.core.io import read_cluster_csv, write_cluster_csv, write_interaction_csv
from feedback_quality.core.settings import get_settings
from feedback_quality.logger import logger, set_log_level


def _emit(payload) -> None:
    click.echo(json.dumps(payload, indent=2, sort_keys=True, default=str))


def _fail(error: dict) -> None:
    click.echo(json.dumps(error, sort_keys=True), err=True)
    sys.exit(1)


def handle_errors(fn):
    """Turn package and validation errors into a JSON object on stderr and exit status 1."""

    @wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except FeedbackQualityError as e:
            logger.debug(f"{fn.__name__} failed", exc_info=True)
            _fail(e.to_dict())
        except (ValueError, OSError) as e:
            _fail({"error": type(e).__name__, "code": "invalid_input", "message": str(e)})

    return wrapper


@click.group()
@click.option("--log-level", default=None, help="Logging level (default from FEEDBACK_QUALITY_LOG_LEVEL).")
def main(log_level: Optional[str]):
    set_log_level(log_level or get_settings().log_level)


@main.command()
@click.option("--clusters", "C", type=int, default=18, show_default=True)
@click.option("--kappa-max", type=float, default=10.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--size-min", type=int, default=100, show_default=True)
@click.option("--size-max", type=int, default=2000, show_default=True)
@click.option("--quality-alpha", type=float, default=6.25, show_default=True)
@click.option("--quality-beta", type=float, default=3.75, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Cluster-stats CSV.")
@click.option("--truth-out", type=click.Path(dir_okay=False), default=None, help="JSON with q*, s0, kappa, Q*.")
@click.option("--interactions-out", type=click.Path(dir_okay=False), default=None, help="Interaction-level CSV.")
@handle_errors
def simulate(C, kappa_max, seed, size_min, size_max, quality_alpha, quality_beta, out, truth_out, interactions_out):
    """Draw a synthetic population and its selection-biased feedback."""
    from feedback_quality.simulator import draw_bias_params, make_population, simulate_feedback, simulate_interactions

    rng = np.random.default_rng(seed)
    population = make_population(C, (size_min, size_max), (quality_alpha, quality_beta), rng)
    bias = draw_bias_params(C, kappa_max, rng)
    sim = simulate_feedback(population, bias, rng)
    write_cluster_csv(sim.dataset, out)
    if truth_out:
        truth = {"seed": seed, "kappa_max": kappa_max, **population.to_dict(), **bias.to_dict()}
        Path(truth_out).write_text(json.dumps(truth, indent=2, sort_keys=True), encoding="utf-8")
    if interactions_out:
        write_interaction_csv(simulate_interactions(population, bias, rng), interactions_out)
    _emit({"clusters": C, "N": sim.dataset.N, "M": sim.dataset.M, "Q_star": population.Q_star, "out": out})


@main.command()
@click.option("--input", "input_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--method", type=click.Choice(["naive", "ipw"]), default="naive", show_default=True)
@handle_errors
def estimate(input_path, method):
    """Classical aggregate-quality estimate from cluster statistics."""
    from feedback_quality.estimators import ipw_estimate, naive_mean

    dataset = read_cluster_csv(input_path)
    result = naive_mean(dataset) if method == "naive" else ipw_estimate(dataset)
    _emit({"value": result.value, "method": result.method, "excluded_clusters": result.excluded_clusters})


@main.command()
@click.option("--input", "input_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="RunConfig JSON; command-line flags override it.")
@click.option("--model", default=None, help="basic | enhanced | hier_sentiment | hier_informed | corrected_global")
@click.option("--chains", type=int, default=None)
@click.option("--draws", type=int, default=None)
@click.option("--tune", type=int, default=None)
@click.option("--target-accept", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--workers", type=int, default=None)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Draws file (.json or .bin + sidecar).")
@click.option("--record/--no-record", default=False, show_default=True, help="Store the fit in the run database.")
@handle_errors
def fit(input_path, config_path, model, chains, draws, tune, target_accept, seed, workers, out, record):
    """Fit one model variant with NUTS and print its quality summary."""
    from feedback_quality.pipeline import fit_dataset
    from feedback_quality.sampler import save_draws

    config = load_run_config(config_path) if config_path else RunConfig()
    overrides = {
        "model": ModelVariant.parse(model) if model else None,
        "chains": chains,
        "draws": draws,
        "tune": tune,
        "target_accept": target_accept,
        "seed": seed,
        "workers": workers,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if overrides:
        config = RunConfig.model_validate({**config.model_dump(), **overrides})

    result = fit_dataset(read_cluster_csv(input_path), config)
    if out:
        save_draws(result.saved(), out)
    payload = {
        "model": result.variant,
        "seed": config.seed,
        "config_hash": result.config_hash,
        "summary": result.summary.model_dump(mode="json"),
        "flags": result.summary.flags,
        "convergence": result.report.summary(),
        "draws_path": out,
    }
    if record:
        from feedback_quality.database import SessionLocal, init_engine
        from feedback_quality.utils.shared import record_fit

        init_engine()
        with SessionLocal() as db:
            payload["run_id"] = record_fit(result, db, draws_path=out).id
    _emit(payload)


@main.command("compare")
@click.option("--fits", multiple=True, required=True, type=click.Path(exists=True, dir_okay=False),
              help="Draws files written by `fit --out` (repeat the flag).")
@click.option("--mode", type=click.Choice(["stacking", "pseudo-bma"]), default="stacking", show_default=True)
@click.option("--include-global", is_flag=True, default=False, help="Keep pooled-likelihood models in the table.")
@handle_errors
def compare_cmd(fits, mode, include_global):
    """PSIS-LOO comparison of saved fits on the same dataset."""
    from feedback_quality.evaluation import compare, loglik_matrix, psis_loo
    from feedback_quality.sampler import load_draws

    results = []
    datasets = set()
    for path in fits:
        saved = load_draws(path)
        datasets.add(saved.dataset)
        model = saved.build_model()
        results.append((saved.variant.value, psis_loo(loglik_matrix(model, saved.draws.unconstrained))))
    if len(datasets) > 1:
        raise EvaluationError("fits were made on different datasets", code="cluster_mismatch")
    if len({tag for tag, _ in results}) != len(results):
        raise EvaluationError("each model variant may appear only once", code="duplicate_model")
    _emit(compare(results, mode=mode, include_global=include_global).model_dump(mode="json"))


def _noise_fractions(raw: Optional[str], count: int) -> list[float]:
    if not raw:
        return [0.0] * count
    values = [float(v) for v in raw.split(",")]
    if len(values) != count:
        raise ConfigError(f"{len(values)} noise fractions for {count} batches", code="invalid_config")
    return values


@main.command()
@click.option("--batches", "batch_dir", type=click.Path(exists=True, file_okay=False), required=True,
              help="Directory of batch cluster-stats CSVs, processed in file-name order.")
@click.option("--thresholds", "thresholds_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="DriftThresholds JSON.")
@click.option("--noise-fractions", default=None, help="Comma-separated clusterer noise fraction per batch.")
@click.option("--checkpoint", default=None, help="Resume from and save to this named checkpoint.")
@handle_errors
def drift(batch_dir, thresholds_path, noise_fractions, checkpoint):
    """Run the drift monitor over a sequence of batch windows, one decision per step."""
    from feedback_quality.drift import BatchSummary, DriftMonitor, DriftThresholds

    paths = sorted(Path(batch_dir).glob("*.csv"))
    if not paths:
        raise ConfigError(f"no batch CSVs in {batch_dir}", code="invalid_config")
    thresholds = None
    if thresholds_path:
        try:
            thresholds = DriftThresholds.model_validate_json(Path(thresholds_path).read_text(encoding="utf-8"))
        except ValueError as e:
            raise ConfigError(f"Invalid drift thresholds: {e}", code="invalid_config") from e
    noise = _noise_fractions(noise_fractions, len(paths))

    db = None
    monitor = DriftMonitor(thresholds)
    if checkpoint:
        from feedback_quality.database import SessionLocal, init_engine

        init_engine()
        db = SessionLocal()
        try:
            monitor = DriftMonitor.load_checkpoint(db, checkpoint)
        except EvaluationError as e:
            if e.code != "missing_checkpoint":
                raise
            logger.info(f"starting new drift checkpoint {checkpoint!r}")
    try:
        decisions = []
        for index, (path, fraction) in enumerate(zip(paths, noise)):
            batch = BatchSummary.from_dataset(read_cluster_csv(path), noise_fraction=fraction, index=index)
            decision = monitor.observe(batch)
            if decision is not None:
                decisions.append(decision.model_dump(mode="json"))
        if db is not None:
            monitor.save_checkpoint(db, checkpoint)
    finally:
        if db is not None:
            db.close()
    _emit(decisions)


@main.command()
@click.option("--spec", "spec_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="ExperimentSpec JSON.")
@click.option("--mode", default=None, help="headline | kappa_sweep | coverage | drift_demo | prior_sensitivity")
@click.option("--seed", type=int, default=None)
@click.option("--replicates", type=int, default=None)
@click.option("--workers", type=int, default=None)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--format", "fmt", default="json", show_default=True, help="json | markdown")
@click.option("--record/--no-record", default=False, show_default=True)
@handle_errors
def experiment(spec_path, mode, seed, replicates, workers, out, fmt, record):
    """Run a synthetic-ground-truth experiment and write its report."""
    from feedback_quality.harness import emit_report, parse_experiment_spec, run_experiment

    payload = {}
    if spec_path:
        try:
            payload = json.loads(Path(spec_path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"Cannot read experiment spec {spec_path}: {e}", code="unreadable_config") from e
    overrides = {"mode": mode, "seed": seed, "replicates": replicates, "workers": workers}
    payload.update({k: v for k, v in overrides.items() if v is not None})
    spec = parse_experiment_spec(payload)

    if record:
        from feedback_quality.database import SessionLocal, init_engine
        from feedback_quality.utils.shared import run_recorded_experiment

        init_engine()
        with SessionLocal() as db:
            report, run = run_recorded_experiment(spec, db)
            run_id = run.id
    else:
        report, run_id = run_experiment(spec), None
    path = emit_report(report, out, fmt)
    _emit({"mode": report.mode, "seed": report.seed, "config_hash": report.config_hash,
           "out": str(path), "run_id": run_id})


if __name__ == "__main__":
    main()
