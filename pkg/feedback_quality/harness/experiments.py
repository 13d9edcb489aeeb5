"""Experiment orchestration on synthetic populations with known ground truth.

Every random stream is derived from (spec.seed, stream tag, cell index), so a
spec reproduces byte-identical report payloads regardless of how many worker
processes run the cells. Run-dependent facts (timings, versions) live only in
``QualityReport.runtime``.
"""
from __future__ import annotations

import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from enum import Enum
from importlib import metadata
from typing import Callable, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, field_validator, model_validator

from feedback_quality.core.config import ModelVariant, PriorConfig, RunConfig
from feedback_quality.core.errors import ConfigError, EvaluationError, FeedbackQualityError
from feedback_quality.core.settings import resolve_workers
from feedback_quality.core.types import ClusterStats
from feedback_quality.drift import BatchSummary, DriftMonitor, DriftThresholds
from feedback_quality.estimators import abs_error, ipw_estimate, naive_mean, wilson_interval
from feedback_quality.evaluation import compare, psis_loo
from feedback_quality.evaluation.loo import loglik_matrix
from feedback_quality.harness.report import MethodEstimate, QualityReport, RecoveryRow, RuntimeInfo
from feedback_quality.logger import logger, run_context_filter
from feedback_quality.pipeline import FitResult, fit_dataset
from feedback_quality.simulator import (
    DEFAULT_QUALITY_PRIOR,
    DEFAULT_SIZE_RANGE,
    SimulatedFeedback,
    SyntheticPopulation,
    draw_bias_params,
    make_population,
    simulate_feedback,
)
from feedback_quality.synthesis import anchor_gap, aggregate_posterior, selection_ratio_spread
from feedback_quality.utils.hashing import config_hash
from feedback_quality.utils.model_utils import current_time

# random stream tags
POPULATION, BIAS, FEEDBACK, FIT, ANCHOR, DRIFT = range(6)

#: replicates whose divergent-transition share exceeds this are flagged
DIVERGENCE_FLAG_FRACTION = 0.01
#: posterior draws used for the feedback-rate spread diagnostic
RATE_DRAWS = 400


class ExperimentMode(str, Enum):
    HEADLINE = "headline"
    KAPPA_SWEEP = "kappa_sweep"
    COVERAGE = "coverage"
    DRIFT_DEMO = "drift_demo"
    PRIOR_SENSITIVITY = "prior_sensitivity"


class PopulationSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    clusters: PositiveInt = 18
    size_range: tuple[PositiveInt, PositiveInt] = DEFAULT_SIZE_RANGE
    quality_prior: tuple[PositiveFloat, PositiveFloat] = DEFAULT_QUALITY_PRIOR


class SamplerSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    chains: PositiveInt = 4
    draws: PositiveInt = 2000
    tune: PositiveInt = 2000
    max_tree_depth: PositiveInt = 10
    #: per-variant acceptance targets overriding the variant defaults
    target_accept: dict[ModelVariant, float] = Field(default_factory=dict)


class DriftDemoSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    batches: PositiveInt = 8
    #: share of each cluster's interactions arriving per batch
    batch_fraction: float = Field(default=0.5, gt=0.0, le=1.0)
    shift_at: int = 4
    #: size multiplier applied to the first half of the clusters after the shift
    shift_factor: PositiveFloat = 6.0
    flip_cluster: int = 0
    flip_at: int = 2
    noise_start: float = Field(default=0.02, ge=0.0, le=1.0)
    noise_climb_at: int = 5
    noise_step: float = Field(default=0.03, ge=0.0)
    thresholds: DriftThresholds = Field(default_factory=DriftThresholds)


class ExperimentSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    mode: ExperimentMode = ExperimentMode.HEADLINE
    seed: int = Field(default=0, ge=0, lt=2**63)
    population: PopulationSpec = Field(default_factory=PopulationSpec)
    kappa_max: float = Field(default=10.0, ge=1.0)
    kappas: list[float] = Field(default_factory=lambda: [1.0, 3.0, 10.0, 30.0])
    models: list[ModelVariant] = Field(default_factory=lambda: [ModelVariant.BASIC, ModelVariant.HIER_INFORMED])
    sampler: SamplerSpec = Field(default_factory=SamplerSpec)
    coverage_sampler: SamplerSpec = Field(default_factory=lambda: SamplerSpec(chains=2, draws=1000, tune=1500))
    replicates: PositiveInt = 20
    priors: PriorConfig = Field(default_factory=PriorConfig)
    #: (r_pos center, kappa center) grid for prior_sensitivity
    prior_grid: list[tuple[PositiveFloat, PositiveFloat]] = Field(
        default_factory=lambda: [(0.04, 1.5), (0.07, 2.5), (0.12, 4.0)]
    )
    anchor_size: int = Field(default=0, ge=0)
    drift: DriftDemoSpec = Field(default_factory=DriftDemoSpec)
    workers: Optional[PositiveInt] = None

    @field_validator("models", mode="before")
    @classmethod
    def _parse_models(cls, value):
        return [ModelVariant.parse(v) for v in value]

    @model_validator(mode="after")
    def _check(self):
        if not self.models:
            raise ValueError("models must not be empty")
        if self.mode is ExperimentMode.KAPPA_SWEEP and len(self.kappas) < 2:
            raise ValueError("kappa_sweep needs at least 2 kappa values")
        if any(k < 1 for k in self.kappas):
            raise ValueError(f"kappa values must be >= 1, got {self.kappas}")
        if self.mode is ExperimentMode.COVERAGE and self.replicates < 10:
            raise ValueError(f"coverage needs at least 10 replicates, got {self.replicates}")
        return self

    @property
    def hash(self) -> str:
        return config_hash(self.model_dump(mode="json", exclude={"workers"}))


def parse_experiment_spec(payload: dict) -> ExperimentSpec:
    try:
        return ExperimentSpec.model_validate(payload)
    except ValueError as e:
        raise ConfigError(f"Invalid experiment spec: {e}", code="invalid_config") from e


def derive_seed(seed: int, *parts: int) -> int:
    """Independent 63-bit seed for one (stream, cell) pair."""
    state = np.random.SeedSequence([int(seed), *map(int, parts)]).generate_state(2, np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1])) % 2**63


def stream(seed: int, *parts: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *parts))


def _parallel_map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _run_config(spec: ExperimentSpec, sampler: SamplerSpec, variant: ModelVariant, seed: int,
                priors: Optional[PriorConfig] = None) -> RunConfig:
    return RunConfig(
        model=variant,
        chains=sampler.chains,
        draws=sampler.draws,
        tune=sampler.tune,
        target_accept=sampler.target_accept.get(variant),
        max_tree_depth=sampler.max_tree_depth,
        seed=seed,
        workers=1,
        priors=priors if priors is not None else spec.priors,
    )


def _population(spec: ExperimentSpec) -> SyntheticPopulation:
    pop = spec.population
    return make_population(pop.clusters, pop.size_range, pop.quality_prior, rng=stream(spec.seed, POPULATION))


def _simulate(spec: ExperimentSpec, population: SyntheticPopulation, kappa_max: float, cell: int) -> SimulatedFeedback:
    bias = draw_bias_params(population.C, kappa_max, stream(spec.seed, BIAS, cell))
    return simulate_feedback(population, bias, stream(spec.seed, FEEDBACK, cell))


def _classical(sim: SimulatedFeedback, seed: int, digest: str) -> list[MethodEstimate]:
    truth = sim.population.Q_star
    data = sim.dataset
    out = []
    try:
        naive = naive_mean(data)
        out.append(MethodEstimate(
            method="naive", estimate=naive.value, ci=wilson_interval(data.Y, data.M),
            abs_error=abs_error(naive.value, truth), seed=seed, config_hash=digest,
        ))
        ipw = ipw_estimate(data)
        out.append(MethodEstimate(
            method="ipw", estimate=ipw.value, abs_error=abs_error(ipw.value, truth), seed=seed, config_hash=digest,
        ))
    except FeedbackQualityError as e:
        logger.warning(f"classical estimators skipped: {e}")
    return out


def _bayes_estimate(fit: FitResult, truth: float) -> MethodEstimate:
    agg = fit.summary.aggregate
    return MethodEstimate(
        method=fit.variant,
        estimate=agg.mean,
        ci=agg.ci,
        abs_error=abs_error(agg.mean, truth),
        covers_truth=agg.ci[0] <= truth <= agg.ci[1],
        seed=fit.config.seed,
        config_hash=fit.config_hash,
    )


def _rate_spread(fit: FitResult) -> float:
    flat = fit.draws.flat(unconstrained=True)
    step = max(1, flat.shape[0] // RATE_DRAWS)
    s_draws = np.stack([fit.model.rates(theta)[0] for theta in flat[::step]])
    return selection_ratio_spread(s_draws)


def _fit_task(args: tuple) -> FitResult:
    dataset, config = args
    return fit_dataset(dataset, config)


def _fit_models(spec: ExperimentSpec, sim: SimulatedFeedback, sampler: SamplerSpec, cell: int,
                workers: int) -> list[FitResult]:
    tasks = [
        (sim.dataset, _run_config(spec, sampler, variant, derive_seed(spec.seed, FIT, cell, i)))
        for i, variant in enumerate(spec.models)
    ]
    return _parallel_map(_fit_task, tasks, workers)


def _loo_table(fits: list[FitResult]) -> Optional[dict]:
    results = []
    for fit in fits:
        try:
            results.append((fit.variant, psis_loo(loglik_matrix(fit.model, fit.draws.unconstrained))))
        except EvaluationError as e:
            logger.warning(f"LOO skipped for {fit.variant}: {e}")
    try:
        return compare(results).model_dump(mode="json")
    except EvaluationError as e:
        logger.info(f"no LOO comparison: {e}")
        return None


def _recovery(sim: SimulatedFeedback, fits: list[FitResult]) -> list[RecoveryRow]:
    data = sim.dataset
    prevalence = sim.population.prevalence
    rows = []
    per_fit = {fit.variant: fit.quality_draws() for fit in fits}
    for c, cluster in enumerate(data.clusters):
        posterior = {}
        for variant, q_draws in per_fit.items():
            lo, med, hi = np.quantile(q_draws[:, c], [0.025, 0.5, 0.975])
            posterior[variant] = (float(med), float(lo), float(hi))
        rows.append(RecoveryRow(
            cluster_id=cluster.cluster_id,
            prevalence=float(prevalence[c]),
            n=cluster.n, m=cluster.m, y=cluster.y,
            naive_rate=cluster.y / cluster.m if cluster.m else None,
            q_star=float(sim.population.q_star[c]),
            posterior=posterior,
        ))
    return rows


def _report(spec: ExperimentSpec, **fields) -> QualityReport:
    return QualityReport(
        mode=spec.mode.value,
        seed=spec.seed,
        config_hash=spec.hash,
        config=spec.model_dump(mode="json", exclude={"workers"}),
        **fields,
    )


def _package_versions() -> dict[str, str]:
    versions = {}
    for name in ("numpy", "scipy", "pydantic"):
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            continue
    return versions


def _with_runtime(report: QualityReport, started_at, started: float, workers: int,
                  timings: Optional[dict] = None) -> QualityReport:
    report.runtime = RuntimeInfo(
        started_at=started_at,
        seconds=time.perf_counter() - started,
        workers=workers,
        python=platform.python_version(),
        packages=_package_versions(),
        timings=timings or {},
    )
    return report


def run_headline(spec: ExperimentSpec) -> QualityReport:
    started_at, started = current_time(), time.perf_counter()
    workers = resolve_workers(spec.workers)
    run_context_filter.set_context(seed=spec.seed, config_hash=spec.hash, model="headline")
    population = _population(spec)
    sim = _simulate(spec, population, spec.kappa_max, 0)
    truth = population.Q_star
    logger.info(f"headline: C={population.C}, kappa_max={spec.kappa_max}, Q*={truth:.4f}, "
                f"M/N={sim.dataset.M / sim.dataset.N:.4f}")

    estimates = _classical(sim, spec.seed, spec.hash)
    fits = _fit_models(spec, sim, spec.sampler, 0, workers)
    estimates += [_bayes_estimate(fit, truth) for fit in fits]

    anchor = None
    if spec.anchor_size:
        labels = _anchor_labels(population, spec.anchor_size, stream(spec.seed, ANCHOR))
        preferred = next((f for f in fits if f.config.model is ModelVariant.HIER_INFORMED), fits[0])
        agg = aggregate_posterior(preferred.quality_draws(), population.prevalence)
        anchor = {"method": preferred.variant, **anchor_gap(agg, labels).model_dump(mode="json")}

    report = _report(
        spec,
        truth={"Q_star": truth, "population": population.to_dict(), "bias": sim.bias.to_dict(),
               "N": sim.dataset.N, "M": sim.dataset.M},
        estimates=estimates,
        convergence={fit.variant: fit.report.summary() for fit in fits},
        loo=_loo_table(fits),
        flags={fit.variant: fit.summary.flags for fit in fits},
        selection_ratio_spread={fit.variant: _rate_spread(fit) for fit in fits},
        recovery=_recovery(sim, fits),
        anchor=anchor,
    )
    run_context_filter.set_run_tag(None)
    return _with_runtime(report, started_at, started, workers, {fit.variant: fit.seconds for fit in fits})


def _anchor_labels(population: SyntheticPopulation, size: int, rng: np.random.Generator) -> np.ndarray:
    """Labels of ``size`` interactions sampled from the whole population."""
    clusters = rng.choice(population.C, size=size, p=population.prevalence)
    return (rng.random(size) < population.q_star[clusters]).astype(int)


def _sweep_cell(args: tuple) -> dict:
    spec, population, index, kappa = args
    sim = _simulate(spec, population, kappa, index)
    truth = population.Q_star
    estimates = _classical(sim, spec.seed, spec.hash)
    fits = _fit_models(spec, sim, spec.sampler, index, 1)
    for fit in fits:
        if not fit.report.passed:
            logger.warning(f"kappa_max={kappa}: {fit.variant} convergence warnings {fit.report.summary()}")
    estimates += [_bayes_estimate(fit, truth) for fit in fits]
    return {
        "kappa_max": kappa,
        "feedback_rate": sim.dataset.M / sim.dataset.N,
        "abs_error": {e.method: e.abs_error for e in estimates},
        "estimates": [e.model_dump(mode="json") for e in estimates],
        "convergence": {fit.variant: fit.report.summary() for fit in fits},
    }


def run_kappa_sweep(spec: ExperimentSpec) -> QualityReport:
    started_at, started = current_time(), time.perf_counter()
    workers = resolve_workers(spec.workers)
    run_context_filter.set_context(seed=spec.seed, config_hash=spec.hash, model="kappa_sweep")
    population = _population(spec)
    cells = [(spec, population, i, float(k)) for i, k in enumerate(spec.kappas)]
    rows = _parallel_map(_sweep_cell, cells, workers)
    for row in rows:
        logger.info(f"kappa_max={row['kappa_max']}: M/N={row['feedback_rate']:.4f}, errors={row['abs_error']}")
    report = _report(spec, truth={"Q_star": population.Q_star, "population": population.to_dict()}, sweep=rows)
    run_context_filter.set_run_tag(None)
    return _with_runtime(report, started_at, started, workers)


def _coverage_replicate(args: tuple) -> dict:
    spec, population, replicate = args
    sim = _simulate(spec, population, spec.kappa_max, replicate)
    truth = population.Q_star
    naive = naive_mean(sim.dataset).value if sim.dataset.M else None
    row = {
        "replicate": replicate,
        "bias": sim.bias.to_dict(),
        "naive_abs_error": abs_error(naive, truth) if naive is not None else None,
        "methods": {},
    }
    for fit in _fit_models(spec, sim, spec.coverage_sampler, replicate, 1):
        est = _bayes_estimate(fit, truth)
        divergent_share = fit.report.divergent_fraction
        row["methods"][fit.variant] = {
            "estimate": est.estimate,
            "ci": list(est.ci),
            "ci_width": est.ci_width,
            "covers_truth": est.covers_truth,
            "abs_error": est.abs_error,
            "below_truth": est.estimate < truth,
            "divergences": fit.report.divergences,
            "max_rhat": fit.report.max_rhat,
            "divergence_flag": divergent_share > DIVERGENCE_FLAG_FRACTION,
            "seed": est.seed,
        }
    return row


def coverage_summary(rows: list[dict], methods: Sequence[str]) -> dict[str, dict]:
    summary = {}
    for method in methods:
        cells = [row["methods"][method] for row in rows if method in row["methods"]]
        covered = sum(1 for c in cells if c["covers_truth"])
        summary[method] = {
            "coverage": covered / len(cells),
            "coverage_interval": list(wilson_interval(covered, len(cells))),
            "median_abs_error": float(np.median([c["abs_error"] for c in cells])),
            "median_ci_width": float(np.median([c["ci_width"] for c in cells])),
            "below_truth": sum(1 for c in cells if c["below_truth"]),
            "divergence_flagged": sum(1 for c in cells if c["divergence_flag"]),
        }
    return summary


def run_coverage_study(spec: ExperimentSpec) -> QualityReport:
    started_at, started = current_time(), time.perf_counter()
    workers = resolve_workers(spec.workers)
    run_context_filter.set_context(seed=spec.seed, config_hash=spec.hash, model="coverage")
    population = _population(spec)
    rows = _parallel_map(_coverage_replicate, [(spec, population, r) for r in range(spec.replicates)], workers)
    summary = coverage_summary(rows, [v.value for v in spec.models])
    for method, stats in summary.items():
        logger.info(f"{method}: coverage {stats['coverage']:.2f} over {spec.replicates} replicates")
    report = _report(
        spec,
        truth={"Q_star": population.Q_star, "population": population.to_dict()},
        coverage={"replicates": spec.replicates, "summary": summary, "rows": rows},
    )
    run_context_filter.set_run_tag(None)
    return _with_runtime(report, started_at, started, workers)


def _sensitivity_cell(args: tuple) -> dict:
    spec, sim, index, (r_pos_center, kappa_center) = args
    priors = spec.priors.model_copy(update={
        "informed_logrpos_center": math.log(r_pos_center),
        "informed_logkappa_center": math.log(kappa_center),
    })
    config = _run_config(spec, spec.sampler, ModelVariant.HIER_INFORMED,
                         derive_seed(spec.seed, FIT, 0, index), priors=priors)
    fit = fit_dataset(sim.dataset, config)
    est = _bayes_estimate(fit, sim.population.Q_star)
    return {
        "r_pos_center": r_pos_center,
        "kappa_center": kappa_center,
        "estimate": est.estimate,
        "ci": list(est.ci),
        "abs_error": est.abs_error,
        "covers_truth": est.covers_truth,
        "convergence": fit.report.summary(),
        "seed": est.seed,
        "config_hash": est.config_hash,
    }


def run_prior_sensitivity(spec: ExperimentSpec, centers: Optional[Sequence[tuple[float, float]]] = None) -> QualityReport:
    """Refit HierInformed on one simulated dataset under a grid of prior centers."""
    started_at, started = current_time(), time.perf_counter()
    workers = resolve_workers(spec.workers)
    run_context_filter.set_context(seed=spec.seed, config_hash=spec.hash, model="prior_sensitivity")
    population = _population(spec)
    sim = _simulate(spec, population, spec.kappa_max, 0)
    grid = list(centers) if centers is not None else list(spec.prior_grid)
    rows = _parallel_map(_sensitivity_cell, [(spec, sim, i, c) for i, c in enumerate(grid)], workers)
    report = _report(
        spec,
        truth={"Q_star": population.Q_star, "population": population.to_dict(), "bias": sim.bias.to_dict()},
        estimates=_classical(sim, spec.seed, spec.hash),
        sensitivity=rows,
    )
    run_context_filter.set_run_tag(None)
    return _with_runtime(report, started_at, started, workers)


def drift_batches(spec: ExperimentSpec) -> list[BatchSummary]:
    """Batch windows with a scheduled prevalence shift, a quality flip and a noise climb."""
    demo = spec.drift
    population = _population(spec)
    bias = draw_bias_params(population.C, spec.kappa_max, stream(spec.seed, BIAS, 0))
    rng = stream(spec.seed, DRIFT)
    half = population.C // 2
    batches = []
    for t in range(demo.batches):
        sizes = population.n.astype(float) * demo.batch_fraction
        if t >= demo.shift_at:
            sizes[:half] *= demo.shift_factor
        q = population.q_star.copy()
        if t >= demo.flip_at:
            q[demo.flip_cluster] = 1.0 - q[demo.flip_cluster]
        n = np.maximum(1, rng.poisson(sizes))
        k = rng.binomial(n, q)
        y = rng.binomial(k, bias.s0)
        m = y + rng.binomial(n - k, bias.r_neg)
        climb = max(0, t - demo.noise_climb_at + 1)
        noise = min(1.0, demo.noise_start + demo.noise_step * climb)
        clusters = [
            ClusterStats(cluster_id=cid, n=int(n[c]), m=int(m[c]), y=int(y[c]))
            for c, cid in enumerate(population.cluster_ids)
        ]
        batches.append(BatchSummary(clusters=clusters, noise_fraction=noise, index=t))
    return batches


def run_drift_demo(spec: ExperimentSpec) -> QualityReport:
    started_at, started = current_time(), time.perf_counter()
    run_context_filter.set_context(seed=spec.seed, config_hash=spec.hash, model="drift_demo")
    monitor = DriftMonitor(spec.drift.thresholds)
    decisions = monitor.run(drift_batches(spec))
    report = _report(spec, drift=[d.model_dump(mode="json") for d in decisions])
    run_context_filter.set_run_tag(None)
    return _with_runtime(report, started_at, started, 1)


RUNNERS = {
    ExperimentMode.HEADLINE: run_headline,
    ExperimentMode.KAPPA_SWEEP: run_kappa_sweep,
    ExperimentMode.COVERAGE: run_coverage_study,
    ExperimentMode.DRIFT_DEMO: run_drift_demo,
    ExperimentMode.PRIOR_SENSITIVITY: run_prior_sensitivity,
}


def run_experiment(spec: ExperimentSpec) -> QualityReport:
    logger.info(f"experiment {spec.mode.value} (seed {spec.seed}, config {spec.hash})")
    return RUNNERS[spec.mode](spec)
