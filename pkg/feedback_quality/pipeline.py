"""One model fit end to end: build, sample, summarize."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from feedback_quality.bayes import ModelInstance, build_model
from feedback_quality.core.config import RunConfig
from feedback_quality.core.types import Dataset
from feedback_quality.evaluation.loo import LooResult, loglik_matrix, psis_loo
from feedback_quality.logger import logger, run_context_filter
from feedback_quality.sampler import ConvergenceReport, PosteriorDraws, SavedFit, run_chains
from feedback_quality.synthesis import DEFAULT_LEVEL, QualitySummary, summary_from_fit
from feedback_quality.utils.hashing import config_hash


@dataclass
class FitResult:
    config: RunConfig
    model: ModelInstance
    draws: PosteriorDraws
    report: ConvergenceReport
    summary: QualitySummary
    config_hash: str
    seconds: float

    @property
    def variant(self) -> str:
        return self.config.model.value

    @property
    def dataset(self) -> Dataset:
        return self.model.dataset

    def quality_draws(self) -> np.ndarray:
        """[draw, cluster] per-cluster quality."""
        return self.model.quality_draws(self.draws.flat(unconstrained=True))

    def loo(self) -> LooResult:
        return psis_loo(loglik_matrix(self.model, self.draws.unconstrained))

    def saved(self) -> SavedFit:
        return SavedFit(
            variant=self.config.model,
            dataset=self.dataset,
            priors=self.config.priors,
            draws=self.draws,
            report=self.report,
            seed=self.config.seed,
        )


def fit_dataset(dataset: Dataset, config: Optional[RunConfig] = None, level: float = DEFAULT_LEVEL) -> FitResult:
    config = config if config is not None else RunConfig()
    digest = config_hash(config)
    run_context_filter.set_context(seed=config.seed, config_hash=digest, model=config.model.value)
    started = time.perf_counter()
    model = build_model(config.model, dataset, config.priors)
    logger.info(f"fitting {model!r} on {dataset.C} clusters (N={dataset.N}, M={dataset.M})")
    try:
        draws, report = run_chains(model, config.sampler_config())
        summary = summary_from_fit(model, draws.unconstrained, level=level)
    finally:
        run_context_filter.set_run_tag(None)
    seconds = time.perf_counter() - started
    logger.info(
        f"{config.model.value}: Q mean {summary.aggregate.mean:.4f}, "
        f"CI ({summary.aggregate.ci[0]:.4f}, {summary.aggregate.ci[1]:.4f}) in {seconds:.1f}s"
    )
    return FitResult(
        config=config,
        model=model,
        draws=draws,
        report=report,
        summary=summary,
        config_hash=digest,
        seconds=seconds,
    )
