"""From per-cluster quality posteriors to the prevalence-weighted aggregate.

The aggregate quality of each posterior draw is sum_c pi_c * q_c, with pi the
population prevalence of each cluster (n_c / N), never the share of feedback.
"""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict

from feedback_quality.core.errors import EvaluationError
from feedback_quality.core.types import prevalence as dataset_prevalence
from feedback_quality.estimators import wilson_interval

MIN_DRAWS = 100
DEFAULT_LEVEL = 0.95
DEFAULT_Q_TARGET = 0.7
DEFAULT_MAX_CI_WIDTH = 0.1


class ClusterSummary(BaseModel):
    model_config = ConfigDict(frozen=True)

    cluster_id: str
    prevalence: float
    mean: float
    median: float
    ci: tuple[float, float]
    flagged: bool = False

    @property
    def ci_width(self) -> float:
        return self.ci[1] - self.ci[0]


class VarianceDecomposition(BaseModel):
    model_config = ConfigDict(frozen=True)

    total: float
    within: float
    residual: float


class AggregateSummary(BaseModel):
    model_config = ConfigDict(frozen=True)

    mean: float
    sd: float
    median: float
    ci: tuple[float, float]
    level: float


class QualitySummary(BaseModel):
    model_config = ConfigDict(frozen=True)

    aggregate: AggregateSummary
    clusters: list[ClusterSummary]
    variance: VarianceDecomposition
    #: prevalence-weighted variance of posterior means across clusters (descriptive, not a component)
    heterogeneity: float
    q_target: float
    max_ci_width: float

    @property
    def flags(self) -> list[str]:
        return [c.cluster_id for c in self.clusters if c.flagged]


class AnchorGap(BaseModel):
    model_config = ConfigDict(frozen=True)

    posterior_mean: float
    posterior_ci: tuple[float, float]
    anchor_mean: float
    anchor_interval: tuple[float, float]
    anchor_size: int
    gap: float
    overlap: bool


def _check_inputs(q_draws: np.ndarray, prevalence: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    q_draws = np.asarray(q_draws, dtype=float)
    prevalence = np.asarray(prevalence, dtype=float)
    if q_draws.ndim != 2:
        raise EvaluationError(f"expected [draw, cluster] quality draws, got shape {q_draws.shape}",
                              code="dimension_mismatch")
    if q_draws.shape[1] != prevalence.shape[0]:
        raise EvaluationError(
            f"{q_draws.shape[1]} clusters in draws but {prevalence.shape[0]} prevalence weights",
            code="dimension_mismatch",
        )
    if np.any(prevalence < 0) or abs(prevalence.sum() - 1.0) > 1e-9:
        raise EvaluationError(f"prevalence must be a probability vector (sum={prevalence.sum()})",
                              code="bad_prevalence")
    return q_draws, prevalence


def aggregate_posterior(q_draws: np.ndarray, prevalence: np.ndarray) -> np.ndarray:
    """Per-draw aggregate quality.

    >>> round(float(aggregate_posterior(np.array([[0.4, 0.8]]), np.array([0.5, 0.5]))[0]), 12)
    0.6
    """
    q_draws, prevalence = _check_inputs(q_draws, prevalence)
    return q_draws @ prevalence


def credible_interval(draws: np.ndarray, level: float = DEFAULT_LEVEL) -> tuple[float, float]:
    """Equal-tailed interval with linear interpolation between order statistics."""
    draws = np.asarray(draws, dtype=float).ravel()
    if not 0 < level < 1:
        raise ValueError(f"level must be in (0, 1), got {level}")
    if draws.size < MIN_DRAWS:
        raise EvaluationError(f"credible_interval needs at least {MIN_DRAWS} draws, got {draws.size}",
                              code="too_few_draws")
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(draws, [tail, 1.0 - tail])
    return float(lo), float(hi)


def variance_decomposition(q_draws: np.ndarray, prevalence: np.ndarray) -> VarianceDecomposition:
    q_draws, prevalence = _check_inputs(q_draws, prevalence)
    total = float(np.var(q_draws @ prevalence, ddof=1))
    within = float(np.sum(prevalence**2 * np.var(q_draws, axis=0, ddof=1)))
    return VarianceDecomposition(total=total, within=within, residual=total - within)


def heterogeneity(q_draws: np.ndarray, prevalence: np.ndarray) -> float:
    q_draws, prevalence = _check_inputs(q_draws, prevalence)
    means = q_draws.mean(axis=0)
    center = float(np.dot(prevalence, means))
    return float(np.dot(prevalence, (means - center) ** 2))


def flag_clusters(summary: QualitySummary, q_target: float = DEFAULT_Q_TARGET,
                  max_ci_width: float = DEFAULT_MAX_CI_WIDTH) -> list[str]:
    """Clusters confidently below target: posterior mean < q_target and CI narrower than max_ci_width."""
    return [c.cluster_id for c in summary.clusters if c.mean < q_target and c.ci_width < max_ci_width]


def summarize(
    q_draws: np.ndarray,
    prevalence: np.ndarray,
    cluster_ids: Sequence[str],
    level: float = DEFAULT_LEVEL,
    q_target: float = DEFAULT_Q_TARGET,
    max_ci_width: float = DEFAULT_MAX_CI_WIDTH,
) -> QualitySummary:
    q_draws, prevalence = _check_inputs(q_draws, prevalence)
    if len(cluster_ids) != q_draws.shape[1]:
        raise EvaluationError(f"{len(cluster_ids)} cluster ids for {q_draws.shape[1]} clusters",
                              code="dimension_mismatch")
    agg = aggregate_posterior(q_draws, prevalence)
    clusters = []
    for c, cid in enumerate(cluster_ids):
        column = q_draws[:, c]
        ci = credible_interval(column, level)
        mean = float(column.mean())
        clusters.append(
            ClusterSummary(
                cluster_id=str(cid),
                prevalence=float(prevalence[c]),
                mean=mean,
                median=float(np.median(column)),
                ci=ci,
                flagged=mean < q_target and ci[1] - ci[0] < max_ci_width,
            )
        )
    return QualitySummary(
        aggregate=AggregateSummary(
            mean=float(agg.mean()),
            sd=float(agg.std(ddof=1)),
            median=float(np.median(agg)),
            ci=credible_interval(agg, level),
            level=level,
        ),
        clusters=clusters,
        variance=variance_decomposition(q_draws, prevalence),
        heterogeneity=heterogeneity(q_draws, prevalence),
        q_target=q_target,
        max_ci_width=max_ci_width,
    )


def selection_ratio_spread(s_draws: np.ndarray) -> float:
    """Ratio of the largest to the smallest posterior-mean feedback rate across clusters."""
    means = np.asarray(s_draws, dtype=float).reshape(-1, np.shape(s_draws)[-1]).mean(axis=0)
    if means.min() <= 0:
        return float("inf")
    return float(means.max() / means.min())


def anchor_gap(aggregate_draws: np.ndarray, anchor_labels: Sequence[int],
               level: float = DEFAULT_LEVEL) -> AnchorGap:
    """Compare the aggregate posterior with the mean of a small labeled anchor set."""
    labels = np.asarray(anchor_labels, dtype=int)
    if labels.size == 0:
        raise EvaluationError("anchor set is empty", code="empty_anchor")
    if np.any((labels != 0) & (labels != 1)):
        raise EvaluationError("anchor labels must be 0 or 1", code="bad_anchor")
    posterior_mean = float(np.mean(aggregate_draws))
    posterior_ci = credible_interval(aggregate_draws, level)
    anchor_mean = float(labels.mean())
    anchor_ci = wilson_interval(int(labels.sum()), int(labels.size), level)
    return AnchorGap(
        posterior_mean=posterior_mean,
        posterior_ci=posterior_ci,
        anchor_mean=anchor_mean,
        anchor_interval=anchor_ci,
        anchor_size=int(labels.size),
        gap=posterior_mean - anchor_mean,
        overlap=posterior_ci[0] <= anchor_ci[1] and anchor_ci[0] <= posterior_ci[1],
    )


def summary_from_fit(model, unconstrained_draws: np.ndarray, level: float = DEFAULT_LEVEL,
                     q_target: float = DEFAULT_Q_TARGET, max_ci_width: float = DEFAULT_MAX_CI_WIDTH,
                     prevalence: Optional[np.ndarray] = None) -> QualitySummary:
    """Summary straight from a fitted model's draws; prevalence defaults to the model's dataset."""
    flat = np.asarray(unconstrained_draws, dtype=float).reshape(-1, model.dimension)
    q_draws = model.quality_draws(flat)
    weights = dataset_prevalence(model.dataset) if prevalence is None else prevalence
    return summarize(q_draws, weights, model.dataset.cluster_ids, level, q_target, max_ci_width)
