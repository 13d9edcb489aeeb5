"""Classical point estimators and frequentist helpers."""
from __future__ import annotations

from typing import Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, Field
from scipy import stats

from feedback_quality.core.errors import EstimationError
from feedback_quality.core.types import Dataset
from feedback_quality.simulator import SyntheticPopulation


class EstimateResult(BaseModel):
    value: float = Field(ge=0.0, le=1.0)
    method: str
    excluded_clusters: list[str] = Field(default_factory=list)


def naive_mean(dataset: Dataset) -> EstimateResult:
    """Pooled positive share of all feedback, sum(y) / sum(m)."""
    if dataset.M == 0:
        raise EstimationError("no feedback: naive mean is undefined when M = 0", code="no_feedback")
    return EstimateResult(value=dataset.Y / dataset.M, method="naive")


def ipw_estimate(dataset: Dataset) -> EstimateResult:
    """Inverse-probability weighting with per-cluster response rates m/n.

    Zero-feedback clusters are dropped from numerator and denominator.
    """
    has_feedback = dataset.m > 0
    if not has_feedback.any():
        raise EstimationError("no feedback: every cluster has m = 0", code="no_feedback")
    n = dataset.n[has_feedback].astype(float)
    rate = dataset.y[has_feedback] / dataset.m[has_feedback]
    excluded = [cid for cid, keep in zip(dataset.cluster_ids, has_feedback) if not keep]
    value = float(np.dot(n, rate) / n.sum())
    return EstimateResult(value=min(1.0, max(0.0, value)), method="ipw", excluded_clusters=excluded)


def oracle_truth(
    truth: Union[SyntheticPopulation, Dataset, None],
    labels: Optional[Sequence[Sequence[int]]] = None,
) -> float:
    """Prevalence-weighted true quality.

    With a :class:`SyntheticPopulation`, uses q*. With a Dataset, ``labels``
    must hold each cluster's realized ground-truth labels; the result is then
    the mean label over all retained interactions.
    """
    if isinstance(truth, SyntheticPopulation):
        return truth.Q_star
    if isinstance(truth, Dataset):
        if labels is None or len(labels) != truth.C:
            raise EstimationError("missing truth: per-cluster ground-truth labels required", code="missing_truth")
        pooled = [int(v) for lbl in labels for v in lbl]
        if not pooled:
            raise EstimationError("missing truth: every cluster's label list is empty", code="missing_truth")
        return float(np.mean(pooled))
    raise EstimationError("missing truth: no population or labeled dataset given", code="missing_truth")


def wilson_interval(successes: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion.

    >>> lo, hi = wilson_interval(50, 50)
    >>> round(lo, 3), round(hi, 3)
    (0.929, 1.0)
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if not 0 <= successes <= trials:
        raise ValueError(f"successes must be in [0, {trials}], got {successes}")
    if not 0 < level < 1:
        raise ValueError(f"level must be in (0, 1), got {level}")
    z = stats.norm.ppf(0.5 + level / 2.0)
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * np.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return float(max(0.0, center - half)), float(min(1.0, center + half))


def abs_error(estimate: float, truth: float) -> float:
    return abs(float(estimate) - float(truth))
