"""Posterior predictive check on per-cluster feedback counts."""
from __future__ import annotations

from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict

from feedback_quality.core.errors import EvaluationError
from feedback_quality.core.types import Dataset
from feedback_quality.logger import logger

MIN_DRAWS = 200


class PPCResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    cluster_ids: list[str]
    m_interval: list[tuple[float, float]]
    y_interval: list[tuple[float, float]]
    passed: list[bool]
    level: float

    @property
    def coverage(self) -> float:
        return float(np.mean(self.passed))

    @property
    def failed(self) -> list[str]:
        return [cid for cid, ok in zip(self.cluster_ids, self.passed) if not ok]


def ppc_check(model, unconstrained_draws: np.ndarray, rng: np.random.Generator,
              dataset: Optional[Dataset] = None, level: float = 0.95) -> PPCResult:
    """Replicate (m, y) for every draw and test the observed counts against central intervals.

    ``dataset`` defaults to the one the model was built on. A cluster with no
    feedback passes the y-check trivially.
    """
    dataset = dataset if dataset is not None else model.dataset
    flat = np.asarray(unconstrained_draws, dtype=float).reshape(-1, model.dimension)
    if flat.shape[0] < MIN_DRAWS:
        raise EvaluationError(f"ppc_check needs at least {MIN_DRAWS} draws, got {flat.shape[0]}",
                              code="too_few_draws")
    if dataset.C != model.C:
        raise EvaluationError(f"dataset has {dataset.C} clusters, model has {model.C}", code="cluster_mismatch")

    n = dataset.n
    m_rep = np.empty((flat.shape[0], dataset.C))
    y_rep = np.empty_like(m_rep)
    for i, theta in enumerate(flat):
        s, p = model.rates(theta)
        m_rep[i] = rng.binomial(n, np.clip(s, 0.0, 1.0))
        y_rep[i] = rng.binomial(m_rep[i].astype(np.int64), np.clip(p, 0.0, 1.0))

    tail = (1.0 - level) / 2.0
    m_lo, m_hi = np.quantile(m_rep, [tail, 1.0 - tail], axis=0)
    y_lo, y_hi = np.quantile(y_rep, [tail, 1.0 - tail], axis=0)
    m_ok = (dataset.m >= m_lo) & (dataset.m <= m_hi)
    y_ok = (dataset.m == 0) | ((dataset.y >= y_lo) & (dataset.y <= y_hi))
    passed = (m_ok & y_ok).tolist()

    result = PPCResult(
        cluster_ids=dataset.cluster_ids,
        m_interval=list(zip(m_lo.tolist(), m_hi.tolist())),
        y_interval=list(zip(y_lo.tolist(), y_hi.tolist())),
        passed=passed,
        level=level,
    )
    if result.failed:
        logger.warning(f"posterior predictive check failed for clusters {result.failed}")
    return result
