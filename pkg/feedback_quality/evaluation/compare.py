"""Ranking of fitted models by PSIS-LOO elpd, with stacking or pseudo-BMA weights."""
from __future__ import annotations

import math
from typing import Iterable, Mapping, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict
from scipy.optimize import minimize

from feedback_quality.core.config import ModelVariant
from feedback_quality.core.errors import ConfigError, EvaluationError
from feedback_quality.evaluation.loo import LooResult
from feedback_quality.logger import logger

WEIGHT_MODES = ("stacking", "pseudo-bma")


class ComparisonRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    model: str
    rank: int
    elpd_loo: float
    p_loo: float
    se: float
    delta_elpd: float
    delta_se: float
    weight: float
    warning: bool


class ComparisonTable(BaseModel):
    model_config = ConfigDict(frozen=True)

    mode: str
    rows: list[ComparisonRow]
    excluded: list[str] = []

    @property
    def best(self) -> str:
        return self.rows[0].model

    def weights(self) -> dict[str, float]:
        return {row.model: row.weight for row in self.rows}

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([row.model_dump() for row in self.rows]).set_index("model")


def _is_global(tag: str) -> bool:
    try:
        return ModelVariant.parse(tag) is ModelVariant.CORRECTED_GLOBAL
    except ConfigError:
        return False


def stacking_weights(elpd_pointwise: np.ndarray) -> np.ndarray:
    """Simplex weights maximizing sum_c log sum_k w_k exp(elpd[c, k])."""
    rows, cols = elpd_pointwise.shape
    if cols == 1:
        return np.ones(1)
    # per-cluster shifts only add a constant to the objective
    exp_elpd = np.exp(elpd_pointwise - elpd_pointwise.max(axis=1, keepdims=True))
    km1 = cols - 1

    def w_full(weights):
        return np.concatenate((weights, [max(1.0 - np.sum(weights), 0.0)]))

    def log_score(weights):
        return -float(np.sum(np.log(exp_elpd @ w_full(weights))))

    def gradient(weights):
        dens = exp_elpd @ w_full(weights)
        return -((exp_elpd[:, :km1] - exp_elpd[:, [km1]]) / dens[:, None]).sum(axis=0)

    result = minimize(
        fun=log_score,
        x0=np.full(km1, 1.0 / cols),
        jac=gradient,
        bounds=[(0.0, 1.0)] * km1,
        constraints=[{"type": "ineq", "fun": lambda x: 1.0 - np.sum(x)}],
        method="SLSQP",
    )
    weights = np.clip(w_full(result.x), 0.0, None)
    return weights / weights.sum()


def pseudo_bma_weights(elpd: np.ndarray) -> np.ndarray:
    z = np.exp(elpd - elpd.max())
    return z / z.sum()


def compare(
    results: Union[Mapping[str, LooResult], Iterable[tuple[str, LooResult]]],
    mode: str = "stacking",
    include_global: bool = False,
) -> ComparisonTable:
    """Rank models by elpd_loo. ``delta_elpd`` is relative to the best model (0 for it, negative otherwise)."""
    mode = mode.lower().replace("_", "-")
    if mode not in WEIGHT_MODES:
        raise EvaluationError(f"Invalid weight mode: {mode}. Valid modes: {', '.join(WEIGHT_MODES)}",
                              code="unknown_mode")
    entries = list(results.items()) if isinstance(results, Mapping) else list(results)
    excluded = [] if include_global else [tag for tag, _ in entries if _is_global(tag)]
    if excluded:
        logger.info(f"excluding pooled-likelihood models from comparison: {excluded}")
    entries = [(tag, loo) for tag, loo in entries if tag not in excluded]
    if len(entries) < 2:
        raise EvaluationError(f"compare needs at least 2 models, got {len(entries)}", code="too_few_models")
    sizes = {tag: loo.n_clusters for tag, loo in entries}
    if len(set(sizes.values())) != 1:
        raise EvaluationError(f"cluster counts differ between models: {sizes}", code="cluster_mismatch")

    # canonical order so weights do not depend on input order
    entries.sort(key=lambda item: (-item[1].elpd_loo, item[0]))
    elpd = np.array([loo.elpd_loo for _, loo in entries])
    pointwise = np.column_stack([loo.elpd_pointwise for _, loo in entries])
    weights = stacking_weights(pointwise) if mode == "stacking" else pseudo_bma_weights(elpd)

    best = pointwise[:, 0]
    n_clusters = pointwise.shape[0]
    rows = []
    for rank, ((tag, loo), weight) in enumerate(zip(entries, weights)):
        diff = best - pointwise[:, rank]
        rows.append(
            ComparisonRow(
                model=tag,
                rank=rank,
                elpd_loo=loo.elpd_loo,
                p_loo=loo.p_loo,
                se=loo.se,
                delta_elpd=float(loo.elpd_loo - elpd[0]),
                delta_se=float(math.sqrt(n_clusters * np.var(diff))),
                weight=float(weight),
                warning=loo.warning,
            )
        )
    return ComparisonTable(mode=mode, rows=rows, excluded=excluded)
