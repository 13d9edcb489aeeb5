"""Pareto-smoothed importance-sampling leave-one-cluster-out cross-validation."""
from __future__ import annotations

import math

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.special import logsumexp

from feedback_quality.core.errors import EvaluationError
from feedback_quality.logger import logger

K_THRESHOLD = 0.7
MIN_DRAWS = 100
#: tolerance for p_loo below zero before a warning is logged
P_LOO_TOLERANCE = 0.5


class LooResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    elpd_loo: float
    se: float
    p_loo: float
    lpd: float
    pareto_k: list[float]
    elpd_pointwise: list[float]
    n_samples: int

    @property
    def n_clusters(self) -> int:
        return len(self.pareto_k)

    @property
    def high_k(self) -> list[int]:
        """Indices of clusters whose importance weights are unreliable."""
        return [i for i, k in enumerate(self.pareto_k) if k > K_THRESHOLD]

    @property
    def warning(self) -> bool:
        return bool(self.high_k)


def gpdfit(ary: np.ndarray) -> tuple[float, float]:
    """Empirical-Bayes estimate of generalized Pareto (shape k, scale sigma).

    ``ary`` is the sorted tail, shifted so its threshold sits at zero. The shape
    estimate is shrunk toward 0.5 with a weak prior worth 10 observations.
    """
    prior_bs, prior_k = 3, 10
    n = len(ary)
    m_est = 30 + int(n**0.5)

    b_ary = 1 - np.sqrt(m_est / (np.arange(1, m_est + 1, dtype=float) - 0.5))
    b_ary /= prior_bs * ary[int(n / 4 + 0.5) - 1]
    b_ary += 1 / ary[-1]

    k_ary = np.log1p(-b_ary[:, None] * ary).mean(axis=1)
    len_scale = n * (np.log(-(b_ary / k_ary)) - k_ary - 1)
    weights = 1 / np.exp(len_scale - len_scale[:, None]).sum(axis=1)

    keep = weights >= 10 * np.finfo(float).eps
    weights, b_ary = weights[keep], b_ary[keep]
    weights /= weights.sum()

    b_post = float(np.sum(b_ary * weights))
    k = float(np.log1p(-b_post * ary).mean())
    sigma = -k / b_post
    k = (n * k + prior_k * 0.5) / (n + prior_k)
    return k, sigma


def gpinv(probs: np.ndarray, k: float, sigma: float) -> np.ndarray:
    """Generalized Pareto quantile function with location zero."""
    if sigma <= 0:
        return np.full_like(probs, np.nan)
    if k == 0:
        return -sigma * np.log1p(-probs)
    return sigma * np.expm1(-k * np.log1p(-probs)) / k


def tail_length(n_samples: int, r_eff: float = 1.0) -> int:
    return int(math.ceil(min(0.2 * n_samples, 3 * math.sqrt(n_samples / r_eff))))


def psis_smooth(log_ratios: np.ndarray, r_eff: float = 1.0) -> tuple[np.ndarray, float]:
    """Smooth one column of log importance ratios; returns (normalized log weights, k)."""
    x = np.asarray(log_ratios, dtype=float)
    x = x - x.max()
    n = x.size
    tail = tail_length(n, r_eff)
    order = np.argsort(x, kind="stable")
    cutoff = x[order[-tail - 1]]
    tail_idx = order[-tail:]
    exp_cutoff = math.exp(cutoff)
    tail_values = np.exp(x[tail_idx]) - exp_cutoff

    k = math.inf
    if tail > 4 and tail_values[int(tail / 4 + 0.5) - 1] > 0:
        k, sigma = gpdfit(tail_values)
        if math.isfinite(k):
            probs = (np.arange(tail) + 0.5) / tail
            smoothed = np.log(gpinv(probs, k, sigma) + exp_cutoff)
            x[tail_idx] = np.minimum(smoothed, 0.0)  # raw maximum is 0 after the shift
    elif np.ptp(tail_values) == 0:
        k = 0.0
    return x - logsumexp(x), k


def psis_loo(loglik: np.ndarray, r_eff: float = 1.0) -> LooResult:
    """PSIS-LOO over a [draw, cluster] matrix of pointwise joint log-likelihoods."""
    loglik = np.asarray(loglik, dtype=float)
    if loglik.ndim != 2:
        raise EvaluationError(f"expected a [draw, cluster] matrix, got shape {loglik.shape}", code="bad_shape")
    n_samples, n_clusters = loglik.shape
    if n_samples < MIN_DRAWS:
        raise EvaluationError(f"psis_loo needs at least {MIN_DRAWS} draws, got {n_samples}", code="too_few_draws")
    if n_clusters < 2:
        raise EvaluationError(f"psis_loo needs at least 2 clusters, got {n_clusters}", code="too_few_clusters")
    if not np.all(np.isfinite(loglik)):
        bad = sorted(set(np.where(~np.isfinite(loglik))[1].tolist()))
        raise EvaluationError(f"non-finite log-likelihood in clusters {bad}", code="non_finite_loglik")

    elpd = np.empty(n_clusters)
    ks = np.empty(n_clusters)
    for c in range(n_clusters):
        log_weights, ks[c] = psis_smooth(-loglik[:, c], r_eff)
        elpd[c] = logsumexp(log_weights + loglik[:, c])
    lpd = logsumexp(loglik, axis=0) - math.log(n_samples)
    p_loo = float(np.sum(lpd - elpd))

    high = int(np.sum(ks > K_THRESHOLD))
    if high:
        logger.warning(f"{high} of {n_clusters} clusters have Pareto k > {K_THRESHOLD}")
    if p_loo < -P_LOO_TOLERANCE:
        logger.warning(f"p_loo is negative ({p_loo:.3f}); posterior draws may be too few")
    return LooResult(
        elpd_loo=float(elpd.sum()),
        se=float(math.sqrt(n_clusters * np.var(elpd))),
        p_loo=p_loo,
        lpd=float(lpd.sum()),
        pareto_k=ks.tolist(),
        elpd_pointwise=elpd.tolist(),
        n_samples=n_samples,
    )


def loglik_matrix(model, unconstrained_draws: np.ndarray) -> np.ndarray:
    """[draw, cluster] pointwise joint log-likelihood for flattened unconstrained draws."""
    flat = np.asarray(unconstrained_draws, dtype=float).reshape(-1, model.dimension)
    return np.stack([model.pointwise_joint_loglik(theta) for theta in flat])
