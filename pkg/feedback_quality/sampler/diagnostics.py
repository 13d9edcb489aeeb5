"""Convergence diagnostics: rank-normalized split R-hat, bulk/tail ESS, MCSE.

All functions take the draws of a single scalar quantity as a [chain, draw]
array.
"""
from __future__ import annotations

import math

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import stats

from feedback_quality.core.errors import SamplerError

RHAT_THRESHOLD = 1.01
ESS_THRESHOLD = 400.0


def _as_chains(draws: np.ndarray) -> np.ndarray:
    ary = np.asarray(draws, dtype=float)
    if ary.ndim == 1:
        ary = ary[None, :]
    if ary.ndim != 2:
        raise ValueError(f"expected a [chain, draw] array, got shape {ary.shape}")
    if ary.shape[1] < 4:
        raise SamplerError(
            f"need at least 4 draws per chain, got {ary.shape[1]}",
            code="too_few_draws",
            diagnostics={"shape": list(ary.shape)},
        )
    return ary


def _split_chains(ary: np.ndarray) -> np.ndarray:
    half = ary.shape[1] // 2
    return np.vstack((ary[:, :half], ary[:, -half:]))


def _z_scale(ary: np.ndarray) -> np.ndarray:
    """Rank-normalize with Blom's offset (3/8)."""
    ranks = stats.rankdata(ary, method="average").reshape(ary.shape)
    return stats.norm.ppf((ranks - 0.375) / (ary.size + 0.25))


def _rhat(ary: np.ndarray) -> float:
    n = ary.shape[1]
    within = float(np.mean(np.var(ary, axis=1, ddof=1)))
    between = n * float(np.var(np.mean(ary, axis=1), ddof=1))
    if within <= 0.0:
        return 1.0 if between <= 0.0 else math.inf
    return math.sqrt((between / within + n - 1) / n)


def split_rhat(draws: np.ndarray) -> float:
    """Max of bulk and folded rank-normalized split R-hat.

    Constant draws give 1.0; chains that are each constant but disagree give inf.
    """
    ary = _as_chains(draws)
    if np.ptp(ary) == 0.0:
        return 1.0
    split = _split_chains(ary)
    bulk = _rhat(_z_scale(split))
    folded = np.abs(split - np.median(split))
    tail = 1.0 if np.ptp(folded) == 0.0 else _rhat(_z_scale(folded))
    return max(bulk, tail)


def autocovariance(ary: np.ndarray) -> np.ndarray:
    """Per-chain autocovariance along the last axis via zero-padded FFT."""
    n = ary.shape[-1]
    centered = ary - ary.mean(axis=-1, keepdims=True)
    size = 2 ** math.ceil(math.log2(2 * n))
    spectrum = np.fft.rfft(centered, n=size, axis=-1)
    acov = np.fft.irfft(spectrum * np.conjugate(spectrum), n=size, axis=-1)[..., :n]
    return acov / n


def _ess(ary: np.ndarray) -> float:
    """ESS of a [chain, draw] array with Geyer's initial monotone sequence."""
    if np.ptp(ary) < np.finfo(float).resolution:
        return 0.0
    n_chain, n_draw = ary.shape
    acov = autocovariance(ary)
    mean_var = float(np.mean(acov[:, 0])) * n_draw / (n_draw - 1.0)
    var_plus = mean_var * (n_draw - 1.0) / n_draw
    if n_chain > 1:
        var_plus += float(np.var(ary.mean(axis=1), ddof=1))

    rho = np.zeros(n_draw)
    rho_even = 1.0
    rho[0] = rho_even
    rho_odd = 1.0 - (mean_var - float(np.mean(acov[:, 1]))) / var_plus
    rho[1] = rho_odd

    # initial positive sequence
    t = 1
    while t < n_draw - 3 and rho_even + rho_odd > 0.0:
        rho_even = 1.0 - (mean_var - float(np.mean(acov[:, t + 1]))) / var_plus
        rho_odd = 1.0 - (mean_var - float(np.mean(acov[:, t + 2]))) / var_plus
        if rho_even + rho_odd >= 0:
            rho[t + 1] = rho_even
            rho[t + 2] = rho_odd
        t += 2
    max_t = t - 2
    if rho_even > 0:
        rho[max_t + 1] = rho_even

    # initial monotone sequence
    t = 1
    while t <= max_t - 2:
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0
            rho[t + 2] = rho[t + 1]
        t += 2

    total = n_chain * n_draw
    tau = -1.0 + 2.0 * float(np.sum(rho[: max_t + 1])) + float(np.sum(rho[max_t + 1 : max_t + 2]))
    tau = max(tau, 1.0 / math.log10(total))
    if np.isnan(rho).any():
        return math.nan
    return total / tau


def ess(draws: np.ndarray, kind: str = "bulk") -> float:
    """Effective sample size; ``kind`` is ``bulk`` or ``tail``. Constant draws give 0."""
    ary = _as_chains(draws)
    if np.ptp(ary) == 0.0:
        return 0.0
    split = _split_chains(ary)
    if kind == "bulk":
        return _ess(_z_scale(split))
    if kind == "tail":
        lo, hi = np.quantile(split, [0.05, 0.95])
        return min(_ess((split <= lo).astype(float)), _ess((split <= hi).astype(float)))
    raise ValueError(f"Invalid ESS kind: {kind}. Valid kinds: bulk, tail")


def mcse_mean(draws: np.ndarray) -> float:
    """Monte-Carlo standard error of the posterior mean."""
    ary = _as_chains(draws)
    if np.ptp(ary) == 0.0:
        return 0.0
    return float(np.std(ary, ddof=1)) / math.sqrt(_ess(_split_chains(ary)))


class ConvergenceReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    param_names: list[str]
    rhat: list[float]
    ess_bulk: list[float]
    ess_tail: list[float]
    mcse_mean: list[float]
    divergences: int
    max_depth_hits: int
    n_draws: int
    rhat_threshold: float = RHAT_THRESHOLD
    ess_threshold: float = ESS_THRESHOLD
    passed: bool

    @property
    def max_rhat(self) -> float:
        return max(self.rhat) if self.rhat else 1.0

    @property
    def min_ess_bulk(self) -> float:
        return min(self.ess_bulk) if self.ess_bulk else 0.0

    @property
    def min_ess_tail(self) -> float:
        return min(self.ess_tail) if self.ess_tail else 0.0

    @property
    def divergent_fraction(self) -> float:
        return self.divergences / self.n_draws if self.n_draws else 0.0

    def summary(self) -> dict:
        return {
            "max_rhat": self.max_rhat,
            "min_ess_bulk": self.min_ess_bulk,
            "min_ess_tail": self.min_ess_tail,
            "divergences": self.divergences,
            "max_depth_hits": self.max_depth_hits,
            "passed": self.passed,
        }


def convergence_report(
    draws: np.ndarray,
    param_names: list[str],
    divergent: np.ndarray,
    tree_depth: np.ndarray,
    max_tree_depth: int,
    rhat_threshold: float = RHAT_THRESHOLD,
    ess_threshold: float = ESS_THRESHOLD,
) -> ConvergenceReport:
    """Diagnostics for a [chain, draw, parameter] array of draws."""
    draws = np.asarray(draws, dtype=float)
    rhat, bulk, tail, mcse = [], [], [], []
    for j in range(draws.shape[2]):
        column = draws[:, :, j]
        rhat.append(split_rhat(column))
        bulk.append(ess(column, "bulk"))
        tail.append(ess(column, "tail"))
        mcse.append(mcse_mean(column))
    passed = (
        max(rhat, default=1.0) < rhat_threshold
        and min(bulk, default=0.0) > ess_threshold
        and min(tail, default=0.0) > ess_threshold
    )
    return ConvergenceReport(
        param_names=list(param_names),
        rhat=rhat,
        ess_bulk=bulk,
        ess_tail=tail,
        mcse_mean=mcse,
        divergences=int(np.sum(divergent)),
        max_depth_hits=int(np.sum(np.asarray(tree_depth) >= max_tree_depth)),
        n_draws=int(draws.shape[0] * draws.shape[1]),
        rhat_threshold=rhat_threshold,
        ess_threshold=ess_threshold,
        passed=passed,
    )
