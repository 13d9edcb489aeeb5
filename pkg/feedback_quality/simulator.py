"""Synthetic populations and selection-biased feedback with known ground truth.

Feedback arrives with probability ``s0`` for satisfied interactions and
``min(1, s0 * kappa)`` for dissatisfied ones; polarity is always truthful.
Simulation is count-level (three binomial draws per cluster), which has the
same distribution as drawing each interaction separately.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from feedback_quality.core.types import ClusterStats, Dataset, InteractionRecord, validate_dataset

S0_LOW = 0.02
S0_HIGH = 0.12
DEFAULT_SIZE_RANGE = (100, 2000)
DEFAULT_QUALITY_PRIOR = (6.25, 3.75)


@dataclass(frozen=True)
class BiasParams:
    #: baseline response probability per cluster
    s0: np.ndarray
    #: dissatisfaction amplifier per cluster
    kappa: np.ndarray

    @property
    def r_pos(self) -> np.ndarray:
        return np.asarray(self.s0, dtype=float)

    @property
    def r_neg(self) -> np.ndarray:
        """Realized (clipped) response probability of dissatisfied interactions."""
        return np.minimum(1.0, np.asarray(self.s0, dtype=float) * np.asarray(self.kappa, dtype=float))

    def to_dict(self) -> dict:
        return {
            "s0": np.asarray(self.s0).tolist(),
            "kappa": np.asarray(self.kappa).tolist(),
            "r_neg": self.r_neg.tolist(),
        }


@dataclass(frozen=True)
class SyntheticPopulation:
    n: np.ndarray
    q_star: np.ndarray
    cluster_ids: tuple[str, ...]

    @property
    def prevalence(self) -> np.ndarray:
        return self.n / float(self.n.sum())

    @property
    def Q_star(self) -> float:
        return float(np.dot(self.prevalence, self.q_star))

    @property
    def C(self) -> int:
        return len(self.n)

    def to_dict(self) -> dict:
        return {
            "cluster_ids": list(self.cluster_ids),
            "n": self.n.tolist(),
            "q_star": self.q_star.tolist(),
            "Q_star": self.Q_star,
        }


@dataclass(frozen=True)
class SimulatedFeedback:
    dataset: Dataset
    #: latent satisfied-interaction counts k_c
    latent_positive: np.ndarray
    population: SyntheticPopulation
    bias: BiasParams


def cluster_ids_for(C: int) -> tuple[str, ...]:
    width = max(2, len(str(C - 1)))
    return tuple(f"c{i:0{width}d}" for i in range(C))


def draw_bias_params(C: int, kappa_max: float, rng: np.random.Generator) -> BiasParams:
    if C < 1:
        raise ValueError(f"C must be >= 1, got {C}")
    if kappa_max < 1:
        raise ValueError(f"kappa_max must be >= 1, got {kappa_max}")
    s0 = rng.uniform(S0_LOW, S0_HIGH, size=C)
    log_kappa = rng.uniform(0.0, np.log(kappa_max), size=C)
    kappa = np.exp(log_kappa)
    return BiasParams(s0=s0, kappa=kappa)


def make_population(
    C: int,
    size_range: tuple[int, int] = DEFAULT_SIZE_RANGE,
    quality_prior: tuple[float, float] = DEFAULT_QUALITY_PRIOR,
    rng: Optional[np.random.Generator] = None,
) -> SyntheticPopulation:
    lo, hi = size_range
    if C < 1:
        raise ValueError(f"C must be >= 1, got {C}")
    if lo < 1 or hi < lo:
        raise ValueError(f"Invalid size range {size_range}: need 1 <= min <= max")
    alpha, beta = quality_prior
    if alpha <= 0 or beta <= 0:
        raise ValueError(f"Quality prior parameters must be positive, got {quality_prior}")
    rng = rng if rng is not None else np.random.default_rng()
    n = rng.integers(lo, hi, size=C, endpoint=True).astype(np.int64)
    q_star = rng.beta(alpha, beta, size=C)
    return SyntheticPopulation(n=n, q_star=q_star, cluster_ids=cluster_ids_for(C))


def simulate_feedback(pop: SyntheticPopulation, bias: BiasParams, rng: np.random.Generator) -> SimulatedFeedback:
    s0 = np.asarray(bias.s0, dtype=float)
    if s0.shape != (pop.C,) or np.shape(bias.kappa) != (pop.C,):
        raise ValueError(f"BiasParams must have one entry per cluster ({pop.C})")
    k = rng.binomial(pop.n, pop.q_star)
    y = rng.binomial(k, s0)
    negatives = rng.binomial(pop.n - k, bias.r_neg)
    m = y + negatives
    dataset = validate_dataset(
        ClusterStats(cluster_id=cid, n=int(n_c), m=int(m_c), y=int(y_c))
        for cid, n_c, m_c, y_c in zip(pop.cluster_ids, pop.n, m, y)
    )
    return SimulatedFeedback(dataset=dataset, latent_positive=k, population=pop, bias=bias)


def simulate_interactions(pop: SyntheticPopulation, bias: BiasParams, rng: np.random.Generator) -> list[InteractionRecord]:
    """Interaction-level draw of the same process, for the interaction CSV export."""
    records = []
    r_neg = bias.r_neg
    for c, cid in enumerate(pop.cluster_ids):
        size = int(pop.n[c])
        y_star = rng.random(size) < pop.q_star[c]
        respond_p = np.where(y_star, bias.s0[c], r_neg[c])
        r = rng.random(size) < respond_p
        for i in range(size):
            records.append(
                InteractionRecord(
                    interaction_id=f"{cid}-{i:06d}",
                    cluster_id=cid,
                    r=int(r[i]),
                    f=int(y_star[i]) if r[i] else None,
                    y_star=int(y_star[i]),
                )
            )
    return records


def expected_counts(q: float, r_pos: float, r_neg: float, n: float) -> tuple[float, Optional[float]]:
    """Expected feedback count and positive share; share is None when no feedback is possible."""
    for name, value in (("q", q), ("r_pos", r_pos), ("r_neg", r_neg)):
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"{name} must be in [0, 1], got {value}")
    rate = q * r_pos + (1.0 - q) * r_neg
    expected_m = float(n * rate)
    if rate == 0:
        return expected_m, None
    return expected_m, float(q * r_pos / rate)
