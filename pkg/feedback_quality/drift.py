"""Online drift monitoring between full refits.

Three signals are checked on every new batch window:

* prevalence drift: Jensen-Shannon divergence (nats) between the cluster
  prevalence of the current and the reference window,
* per-cluster quality drift: Bayes factor of a split-quality versus a
  shared-quality Beta-Binomial model across the two windows,
* emergence: a sustained climb in the clusterer's noise fraction.

Between refits every cluster's quality posterior is kept current with exact
conjugate Beta updates.
"""
from __future__ import annotations

import math
import threading
from datetime import datetime
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, model_validator
from scipy.special import betaln, rel_entr

from feedback_quality.core.errors import EvaluationError
from feedback_quality.core.types import ClusterStats, Dataset, validate_dataset
from feedback_quality.logger import logger

CHECKPOINT_SCHEMA_VERSION = 1


class DriftAction(str, Enum):
    NONE = "none"
    CLUSTER_ALERT = "cluster_alert"
    REFIT = "refit"
    RECLUSTER = "recluster"


class BetaPosterior(BaseModel):
    model_config = ConfigDict(frozen=True)

    a: PositiveFloat = 1.0
    b: PositiveFloat = 1.0

    @property
    def mean(self) -> float:
        return self.a / (self.a + self.b)

    def update(self, m: int, y: int) -> "BetaPosterior":
        return conjugate_update(self, (m, y))


class BatchSummary(BaseModel):
    """Cluster counts observed in one batch window."""

    model_config = ConfigDict(frozen=True)

    clusters: list[ClusterStats]
    noise_fraction: float = Field(default=0.0, ge=0.0, le=1.0)
    index: int = 0
    timestamp: Optional[datetime] = None

    @model_validator(mode="after")
    def _validate_counts(self):
        validate_dataset(self.clusters)
        return self

    @classmethod
    def from_dataset(cls, dataset: Dataset, noise_fraction: float = 0.0, index: int = 0,
                     timestamp: Optional[datetime] = None) -> "BatchSummary":
        return cls(clusters=list(dataset.clusters), noise_fraction=noise_fraction, index=index, timestamp=timestamp)

    @property
    def cluster_ids(self) -> list[str]:
        return [c.cluster_id for c in self.clusters]

    def prevalence(self) -> dict[str, float]:
        total = float(sum(c.n for c in self.clusters))
        return {c.cluster_id: c.n / total for c in self.clusters}

    def counts(self) -> dict[str, tuple[int, int]]:
        return {c.cluster_id: (c.m, c.y) for c in self.clusters}


class DriftThresholds(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    jsd: PositiveFloat = 0.05
    bf: PositiveFloat = 10.0
    #: strict increases in noise fraction that make a sustained climb
    noise_increases: PositiveInt = 3
    #: minimum total rise of the noise fraction over those increases
    noise_rise: PositiveFloat = 0.05
    #: share of clusters alerting at once that calls for a full refit
    refit_fraction: float = Field(default=0.25, gt=0.0, le=1.0)
    prior: tuple[PositiveFloat, PositiveFloat] = (1.0, 1.0)


class DriftDecision(BaseModel):
    model_config = ConfigDict(frozen=True)

    action: DriftAction
    signals: list[str]
    index: int
    jsd: float
    noise_history: list[float]
    noise_rule_fired: bool
    bayes_factors: dict[str, float]
    alerted_clusters: list[str]
    thresholds: DriftThresholds


def js_divergence(p: Sequence[float], q: Sequence[float]) -> float:
    """Jensen-Shannon divergence in nats, in [0, ln 2].

    >>> round(js_divergence([1.0, 0.0], [0.0, 1.0]), 4)
    0.6931
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape or p.ndim != 1:
        raise ValueError(f"p and q must be vectors over the same support, got {p.shape} and {q.shape}")
    if np.any(p < 0) or np.any(q < 0):
        raise ValueError("probability vectors must not have negative entries")
    for name, vec in (("p", p), ("q", q)):
        if abs(vec.sum() - 1.0) > 1e-9:
            raise ValueError(f"{name} must sum to 1, got {vec.sum()}")
    mix = 0.5 * (p + q)
    value = 0.5 * float(np.sum(rel_entr(p, mix))) + 0.5 * float(np.sum(rel_entr(q, mix)))
    return min(max(value, 0.0), math.log(2.0))


def align_prevalence(current: Mapping[str, float], reference: Mapping[str, float]) -> tuple[np.ndarray, np.ndarray]:
    """Vectors over the union of both supports; a cluster missing on one side gets 0 there."""
    keys = list(dict.fromkeys(list(reference) + list(current)))
    return (
        np.array([current.get(k, 0.0) for k in keys], dtype=float),
        np.array([reference.get(k, 0.0) for k in keys], dtype=float),
    )


def _log_marginal(m: int, y: int, a0: float, b0: float) -> float:
    # binomial coefficients cancel between split and shared models
    return float(betaln(a0 + y, b0 + m - y) - betaln(a0, b0))


def _check_window(window: tuple[int, int]) -> tuple[int, int]:
    m, y = int(window[0]), int(window[1])
    if m < 0 or not 0 <= y <= m:
        raise ValueError(f"window counts must satisfy 0 <= y <= m, got m={m}, y={y}")
    return m, y


def log_bayes_factor_split(window_a: tuple[int, int], window_b: tuple[int, int],
                           prior: tuple[float, float] = (1.0, 1.0)) -> float:
    a0, b0 = prior
    if a0 <= 0 or b0 <= 0:
        raise ValueError(f"prior parameters must be positive, got {prior}")
    m1, y1 = _check_window(window_a)
    m2, y2 = _check_window(window_b)
    split = _log_marginal(m1, y1, a0, b0) + _log_marginal(m2, y2, a0, b0)
    shared = _log_marginal(m1 + m2, y1 + y2, a0, b0)
    return split - shared


def bayes_factor_split(window_a: tuple[int, int], window_b: tuple[int, int],
                       prior: tuple[float, float] = (1.0, 1.0)) -> float:
    """Evidence that a cluster's quality differs between two windows (split over shared)."""
    return math.exp(log_bayes_factor_split(window_a, window_b, prior))


def conjugate_update(posterior: Union[BetaPosterior, tuple[float, float]], batch: tuple[int, int]) -> BetaPosterior:
    """Beta(a, b) updated with a batch of m feedback events, y positive."""
    if not isinstance(posterior, BetaPosterior):
        posterior = BetaPosterior(a=posterior[0], b=posterior[1])
    m, y = _check_window(batch)
    return BetaPosterior(a=posterior.a + y, b=posterior.b + m - y)


def noise_rule(noise_history: Sequence[float], thresholds: DriftThresholds) -> bool:
    needed = thresholds.noise_increases + 1
    if len(noise_history) < needed:
        return False
    tail = list(noise_history)[-needed:]
    rising = all(later > earlier for earlier, later in zip(tail, tail[1:]))
    return rising and tail[-1] - tail[0] > thresholds.noise_rise


def _refit_due(alerted: int, compared: int, thresholds: DriftThresholds) -> bool:
    """A refit needs at least two alerted clusters covering refit_fraction of those compared."""
    return compared > 0 and alerted >= max(2, math.ceil(thresholds.refit_fraction * compared))


def drift_decision(history: Sequence[BatchSummary], thresholds: Optional[DriftThresholds] = None,
                   reference: Optional[BatchSummary] = None) -> DriftDecision:
    """Decide on the latest batch in ``history``.

    The reference window defaults to the batch before the latest one.
    Priority when several signals fire: recluster, refit, cluster_alert.
    """
    thresholds = thresholds if thresholds is not None else DriftThresholds()
    if len(history) < 2:
        raise EvaluationError(f"drift_decision needs at least 2 batches, got {len(history)}", code="too_few_batches")
    current = history[-1]
    reference = reference if reference is not None else history[-2]

    jsd = js_divergence(*align_prevalence(current.prevalence(), reference.prevalence()))
    noise_history = [b.noise_fraction for b in history]
    noise_fired = noise_rule(noise_history, thresholds)

    before, after = reference.counts(), current.counts()
    factors = {
        cid: bayes_factor_split(before[cid], after[cid], thresholds.prior)
        for cid in after
        if cid in before
    }
    alerted = [cid for cid, bf in factors.items() if bf > thresholds.bf]

    signals = []
    if jsd > thresholds.jsd:
        signals.append("prevalence_jsd")
    if noise_fired:
        signals.append("noise_climb")
    if alerted:
        signals.append("cluster_bf")

    if jsd > thresholds.jsd or noise_fired:
        action = DriftAction.RECLUSTER
    elif _refit_due(len(alerted), len(factors), thresholds):
        action = DriftAction.REFIT
    elif alerted:
        action = DriftAction.CLUSTER_ALERT
    else:
        action = DriftAction.NONE
    return DriftDecision(
        action=action,
        signals=signals,
        index=current.index,
        jsd=jsd,
        noise_history=noise_history[-(thresholds.noise_increases + 1):],
        noise_rule_fired=noise_fired,
        bayes_factors=factors,
        alerted_clusters=alerted,
        thresholds=thresholds,
    )


class MonitorState(BaseModel):
    """Immutable copy of a monitor's rolling state."""

    model_config = ConfigDict(frozen=True)

    thresholds: DriftThresholds
    reference: Optional[BatchSummary] = None
    posteriors: dict[str, BetaPosterior] = Field(default_factory=dict)
    noise_history: list[float] = Field(default_factory=list)
    steps: int = 0


class DriftMonitor:
    """Rolling drift state. One writer at a time; :meth:`snapshot` is safe from any thread."""

    def __init__(self, thresholds: Optional[DriftThresholds] = None, state: Optional[MonitorState] = None):
        self._lock = threading.Lock()
        if state is not None:
            self.thresholds = state.thresholds
            self._reference = state.reference
            self._posteriors = dict(state.posteriors)
            self._noise = list(state.noise_history)
            self._steps = state.steps
        else:
            self.thresholds = thresholds if thresholds is not None else DriftThresholds()
            self._reference = None
            self._posteriors = {}
            self._noise = []
            self._steps = 0

    def seed_posteriors(self, dataset: Dataset) -> None:
        """Start each cluster's Beta posterior from the prior plus a full-fit dataset's counts."""
        with self._lock:
            prior = BetaPosterior(a=self.thresholds.prior[0], b=self.thresholds.prior[1])
            self._posteriors = {c.cluster_id: prior.update(c.m, c.y) for c in dataset.clusters}

    def observe(self, batch: BatchSummary) -> Optional[DriftDecision]:
        """Fold in one batch. Returns None for the very first batch (nothing to compare yet)."""
        with self._lock:
            self._noise.append(batch.noise_fraction)
            # keep just enough history for the noise rule
            self._noise = self._noise[-(self.thresholds.noise_increases + 1):]
            decision = None
            if self._reference is not None:
                window = [self._reference, batch]
                decision = drift_decision(window, self.thresholds)
                noise_fired = noise_rule(self._noise, self.thresholds)
                if noise_fired and not decision.noise_rule_fired:
                    decision = self._with_noise(decision)
                if decision.action is not DriftAction.NONE:
                    logger.warning(f"batch {batch.index}: drift action {decision.action.value} "
                                   f"(signals={decision.signals}, jsd={decision.jsd:.4f})")
            prior = BetaPosterior(a=self.thresholds.prior[0], b=self.thresholds.prior[1])
            for c in batch.clusters:
                self._posteriors[c.cluster_id] = self._posteriors.get(c.cluster_id, prior).update(c.m, c.y)
            self._reference = batch
            self._steps += 1
            return decision

    def _with_noise(self, decision: DriftDecision) -> DriftDecision:
        signals = list(decision.signals)
        signals.insert(1 if "prevalence_jsd" in signals else 0, "noise_climb")
        return decision.model_copy(update={
            "action": DriftAction.RECLUSTER,
            "signals": signals,
            "noise_rule_fired": True,
            "noise_history": list(self._noise),
        })

    def run(self, batches: Iterable[BatchSummary]) -> list[DriftDecision]:
        decisions = []
        for batch in batches:
            decision = self.observe(batch)
            if decision is not None:
                decisions.append(decision)
        return decisions

    def posterior(self, cluster_id: str) -> BetaPosterior:
        with self._lock:
            return self._posteriors[cluster_id]

    def snapshot(self) -> MonitorState:
        with self._lock:
            return MonitorState(
                thresholds=self.thresholds,
                reference=self._reference,
                posteriors=dict(self._posteriors),
                noise_history=list(self._noise),
                steps=self._steps,
            )

    def to_payload(self) -> dict:
        return {"schema_version": CHECKPOINT_SCHEMA_VERSION, "state": self.snapshot().model_dump(mode="json")}

    @classmethod
    def from_payload(cls, payload: dict) -> "DriftMonitor":
        if payload.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
            raise EvaluationError(f"unsupported checkpoint schema_version {payload.get('schema_version')}",
                                  code="bad_checkpoint")
        return cls(state=MonitorState.model_validate(payload["state"]))

    def save_checkpoint(self, db, name: str) -> None:
        from feedback_quality.models.drift_checkpoint import DriftCheckpoint

        DriftCheckpoint.upsert(db, name, self.to_payload())

    @classmethod
    def load_checkpoint(cls, db, name: str) -> "DriftMonitor":
        from feedback_quality.models.drift_checkpoint import DriftCheckpoint

        record = db.get(DriftCheckpoint, name)
        if record is None:
            raise EvaluationError(f"no drift checkpoint named {name!r}", code="missing_checkpoint")
        return cls.from_payload({"schema_version": record.schema_version, "state": record.payload})
