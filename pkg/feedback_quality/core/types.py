"""Per-cluster sufficient statistics and the interaction-level record.

Cluster order inside a :class:`Dataset` is the canonical parameter order for
every model, draw array and report.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from feedback_quality.core.errors import DatasetValidationError


class ClusterStats(BaseModel):
    """Sufficient statistics (n, m, y) of one cluster."""

    model_config = ConfigDict(frozen=True)

    cluster_id: str
    n: int = Field(ge=0)  # interactions
    m: int = Field(ge=0)  # feedback events
    y: int = Field(ge=0)  # positive feedback events


class InteractionRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    interaction_id: str
    cluster_id: str
    r: int = Field(ge=0, le=1)
    f: Optional[int] = Field(default=None, ge=0, le=1)
    y_star: Optional[int] = Field(default=None, ge=0, le=1)


@dataclass(frozen=True)
class Dataset:
    """Validated, immutable collection of clusters.

    Build it with :func:`validate_dataset`; ``N`` and ``M`` are always
    recomputed from the clusters.
    """

    clusters: tuple[ClusterStats, ...]
    n: np.ndarray = field(init=False, repr=False, compare=False)
    m: np.ndarray = field(init=False, repr=False, compare=False)
    y: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("n", "m", "y"):
            arr = np.array([getattr(c, name) for c in self.clusters], dtype=np.int64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def C(self) -> int:
        return len(self.clusters)

    @property
    def N(self) -> int:
        return int(self.n.sum())

    @property
    def M(self) -> int:
        return int(self.m.sum())

    @property
    def Y(self) -> int:
        return int(self.y.sum())

    @property
    def cluster_ids(self) -> list[str]:
        return [c.cluster_id for c in self.clusters]

    def subset(self, keep: Sequence[int]) -> "Dataset":
        return validate_dataset([self.clusters[i] for i in keep])

    def without(self, index: int) -> "Dataset":
        return self.subset([i for i in range(self.C) if i != index])

    def permuted(self, order: Sequence[int]) -> "Dataset":
        return self.subset(list(order))

    def to_records(self) -> list[dict]:
        return [c.model_dump() for c in self.clusters]

    def __eq__(self, other):
        return isinstance(other, Dataset) and self.clusters == other.clusters

    def __hash__(self):
        return hash(self.clusters)


def validate_dataset(raw: Iterable[ClusterStats]) -> Dataset:
    """Check cluster invariants and return an immutable :class:`Dataset`.

    >>> ds = validate_dataset([ClusterStats(cluster_id="c1", n=10, m=4, y=2)])
    >>> (ds.N, ds.M)
    (10, 4)
    """
    clusters = tuple(raw)
    if not clusters:
        raise DatasetValidationError("empty dataset: at least one cluster is required", code="empty_dataset")
    seen = set()
    for c in clusters:
        if c.cluster_id in seen:
            raise DatasetValidationError(
                f"duplicate cluster_id {c.cluster_id!r}", code="duplicate_cluster_id", cluster_id=c.cluster_id
            )
        seen.add(c.cluster_id)
        if c.y > c.m:
            raise DatasetValidationError(
                f"cluster {c.cluster_id!r}: y exceeds m ({c.y} > {c.m})", code="y_exceeds_m", cluster_id=c.cluster_id
            )
        if c.m > c.n:
            raise DatasetValidationError(
                f"cluster {c.cluster_id!r}: m exceeds n ({c.m} > {c.n})", code="m_exceeds_n", cluster_id=c.cluster_id
            )
        if c.n == 0:
            raise DatasetValidationError(
                f"cluster {c.cluster_id!r}: no interactions (n = 0)", code="empty_cluster", cluster_id=c.cluster_id
            )
    return Dataset(clusters=clusters)


def aggregate_from_interactions(records: Iterable[InteractionRecord]) -> Dataset:
    """Collapse interaction rows into per-cluster (n, m, y), first-seen order."""
    counts: "OrderedDict[str, list[int]]" = OrderedDict()
    for rec in records:
        if rec.r == 0 and rec.f == 1:
            raise DatasetValidationError(
                f"interaction {rec.interaction_id!r} in cluster {rec.cluster_id!r}: polarity f=1 without feedback (r=0)",
                code="polarity_without_feedback",
                cluster_id=rec.cluster_id,
            )
        row = counts.setdefault(rec.cluster_id, [0, 0, 0])
        row[0] += 1
        if rec.r == 1:
            row[1] += 1
            if rec.f == 1:
                row[2] += 1
    return validate_dataset(ClusterStats(cluster_id=cid, n=n, m=m, y=y) for cid, (n, m, y) in counts.items())


def prevalence(dataset: Dataset) -> np.ndarray:
    """pi_c = n_c / N.

    >>> prevalence(validate_dataset([ClusterStats(cluster_id="a", n=10, m=0, y=0),
    ...                              ClusterStats(cluster_id="b", n=30, m=0, y=0)])).tolist()
    [0.25, 0.75]
    """
    if dataset.N <= 0:
        raise ValueError("prevalence requires N > 0")
    return dataset.n / float(dataset.N)
