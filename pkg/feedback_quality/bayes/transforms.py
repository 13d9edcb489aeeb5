"""Change of variables between constrained and unconstrained parameter space."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit, log_expit, logit

from feedback_quality.core.errors import ModelError


class Transform(str, Enum):
    #: (0, 1) <-> R via logit / sigmoid
    PROB = "prob"
    #: (0, inf) <-> R via log / exp
    POS = "pos"


@dataclass(frozen=True)
class Block:
    name: str
    size: int
    transform: Transform
    #: True for blocks indexed by cluster (names become name[cluster_id])
    per_cluster: bool = False


class ParamLayout:
    """Ordered named blocks of the unconstrained vector."""

    def __init__(self, blocks: Sequence[Block], cluster_ids: Sequence[str]):
        self.blocks = tuple(blocks)
        self.cluster_ids = tuple(cluster_ids)
        self._slices = {}
        offset = 0
        for block in self.blocks:
            self._slices[block.name] = slice(offset, offset + block.size)
            offset += block.size
        self.dimension = offset

    def __contains__(self, name: str) -> bool:
        return name in self._slices

    def slice(self, name: str) -> slice:
        return self._slices[name]

    def split(self, theta: np.ndarray) -> dict[str, np.ndarray]:
        return {b.name: theta[self._slices[b.name]] for b in self.blocks}

    def join(self, parts: Mapping[str, np.ndarray]) -> np.ndarray:
        out = np.empty(self.dimension)
        for block in self.blocks:
            out[self._slices[block.name]] = parts[block.name]
        return out

    @property
    def names(self) -> list[str]:
        names = []
        for block in self.blocks:
            if block.per_cluster:
                names.extend(f"{block.name}[{cid}]" for cid in self.cluster_ids)
            else:
                names.append(block.name)
        return names

    @property
    def transforms(self) -> np.ndarray:
        """Per-coordinate transform tags, aligned with :attr:`names`."""
        return np.array([b.transform.value for b in self.blocks for _ in range(b.size)])


@dataclass(frozen=True)
class ParamVector:
    """Unconstrained parameter vector with named block access."""

    values: np.ndarray
    layout: ParamLayout

    def __post_init__(self):
        if self.values.shape != (self.layout.dimension,):
            raise ModelError(
                f"ParamVector has shape {self.values.shape}, layout expects ({self.layout.dimension},)",
                code="dimension_mismatch",
            )
        if not np.all(np.isfinite(self.values)):
            raise ModelError("ParamVector entries must be finite", code="non_finite")

    def block(self, name: str) -> np.ndarray:
        return self.values[self.layout.slice(name)]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def unconstrain_block(value: np.ndarray, transform: Transform) -> np.ndarray:
    value = np.asarray(value, dtype=float)
    if transform is Transform.PROB:
        if np.any((value <= 0.0) | (value >= 1.0)):
            raise ModelError("probability parameters must lie strictly inside (0, 1)", code="boundary_value")
        return logit(value)
    if np.any(value <= 0.0):
        raise ModelError("positive parameters must be > 0", code="boundary_value")
    return np.log(value)


def constrain_block(u: np.ndarray, transform: Transform) -> tuple[np.ndarray, float]:
    """Return (constrained value, log |Jacobian|)."""
    u = np.asarray(u, dtype=float)
    if transform is Transform.PROB:
        return expit(u), float(np.sum(log_expit(u) + log_expit(-u)))
    return np.exp(u), float(np.sum(u))


def to_unconstrained(layout: ParamLayout, constrained: Mapping[str, np.ndarray]) -> ParamVector:
    parts = {}
    for block in layout.blocks:
        if block.name not in constrained:
            raise ModelError(f"missing constrained value for block {block.name!r}", code="missing_block")
        value = np.broadcast_to(np.asarray(constrained[block.name], dtype=float), (block.size,))
        parts[block.name] = unconstrain_block(value, block.transform)
    return ParamVector(layout.join(parts), layout)


def to_constrained(layout: ParamLayout, theta) -> tuple[dict[str, np.ndarray], float]:
    theta = np.asarray(theta, dtype=float)
    values, log_jac = {}, 0.0
    for block in layout.blocks:
        v, lj = constrain_block(theta[layout.slice(block.name)], block.transform)
        values[block.name] = v
        log_jac += lj
    return values, log_jac


def constrain_vector(layout: ParamLayout, theta: np.ndarray) -> np.ndarray:
    """Vectorized constrain over the last axis of an array of unconstrained draws."""
    theta = np.asarray(theta, dtype=float)
    prob = layout.transforms == Transform.PROB.value
    out = np.empty_like(theta)
    out[..., prob] = expit(theta[..., prob])
    out[..., ~prob] = np.exp(theta[..., ~prob])
    return out
