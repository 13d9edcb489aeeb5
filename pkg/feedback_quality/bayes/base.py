"""Shared machinery for the model variants.

A :class:`ModelInstance` is bound to one dataset and one prior configuration.
It exposes the unnormalized log-posterior over an unconstrained vector, its
analytic gradient, the per-cluster joint log-likelihood and posterior
predictive simulation. Subclasses only provide their block layout and a
single ``_evaluate`` routine.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from typing import ClassVar, Optional, Sequence

import numpy as np
from scipy.special import expit

from feedback_quality.bayes.densities import binom_const
from feedback_quality.bayes.transforms import (
    Block,
    ParamLayout,
    ParamVector,
    constrain_vector,
    to_constrained,
    to_unconstrained,
    unconstrain_block,
)
from feedback_quality.core.config import ModelVariant, PriorConfig
from feedback_quality.core.errors import ModelError
from feedback_quality.core.types import Dataset

HYPER_START = 2.0
JITTER = 0.5


class ModelInstance(ABC):
    variant: ClassVar[ModelVariant]
    #: hyperparameter block names that PriorConfig.fixed_hyperparameters may freeze
    hyper_names: ClassVar[tuple[str, ...]] = ()
    #: block holding per-cluster (or global) latent quality
    quality_block: ClassVar[str] = "q"

    def __init__(self, dataset: Dataset, priors: Optional[PriorConfig] = None):
        self.dataset = dataset
        self.priors = priors if priors is not None else PriorConfig()
        self.n = dataset.n.astype(float)
        self.m = dataset.m.astype(float)
        self.y = dataset.y.astype(float)
        self.C = dataset.C
        #: per-cluster binomial coefficients log C(n, m) + log C(m, y)
        self.log_coef = binom_const(self.n, self.m) + binom_const(self.m, self.y)

        unknown = set(self.priors.fixed_hyperparameters) - set(self.hyper_names)
        if unknown:
            raise ModelError(
                f"{self.variant.value}: cannot fix unknown hyperparameters {sorted(unknown)}",
                code="unknown_hyperparameter",
            )
        self.fixed = {k: float(v) for k, v in self.priors.fixed_hyperparameters.items()}
        self._all_blocks = tuple(self._blocks())
        self._fixed_u = {
            b.name: unconstrain_block(np.array([self.fixed[b.name]]), b.transform)
            for b in self._all_blocks
            if b.name in self.fixed
        }
        free = [b for b in self._all_blocks if b.name not in self.fixed]
        self.layout = ParamLayout(free, dataset.cluster_ids)

    # --- subclass contract ---

    @abstractmethod
    def _blocks(self) -> Sequence[Block]:
        ...

    @abstractmethod
    def _evaluate(self, u: dict, want_grad: bool):
        """Return (pointwise loglik, total loglik, log prior + log Jacobian, grads by block)."""

    @abstractmethod
    def _rates(self, u: dict) -> tuple[np.ndarray, np.ndarray]:
        """Per-cluster (feedback probability s_c, positive probability p_c)."""

    @abstractmethod
    def _log_prior_constrained(self, values: dict) -> float:
        """Prior density in constrained space, evaluated with scipy.stats."""

    @abstractmethod
    def initial_values(self) -> dict[str, np.ndarray]:
        """Moment-based constrained starting values for every free block."""

    # --- layout plumbing ---

    @property
    def dimension(self) -> int:
        return self.layout.dimension

    @property
    def param_names(self) -> list[str]:
        return self.layout.names

    def _check(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dimension,):
            raise ModelError(
                f"{self.variant.value}: theta has shape {theta.shape}, expected ({self.dimension},)",
                code="dimension_mismatch",
            )
        return theta

    def _unpack(self, theta: np.ndarray) -> dict[str, np.ndarray]:
        u = self.layout.split(theta)
        for name, value in self.fixed.items():
            u[name] = self._fixed_u[name]
        return u

    def _zero_grads(self) -> dict[str, np.ndarray]:
        return {b.name: np.zeros(b.size) for b in self._all_blocks}

    def _pack_grad(self, grads: dict[str, np.ndarray]) -> np.ndarray:
        return self.layout.join(grads)

    # --- public API ---

    def log_posterior_and_grad(self, theta) -> tuple[float, np.ndarray]:
        theta = self._check(theta)
        _, lik, prior, grads = self._evaluate(self._unpack(theta), True)
        return lik + prior, self._pack_grad(grads)

    def log_posterior(self, theta) -> float:
        theta = self._check(theta)
        _, lik, prior, _ = self._evaluate(self._unpack(theta), False)
        return lik + prior

    def grad_log_posterior(self, theta) -> np.ndarray:
        return self.log_posterior_and_grad(theta)[1]

    def log_likelihood(self, theta) -> float:
        theta = self._check(theta)
        return self._evaluate(self._unpack(theta), False)[1]

    def pointwise_joint_loglik(self, theta) -> np.ndarray:
        theta = self._check(theta)
        return self._evaluate(self._unpack(theta), False)[0]

    @property
    def pooling_offset(self) -> float:
        """Total loglik minus the sum of pointwise terms (zero unless pooled)."""
        return 0.0

    def log_jacobian(self, theta) -> float:
        return to_constrained(self.layout, self._check(theta))[1]

    def log_prior(self, theta) -> float:
        values, _ = to_constrained(self.layout, self._check(theta))
        values.update({k: np.array([v]) for k, v in self.fixed.items()})
        return self._log_prior_constrained(values)

    def to_unconstrained(self, constrained: dict) -> ParamVector:
        return to_unconstrained(self.layout, constrained)

    def to_constrained(self, theta) -> tuple[dict[str, np.ndarray], float]:
        return to_constrained(self.layout, self._check(theta))

    def constrain(self, theta) -> np.ndarray:
        """Constrained values (flat, ordered as :attr:`param_names`) of one or many vectors."""
        return constrain_vector(self.layout, theta)

    def rates(self, theta) -> tuple[np.ndarray, np.ndarray]:
        return self._rates(self._unpack(self._check(theta)))

    def quality(self, theta) -> np.ndarray:
        block = self._unpack(self._check(theta))[self.quality_block]
        return np.broadcast_to(expit(block), (self.C,)).copy()

    def quality_draws(self, unconstrained_draws: np.ndarray) -> np.ndarray:
        """Per-cluster quality for a [..., dimension] array of unconstrained draws."""
        block = expit(unconstrained_draws[..., self.layout.slice(self.quality_block)])
        return np.broadcast_to(block, block.shape[:-1] + (self.C,)).copy()

    def posterior_predictive_draw(self, theta, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        s, p = self.rates(theta)
        m_rep = rng.binomial(self.dataset.n, np.clip(s, 0.0, 1.0))
        y_rep = rng.binomial(m_rep, np.clip(p, 0.0, 1.0))
        return m_rep, y_rep

    def initial_point(self, rng: np.random.Generator) -> np.ndarray:
        base = self.to_unconstrained(self.initial_values()).values
        return base + rng.uniform(-JITTER, JITTER, size=self.dimension)

    # --- helpers for subclasses ---

    def _hyper_start(self) -> dict[str, np.ndarray]:
        return {name: np.array([HYPER_START]) for name in self.hyper_names if name not in self.fixed}

    def _moment_quality(self) -> np.ndarray:
        return (self.y + 1.0) / (self.m + 2.0)

    def _moment_response(self) -> np.ndarray:
        return (self.m + 1.0) / (self.n + 2.0)

    def _pooled_response(self) -> float:
        return (self.m.sum() + 1.0) / (self.n.sum() + 2.0)

    def __repr__(self):
        return f"{type(self).__name__}(C={self.C}, dimension={self.dimension})"
