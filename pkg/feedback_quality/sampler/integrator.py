"""Leapfrog integration for a diagonal Euclidean metric.

``inv_mass`` is the diagonal of the inverse mass matrix, i.e. the estimate of
posterior variances; momenta are drawn from N(0, diag(1 / inv_mass)).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

GradientFn = Callable[[np.ndarray], tuple[float, np.ndarray]]


@dataclass(frozen=True)
class PhaseState:
    theta: np.ndarray
    momentum: np.ndarray
    logp: float
    grad: np.ndarray


def kinetic_energy(momentum: np.ndarray, inv_mass: np.ndarray) -> float:
    return 0.5 * float(np.dot(momentum * inv_mass, momentum))


def hamiltonian(state: PhaseState, inv_mass: np.ndarray) -> float:
    return -state.logp + kinetic_energy(state.momentum, inv_mass)


def leapfrog(
    theta: np.ndarray,
    momentum: np.ndarray,
    step_size: float,
    gradient_fn: GradientFn,
    inv_mass: np.ndarray,
    grad: np.ndarray | None = None,
) -> PhaseState:
    """One kick-drift-kick step. ``grad`` is the gradient at ``theta`` if already known."""
    if grad is None:
        _, grad = gradient_fn(theta)
    p_half = momentum + 0.5 * step_size * grad
    theta_new = theta + step_size * inv_mass * p_half
    logp_new, grad_new = gradient_fn(theta_new)
    p_new = p_half + 0.5 * step_size * grad_new
    return PhaseState(theta=theta_new, momentum=p_new, logp=float(logp_new), grad=grad_new)
