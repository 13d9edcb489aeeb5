"""No-U-Turn transitions with multinomial trajectory sampling.

The trajectory is doubled forward or backward in time until the generalized
no-U-turn criterion fails anywhere in the tree, a divergence occurs, or the
maximum depth is reached. Within a subtree the sample is drawn uniformly in
proportion to exp(-H); at the top level the new subtree's sample is preferred
(biased progressive sampling).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from feedback_quality.sampler.integrator import PhaseState, hamiltonian, leapfrog


class Target(Protocol):
    dimension: int

    def log_posterior_and_grad(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        ...


@dataclass(frozen=True)
class TransitionStats:
    tree_depth: int
    n_leapfrog: int
    divergent: bool
    energy: float
    accept_stat: float
    step_size: float


@dataclass
class _Tree:
    left: PhaseState
    right: PhaseState
    sample: PhaseState
    log_weight: float
    rho: np.ndarray
    accept_sum: float
    n_steps: int
    divergent: bool
    turning: bool


def _no_u_turn(p_sharp_left: np.ndarray, p_sharp_right: np.ndarray, rho: np.ndarray) -> bool:
    return float(np.dot(p_sharp_left, rho)) > 0 and float(np.dot(p_sharp_right, rho)) > 0


class NUTSKernel:
    """One NUTS transition per call, for a fixed step size and diagonal metric."""

    def __init__(self, target: Target, max_tree_depth: int = 10, divergence_threshold: float = 1000.0):
        self.target = target
        self.max_tree_depth = max_tree_depth
        self.divergence_threshold = divergence_threshold

    def _gradient(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        with np.errstate(all="ignore"):
            logp, grad = self.target.log_posterior_and_grad(theta)
        if not (math.isfinite(logp) and np.all(np.isfinite(grad))):
            return -math.inf, np.zeros_like(theta)
        return logp, grad

    def _merge(self, first: _Tree, second: _Tree, direction: int, rng: np.random.Generator,
               inv_mass: np.ndarray, biased: bool) -> _Tree:
        """Join ``second`` (integrated after ``first`` in ``direction``) onto ``first``."""
        log_weight = float(np.logaddexp(first.log_weight, second.log_weight))
        if biased:
            take_second = math.log(rng.random()) < second.log_weight - first.log_weight
        else:
            take_second = math.log(rng.random()) < second.log_weight - log_weight
        sample = second.sample if take_second else first.sample

        if direction > 0:
            left_tree, right_tree = first, second
        else:
            left_tree, right_tree = second, first
        rho = left_tree.rho + right_tree.rho
        p_sharp = lambda state: inv_mass * state.momentum  # noqa: E731
        ok = _no_u_turn(p_sharp(left_tree.left), p_sharp(right_tree.right), rho)
        # extra checks across the junction of the two halves
        ok = ok and _no_u_turn(p_sharp(left_tree.left), p_sharp(right_tree.left),
                               left_tree.rho + right_tree.left.momentum)
        ok = ok and _no_u_turn(p_sharp(left_tree.right), p_sharp(right_tree.right),
                               right_tree.rho + left_tree.right.momentum)
        return _Tree(
            left=left_tree.left,
            right=right_tree.right,
            sample=sample,
            log_weight=log_weight,
            rho=rho,
            accept_sum=first.accept_sum + second.accept_sum,
            n_steps=first.n_steps + second.n_steps,
            divergent=first.divergent or second.divergent,
            turning=first.turning or second.turning or not ok,
        )

    def _build_tree(self, start: PhaseState, depth: int, direction: int, step_size: float,
                    inv_mass: np.ndarray, h0: float, rng: np.random.Generator) -> _Tree:
        if depth == 0:
            state = leapfrog(start.theta, start.momentum, direction * step_size, self._gradient, inv_mass, start.grad)
            h = hamiltonian(state, inv_mass)
            if not math.isfinite(h):
                h = math.inf
            delta = h - h0
            divergent = delta > self.divergence_threshold
            return _Tree(
                left=state, right=state, sample=state,
                log_weight=-delta if math.isfinite(delta) else -math.inf,
                rho=state.momentum.copy(),
                accept_sum=min(1.0, math.exp(-delta)) if delta > -700 else 1.0,
                n_steps=1, divergent=divergent, turning=False,
            )
        first = self._build_tree(start, depth - 1, direction, step_size, inv_mass, h0, rng)
        if first.divergent or first.turning:
            return first
        edge = first.right if direction > 0 else first.left
        second = self._build_tree(edge, depth - 1, direction, step_size, inv_mass, h0, rng)
        if second.divergent or second.turning:
            merged = self._merge(first, second, direction, rng, inv_mass, biased=False)
            merged.turning = True
            return merged
        return self._merge(first, second, direction, rng, inv_mass, biased=False)

    def transition(self, theta: np.ndarray, step_size: float, inv_mass: np.ndarray,
                   rng: np.random.Generator, logp: float | None = None,
                   grad: np.ndarray | None = None) -> tuple[PhaseState, TransitionStats]:
        if logp is None or grad is None:
            logp, grad = self._gradient(theta)
        momentum = rng.standard_normal(theta.shape[0]) / np.sqrt(inv_mass)
        init = PhaseState(theta=theta, momentum=momentum, logp=logp, grad=grad)
        h0 = hamiltonian(init, inv_mass)
        tree = _Tree(left=init, right=init, sample=init, log_weight=0.0, rho=momentum.copy(),
                     accept_sum=0.0, n_steps=0, divergent=False, turning=False)
        depth = 0
        while depth < self.max_tree_depth:
            direction = 1 if rng.random() < 0.5 else -1
            edge = tree.right if direction > 0 else tree.left
            subtree = self._build_tree(edge, depth, direction, step_size, inv_mass, h0, rng)
            depth += 1
            if subtree.divergent or subtree.turning:
                tree.accept_sum += subtree.accept_sum
                tree.n_steps += subtree.n_steps
                tree.divergent = subtree.divergent
                break
            tree = self._merge(tree, subtree, direction, rng, inv_mass, biased=True)
            if tree.turning:
                break

        sample = tree.sample
        stats = TransitionStats(
            tree_depth=depth,
            n_leapfrog=tree.n_steps,
            divergent=tree.divergent,
            energy=hamiltonian(sample, inv_mass),
            accept_stat=tree.accept_sum / max(tree.n_steps, 1),
            step_size=step_size,
        )
        return sample, stats


def nuts_transition(theta: np.ndarray, step_size: float, inv_mass: np.ndarray, model: Target,
                    rng: np.random.Generator, max_tree_depth: int = 10,
                    divergence_threshold: float = 1000.0) -> tuple[np.ndarray, TransitionStats]:
    """Single transition from ``theta``; convenience wrapper around :class:`NUTSKernel`."""
    kernel = NUTSKernel(model, max_tree_depth, divergence_threshold)
    state, stats = kernel.transition(np.asarray(theta, dtype=float), step_size, np.asarray(inv_mass, dtype=float), rng)
    return state.theta, stats


def find_reasonable_step_size(kernel: NUTSKernel, theta: np.ndarray, inv_mass: np.ndarray,
                              rng: np.random.Generator, step_size: float = 1.0) -> float:
    """Double or halve the step size until a single leapfrog step's acceptance crosses 0.8."""
    logp, grad = kernel._gradient(theta)
    momentum = rng.standard_normal(theta.shape[0]) / np.sqrt(inv_mass)
    init = PhaseState(theta=theta, momentum=momentum, logp=logp, grad=grad)
    h0 = hamiltonian(init, inv_mass)

    def log_accept(eps: float) -> float:
        state = leapfrog(theta, momentum, eps, kernel._gradient, inv_mass, grad)
        h = hamiltonian(state, inv_mass)
        return h0 - h if math.isfinite(h) else -math.inf

    direction = 1 if log_accept(step_size) > math.log(0.8) else -1
    for _ in range(100):
        candidate = step_size * (2.0 ** direction)
        crossed = (log_accept(candidate) > math.log(0.8)) != (direction > 0)
        if crossed and direction < 0:
            step_size = candidate
        if crossed or not 1e-10 < candidate < 1e7:
            break
        step_size = candidate
    return step_size

