"""Warmup adaptation: dual-averaging step size and windowed diagonal metric."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from feedback_quality.core.errors import SamplerError
from feedback_quality.logger import logger

MIN_TUNE = 50
INIT_BUFFER = 75
TERM_BUFFER = 50
BASE_WINDOW = 25


class DualAveraging:
    """Nesterov dual averaging of log step size toward a target acceptance statistic."""

    def __init__(self, initial_step_size: float, target_accept: float,
                 gamma: float = 0.05, t0: float = 10.0, kappa: float = 0.75):
        self.target_accept = target_accept
        self.gamma = gamma
        self.t0 = t0
        self.kappa = kappa
        self.restart(initial_step_size)

    def restart(self, step_size: float) -> None:
        self.mu = math.log(10.0 * step_size)
        self.h_bar = 0.0
        self.log_eps = math.log(step_size)
        self.log_eps_bar = 0.0
        self.count = 0

    def update(self, accept_stat: float) -> float:
        """Feed one acceptance statistic; returns the step size for the next iteration."""
        self.count += 1
        accept_stat = min(1.0, accept_stat) if math.isfinite(accept_stat) else 0.0
        t = self.count
        eta = 1.0 / (t + self.t0)
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target_accept - accept_stat)
        self.log_eps = self.mu - math.sqrt(t) / self.gamma * self.h_bar
        weight = t ** (-self.kappa)
        self.log_eps_bar = weight * self.log_eps + (1.0 - weight) * self.log_eps_bar
        return math.exp(self.log_eps)

    @property
    def step_size(self) -> float:
        return math.exp(self.log_eps)

    @property
    def final_step_size(self) -> float:
        return math.exp(self.log_eps_bar)


class WelfordVariance:
    def __init__(self, dimension: int):
        self.count = 0
        self.mean = np.zeros(dimension)
        self.m2 = np.zeros(dimension)

    def add(self, x: np.ndarray) -> None:
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)

    def regularized_variance(self) -> np.ndarray:
        n = self.count
        var = self.m2 / (n - 1)
        return (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))


def adaptation_windows(tune: int) -> tuple[int, list[int]]:
    """First metric-window iteration and the (0-based) iterations at which windows close."""
    if tune < MIN_TUNE:
        raise SamplerError(
            f"insufficient warmup: tune={tune} < {MIN_TUNE}", code="insufficient_warmup", diagnostics={"tune": tune}
        )
    init_buffer, term_buffer, base_window = INIT_BUFFER, TERM_BUFFER, BASE_WINDOW
    if init_buffer + term_buffer + base_window > tune:
        init_buffer = int(0.15 * tune)
        term_buffer = int(0.1 * tune)
        base_window = tune - init_buffer - term_buffer
    ends = []
    start, window = init_buffer, base_window
    last = tune - term_buffer
    while start < last:
        end = start + window
        # stretch the final window rather than leave a short remainder
        if end + 2 * window > last:
            end = last
        ends.append(end - 1)
        start = end
        window *= 2
    return init_buffer, ends


@dataclass
class WindowedAdaptation:
    """Stan-style warmup: fast step-size phase, doubling metric windows, final step-size phase."""

    dimension: int
    tune: int
    target_accept: float
    initial_step_size: float = 1.0
    inv_mass: np.ndarray = field(init=False)
    window_ends: list[int] = field(init=False)

    def __post_init__(self):
        self._first_window_start, self.window_ends = adaptation_windows(self.tune)
        self.inv_mass = np.ones(self.dimension)
        self.dual = DualAveraging(self.initial_step_size, self.target_accept)
        self._window = WelfordVariance(self.dimension)
        self._iteration = 0

    def update(self, theta: np.ndarray, accept_stat: float) -> tuple[float, np.ndarray, bool]:
        """Record one warmup iteration. Returns (step_size, inv_mass, metric_changed)."""
        i = self._iteration
        self._iteration += 1
        step_size = self.dual.update(accept_stat)
        changed = False
        if self._first_window_start <= i <= self.window_ends[-1]:
            self._window.add(theta)
            if i in self.window_ends and self._window.count > 1:
                self.inv_mass = self._window.regularized_variance()
                logger.debug(f"metric window closed at iteration {i + 1} ({self._window.count} draws)")
                self._window = WelfordVariance(self.dimension)
                changed = True
        if i == self.tune - 1:
            step_size = self.dual.final_step_size
        return step_size, self.inv_mass, changed

    def restart_step_size(self, step_size: float) -> None:
        self.dual.restart(step_size)

    @property
    def final(self) -> tuple[float, np.ndarray]:
        return self.dual.final_step_size, self.inv_mass


def adapt(warmup_draws: np.ndarray, accept_stats: np.ndarray, target_accept: float,
          initial_step_size: float = 1.0) -> tuple[float, np.ndarray]:
    """Replay a recorded warmup sequence through the adaptation schedule.

    ``warmup_draws`` is [tune, dimension]; returns (step_size, inv_mass).
    """
    warmup_draws = np.asarray(warmup_draws, dtype=float)
    tune, dimension = warmup_draws.shape
    schedule = WindowedAdaptation(dimension, tune, target_accept, initial_step_size)
    for theta, stat in zip(warmup_draws, accept_stats):
        schedule.update(theta, float(stat))
    return schedule.final
