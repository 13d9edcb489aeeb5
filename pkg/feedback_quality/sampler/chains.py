"""Multi-chain orchestration: warmup, sampling and post-run diagnostics."""
from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from feedback_quality.core.config import SamplerConfig
from feedback_quality.core.errors import SamplerError
from feedback_quality.core.settings import resolve_workers
from feedback_quality.logger import logger
from feedback_quality.sampler.adaptation import WindowedAdaptation
from feedback_quality.sampler.diagnostics import ConvergenceReport, convergence_report
from feedback_quality.sampler.nuts import NUTSKernel, Target, find_reasonable_step_size

STAT_FIELDS = ("tree_depth", "n_leapfrog", "divergent", "energy", "accept_stat")
MAX_INIT_ATTEMPTS = 100


def chain_rng(seed: int, chain: int) -> np.random.Generator:
    """Counter-based substream for one chain; independent of how chains are scheduled."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(chain)])))


@dataclass
class ChainResult:
    chain: int
    unconstrained: np.ndarray
    stats: dict[str, np.ndarray]
    step_size: float
    inv_mass: np.ndarray
    seconds: float


@dataclass
class PosteriorDraws:
    """Draws as [chain, draw, parameter] in both constrained and unconstrained space."""

    constrained: np.ndarray
    unconstrained: np.ndarray
    param_names: list[str]
    stats: dict[str, np.ndarray] = field(default_factory=dict)
    step_size: np.ndarray = field(default_factory=lambda: np.zeros(0))
    inv_mass: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    variant: Optional[str] = None

    def __post_init__(self):
        if self.constrained.shape != self.unconstrained.shape:
            raise ValueError(
                f"constrained {self.constrained.shape} and unconstrained {self.unconstrained.shape} draws differ"
            )
        if self.constrained.shape[2] != len(self.param_names):
            raise ValueError(f"{len(self.param_names)} names for {self.constrained.shape[2]} parameters")

    @property
    def n_chains(self) -> int:
        return self.constrained.shape[0]

    @property
    def n_draws(self) -> int:
        return self.constrained.shape[1]

    @property
    def n_samples(self) -> int:
        return self.n_chains * self.n_draws

    @property
    def dimension(self) -> int:
        return self.constrained.shape[2]

    def get(self, name: str) -> np.ndarray:
        """[chain, draw] constrained draws of one named parameter."""
        try:
            index = self.param_names.index(name)
        except ValueError:
            raise KeyError(f"Unknown parameter: {name}") from None
        return self.constrained[:, :, index]

    def flat(self, unconstrained: bool = False) -> np.ndarray:
        source = self.unconstrained if unconstrained else self.constrained
        return source.reshape(-1, self.dimension)

    @property
    def n_divergent(self) -> int:
        return int(np.sum(self.stats.get("divergent", 0)))


def _initial_point(model: Target, rng: np.random.Generator) -> np.ndarray:
    if hasattr(model, "initial_point"):
        return np.asarray(model.initial_point(rng), dtype=float)
    return rng.uniform(-2.0, 2.0, size=model.dimension)


def sample_chain(model: Target, config: SamplerConfig, chain: int) -> ChainResult:
    """Warm up and sample a single chain. Deterministic in (config.seed, chain)."""
    started = time.perf_counter()
    rng = chain_rng(config.seed, chain)
    kernel = NUTSKernel(model, config.max_tree_depth, config.divergence_energy_threshold)

    for _ in range(MAX_INIT_ATTEMPTS):
        theta = _initial_point(model, rng)
        logp, grad = kernel._gradient(theta)
        if math.isfinite(logp):
            break
    else:
        raise SamplerError(
            f"chain {chain}: no finite initial point after {MAX_INIT_ATTEMPTS} attempts",
            code="bad_initial_point",
            diagnostics={"chain": chain},
        )

    inv_mass = np.ones(model.dimension)
    step_size = find_reasonable_step_size(kernel, theta, inv_mass, rng)
    schedule = WindowedAdaptation(model.dimension, config.tune, config.target_accept, step_size)

    for _ in range(config.tune):
        state, stats = kernel.transition(theta, step_size, inv_mass, rng, logp, grad)
        theta, logp, grad = state.theta, state.logp, state.grad
        step_size, inv_mass, changed = schedule.update(theta, stats.accept_stat)
        if changed:
            step_size = find_reasonable_step_size(kernel, theta, inv_mass, rng, step_size)
            schedule.restart_step_size(step_size)
    logger.info(f"chain {chain}: warmup done, step_size={step_size:.4g}")

    draws = np.empty((config.draws, model.dimension))
    stats_out = {name: np.empty(config.draws) for name in STAT_FIELDS}
    stats_out["divergent"] = np.zeros(config.draws, dtype=bool)
    for i in range(config.draws):
        state, stats = kernel.transition(theta, step_size, inv_mass, rng, logp, grad)
        theta, logp, grad = state.theta, state.logp, state.grad
        draws[i] = theta
        for name in STAT_FIELDS:
            stats_out[name][i] = getattr(stats, name)

    n_divergent = int(stats_out["divergent"].sum())
    if n_divergent == config.draws:
        raise SamplerError(
            f"chain {chain}: every post-warmup transition diverged",
            code="all_divergent",
            diagnostics={"chain": chain, "step_size": step_size, "draws": config.draws,
                         "mean_accept_stat": float(np.mean(stats_out["accept_stat"]))},
        )
    if n_divergent:
        logger.warning(f"chain {chain}: {n_divergent} divergent transitions after warmup")
    return ChainResult(
        chain=chain,
        unconstrained=draws,
        stats=stats_out,
        step_size=step_size,
        inv_mass=np.asarray(inv_mass, dtype=float).copy(),
        seconds=time.perf_counter() - started,
    )


def _constrain(model: Target, unconstrained: np.ndarray) -> np.ndarray:
    if hasattr(model, "constrain"):
        return model.constrain(unconstrained)
    return unconstrained.copy()


def _param_names(model: Target) -> list[str]:
    if hasattr(model, "param_names"):
        return list(model.param_names)
    return [f"theta[{i}]" for i in range(model.dimension)]


def run_chains(model: Target, config: SamplerConfig) -> tuple[PosteriorDraws, ConvergenceReport]:
    """Run ``config.chains`` chains, in worker processes when more than one worker is configured."""
    workers = min(resolve_workers(config.workers), config.chains)
    variant = getattr(getattr(model, "variant", None), "value", None)
    logger.info(
        f"sampling {variant or type(model).__name__}: {config.chains} chains x "
        f"({config.tune} tune + {config.draws} draws), dimension {model.dimension}, workers={workers}"
    )
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(sample_chain, model, config, chain) for chain in range(config.chains)]
            results = [f.result() for f in futures]
    else:
        results = [sample_chain(model, config, chain) for chain in range(config.chains)]

    unconstrained = np.stack([r.unconstrained for r in results])
    stats = {name: np.stack([r.stats[name] for r in results]) for name in STAT_FIELDS}
    draws = PosteriorDraws(
        constrained=_constrain(model, unconstrained),
        unconstrained=unconstrained,
        param_names=_param_names(model),
        stats=stats,
        step_size=np.array([r.step_size for r in results]),
        inv_mass=np.stack([r.inv_mass for r in results]),
        variant=variant,
    )
    report = convergence_report(
        draws.constrained, draws.param_names, stats["divergent"], stats["tree_depth"], config.max_tree_depth
    )
    if not report.passed:
        logger.warning(f"convergence checks not passed: {report.summary()}")
    logger.info(f"sampling finished in {max(r.seconds for r in results):.1f}s (slowest chain)")
    return draws, report
