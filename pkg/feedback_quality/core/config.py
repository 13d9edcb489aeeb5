"""Run configuration: model variant, prior settings and sampler settings.

JSON documents mirror the field names below; unknown keys are rejected.
"""
from __future__ import annotations

import json
import math
from enum import Enum
from pathlib import Path
from typing import Optional, Union

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, ValidationError, model_validator

from feedback_quality.core.errors import ConfigError


class ModelVariant(str, Enum):
    BASIC = "basic"
    ENHANCED = "enhanced"
    HIER_SENTIMENT = "hier_sentiment"
    HIER_INFORMED = "hier_informed"
    CORRECTED_GLOBAL = "corrected_global"

    @classmethod
    def parse(cls, value: Union[str, "ModelVariant"]) -> "ModelVariant":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {
            "hiersentiment": cls.HIER_SENTIMENT,
            "hierinformed": cls.HIER_INFORMED,
            "correctedglobal": cls.CORRECTED_GLOBAL,
        }
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            valid = ", ".join(v.value for v in cls)
            raise ConfigError(f"Unknown model variant: {value!r} (valid: {valid})", code="unknown_variant") from None


#: per-variant default acceptance targets
DEFAULT_TARGET_ACCEPT = {
    ModelVariant.BASIC: 0.9,
    ModelVariant.ENHANCED: 0.9,
    ModelVariant.HIER_SENTIMENT: 0.97,
    ModelVariant.HIER_INFORMED: 0.97,
    ModelVariant.CORRECTED_GLOBAL: 0.95,
}

DEFAULT_CHAINS = 4
DEFAULT_DRAWS = 2000
DEFAULT_TUNE = 2000
DEFAULT_MAX_TREE_DEPTH = 10
DEFAULT_DIVERGENCE_THRESHOLD = 1000.0


class PriorConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    halfnormal_sigma: PositiveFloat = 10.0
    informed_logrpos_center: float = math.log(0.07)
    informed_logrpos_sigma: PositiveFloat = 0.5
    informed_logkappa_center: float = math.log(2.5)
    informed_logkappa_sigma: PositiveFloat = 0.6
    hs_mu_beta: tuple[PositiveFloat, PositiveFloat] = (1.0, 10.0)
    #: (shape, rate) of the Gamma prior on the HierSentiment pooling precisions
    hs_precision_gamma: tuple[PositiveFloat, PositiveFloat] = (2.0, 0.1)
    #: hyperparameters held fixed instead of sampled, e.g. {"alpha_q": 1.0}
    fixed_hyperparameters: dict[str, PositiveFloat] = Field(default_factory=dict)

    @classmethod
    def from_dashboard(cls, rho_pos: float, rho_neg: float, **overrides) -> "PriorConfig":
        from feedback_quality.bayes.priors import informed_priors_from_dashboard

        r_pos_center, kappa_center = informed_priors_from_dashboard(rho_pos, rho_neg)
        return cls(
            informed_logrpos_center=math.log(r_pos_center),
            informed_logkappa_center=math.log(kappa_center),
            **overrides,
        )


class SamplerConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    chains: PositiveInt = DEFAULT_CHAINS
    draws: PositiveInt = DEFAULT_DRAWS
    tune: PositiveInt = DEFAULT_TUNE
    target_accept: float = Field(default=0.8, gt=0.0, lt=1.0)
    max_tree_depth: PositiveInt = DEFAULT_MAX_TREE_DEPTH
    divergence_energy_threshold: PositiveFloat = DEFAULT_DIVERGENCE_THRESHOLD
    seed: int = Field(default=0, ge=0, lt=2**64)
    #: worker processes for chains; None defers to settings
    workers: Optional[PositiveInt] = None


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    model: ModelVariant = ModelVariant.HIER_INFORMED
    chains: PositiveInt = DEFAULT_CHAINS
    draws: PositiveInt = DEFAULT_DRAWS
    tune: PositiveInt = DEFAULT_TUNE
    target_accept: Optional[float] = Field(default=None, gt=0.0, lt=1.0)
    max_tree_depth: PositiveInt = DEFAULT_MAX_TREE_DEPTH
    divergence_energy_threshold: PositiveFloat = DEFAULT_DIVERGENCE_THRESHOLD
    seed: int = Field(default=0, ge=0, lt=2**64)
    workers: Optional[PositiveInt] = None
    priors: PriorConfig = Field(default_factory=PriorConfig)

    @model_validator(mode="before")
    @classmethod
    def _parse_variant(cls, data):
        if isinstance(data, dict) and "model" in data:
            data = dict(data)
            data["model"] = ModelVariant.parse(data["model"])
        return data

    @property
    def effective_target_accept(self) -> float:
        if self.target_accept is not None:
            return self.target_accept
        return DEFAULT_TARGET_ACCEPT[self.model]

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(
            chains=self.chains,
            draws=self.draws,
            tune=self.tune,
            target_accept=self.effective_target_accept,
            max_tree_depth=self.max_tree_depth,
            divergence_energy_threshold=self.divergence_energy_threshold,
            seed=self.seed,
            workers=self.workers,
        )


def load_run_config(path: Union[str, Path]) -> RunConfig:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot read run config {path}: {e}", code="unreadable_config") from e
    return parse_run_config(payload)


def parse_run_config(payload: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(payload)
    except ValidationError as e:
        raise ConfigError(f"Invalid run config: {e}", code="invalid_config") from e
