"""Draws files written by ``fit`` and read by ``compare``.

Two layouts are supported:

* ``*.json``: one document holding everything, draws inline.
* anything else (``*.bin`` by convention): raw little-endian float64 of shape
  [2, chain, draw, parameter] (constrained first, then unconstrained) next to a
  ``<name>.json`` sidecar that names the dimensions and carries the dataset,
  priors and sampler statistics needed to rebuild the model.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from feedback_quality.core.config import ModelVariant, PriorConfig
from feedback_quality.core.errors import ConfigError
from feedback_quality.core.types import ClusterStats, Dataset, validate_dataset
from feedback_quality.logger import logger
from feedback_quality.sampler.chains import PosteriorDraws
from feedback_quality.sampler.diagnostics import ConvergenceReport

SCHEMA_VERSION = 1
DTYPE = "<f8"

PathLike = Union[str, Path]


@dataclass
class SavedFit:
    variant: ModelVariant
    dataset: Dataset
    priors: PriorConfig
    draws: PosteriorDraws
    report: Optional[ConvergenceReport] = None
    seed: Optional[int] = None

    def build_model(self):
        from feedback_quality.bayes import build_model

        return build_model(self.variant, self.dataset, self.priors)


def sidecar_path(path: PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def _header(fit: SavedFit) -> dict:
    draws = fit.draws
    return {
        "schema_version": SCHEMA_VERSION,
        "variant": fit.variant.value,
        "seed": fit.seed,
        "dtype": DTYPE,
        "dims": ["space", "chain", "draw", "parameter"],
        "shape": [2, draws.n_chains, draws.n_draws, draws.dimension],
        "spaces": ["constrained", "unconstrained"],
        "param_names": draws.param_names,
        "dataset": fit.dataset.to_records(),
        "priors": fit.priors.model_dump(mode="json"),
        "step_size": draws.step_size.tolist(),
        "inv_mass": draws.inv_mass.tolist(),
        "stats": {name: values.tolist() for name, values in draws.stats.items()},
        "convergence": fit.report.model_dump(mode="json") if fit.report is not None else None,
    }


def save_draws(fit: SavedFit, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = _header(fit)
    stacked = np.stack([fit.draws.constrained, fit.draws.unconstrained]).astype(DTYPE)
    if path.suffix == ".json":
        header["values"] = stacked.tolist()
        path.write_text(json.dumps(header), encoding="utf-8")
    else:
        stacked.tofile(path)
        sidecar_path(path).write_text(json.dumps(header, indent=2), encoding="utf-8")
    logger.info(f"wrote {fit.variant.value} draws {list(stacked.shape)} to {path}")
    return path


def load_draws(path: PathLike) -> SavedFit:
    path = Path(path)
    try:
        if path.suffix == ".json":
            header = json.loads(path.read_text(encoding="utf-8"))
            values = np.asarray(header.pop("values"), dtype=float)
        else:
            header = json.loads(sidecar_path(path).read_text(encoding="utf-8"))
            values = np.fromfile(path, dtype=header.get("dtype", DTYPE))
    except (OSError, KeyError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot read draws file {path}: {e}", code="unreadable_draws") from e

    if header.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(
            f"{path}: unsupported schema_version {header.get('schema_version')}", code="unreadable_draws"
        )
    shape = tuple(header["shape"])
    if values.size != int(np.prod(shape)):
        raise ConfigError(f"{path}: expected {shape} values, found {values.size}", code="unreadable_draws")
    values = values.reshape(shape)

    stats = {name: np.asarray(v) for name, v in header["stats"].items()}
    if "divergent" in stats:
        stats["divergent"] = stats["divergent"].astype(bool)
    draws = PosteriorDraws(
        constrained=values[0],
        unconstrained=values[1],
        param_names=list(header["param_names"]),
        stats=stats,
        step_size=np.asarray(header["step_size"], dtype=float),
        inv_mass=np.asarray(header["inv_mass"], dtype=float),
        variant=header["variant"],
    )
    report = header.get("convergence")
    return SavedFit(
        variant=ModelVariant.parse(header["variant"]),
        dataset=validate_dataset(ClusterStats(**row) for row in header["dataset"]),
        priors=PriorConfig.model_validate(header["priors"]),
        draws=draws,
        report=ConvergenceReport.model_validate(report) if report else None,
        seed=header.get("seed"),
    )
