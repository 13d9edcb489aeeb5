"""Experiment reports and their JSON / markdown renderings."""
from __future__ import annotations

import json
import math
from datetime import datetime
from pathlib import Path
from typing import Any, Optional, Union

from pydantic import BaseModel, ConfigDict, Field

from feedback_quality.core.errors import ConfigError
from feedback_quality.logger import logger

REPORT_FORMATS = ("json", "markdown")


class MethodEstimate(BaseModel):
    """One aggregate-quality estimate, traceable to its method, seed and config."""

    model_config = ConfigDict(frozen=True)

    method: str
    estimate: float
    ci: Optional[tuple[float, float]] = None
    abs_error: Optional[float] = None
    covers_truth: Optional[bool] = None
    seed: int
    config_hash: str

    @property
    def ci_width(self) -> Optional[float]:
        return None if self.ci is None else self.ci[1] - self.ci[0]


class RecoveryRow(BaseModel):
    cluster_id: str
    prevalence: float
    n: int
    m: int
    y: int
    naive_rate: Optional[float]
    q_star: Optional[float]
    #: method -> (median, lo, hi) of the cluster's quality posterior
    posterior: dict[str, tuple[float, float, float]] = Field(default_factory=dict)


class RuntimeInfo(BaseModel):
    """Everything that legitimately differs between two runs of the same spec."""

    started_at: datetime
    seconds: float
    workers: int
    python: str
    packages: dict[str, str] = Field(default_factory=dict)
    timings: dict[str, float] = Field(default_factory=dict)


class QualityReport(BaseModel):
    mode: str
    seed: int
    config_hash: str
    config: dict[str, Any]
    truth: Optional[dict[str, Any]] = None
    estimates: list[MethodEstimate] = Field(default_factory=list)
    convergence: dict[str, dict[str, Any]] = Field(default_factory=dict)
    loo: Optional[dict[str, Any]] = None
    flags: dict[str, list[str]] = Field(default_factory=dict)
    selection_ratio_spread: dict[str, float] = Field(default_factory=dict)
    recovery: list[RecoveryRow] = Field(default_factory=list)
    anchor: Optional[dict[str, Any]] = None
    sweep: list[dict[str, Any]] = Field(default_factory=list)
    coverage: Optional[dict[str, Any]] = None
    sensitivity: list[dict[str, Any]] = Field(default_factory=list)
    drift: list[dict[str, Any]] = Field(default_factory=list)
    runtime: Optional[RuntimeInfo] = None

    def estimate(self, method: str) -> MethodEstimate:
        for row in self.estimates:
            if row.method == method:
                return row
        raise KeyError(f"No estimate for method {method!r}")

    def payload(self, include_runtime: bool = True) -> dict:
        exclude = None if include_runtime else {"runtime"}
        return _finite(self.model_dump(mode="json", exclude=exclude))


def _finite(value):
    """Replace non-finite floats with None so every payload is strict JSON."""
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _finite(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite(v) for v in value]
    return value


def to_json(report: QualityReport, include_runtime: bool = True) -> str:
    return json.dumps(report.payload(include_runtime), indent=2, sort_keys=True, allow_nan=False)


def _fmt(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return f"{value:.3f}"
    if isinstance(value, (list, tuple)) and len(value) == 2 and all(isinstance(v, float) for v in value):
        return f"[{value[0]:.3f}, {value[1]:.3f}]"
    return str(value)


def _table(headers: list[str], rows: list[list]) -> list[str]:
    lines = ["| " + " | ".join(headers) + " |", "|" + "|".join("---" for _ in headers) + "|"]
    lines += ["| " + " | ".join(_fmt(v) for v in row) + " |" for row in rows]
    return lines


def to_markdown(report: QualityReport) -> str:
    lines = [f"# {report.mode} report", "", f"seed `{report.seed}`, config `{report.config_hash}`", ""]
    if report.truth is not None and "Q_star" in report.truth:
        lines += [f"True aggregate quality Q* = {report.truth['Q_star']:.4f}", ""]
    if report.estimates:
        lines += ["## Aggregate quality", ""]
        lines += _table(
            ["Method", "Estimate", "95% CI", "Abs. error", "Covers Q*"],
            [[e.method, e.estimate, e.ci, e.abs_error, e.covers_truth] for e in report.estimates],
        )
        lines.append("")
    if report.sweep:
        methods = [k for k in report.sweep[0]["abs_error"]]
        lines += ["## Selection-strength sweep (absolute error)", ""]
        lines += _table(
            ["kappa_max", "M/N"] + methods,
            [[float(row["kappa_max"]), row["feedback_rate"]] + [row["abs_error"][m] for m in methods]
             for row in report.sweep],
        )
        lines.append("")
    if report.loo is not None:
        lines += [f"## LOO comparison ({report.loo['mode']})", ""]
        lines += _table(
            ["Model", "elpd_loo", "delta elpd", "p_loo", "LOO weight"],
            [[r["model"], r["elpd_loo"], r["delta_elpd"], r["p_loo"], r["weight"]] for r in report.loo["rows"]],
        )
        lines.append("")
    if report.coverage is not None:
        lines += [f"## Coverage over {report.coverage['replicates']} replicates", ""]
        lines += _table(
            ["Method", "Coverage", "Wilson CI", "Median abs. error", "Median CI width", "Below Q*"],
            [[m, s["coverage"], s["coverage_interval"], s["median_abs_error"], s["median_ci_width"], s["below_truth"]]
             for m, s in report.coverage["summary"].items()],
        )
        lines.append("")
    if report.sensitivity:
        lines += ["## Prior sensitivity", ""]
        lines += _table(
            ["r_pos center", "kappa center", "Estimate", "95% CI", "Abs. error"],
            [[r["r_pos_center"], r["kappa_center"], r["estimate"], r["ci"], r["abs_error"]]
             for r in report.sensitivity],
        )
        lines.append("")
    if report.drift:
        lines += ["## Drift decisions", ""]
        lines += _table(
            ["Batch", "Action", "JSD", "Signals", "Alerted clusters"],
            [[d["index"], d["action"], d["jsd"], ", ".join(d["signals"]) or "-", ", ".join(d["alerted_clusters"]) or "-"]
             for d in report.drift],
        )
        lines.append("")
    return "\n".join(lines)


def emit_report(report: QualityReport, path: Union[str, Path], fmt: str = "json") -> Path:
    fmt = fmt.lower()
    if fmt in ("md", "markdown-table"):
        fmt = "markdown"
    if fmt not in REPORT_FORMATS:
        raise ConfigError(f"Invalid report format: {fmt}. Valid formats: {', '.join(REPORT_FORMATS)}",
                          code="unknown_format")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = to_json(report) if fmt == "json" else to_markdown(report)
    path.write_text(text + "\n", encoding="utf-8")
    logger.info(f"wrote {fmt} {report.mode} report to {path}")
    return path
