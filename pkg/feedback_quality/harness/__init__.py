from .report import MethodEstimate, QualityReport, RecoveryRow, RuntimeInfo, emit_report, to_json, to_markdown  # noqa: F401
from .experiments import (  # noqa: F401
    ExperimentMode,
    ExperimentSpec,
    derive_seed,
    parse_experiment_spec,
    run_coverage_study,
    run_drift_demo,
    run_experiment,
    run_headline,
    run_kappa_sweep,
    run_prior_sensitivity,
)
