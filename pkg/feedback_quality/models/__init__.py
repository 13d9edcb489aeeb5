from .fit_run import FitRun, FitRunResponse
from .experiment_run import (
    ExperimentRun, ExperimentRunResponse,
    EXPERIMENT_STATUSES, STATUS_QUEUED, STATUS_RUNNING, STATUS_COMPLETED, STATUS_FAILED,
)
from .drift_checkpoint import DriftCheckpoint
