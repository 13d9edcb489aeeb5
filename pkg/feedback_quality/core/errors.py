"""Exception hierarchy for feedback_quality.

Every error raised on purpose by the package derives from
:class:`FeedbackQualityError`. Validation-style errors also derive from
``ValueError`` so callers that only know about builtin exceptions still catch
them.
"""
from __future__ import annotations

from typing import Any, Optional


class FeedbackQualityError(Exception):
    """Base class. ``code`` is a stable machine-readable tag used by the CLI."""

    code: str = "error"

    def __init__(self, message: str, *, code: Optional[str] = None):
        super().__init__(message)
        if code is not None:
            self.code = code

    def to_dict(self) -> dict:
        return {"error": type(self).__name__, "code": self.code, "message": str(self)}


class DatasetValidationError(FeedbackQualityError, ValueError):
    code = "invalid_dataset"

    def __init__(self, message: str, *, code: str, cluster_id: Any = None):
        super().__init__(message, code=code)
        self.cluster_id = cluster_id

    def to_dict(self) -> dict:
        out = super().to_dict()
        if self.cluster_id is not None:
            out["cluster_id"] = str(self.cluster_id)
        return out


class ConfigError(FeedbackQualityError, ValueError):
    code = "invalid_config"


class EstimationError(FeedbackQualityError, ValueError):
    code = "estimation_failed"


class ModelError(FeedbackQualityError, ValueError):
    code = "model_error"


class SamplerError(FeedbackQualityError, RuntimeError):
    code = "sampler_error"

    def __init__(self, message: str, *, code: Optional[str] = None, diagnostics: Optional[dict] = None):
        super().__init__(message, code=code)
        self.diagnostics = diagnostics or {}

    def to_dict(self) -> dict:
        out = super().to_dict()
        out["diagnostics"] = self.diagnostics
        return out


class EvaluationError(FeedbackQualityError, ValueError):
    code = "evaluation_error"
