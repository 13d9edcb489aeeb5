from datetime import datetime
from typing import Optional

from pydantic import BaseModel
from sqlalchemy import JSON, Column, DateTime, Float, Integer, String
from sqlalchemy.orm import Session

from feedback_quality.database import Base
from feedback_quality.logger import logger
from feedback_quality.utils.model_utils import current_time, new_id

STATUS_QUEUED = "queued"
STATUS_RUNNING = "running"
STATUS_COMPLETED = "completed"
STATUS_FAILED = "failed"
EXPERIMENT_STATUSES = (STATUS_QUEUED, STATUS_RUNNING, STATUS_COMPLETED, STATUS_FAILED)


class ExperimentRunResponse(BaseModel):
    id: str
    mode: str
    config_hash: str
    seed: int
    status: str
    created_at: datetime
    updated_at: datetime
    completed_at: Optional[datetime]
    duration: float
    report: Optional[dict]
    error: Optional[str]

    class Config:
        from_attributes = True  # Enables SQLAlchemy model compatibility


class ExperimentRun(Base):
    __tablename__ = "experiment_runs"

    id = Column(String, primary_key=True, default=new_id)
    mode = Column(String, nullable=False, index=True)
    config_hash = Column(String, nullable=False, index=True)
    seed = Column(Integer, nullable=False)
    status = Column(String, nullable=False, default=STATUS_QUEUED, index=True)
    created_at = Column(DateTime(timezone=True), nullable=False, default=current_time)
    updated_at = Column(DateTime(timezone=True), nullable=False, default=current_time, onupdate=current_time)
    completed_at = Column(DateTime(timezone=True), nullable=True)
    duration = Column(Float, default=0.0)
    report = Column(JSON, nullable=True)
    error = Column(String, nullable=True)

    def start(self, db: Session):
        self._set_status(STATUS_RUNNING, db)
        logger.info(f"Experiment {self.id} ({self.mode}) running")

    def complete(self, report: dict, db: Session):
        """
        Mark the experiment as complete and store its report payload.
        """
        self.report = report
        self.completed_at = current_time()
        self.duration = (self.completed_at - _aware(self.created_at)).total_seconds()
        self._set_status(STATUS_COMPLETED, db)
        logger.info(f"Experiment {self.id} ({self.mode}) completed in {self.duration:.1f}s")

    def fail(self, error: str, db: Session):
        self.error = error
        self.completed_at = current_time()
        self._set_status(STATUS_FAILED, db)
        logger.warning(f"Experiment {self.id} ({self.mode}) failed: {error}")

    def _set_status(self, status: str, db: Session):
        if status not in EXPERIMENT_STATUSES:
            raise ValueError(f"Invalid status: {status}. Valid statuses: {', '.join(EXPERIMENT_STATUSES)}")
        self.status = status
        self.updated_at = current_time()
        db.add(self)
        db.commit()

    def to_dict(self):
        return {
            "id": self.id,
            "mode": self.mode,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "status": self.status,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
            "completed_at": self.completed_at,
            "duration": self.duration,
            "report": self.report,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, data):
        valid_keys = {column.name for column in cls.__table__.columns}
        filtered_data = {key: value for key, value in data.items() if key in valid_keys}
        if len(filtered_data) != len(data):
            invalid_keys = set(data) - valid_keys
            logger.warning(f"Invalid keys: {invalid_keys}")
        return cls(**filtered_data)


def _aware(moment: datetime) -> datetime:
    # SQLite hands back naive datetimes even for timezone-aware columns
    if moment.tzinfo is None:
        return moment.replace(tzinfo=current_time().tzinfo)
    return moment
