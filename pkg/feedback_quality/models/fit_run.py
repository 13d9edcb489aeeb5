from datetime import datetime
from typing import Optional

from pydantic import BaseModel
from sqlalchemy import JSON, Column, DateTime, Float, Integer, String
from sqlalchemy.orm import Session

from feedback_quality.database import Base
from feedback_quality.logger import logger
from feedback_quality.utils.model_utils import current_time, new_id


class FitRunResponse(BaseModel):
    id: str
    variant: str
    dataset_hash: str
    config_hash: str
    seed: int
    created_at: datetime
    duration: float
    chains: int
    draws: int
    convergence: Optional[dict]
    aggregate: Optional[dict]
    draws_path: Optional[str]

    class Config:
        from_attributes = True  # Enables SQLAlchemy model compatibility


class FitRun(Base):
    __tablename__ = "fit_runs"

    id = Column(String, primary_key=True, default=new_id)
    variant = Column(String, nullable=False, index=True)
    dataset_hash = Column(String, nullable=False, index=True)
    config_hash = Column(String, nullable=False, index=True)
    seed = Column(Integer, nullable=False)
    created_at = Column(DateTime(timezone=True), nullable=False, default=current_time)
    duration = Column(Float, default=0.0)
    chains = Column(Integer, nullable=False)
    draws = Column(Integer, nullable=False)
    convergence = Column(JSON, nullable=True)
    aggregate = Column(JSON, nullable=True)
    draws_path = Column(String, nullable=True)

    def to_dict(self):
        return {
            "id": self.id,
            "variant": self.variant,
            "dataset_hash": self.dataset_hash,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "created_at": self.created_at,
            "duration": self.duration,
            "chains": self.chains,
            "draws": self.draws,
            "convergence": self.convergence,
            "aggregate": self.aggregate,
            "draws_path": self.draws_path,
        }

    @classmethod
    def from_dict(cls, data):
        """
        Create a FitRun from a dictionary, dropping keys that are not columns.
        """
        valid_keys = {column.name for column in cls.__table__.columns}
        filtered_data = {key: value for key, value in data.items() if key in valid_keys}
        if len(filtered_data) != len(data):
            invalid_keys = set(data) - valid_keys
            logger.warning(f"Invalid keys: {invalid_keys}")
        return cls(**filtered_data)

    @classmethod
    def record(cls, db: Session, **fields) -> "FitRun":
        run = cls.from_dict(fields)
        db.add(run)
        db.commit()
        db.refresh(run)
        logger.info(f"Recorded {run.variant} fit {run.id} (config {run.config_hash}, seed {run.seed})")
        return run
