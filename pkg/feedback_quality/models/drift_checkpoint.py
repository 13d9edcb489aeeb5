"""SQLAlchemy model for saved drift-monitor state.

One row per named monitor. ``payload`` is the monitor's serialized state;
``schema_version`` lets a reader refuse a payload whose shape it does not know
instead of restoring a half-understood monitor.
"""

from sqlalchemy import JSON, Column, DateTime, Integer, String
from sqlalchemy.orm import Session

from feedback_quality.database import Base
from feedback_quality.logger import logger
from feedback_quality.utils.model_utils import current_time


class DriftCheckpoint(Base):
    __tablename__ = "drift_checkpoints"

    name = Column(String, primary_key=True)
    schema_version = Column(Integer, nullable=False, default=1)
    payload = Column(JSON, nullable=False)
    updated_at = Column(DateTime(timezone=True), nullable=False, default=current_time, onupdate=current_time)

    @classmethod
    def upsert(cls, db: Session, name: str, payload: dict) -> "DriftCheckpoint":
        record = db.get(cls, name)
        if record is None:
            record = cls(name=name)
            db.add(record)
        record.schema_version = payload["schema_version"]
        record.payload = payload["state"]
        record.updated_at = current_time()
        db.commit()
        logger.info(f"Saved drift checkpoint {name!r} (schema v{record.schema_version})")
        return record

    def to_dict(self):
        return {
            "name": self.name,
            "schema_version": self.schema_version,
            "payload": self.payload,
            "updated_at": self.updated_at,
        }
