from pathlib import Path
from typing import Optional

from dotenv import load_dotenv
from sqlalchemy import create_engine
from sqlalchemy.orm import declarative_base, sessionmaker
from sqlalchemy.pool import StaticPool

from feedback_quality.core.settings import get_settings
from feedback_quality.logger import logger

load_dotenv()

Base = declarative_base()
SessionLocal = sessionmaker()

_engine = None


def _is_memory(url: str) -> bool:
    return url in ("sqlite://", "sqlite:///:memory:")


def init_engine(url: Optional[str] = None):
    """Bind the session factory to ``url`` (default: the configured database) and create tables."""
    global _engine
    url = url or get_settings().database_url
    kwargs = {"pool_pre_ping": True}
    if url.startswith("sqlite"):
        kwargs["connect_args"] = {"check_same_thread": False}
        if _is_memory(url):
            # one shared connection, or every session would see an empty database
            kwargs["poolclass"] = StaticPool
        else:
            Path(url.removeprefix("sqlite:///")).expanduser().parent.mkdir(parents=True, exist_ok=True)
    _engine = create_engine(url, **kwargs)
    SessionLocal.configure(bind=_engine)

    import feedback_quality.models  # noqa: F401  (registers the tables on Base)

    # Don't fail the caller if the database is unreachable; writes will still error later.
    try:
        Base.metadata.create_all(bind=_engine)
    except Exception as _e:
        logger.warning(f"feedback_quality.database: skipped create_all: {_e}")
    return _engine


def get_engine():
    if _engine is None:
        init_engine()
    return _engine


# Dependency to get database session
def get_db():
    get_engine()
    db = SessionLocal()
    try:
        yield db
    finally:
        db.close()
