import pytest

from feedback_quality.core.types import ClusterStats, validate_dataset
from feedback_quality.database import SessionLocal, init_engine


@pytest.fixture
def db():
    """Session on a fresh in-memory SQLite database."""
    engine = init_engine("sqlite://")
    session = SessionLocal()
    try:
        yield session
    finally:
        session.close()
        engine.dispose()


@pytest.fixture
def small_dataset():
    return validate_dataset([
        ClusterStats(cluster_id="a", n=120, m=14, y=9),
        ClusterStats(cluster_id="b", n=300, m=40, y=18),
        ClusterStats(cluster_id="c", n=80, m=6, y=5),
        ClusterStats(cluster_id="d", n=200, m=25, y=10),
    ])
