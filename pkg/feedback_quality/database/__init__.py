from .db_core import Base, SessionLocal, get_db, get_engine, init_engine  # noqa: F401
