import uuid
from datetime import datetime, timezone


def current_time():
    return datetime.now(timezone.utc)


def new_id() -> str:
    return str(uuid.uuid4())
