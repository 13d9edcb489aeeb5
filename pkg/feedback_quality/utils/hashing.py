"""Stable content hashes for configs and datasets."""
from __future__ import annotations

import hashlib
import json

from pydantic import BaseModel

HASH_LENGTH = 12


def canonical_json(payload) -> str:
    if isinstance(payload, BaseModel):
        payload = payload.model_dump(mode="json")
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)


def config_hash(payload) -> str:
    """Short sha256 of the canonical JSON form.

    >>> config_hash({"b": 1, "a": 2}) == config_hash({"a": 2, "b": 1})
    True
    """
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()[:HASH_LENGTH]


def dataset_hash(dataset) -> str:
    return config_hash(dataset.to_records())
