"""CSV readers and writers for cluster statistics and interaction rows."""
from __future__ import annotations

from pathlib import Path
from typing import Iterable, Union

import pandas as pd

from feedback_quality.core.errors import DatasetValidationError
from feedback_quality.core.types import (
    ClusterStats,
    Dataset,
    InteractionRecord,
    validate_dataset,
)

CLUSTER_COLUMNS = ["cluster_id", "n", "m", "y"]
INTERACTION_COLUMNS = ["interaction_id", "cluster_id", "r", "f", "y_star"]

PathLike = Union[str, Path]


def _check_header(frame: pd.DataFrame, expected: list[str], path: PathLike) -> None:
    if list(frame.columns) != expected:
        raise DatasetValidationError(
            f"{path}: expected header {','.join(expected)}, got {','.join(map(str, frame.columns))}",
            code="bad_header",
        )


def _count(value, column: str, cluster_id) -> int:
    try:
        number = float(value)
    except (TypeError, ValueError):
        number = float("nan")
    if not number.is_integer():
        raise DatasetValidationError(
            f"cluster {cluster_id!r}: {column} must be a whole count, got {value!r}",
            code="non_integer_count",
            cluster_id=cluster_id,
        )
    return int(number)


def read_cluster_csv(path: PathLike) -> Dataset:
    frame = pd.read_csv(path, dtype={"cluster_id": str}, keep_default_na=False, encoding="utf-8")
    _check_header(frame, CLUSTER_COLUMNS, path)
    rows = [
        ClusterStats(
            cluster_id=row.cluster_id,
            n=_count(row.n, "n", row.cluster_id),
            m=_count(row.m, "m", row.cluster_id),
            y=_count(row.y, "y", row.cluster_id),
        )
        for row in frame.itertuples(index=False)
    ]
    return validate_dataset(rows)


def write_cluster_csv(dataset: Dataset, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(dataset.to_records(), columns=CLUSTER_COLUMNS)
    frame.to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
    return path


def _optional_flag(value) -> int | None:
    if value == "" or value is None:
        return None
    return int(value)


def read_interaction_csv(path: PathLike) -> list[InteractionRecord]:
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    _check_header(frame, INTERACTION_COLUMNS, path)
    return [
        InteractionRecord(
            interaction_id=row.interaction_id,
            cluster_id=row.cluster_id,
            r=int(row.r),
            f=_optional_flag(row.f),
            y_star=_optional_flag(row.y_star),
        )
        for row in frame.itertuples(index=False)
    ]


def write_interaction_csv(records: Iterable[InteractionRecord], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(
        [
            {
                "interaction_id": r.interaction_id,
                "cluster_id": r.cluster_id,
                "r": r.r,
                "f": "" if r.f is None else r.f,
                "y_star": "" if r.y_star is None else r.y_star,
            }
            for r in records
        ],
        columns=INTERACTION_COLUMNS,
    )
    frame.to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
    return path
