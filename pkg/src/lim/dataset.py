"""Feature dataset files: CSV (one NetMatrix row per line) and the packed
30-byte binary form with a sidecar label file."""

from __future__ import annotations

import csv
import os
from typing import Sequence

import numpy as np

from lim.netmatrix import FEATURE_NAMES, IAT_MAX_US, ROW_BYTES, NetMatrixRow, deserialize_row, from_features, serialize_row

HEADER = (*FEATURE_NAMES, "label")
COMMENT = f"# netmatrix v1: len=IP total length (bytes), ttl=IP TTL, iat=microseconds since previous selected packet, saturating at {IAT_MAX_US}"


class SchemaError(ValueError):
    pass


def write_features_csv(path: str | os.PathLike, X: np.ndarray, labels: Sequence[str]) -> None:
    X = np.asarray(X)
    if len(X) != len(labels):
        raise ValueError(f"{len(X)} rows but {len(labels)} labels")
    with open(path, "w", newline="") as fh:
        fh.write(COMMENT + "\n")
        w = csv.writer(fh, quoting=csv.QUOTE_NONNUMERIC, lineterminator="\n")
        fh.write(",".join(HEADER) + "\n")
        for row, label in zip(X.tolist(), labels):
            w.writerow([int(v) for v in row] + [str(label)])


def read_features_csv(path: str | os.PathLike) -> tuple[np.ndarray, list[str]]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != HEADER:
        raise SchemaError(f"{path}: expected header {','.join(HEADER)}")
    rows, labels = [], []
    for lineno, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != len(HEADER):
            raise SchemaError(f"{path}:{lineno}: expected {len(HEADER)} fields, got {len(rec)}")
        try:
            rows.append([int(v) for v in rec[:-1]])
        except ValueError:
            raise SchemaError(f"{path}:{lineno}: non-integer feature value") from None
        labels.append(rec[-1])
    X = np.array(rows, dtype=np.int64).reshape(-1, len(FEATURE_NAMES))
    return X, labels


def labels_path(path: str | os.PathLike) -> str:
    return os.fspath(path) + ".labels"


def write_binary(path: str | os.PathLike, X: np.ndarray, labels: Sequence[str]) -> None:
    """Concatenated 30-byte rows at ``path``, one label per line at ``path.labels``."""
    with open(path, "wb") as fh:
        for row in np.asarray(X):
            fh.write(serialize_row(from_features(row)))
    with open(labels_path(path), "w") as fh:
        for label in labels:
            fh.write(f"{label}\n")


def read_binary(path: str | os.PathLike) -> tuple[list[NetMatrixRow], list[str]]:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) % ROW_BYTES:
        raise SchemaError(f"{path}: size {len(data)} is not a multiple of {ROW_BYTES}")
    rows = [deserialize_row(data[i : i + ROW_BYTES]) for i in range(0, len(data), ROW_BYTES)]
    labels = []
    if os.path.exists(labels_path(path)):
        with open(labels_path(path)) as fh:
            labels = [ln.rstrip("\n") for ln in fh]
    return rows, labels
