"""Capture files to labeled NetMatrix rows."""

from __future__ import annotations

import logging
import os
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from lim.capture import CaptureError, PacketRecord, read_capture
from lim.netmatrix import NetMatrixRow, build_row, rows_to_matrix
from lim.sessionizer import FlowKey, sessionize, select_netmatrix_packets
from lim.synth import ManifestEntry

log = logging.getLogger(__name__)

CAPTURE_SUFFIXES = (".pcap", ".cap")


@dataclass
class ExtractionStats:
    files: int = 0
    files_failed: int = 0
    packets_parsed: int = 0
    packets_skipped: int = 0
    skip_reasons: Counter = field(default_factory=Counter)
    sessions: int = 0
    dropped_insufficient: int = 0
    dropped_unlabeled: int = 0
    rows: int = 0

    def merge(self, other: "ExtractionStats") -> None:
        for name in ("files", "files_failed", "packets_parsed", "packets_skipped", "sessions",
                     "dropped_insufficient", "dropped_unlabeled", "rows"):
            setattr(self, name, getattr(self, name) + getattr(other, name))
        self.skip_reasons.update(other.skip_reasons)

    def to_dict(self) -> dict:
        d = {k: v for k, v in vars(self).items() if k != "skip_reasons"}
        d["skip_reasons"] = dict(sorted(self.skip_reasons.items()))
        return d


@dataclass
class Extracted:
    keys: list[FlowKey]
    rows: list[NetMatrixRow]
    labels: list[str]

    @property
    def X(self) -> np.ndarray:
        return rows_to_matrix(self.rows)


def manifest_index(entries: Iterable[ManifestEntry]) -> dict[FlowKey, str]:
    return {FlowKey.of((e.src_ip, e.src_port), (e.dst_ip, e.dst_port)): e.label for e in entries}


def extract_records(
    records: Sequence[PacketRecord],
    *,
    label: str | None = None,
    labels: Mapping[FlowKey, str] | None = None,
    stats: ExtractionStats | None = None,
) -> Extracted:
    """Sessionize ``records`` and encode every session with five encrypted
    packets. A session takes ``labels[key]`` if given, else ``label``;
    sessions missing from ``labels`` are dropped when ``label`` is None."""
    stats = stats if stats is not None else ExtractionStats()
    out = Extracted([], [], [])
    for sess in sessionize(records):
        stats.sessions += 1
        selected = select_netmatrix_packets(sess)
        if selected is None:
            stats.dropped_insufficient += 1
            continue
        lab = labels.get(sess.key, label) if labels is not None else label
        if lab is None:
            if labels is not None:
                stats.dropped_unlabeled += 1
                continue
            lab = ""
        out.keys.append(sess.key)
        out.rows.append(build_row(selected))
        out.labels.append(lab)
        stats.rows += 1
    return out


def extract_file(path, *, label=None, labels=None, stats: ExtractionStats | None = None) -> Extracted:
    stats = stats if stats is not None else ExtractionStats()
    parsed = read_capture(path)
    stats.files += 1
    stats.packets_parsed += len(parsed)
    stats.packets_skipped += parsed.skip_count
    stats.skip_reasons.update({r.value: n for r, n in parsed.skipped.items()})
    return extract_records(parsed.records, label=label, labels=labels, stats=stats)


def expand_inputs(inputs: Iterable[str | os.PathLike]) -> list[Path]:
    """Files as given; directories searched recursively for capture files.
    Sorted by path for a deterministic merge order."""
    found = set()
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            found.update(q for q in p.rglob("*") if q.is_file() and q.suffix.lower() in CAPTURE_SUFFIXES)
        else:
            found.add(p)
    return sorted(found)


def extract_paths(
    paths: Sequence[str | os.PathLike],
    *,
    label_from_dirname: bool = False,
    labels: Mapping[FlowKey, str] | None = None,
) -> tuple[Extracted, ExtractionStats]:
    """Extract every capture; unreadable files are logged and counted."""
    stats = ExtractionStats()
    out = Extracted([], [], [])
    for path in expand_inputs(paths):
        label = Path(path).parent.name if label_from_dirname else None
        try:
            part = extract_file(path, label=label, labels=labels, stats=stats)
        except (OSError, CaptureError) as e:
            log.warning("skipping %s: %s", path, e)
            stats.files += 1
            stats.files_failed += 1
            continue
        out.keys += part.keys
        out.rows += part.rows
        out.labels += part.labels
    return out, stats
