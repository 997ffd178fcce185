"""The 30-byte per-session NetMatrix row and its 15-value feature view.

Per selected packet: IP total length (2 bytes), TTL (1 byte), inter-arrival
time since the previous selected packet (3 bytes, microseconds, saturating).
Multi-byte fields are big-endian.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from lim.capture import PacketRecord
from lim.sessionizer import PACKETS_PER_ROW

ROW_BYTES = 30
IAT_MAX_US = 0xFFFFFF  # 16_777_215 us, ~16.78 s
FEATURE_NAMES = tuple(f"{name}{i}" for i in range(1, 6) for name in ("len", "ttl", "iat"))

assert ROW_BYTES == PACKETS_PER_ROW * (2 + 1 + 3)


class WrongLength(ValueError):
    pass


@dataclass(frozen=True)
class NetMatrixRow:
    total_length: tuple[int, ...]
    ttl: tuple[int, ...]
    iat_us: tuple[int, ...]

    def __post_init__(self):
        for name, hi in (("total_length", 0xFFFF), ("ttl", 0xFF), ("iat_us", IAT_MAX_US)):
            vals = getattr(self, name)
            if len(vals) != PACKETS_PER_ROW:
                raise ValueError(f"{name} needs {PACKETS_PER_ROW} values, got {len(vals)}")
            if any(not 0 <= v <= hi for v in vals):
                raise ValueError(f"{name} out of range 0..{hi}: {vals}")

    @classmethod
    def zeros(cls) -> "NetMatrixRow":
        z = (0,) * PACKETS_PER_ROW
        return cls(z, z, z)


def build_row(selected: Sequence[PacketRecord]) -> NetMatrixRow:
    if len(selected) != PACKETS_PER_ROW:
        raise ValueError(f"expected {PACKETS_PER_ROW} packets, got {len(selected)}")
    iats = [0]
    for prev, cur in zip(selected, selected[1:]):
        delta = cur.ts_us - prev.ts_us
        if delta < 0:
            raise ValueError("selected packets are not time-ordered")
        iats.append(min(delta, IAT_MAX_US))
    return NetMatrixRow(
        total_length=tuple(p.ip_total_length for p in selected),
        ttl=tuple(p.ttl for p in selected),
        iat_us=tuple(iats),
    )


def serialize_row(row: NetMatrixRow) -> bytes:
    out = bytearray()
    for length, ttl, iat in zip(row.total_length, row.ttl, row.iat_us):
        out += length.to_bytes(2, "big")
        out.append(ttl)
        out += iat.to_bytes(3, "big")
    assert len(out) == ROW_BYTES
    return bytes(out)


def deserialize_row(data: bytes) -> NetMatrixRow:
    # iat of the first packet may be nonzero here even though build_row never emits it
    if len(data) != ROW_BYTES:
        raise WrongLength(f"a NetMatrix row is {ROW_BYTES} bytes, got {len(data)}")
    lengths, ttls, iats = [], [], []
    for off in range(0, ROW_BYTES, 6):
        lengths.append(int.from_bytes(data[off : off + 2], "big"))
        ttls.append(data[off + 2])
        iats.append(int.from_bytes(data[off + 3 : off + 6], "big"))
    return NetMatrixRow(tuple(lengths), tuple(ttls), tuple(iats))


def to_features(row: NetMatrixRow) -> np.ndarray:
    """Packet-major flattening: ``[len1, ttl1, iat1, ..., len5, ttl5, iat5]``."""
    return np.array(
        [v for trio in zip(row.total_length, row.ttl, row.iat_us) for v in trio], dtype=np.int64
    )


def from_features(vec) -> NetMatrixRow:
    vals = [int(v) for v in vec]
    if len(vals) != 3 * PACKETS_PER_ROW:
        raise ValueError(f"expected {3 * PACKETS_PER_ROW} features, got {len(vals)}")
    return NetMatrixRow(tuple(vals[0::3]), tuple(vals[1::3]), tuple(vals[2::3]))


def rows_to_matrix(rows: Sequence[NetMatrixRow]) -> np.ndarray:
    if not rows:
        return np.zeros((0, 3 * PACKETS_PER_ROW), dtype=np.int64)
    return np.stack([to_features(r) for r in rows])
