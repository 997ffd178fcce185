"""Bidirectional session grouping and encrypted-packet selection."""

from __future__ import annotations

import socket
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

from lim.capture import PacketRecord

PACKETS_PER_ROW = 5

TLS_APPLICATION_DATA = 0x17
TLS_LEGACY_VERSION = b"\x03\x03"
# RFC 8446 5.2: TLSCiphertext length must not exceed 2^14 + 256
TLS_MAX_CIPHERTEXT = 16640


class Endpoint(NamedTuple):
    ip: str
    port: int

    def sort_key(self) -> tuple[bytes, int]:
        return socket.inet_aton(self.ip), self.port


@dataclass(frozen=True)
class FlowKey:
    endpoint_lo: Endpoint
    endpoint_hi: Endpoint
    protocol: int = 6

    @classmethod
    def of(cls, a: tuple[str, int], b: tuple[str, int], protocol: int = 6) -> "FlowKey":
        """Canonical key for a connection between ``a`` and ``b``, in either direction."""
        a, b = Endpoint(*a), Endpoint(*b)
        if b.sort_key() < a.sort_key():
            a, b = b, a
        return cls(a, b, protocol)

    @classmethod
    def from_packet(cls, pkt: PacketRecord) -> "FlowKey":
        return cls.of((pkt.src_ip, pkt.src_port), (pkt.dst_ip, pkt.dst_port), pkt.protocol)

    def canonical(self) -> "FlowKey":
        return FlowKey.of(self.endpoint_lo, self.endpoint_hi, self.protocol)


@dataclass
class Session:
    key: FlowKey
    packets: list[PacketRecord] = field(default_factory=list)
    label: str | None = None


def sessionize(packets: Iterable[PacketRecord]) -> list[Session]:
    """Group packets by canonical flow key.

    Packets are stably sorted by timestamp first, so each session is
    time-ordered with file order breaking ties, and sessions come out in
    order of their first packet. There is no idle timeout.
    """
    ordered = sorted(packets, key=lambda p: p.ts_us)
    sessions: dict[FlowKey, Session] = {}
    for pkt in ordered:
        key = FlowKey.from_packet(pkt)
        sess = sessions.get(key)
        if sess is None:
            sess = sessions[key] = Session(key)
        sess.packets.append(pkt)
    return list(sessions.values())


def is_encrypted_payload(packet: PacketRecord) -> bool:
    """True iff the segment starts a TLS application_data record.

    Only the 5-byte record header is read; the record body is never touched.
    A segment that continues a record begun earlier is not recognized.
    """
    head = packet.payload[:5]
    if len(head) < 5 or head[0] != TLS_APPLICATION_DATA or head[1:3] != TLS_LEGACY_VERSION:
        return False
    length = (head[3] << 8) | head[4]
    return 1 <= length <= TLS_MAX_CIPHERTEXT


def select_netmatrix_packets(session: Session) -> tuple[PacketRecord, ...] | None:
    """First five encrypted-payload packets in arrival order, or ``None``
    when the session has fewer than five."""
    picked = []
    for pkt in session.packets:
        if is_encrypted_payload(pkt):
            picked.append(pkt)
            if len(picked) == PACKETS_PER_ROW:
                return tuple(picked)
    return None
