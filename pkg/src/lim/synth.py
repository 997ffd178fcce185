"""Seeded synthetic TLS-over-TCP captures with class-conditional
length / TTL / timing distributions.

Three independent random streams are used so tests can vary one aspect of
a capture while holding the rest fixed:

* the main stream (``seed``) draws session layout, lengths and timings;
* ``payload_seed`` fills encrypted record bodies;
* ``header_seed`` fills header noise (IP-ID, sequence/ack numbers, TCP
  timestamp option values).
"""

from __future__ import annotations

import csv
import ipaddress
import json
import os
import struct
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from lim.capture import PacketRecord, encode_frame, write_pcap

IP_HEADER = 20
TCP_HEADER = 32  # 20 + NOP, NOP, timestamp option
TLS_RECORD_HEADER = 5
MIN_LENGTH, MAX_LENGTH = 60, 1500
FLAGS_PSH_ACK = 0x18
FLAGS_ACK = 0x10
BASE_TIME_US = 1_700_000_000 * 1_000_000
START_WINDOW_US = 60 * 1_000_000
MANIFEST_FIELDS = ("src_ip", "src_port", "dst_ip", "dst_port", "label")


class InvalidProfile(ValueError):
    pass


@dataclass(frozen=True)
class ClassProfile:
    name: str
    length_mean: float
    length_stddev: float
    ttl: int
    iat_mean_us: float
    iat_stddev_us: float
    packets_per_session: int = 8
    handshake_packets: int = 2

    def validate(self) -> None:
        if not self.name:
            raise InvalidProfile("profile name must be non-empty")
        if self.length_stddev < 0 or self.iat_stddev_us < 0:
            raise InvalidProfile(f"{self.name}: standard deviations must be >= 0")
        if not 0 <= self.ttl <= 255:
            raise InvalidProfile(f"{self.name}: ttl must be in 0..255")
        if self.packets_per_session < 5:
            raise InvalidProfile(f"{self.name}: packets_per_session must be >= 5")
        if self.handshake_packets < 0:
            raise InvalidProfile(f"{self.name}: handshake_packets must be >= 0")
        if not all(np.isfinite([self.length_mean, self.length_stddev, self.iat_mean_us, self.iat_stddev_us])):
            raise InvalidProfile(f"{self.name}: distribution parameters must be finite")


@dataclass(frozen=True)
class ManifestEntry:
    src_ip: str
    src_port: int
    dst_ip: str
    dst_port: int
    label: str


@dataclass(frozen=True)
class SyntheticPacket:
    record: PacketRecord
    ip_id: int
    seq: int
    ack: int
    tcp_options: bytes


def _stream(seed, fallback: np.random.SeedSequence) -> np.random.Generator:
    return np.random.default_rng(fallback if seed is None else seed)


def _tls_payload(rng: np.random.Generator, content_type: int, total_length: int) -> bytes:
    body = total_length - IP_HEADER - TCP_HEADER - TLS_RECORD_HEADER
    return struct.pack("!BHH", content_type, 0x0303, body) + rng.bytes(body)


def generate_packets(
    profiles: Sequence[ClassProfile],
    sessions_per_class: int,
    seed: int = 42,
    *,
    payload_seed: int | None = None,
    header_seed: int | None = None,
    interleave_acks: bool = False,
) -> tuple[list[SyntheticPacket], list[ManifestEntry]]:
    """Synthesize every packet of every session, merged in timestamp order.

    With ``interleave_acks`` a pure ACK in the reverse direction follows each
    application-data packet, halfway to the next one.
    """
    if not profiles:
        raise InvalidProfile("need at least one profile")
    if sessions_per_class < 1:
        raise InvalidProfile("sessions_per_class must be >= 1")
    for p in profiles:
        p.validate()
    if len({p.name for p in profiles}) != len(profiles):
        raise InvalidProfile("profile names must be unique")

    main_ss, payload_ss, header_ss = np.random.SeedSequence(seed).spawn(3)
    rng = np.random.default_rng(main_ss)
    prng = _stream(payload_seed, payload_ss)
    hrng = _stream(header_seed, header_ss)

    packets: list[tuple[int, int, int, SyntheticPacket]] = []
    manifest: list[ManifestEntry] = []
    n_sessions = 0
    for class_index, prof in enumerate(profiles):
        for _ in range(sessions_per_class):
            sid = n_sessions
            n_sessions += 1
            client = (str(ipaddress.IPv4Address(0x0A000000 + 1 + sid)), 49152 + sid % 16384)
            server = (f"198.18.{class_index % 256}.{1 + class_index // 256}", 443)
            manifest.append(ManifestEntry(client[0], client[1], server[0], server[1], prof.name))
            seq = {client: int(hrng.integers(2**32)), server: int(hrng.integers(2**32))}
            ts = BASE_TIME_US + int(rng.integers(START_WINDOW_US))
            order = 0

            def emit(src, dst, length, flags, payload):
                nonlocal order
                rec = PacketRecord(
                    ts_us=ts, src_ip=src[0], dst_ip=dst[0], src_port=src[1], dst_port=dst[1],
                    protocol=6, ip_total_length=length, ttl=prof.ttl, tcp_flags=flags, payload=payload,
                )
                opts = b"\x01\x01\x08\x0a" + struct.pack("!II", *hrng.integers(2**32, size=2).tolist())
                pkt = SyntheticPacket(rec, int(hrng.integers(65536)), seq[src], seq[dst], opts)
                seq[src] = (seq[src] + len(payload)) % 2**32
                packets.append((ts, sid, order, pkt))
                order += 1

            for h in range(prof.handshake_packets):
                src, dst = (client, server) if h % 2 == 0 else (server, client)
                length = int(rng.integers(120, 600))
                emit(src, dst, length, FLAGS_PSH_ACK, _tls_payload(prng, 0x16, length))
                ts += int(rng.integers(100, 2000))

            n = prof.packets_per_session
            lengths = np.clip(np.rint(rng.normal(prof.length_mean, prof.length_stddev, n)), MIN_LENGTH, MAX_LENGTH)
            iats = np.clip(np.rint(rng.normal(prof.iat_mean_us, prof.iat_stddev_us, n)), 1, None)
            to_server = rng.random(n) < 0.5
            for i in range(n):
                if i:
                    ts += int(iats[i])
                src, dst = (client, server) if to_server[i] else (server, client)
                length = int(lengths[i])
                emit(src, dst, length, FLAGS_PSH_ACK, _tls_payload(prng, 0x17, length))
                if interleave_acks and i + 1 < n:
                    saved = ts
                    ts += int(iats[i + 1]) // 2
                    emit(dst, src, IP_HEADER + TCP_HEADER, FLAGS_ACK, b"")
                    ts = saved

    packets.sort(key=lambda t: t[:3])
    return [p for *_, p in packets], manifest


def generate_capture(
    profiles: Sequence[ClassProfile],
    sessions_per_class: int,
    seed: int = 42,
    **kwargs,
) -> tuple[bytes, list[ManifestEntry]]:
    """Return ``(pcap_bytes, manifest)``; see :func:`generate_packets`."""
    pkts, manifest = generate_packets(profiles, sessions_per_class, seed, **kwargs)
    frames = (
        (p.record.ts_us, encode_frame(p.record, ip_id=p.ip_id, seq=p.seq, ack=p.ack, tcp_options=p.tcp_options))
        for p in pkts
    )
    return write_pcap(frames), manifest


def write_manifest(entries: Sequence[ManifestEntry], path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MANIFEST_FIELDS)
        for e in entries:
            w.writerow([e.src_ip, e.src_port, e.dst_ip, e.dst_port, e.label])


def read_manifest(path: str | os.PathLike) -> list[ManifestEntry]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and set(MANIFEST_FIELDS) - set(rows[0]):
        raise ValueError(f"manifest must have columns {','.join(MANIFEST_FIELDS)}")
    return [
        ManifestEntry(r["src_ip"], int(r["src_port"]), r["dst_ip"], int(r["dst_port"]), r["label"]) for r in rows
    ]


def load_profiles(path: str | os.PathLike) -> list[ClassProfile]:
    """Read profiles from JSON: a list of objects, or ``{"profiles": [...]}``."""
    with open(path) as fh:
        doc = json.load(fh)
    return profiles_from_json(doc)


def profiles_from_json(doc) -> list[ClassProfile]:
    items = doc.get("profiles") if isinstance(doc, dict) else doc
    if not isinstance(items, list):
        raise InvalidProfile('expected a list of profiles or {"profiles": [...]}')
    out = []
    for item in items:
        try:
            prof = ClassProfile(**item)
        except TypeError as e:
            raise InvalidProfile(str(e)) from None
        prof.validate()
        out.append(prof)
    return out


def profiles_to_json(profiles: Sequence[ClassProfile]) -> dict:
    return {"profiles": [asdict(p) for p in profiles]}


def graded_profiles(
    n_classes: int = 10,
    *,
    length_base: float = 200.0,
    length_spacing: float = 80.0,
    length_stddev: float = 40.0,
    iat_base_us: float = 2000.0,
    iat_spacing_us: float = 2000.0,
    iat_stddev_us: float = 1000.0,
    ttl: int = 64,
    packets_per_session: int = 8,
    handshake_packets: int = 2,
) -> list[ClassProfile]:
    """Evenly spaced, overlapping class profiles sharing one TTL."""
    return [
        ClassProfile(
            name=f"class{i:02d}",
            length_mean=length_base + i * length_spacing,
            length_stddev=length_stddev,
            ttl=ttl,
            iat_mean_us=iat_base_us + i * iat_spacing_us,
            iat_stddev_us=iat_stddev_us,
            packets_per_session=packets_per_session,
            handshake_packets=handshake_packets,
        )
        for i in range(n_classes)
    ]
