"""Classic pcap reading/writing and Ethernet/IPv4/TCP decoding.

Only the fields NetMatrix needs are surfaced in :class:`PacketRecord`; the
rest of each header is parsed for validation and then discarded.

Layout reference: https://wiki.wireshark.org/Development/LibpcapFileFormat
"""

from __future__ import annotations

import enum
import os
import socket
import struct
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

MAGIC_US = 0xA1B2C3D4
MAGIC_NS = 0xA1B23C4D
PCAPNG_MAGIC = 0x0A0D0D0A
LINKTYPE_ETHERNET = 1

GLOBAL_HEADER_LEN = 24
RECORD_HEADER_LEN = 16
ETH_HEADER_LEN = 14

ETHERTYPE_IPV4 = 0x0800
ETHERTYPE_VLAN = 0x8100
IPPROTO_TCP = 6


class CaptureError(Exception):
    """Base class for capture-level (file-fatal) parse errors."""


class TruncatedHeader(CaptureError):
    pass


class BadMagic(CaptureError):
    pass


class UnsupportedLinkType(CaptureError):
    pass


class SkipReason(enum.Enum):
    NOT_IPV4 = "not_ipv4"
    NOT_TCP = "not_tcp"
    TRUNCATED = "truncated"
    MALFORMED = "malformed"
    FRAGMENT = "fragment"
    NESTED_VLAN = "nested_vlan"
    TRUNCATED_RECORD = "truncated_record"


@dataclass(frozen=True)
class PcapHeader:
    byte_order: str  # "big" | "little"
    timestamp_unit: str  # "microsecond" | "nanosecond"
    link_type: int
    snaplen: int = 65535


@dataclass(frozen=True, slots=True)
class PacketRecord:
    ts_us: int
    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    protocol: int
    ip_total_length: int
    ttl: int
    tcp_flags: int
    payload: bytes = b""


@dataclass
class ParsedCapture:
    """Decoded records of one capture plus per-reason skip counts."""

    header: PcapHeader
    records: list[PacketRecord] = field(default_factory=list)
    skipped: Counter = field(default_factory=Counter)

    @property
    def skip_count(self) -> int:
        return sum(self.skipped.values())

    def __iter__(self) -> Iterator[PacketRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]


def parse_global_header(data: bytes) -> PcapHeader:
    if len(data) < GLOBAL_HEADER_LEN:
        raise TruncatedHeader(f"need {GLOBAL_HEADER_LEN} bytes for the pcap header, got {len(data)}")
    (magic_le,) = struct.unpack_from("<I", data, 0)
    if magic_le == MAGIC_US:
        order, unit = "little", "microsecond"
    elif magic_le == MAGIC_NS:
        order, unit = "little", "nanosecond"
    else:
        (magic_be,) = struct.unpack_from(">I", data, 0)
        if magic_be == MAGIC_US:
            order, unit = "big", "microsecond"
        elif magic_be == MAGIC_NS:
            order, unit = "big", "nanosecond"
        elif magic_le == PCAPNG_MAGIC:
            raise BadMagic("pcapng is not supported; convert to classic pcap first (e.g. editcap -F pcap)")
        else:
            raise BadMagic(f"unrecognized pcap magic 0x{magic_le:08x}")
    fmt = "<" if order == "little" else ">"
    _, _, _, _, _, snaplen, link_type = struct.unpack_from(fmt + "IHHiIII", data, 0)
    if link_type != LINKTYPE_ETHERNET:
        raise UnsupportedLinkType(f"link type {link_type} is not Ethernet (1)")
    return PcapHeader(byte_order=order, timestamp_unit=unit, link_type=link_type, snaplen=snaplen)


def decode_ethernet_ipv4_tcp(frame: bytes, ts_us: int) -> PacketRecord | SkipReason:
    """Decode one Ethernet frame, returning a record or the reason it was skipped.

    IP Total Length and TTL are taken verbatim from the header. Bytes past
    the IP datagram (Ethernet padding) are ignored.
    """
    if len(frame) < ETH_HEADER_LEN:
        return SkipReason.TRUNCATED
    (ethertype,) = struct.unpack_from("!H", frame, 12)
    off = ETH_HEADER_LEN
    if ethertype == ETHERTYPE_VLAN:
        if len(frame) < off + 4:
            return SkipReason.TRUNCATED
        (ethertype,) = struct.unpack_from("!H", frame, off + 2)
        off += 4
        if ethertype == ETHERTYPE_VLAN:
            return SkipReason.NESTED_VLAN
    if ethertype != ETHERTYPE_IPV4:
        return SkipReason.NOT_IPV4

    if len(frame) < off + 20:
        return SkipReason.TRUNCATED
    ver_ihl, _tos, total_length, _ident, frag, ttl, proto = struct.unpack_from("!BBHHHBB", frame, off)
    if ver_ihl >> 4 != 4:
        return SkipReason.NOT_IPV4
    ihl = (ver_ihl & 0x0F) * 4
    if ihl < 20 or total_length < ihl:
        return SkipReason.MALFORMED
    if proto != IPPROTO_TCP:
        return SkipReason.NOT_TCP
    if frag & 0x3FFF:  # MF flag or nonzero fragment offset
        return SkipReason.FRAGMENT
    if len(frame) < off + total_length:
        return SkipReason.TRUNCATED

    tcp = off + ihl
    if total_length < ihl + 20:
        return SkipReason.MALFORMED
    src_port, dst_port, _seq, _ack, doff_byte, flags = struct.unpack_from("!HHIIBB", frame, tcp)
    doff = (doff_byte >> 4) * 4
    if doff < 20 or ihl + doff > total_length:
        return SkipReason.MALFORMED

    return PacketRecord(
        ts_us=ts_us,
        src_ip=socket.inet_ntoa(frame[off + 12 : off + 16]),
        dst_ip=socket.inet_ntoa(frame[off + 16 : off + 20]),
        src_port=src_port,
        dst_port=dst_port,
        protocol=proto,
        ip_total_length=total_length,
        ttl=ttl,
        tcp_flags=flags,
        payload=bytes(frame[tcp + doff : off + total_length]),
    )


def iter_frames(data: bytes, header: PcapHeader) -> Iterator[tuple[int, bytes] | None]:
    """Yield ``(ts_us, frame)`` per record; ``None`` marks a truncated tail."""
    fmt = ("<" if header.byte_order == "little" else ">") + "IIII"
    ns = header.timestamp_unit == "nanosecond"
    pos = GLOBAL_HEADER_LEN
    end = len(data)
    while pos < end:
        if pos + RECORD_HEADER_LEN > end:
            yield None
            return
        ts_sec, ts_sub, incl_len, _orig_len = struct.unpack_from(fmt, data, pos)
        pos += RECORD_HEADER_LEN
        if pos + incl_len > end:
            yield None
            return
        sub_us = ts_sub // 1000 if ns else ts_sub
        yield ts_sec * 1_000_000 + sub_us, data[pos : pos + incl_len]
        pos += incl_len


def parse_capture(data: bytes) -> ParsedCapture:
    """Parse an in-memory pcap image. Raises :class:`CaptureError` only for
    global-header problems; every per-packet problem becomes a skip."""
    header = parse_global_header(data)
    out = ParsedCapture(header=header)
    view = memoryview(data)
    for item in iter_frames(view, header):
        if item is None:
            out.skipped[SkipReason.TRUNCATED_RECORD] += 1
            continue
        ts_us, frame = item
        rec = decode_ethernet_ipv4_tcp(frame, ts_us)
        if isinstance(rec, SkipReason):
            out.skipped[rec] += 1
        else:
            out.records.append(rec)
    return out


def read_capture(path: str | os.PathLike) -> ParsedCapture:
    with open(path, "rb") as fh:
        data = fh.read()
    return parse_capture(data)


# -- writing ---------------------------------------------------------------


def ipv4_checksum(header: bytes) -> int:
    if len(header) % 2:
        header += b"\x00"
    total = sum(struct.unpack(f"!{len(header) // 2}H", header))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def encode_frame(
    rec: PacketRecord,
    *,
    ip_id: int = 0,
    seq: int = 0,
    ack: int = 0,
    window: int = 65535,
    tcp_options: bytes | None = None,
    src_mac: bytes = b"\x02\x00\x00\x00\x00\x01",
    dst_mac: bytes = b"\x02\x00\x00\x00\x00\x02",
) -> bytes:
    """Build an Ethernet/IPv4/TCP frame reproducing ``rec`` bit-for-bit.

    ``rec.ip_total_length`` must equal 20 + TCP header + payload; the TCP
    header length is 20 + ``len(tcp_options)`` (options padded to 4 bytes).
    With ``tcp_options=None`` the header is NOP-padded to whatever length
    ``ip_total_length`` implies. Both checksums are computed.
    """
    if tcp_options is None:
        tcp_options = b"\x01" * max(0, rec.ip_total_length - 40 - len(rec.payload))
    if len(tcp_options) % 4:
        tcp_options += b"\x01" * (4 - len(tcp_options) % 4)
    tcp_len = 20 + len(tcp_options)
    if tcp_len > 60:
        raise ValueError("TCP options longer than 40 bytes")
    if rec.ip_total_length != 20 + tcp_len + len(rec.payload):
        raise ValueError(
            f"ip_total_length {rec.ip_total_length} != 20 + {tcp_len} + {len(rec.payload)}"
        )
    src = socket.inet_aton(rec.src_ip)
    dst = socket.inet_aton(rec.dst_ip)
    ip_hdr = struct.pack(
        "!BBHHHBBH4s4s", 0x45, 0, rec.ip_total_length, ip_id & 0xFFFF, 0x4000,
        rec.ttl, rec.protocol, 0, src, dst,
    )
    ip_hdr = ip_hdr[:10] + struct.pack("!H", ipv4_checksum(ip_hdr)) + ip_hdr[12:]
    tcp_hdr = struct.pack(
        "!HHIIBBHHH", rec.src_port, rec.dst_port, seq & 0xFFFFFFFF, ack & 0xFFFFFFFF,
        (tcp_len // 4) << 4, rec.tcp_flags, window, 0, 0,
    ) + tcp_options
    segment = tcp_hdr + rec.payload
    pseudo = src + dst + struct.pack("!BBH", 0, rec.protocol, len(segment))
    csum = ipv4_checksum(pseudo + segment)
    tcp_hdr = tcp_hdr[:16] + struct.pack("!H", csum) + tcp_hdr[18:]
    frame = dst_mac + src_mac + struct.pack("!H", ETHERTYPE_IPV4) + ip_hdr + tcp_hdr + rec.payload
    if len(frame) < 60:
        frame += b"\x00" * (60 - len(frame))
    return frame


def write_pcap(
    frames: Iterable[tuple[int, bytes]],
    *,
    byte_order: str = "little",
    nanosecond: bool = False,
    snaplen: int = 65535,
) -> bytes:
    """Serialize ``(ts_us, frame)`` pairs into a classic pcap image."""
    fmt = "<" if byte_order == "little" else ">"
    magic = MAGIC_NS if nanosecond else MAGIC_US
    parts = [struct.pack(fmt + "IHHiIII", magic, 2, 4, 0, 0, snaplen, LINKTYPE_ETHERNET)]
    for ts_us, frame in frames:
        sec, sub = divmod(ts_us, 1_000_000)
        if nanosecond:
            sub *= 1000
        parts.append(struct.pack(fmt + "IIII", sec, sub, len(frame), len(frame)))
        parts.append(frame)
    return b"".join(parts)


def records_to_pcap(records: Sequence[PacketRecord], **kwargs) -> bytes:
    """Serialize records with zeroed noise fields (IP-ID, seq/ack)."""
    return write_pcap(((r.ts_us, encode_frame(r)) for r in records), **kwargs)
