"""
From a packet capture to 30-byte rows
=====================================

Generate a small labeled capture, parse it, group packets into sessions
and encode each session as one fixed-size row.
"""

import tempfile
from pathlib import Path

from lim import read_capture, select_netmatrix_packets, sessionize, build_row, serialize_row, to_features
from lim.synth import ClassProfile, generate_capture

# two classes that differ in packet size and pacing
profiles = [
    ClassProfile("chat", length_mean=180, length_stddev=30, ttl=57, iat_mean_us=40_000, iat_stddev_us=8_000),
    ClassProfile("video", length_mean=1350, length_stddev=90, ttl=121, iat_mean_us=900, iat_stddev_us=300),
]
pcap, manifest = generate_capture(profiles, sessions_per_class=3, seed=7)

tmp = Path(tempfile.mkdtemp())
(tmp / "demo.pcap").write_bytes(pcap)
parsed = read_capture(tmp / "demo.pcap")
print(f"{len(parsed)} TCP packets, {parsed.skip_count} skipped")

# sessions are bidirectional: both directions share one canonical key
for sess in sessionize(parsed.records):
    picked = select_netmatrix_packets(sess)
    row = build_row(picked)
    blob = serialize_row(row)
    print(sess.key.endpoint_lo, "<->", sess.key.endpoint_hi, len(sess.packets), "packets")
    print("  lengths", row.total_length, "ttl", row.ttl[0], "iat_us", row.iat_us)
    print("  bytes  ", blob.hex(), f"({len(blob)} bytes)")
    print("  features", to_features(row).tolist())
