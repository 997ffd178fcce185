"""NetMatrix session features and a gradient-boosted tree classifier for
encrypted (TLS) traffic."""

from lim.capture import PacketRecord, read_capture
from lim.gbt import GbtHyperparams, GbtModel, fit
from lim.netmatrix import NetMatrixRow, build_row, deserialize_row, serialize_row, to_features
from lim.sessionizer import FlowKey, Session, is_encrypted_payload, select_netmatrix_packets, sessionize

__version__ = "0.1.0"
