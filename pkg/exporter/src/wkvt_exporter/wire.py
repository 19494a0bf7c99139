"""Standalone WKVT writer.

This is the exporter's half of the byte-level contract with the compression
engine; it does not import the engine. Layout, little-endian throughout:

    magic "WKVT" | version uint16 | mode uint8 (0=ATTN, 1=QK)
    | num_layers, num_heads, seq_len, head_dim as uint32
    | payload of IEEE-754 float32

ATTN payload: row-major n x n matrices, layer-major then head-major.
QK payload: per (layer, head), the Q matrix followed by the K matrix.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"WKVT"
VERSION = 1
MODE_ATTN = 0
MODE_QK = 1
_HEADER = struct.Struct("<4sHBIIII")


def _check_finite(name: str, arr: np.ndarray) -> None:
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} payload contains NaN or Inf")


def attn_file_bytes(attn: np.ndarray, head_dim: int) -> bytes:
    """Serialize an (m, h, n, n) attention stack."""
    m, h, n, n2 = attn.shape
    if n != n2:
        raise ValueError(f"attention matrices must be square, got {attn.shape}")
    _check_finite("attention", attn)
    out = bytearray(_HEADER.pack(MAGIC, VERSION, MODE_ATTN, m, h, n, head_dim))
    for layer in range(m):
        for head in range(h):
            out += np.ascontiguousarray(attn[layer, head], dtype="<f4").tobytes()
    return bytes(out)


def qk_file_bytes(queries: np.ndarray, keys: np.ndarray) -> bytes:
    """Serialize (m, h, n, d) query and key stacks, Q before K per head."""
    if queries.shape != keys.shape:
        raise ValueError(f"Q/K shape mismatch: {queries.shape} vs {keys.shape}")
    m, h, n, d = queries.shape
    _check_finite("query", queries)
    _check_finite("key", keys)
    out = bytearray(_HEADER.pack(MAGIC, VERSION, MODE_QK, m, h, n, d))
    for layer in range(m):
        for head in range(h):
            out += np.ascontiguousarray(queries[layer, head], dtype="<f4").tobytes()
            out += np.ascontiguousarray(keys[layer, head], dtype="<f4").tobytes()
    return bytes(out)


def write_file(path: str | Path, data: bytes) -> int:
    Path(path).write_bytes(data)
    return len(data)
