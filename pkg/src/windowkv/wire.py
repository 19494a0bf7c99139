"""WKVT binary container for attention traces.

Layout, all integers little-endian:

    offset  size  field
    0       4     magic "WKVT"
    4       2     format version (uint16)
    6       1     mode (0 = ATTN, 1 = QK)
    7       4     num_layers (uint32)
    11      4     num_heads (uint32)
    15      4     seq_len (uint32)
    19      4     head_dim (uint32)
    23      ...   payload, IEEE-754 float32 little-endian

ATTN payload: one n x n row-major matrix per (layer, head), ordered
layer-major then head-major. QK payload: per (layer, head), the full Q
matrix (n x d_k rows) followed by the full K matrix.

Round trips are bit-exact. Payloads containing NaN or Inf are rejected on
read and on write.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError, TraceFormatError
from .trace import (
    ROW_SUM_TOL_IMPORTED,
    SUPPORTED_FORMAT_VERSION,
    AttentionTrace,
    TraceMeta,
    TraceMode,
)

MAGIC = b"WKVT"
HEADER_STRUCT = struct.Struct("<4sHBIIII")
HEADER_SIZE = HEADER_STRUCT.size  # 23 bytes
_F32 = np.dtype("<f4")


def write_trace(trace: AttentionTrace) -> bytes:
    """Serialize a trace to WKVT bytes."""
    trace.validate(row_sum_tolerance=ROW_SUM_TOL_IMPORTED)
    header = HEADER_STRUCT.pack(
        MAGIC,
        SUPPORTED_FORMAT_VERSION,
        trace.mode.value,
        trace.num_layers,
        trace.num_heads,
        trace.seq_len,
        trace.head_dim,
    )
    if trace.mode is TraceMode.ATTN:
        payload = np.ascontiguousarray(trace.attn, dtype=_F32)
    else:
        # Interleave as (layer, head, [Q | K], row, col) so Q precedes K
        # within each head's block.
        payload = np.ascontiguousarray(
            np.stack([trace.queries, trace.keys], axis=2), dtype=_F32
        )
    return header + payload.tobytes()


def read_trace(data: bytes) -> AttentionTrace:
    """Parse WKVT bytes into a validated trace."""
    if len(data) < HEADER_SIZE:
        raise TraceFormatError(
            f"truncated header: got {len(data)} bytes, need {HEADER_SIZE}"
        )
    magic, version, mode_byte, m, h, n, d = HEADER_STRUCT.unpack_from(data, 0)
    if magic != MAGIC:
        raise TraceFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != SUPPORTED_FORMAT_VERSION:
        raise TraceFormatError(
            f"unsupported format version {version}, expected {SUPPORTED_FORMAT_VERSION}"
        )
    try:
        mode = TraceMode(mode_byte)
    except ValueError:
        raise TraceFormatError(f"unknown mode byte {mode_byte}") from None
    if m < 1 or h < 1 or n < 2 or d < 1:
        raise TraceFormatError(
            f"invalid dimensions in header: layers={m} heads={h} tokens={n} head_dim={d}"
        )

    if mode is TraceMode.ATTN:
        count = m * h * n * n
    else:
        count = m * h * 2 * n * d
    expected = HEADER_SIZE + 4 * count
    if len(data) < expected:
        raise TraceFormatError(
            f"truncated payload: got {len(data)} bytes, expected {expected}"
        )
    if len(data) > expected:
        raise TraceFormatError(
            f"trailing bytes after payload: got {len(data)} bytes, expected {expected}"
        )

    flat = np.frombuffer(data, dtype=_F32, count=count, offset=HEADER_SIZE)
    if not np.isfinite(flat).all():
        raise TraceFormatError("payload contains NaN or Inf")
    flat = flat.copy()

    if mode is TraceMode.ATTN:
        trace = AttentionTrace(
            num_layers=m,
            num_heads=h,
            seq_len=n,
            head_dim=d,
            mode=mode,
            attn=flat.reshape(m, h, n, n),
            meta=TraceMeta(format_version=version),
        )
    else:
        qk = flat.reshape(m, h, 2, n, d)
        trace = AttentionTrace(
            num_layers=m,
            num_heads=h,
            seq_len=n,
            head_dim=d,
            mode=mode,
            queries=np.ascontiguousarray(qk[:, :, 0]),
            keys=np.ascontiguousarray(qk[:, :, 1]),
            meta=TraceMeta(format_version=version),
        )
    try:
        trace.validate(row_sum_tolerance=ROW_SUM_TOL_IMPORTED)
    except ConfigError as exc:
        raise TraceFormatError(str(exc)) from None
    return trace


def write_trace_file(trace: AttentionTrace, path: str | Path) -> int:
    """Write a trace to disk, returning the byte count."""
    data = write_trace(trace)
    Path(path).write_bytes(data)
    return len(data)


def read_trace_file(path: str | Path) -> AttentionTrace:
    return read_trace(Path(path).read_bytes())
