import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from windowkv import TraceFormatError, TraceMode, read_trace, write_trace
from windowkv.wire import HEADER_SIZE, MAGIC

from conftest import attn_trace, qk_trace


def _assert_traces_equal(a, b):
    assert a.num_layers == b.num_layers
    assert a.num_heads == b.num_heads
    assert a.seq_len == b.seq_len
    assert a.head_dim == b.head_dim
    assert a.mode == b.mode
    if a.mode is TraceMode.ATTN:
        assert np.array_equal(a.attn, b.attn)
    else:
        assert np.array_equal(a.queries, b.queries)
        assert np.array_equal(a.keys, b.keys)


def test_attn_round_trip_identity():
    rng = np.random.default_rng(0)
    trace = attn_trace(rng, 2, 1, 3)
    _assert_traces_equal(trace, read_trace(write_trace(trace)))


def test_round_trip_is_bit_exact_on_bytes():
    rng = np.random.default_rng(5)
    trace = qk_trace(rng, 2, 3, 5, 4)
    data = write_trace(trace)
    assert write_trace(read_trace(data)) == data


def test_bad_magic_rejected():
    rng = np.random.default_rng(1)
    data = bytearray(write_trace(attn_trace(rng, 1, 1, 2)))
    data[:4] = b"XKVT"
    with pytest.raises(TraceFormatError, match="magic"):
        read_trace(bytes(data))


def test_unsupported_version_rejected():
    rng = np.random.default_rng(1)
    data = bytearray(write_trace(attn_trace(rng, 1, 1, 2)))
    data[4:6] = (7).to_bytes(2, "little")
    with pytest.raises(TraceFormatError, match="version"):
        read_trace(bytes(data))


def test_truncated_and_trailing_payload_rejected():
    rng = np.random.default_rng(2)
    data = write_trace(attn_trace(rng, 1, 1, 3))
    with pytest.raises(TraceFormatError, match="truncated"):
        read_trace(data[:-4])
    with pytest.raises(TraceFormatError, match="trailing"):
        read_trace(data + b"\x00\x00\x00\x00")
    with pytest.raises(TraceFormatError, match="truncated header"):
        read_trace(data[:10])


def test_nan_and_inf_payload_rejected():
    rng = np.random.default_rng(3)
    trace = qk_trace(rng, 1, 1, 2, 2)
    data = bytearray(write_trace(trace))
    data[HEADER_SIZE : HEADER_SIZE + 4] = np.float32("nan").tobytes()
    with pytest.raises(TraceFormatError, match="NaN or Inf"):
        read_trace(bytes(data))
    data[HEADER_SIZE : HEADER_SIZE + 4] = np.float32("inf").tobytes()
    with pytest.raises(TraceFormatError, match="NaN or Inf"):
        read_trace(bytes(data))


def test_qk_file_size_matches_format_arithmetic():
    # Header: 4 magic + 2 version + 1 mode + 4 * 4 dims = 23 bytes.
    # Payload: 2 layers * 2 heads * 2 matrices * 4 rows * 8 cols = 256
    # floats = 1024 bytes, so the file is 23 + 1024 = 1047 bytes.
    rng = np.random.default_rng(4)
    trace = qk_trace(rng, 2, 2, 4, 8)
    data = write_trace(trace)
    assert HEADER_SIZE == 23
    assert len(data) == 23 + 2 * 2 * 2 * 4 * 8 * 4 == 1047


def test_attn_file_size_matches_format_arithmetic():
    rng = np.random.default_rng(4)
    trace = attn_trace(rng, 3, 2, 5)
    assert len(write_trace(trace)) == 23 + 3 * 2 * 5 * 5 * 4


def test_magic_constant():
    rng = np.random.default_rng(6)
    assert write_trace(attn_trace(rng, 1, 1, 2))[:4] == MAGIC == b"WKVT"


@settings(max_examples=30, deadline=None)
@given(
    m=st.integers(1, 3),
    h=st.integers(1, 3),
    n=st.integers(2, 9),
    d=st.integers(1, 5),
    mode=st.sampled_from([TraceMode.ATTN, TraceMode.QK]),
    seed=st.integers(0, 2**32 - 1),
)
def test_round_trip_property(m, h, n, d, mode, seed):
    rng = np.random.default_rng(seed)
    trace = attn_trace(rng, m, h, n, d) if mode is TraceMode.ATTN else qk_trace(rng, m, h, n, d)
    data = write_trace(trace)
    back = read_trace(data)
    _assert_traces_equal(trace, back)
    assert write_trace(back) == data
