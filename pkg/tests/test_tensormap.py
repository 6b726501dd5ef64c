import numpy as np
import pytest

from vesselmtl.errors import BadMagicError, CorruptError, TruncatedError, UnsupportedVersionError
from vesselmtl.tensormap import decode_tensor_map, encode_tensor_map, load_tensor_map, save_tensor_map


@pytest.fixture
def entries(rng):
    return {
        "alpha": rng.normal(size=(2, 3, 4)).astype(np.float32),
        "beta.weight": rng.normal(size=(5,)),
        "scalar": np.float64(3.5) * np.ones(()),
        "ünïcode": np.array([np.nan, np.inf, -0.0], dtype=np.float32),
    }


def test_round_trip_bit_exact(tmp_path, entries):
    path = tmp_path / "m.mtlt"
    save_tensor_map(path, entries)
    back = load_tensor_map(path)
    assert list(back) == list(entries)
    for k in entries:
        assert back[k].dtype == entries[k].dtype
        assert back[k].shape == entries[k].shape
        assert back[k].tobytes() == np.asarray(entries[k]).tobytes()
    assert encode_tensor_map(back) == path.read_bytes()


def test_header_layout():
    buf = encode_tensor_map({"x": np.zeros((2, 1), dtype=np.float64)})
    assert buf[:4] == b"MTLT"
    assert buf[4:6] == (1).to_bytes(2, "little")
    assert buf[6:10] == (1).to_bytes(4, "little")
    # name_len, name, rank, dims, tag, payload
    assert buf[10:12] == (1).to_bytes(2, "little") and buf[12:13] == b"x"
    assert buf[13] == 2 and buf[14:22] == (2).to_bytes(4, "little") + (1).to_bytes(4, "little")
    assert buf[22] == 1 and len(buf) == 23 + 16


def test_bad_magic(entries):
    buf = bytearray(encode_tensor_map(entries))
    buf[0:4] = b"NOPE"
    with pytest.raises(BadMagicError):
        decode_tensor_map(bytes(buf))


def test_bad_version(entries):
    buf = bytearray(encode_tensor_map(entries))
    buf[4:6] = (9).to_bytes(2, "little")
    with pytest.raises(UnsupportedVersionError):
        decode_tensor_map(bytes(buf))


def test_truncation_names_entry(entries):
    buf = encode_tensor_map(entries)
    with pytest.raises(TruncatedError) as info:
        decode_tensor_map(buf[:-3])
    assert info.value.entry == "ünïcode"
    assert "ünïcode" in str(info.value)


def test_trailing_bytes_and_bad_tag(entries):
    buf = encode_tensor_map({"x": np.zeros(1, dtype=np.float32)})
    with pytest.raises(CorruptError):
        decode_tensor_map(buf + b"\0")
    bad = bytearray(buf)
    bad[-5] = 7  # type tag precedes the 4-byte payload
    with pytest.raises(CorruptError, match="tag"):
        decode_tensor_map(bytes(bad))


def test_distinct_error_types():
    kinds = {BadMagicError, UnsupportedVersionError, TruncatedError, CorruptError}
    assert len(kinds) == 4
    assert not any(issubclass(a, b) for a in kinds for b in kinds if a is not b)
