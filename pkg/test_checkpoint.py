import numpy as np
import pytest
from numpy.testing import assert_array_equal

from src.storage.checkpoint import MAGIC, decode, encode, load_checkpoint, save_checkpoint
from src.utils.errors import FormatError


@pytest.fixture
def entries(rng):
    return {
        "text/fc1/weight": rng.standard_normal((4, 3)).astype(np.float32),
        "text/bn1/running_var": rng.random(3),
        "opt/t": np.array(12, dtype=np.int64),
        "vocab/tokens": np.frombuffer(b"<pad>\n<unk>\nflood", dtype=np.uint8),
    }


def test_round_trip_keeps_values_dtypes_and_order(tmp_path, entries):
    metadata = {"mode": "text", "classes": ["informative", "not_informative"]}
    path = save_checkpoint(tmp_path / "run" / "checkpoint.cfck", entries, metadata)
    loaded, meta = load_checkpoint(path)

    assert list(loaded) == list(entries)
    for name, value in entries.items():
        assert loaded[name].dtype == value.dtype
        assert_array_equal(loaded[name], value)
    assert meta == metadata
    assert not path.with_suffix('.cfck.tmp').exists()


def test_re_encoding_is_byte_identical(entries):
    blob = encode(entries, {"b": 1, "a": 2})
    assert encode(*decode(blob)) == blob


def test_scalar_and_empty_tensors(rng):
    loaded, meta = decode(encode({"empty": np.zeros((0, 4), dtype=np.float32), "scalar": np.array(1.5)}))
    assert loaded["scalar"].shape == () and loaded["scalar"] == 1.5
    assert loaded["empty"].shape == (0, 4)
    assert meta is None


def test_bad_magic():
    with pytest.raises(FormatError) as excinfo:
        decode(b"PK\x03\x04" + bytes(20))
    assert excinfo.value.offset == 0


def test_truncated_payload(entries):
    blob = encode(entries)
    with pytest.raises(FormatError):
        decode(blob[:-5])


def test_truncated_header():
    with pytest.raises(FormatError):
        decode(MAGIC + b"\x01")


def test_unknown_version(entries):
    blob = bytearray(encode(entries))
    blob[4] = 9
    with pytest.raises(FormatError, match="version"):
        decode(bytes(blob))


def test_unsupported_dtype():
    with pytest.raises(FormatError, match="'flags'"):
        encode({"flags": np.array([True, False])})


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_checkpoint(tmp_path / "absent.cfck")
