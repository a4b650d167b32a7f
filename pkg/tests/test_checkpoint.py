"""Checkpoint format tests: bitwise round trips and corruption handling."""

import struct

import numpy as np
import pytest

from trajkit.checkpoint import (MAGIC, Checkpoint, load_checkpoint,
                                save_checkpoint)
from trajkit.errors import CheckpointError, MissingArtifactError


def _sample(tmp_path):
    rng = np.random.default_rng(0)
    ckpt = Checkpoint(
        meta={"command": "align", "k": 4},
        arrays={"theta": rng.standard_normal(37),
                "psi": rng.standard_normal(5)},
        step=123,
        config_text="seed = 9\n",
    )
    path = tmp_path / "model.ckpt"
    save_checkpoint(ckpt, path)
    return ckpt, path


def test_roundtrip_bitwise(tmp_path):
    ckpt, path = _sample(tmp_path)
    back = load_checkpoint(path)
    assert back.meta == ckpt.meta
    assert back.step == 123
    assert back.config_text == "seed = 9\n"
    assert back.version == 1
    assert set(back.arrays) == {"theta", "psi"}
    for name in ckpt.arrays:
        assert np.array_equal(back.arrays[name], ckpt.arrays[name])


def test_missing_file(tmp_path):
    with pytest.raises(MissingArtifactError):
        load_checkpoint(tmp_path / "absent.ckpt")


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOPE" + b"\x00" * 20)
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_future_version_refused(tmp_path):
    _, path = _sample(tmp_path)
    data = bytearray(path.read_bytes())
    data[4:8] = struct.pack("<I", 99)
    path.write_bytes(bytes(data))
    with pytest.raises(CheckpointError, match="newer"):
        load_checkpoint(path)


def test_truncated_header(tmp_path):
    _, path = _sample(tmp_path)
    path.write_bytes(path.read_bytes()[:20])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(path)


def test_truncated_array(tmp_path):
    _, path = _sample(tmp_path)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(CheckpointError, match="incomplete"):
        load_checkpoint(path)


def test_corrupt_header_json(tmp_path):
    _, path = _sample(tmp_path)
    data = bytearray(path.read_bytes())
    (hlen,) = struct.unpack_from("<Q", data, 8)
    data[16:16 + hlen] = b"{" * hlen
    path.write_bytes(bytes(data))
    with pytest.raises(CheckpointError, match="corrupt"):
        load_checkpoint(path)
