import numpy as np
import pytest

from nminpaint.checkpoint import (FORMAT_VERSION, MAGIC, CheckpointError,
                                  load_checkpoint, save_checkpoint)


@pytest.fixture
def sample(rng):
    tensors = {
        "gen.param.weight": rng.normal(size=(4, 3, 2, 2)).astype(np.float32),
        "gen.buffer.count": np.array(7, dtype=np.int64),
        "disc.param.bias": rng.normal(size=(5,)).astype(np.float32),
    }
    meta = {"config": {"epochs": 3, "style": "lines"}, "global_step": 42}
    return tensors, meta


def test_round_trip_bit_exact(tmp_path, sample):
    tensors, meta = sample
    path = tmp_path / "c.ckpt"
    save_checkpoint(path, tensors, meta)
    loaded, loaded_meta = load_checkpoint(path)
    assert loaded_meta == meta
    assert set(loaded) == set(tensors)
    for name in tensors:
        assert loaded[name].dtype == tensors[name].dtype
        assert np.array_equal(loaded[name], tensors[name])


def test_magic_and_version_present(tmp_path, sample):
    path = tmp_path / "c.ckpt"
    save_checkpoint(path, *sample)
    raw = path.read_bytes()
    assert raw[:4] == MAGIC
    assert int.from_bytes(raw[4:8], "little") == FORMAT_VERSION


def test_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_rejects_truncation(tmp_path, sample):
    path = tmp_path / "c.ckpt"
    save_checkpoint(path, *sample)
    raw = path.read_bytes()
    truncated = tmp_path / "t.ckpt"
    truncated.write_bytes(raw[:len(raw) - 8])
    with pytest.raises(CheckpointError):
        load_checkpoint(truncated)


def test_rejects_unknown_version(tmp_path, sample):
    path = tmp_path / "c.ckpt"
    save_checkpoint(path, *sample)
    raw = bytearray(path.read_bytes())
    raw[4:8] = (99).to_bytes(4, "little")
    versioned = tmp_path / "v.ckpt"
    versioned.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError):
        load_checkpoint(versioned)


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "absent.ckpt")
