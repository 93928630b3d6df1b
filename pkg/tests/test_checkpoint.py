import os

import numpy as np
import pytest

from src.autodiff.checkpoint import load_checkpoint, read_checkpoint, save_checkpoint
from src.autodiff.nn import ChannelLayerNorm, Conv1d, Module
from src.core.errors import CheckpointError, DataError, FormatError, PayloadLengthError


class _Net(Module):
    def __init__(self, seed):
        rng = np.random.default_rng(seed)
        self.conv = Conv1d(rng, 4, 3, kernel=3)
        self.norm = ChannelLayerNorm(3)
        self.name_parameters()


CONFIG = {"d_model": 3, "fusion_mode": "gated_xattn", "regression_ranges": [[0.0, None]]}


def test_roundtrip(tmp_path):
    path = os.path.join(tmp_path, "m.mrck")
    src = _Net(1)
    save_checkpoint(path, src, CONFIG)
    dst = _Net(2)
    load_checkpoint(path, dst, CONFIG)
    for (name, a), (_, b) in zip(src.named_parameters(), dst.named_parameters()):
        assert np.array_equal(a.numpy(), b.numpy()), name
    state, config = read_checkpoint(path)
    assert config == CONFIG
    assert sorted(state) == sorted(name for name, _ in src.named_parameters())


def test_config_mismatch(tmp_path):
    path = os.path.join(tmp_path, "m.mrck")
    save_checkpoint(path, _Net(1), CONFIG)
    with pytest.raises(CheckpointError):
        load_checkpoint(path, _Net(1), {**CONFIG, "d_model": 4})


def test_bad_magic(tmp_path):
    path = os.path.join(tmp_path, "m.mrck")
    with open(path, "wb") as f:
        f.write(b"NOPE" + b"\x00" * 16)
    with pytest.raises(FormatError):
        read_checkpoint(path)


def test_unsupported_version(tmp_path):
    path = os.path.join(tmp_path, "m.mrck")
    save_checkpoint(path, _Net(1), CONFIG)
    blob = bytearray(open(path, "rb").read())
    blob[4] = 9
    with open(path, "wb") as f:
        f.write(bytes(blob))
    with pytest.raises(CheckpointError):
        read_checkpoint(path)


def test_truncated(tmp_path):
    path = os.path.join(tmp_path, "m.mrck")
    save_checkpoint(path, _Net(1), CONFIG)
    blob = open(path, "rb").read()
    with open(path, "wb") as f:
        f.write(blob[:40])
    with pytest.raises(PayloadLengthError):
        read_checkpoint(path)


def test_missing_file(tmp_path):
    with pytest.raises(DataError):
        read_checkpoint(os.path.join(tmp_path, "absent.mrck"))
