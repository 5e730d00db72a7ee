import numpy as np
import pytest

from ctqwalk.checkpoint import MAGIC, load_params, save_params
from ctqwalk.errors import ContractViolation
from ctqwalk.model import ModelConfig, init_params
from ctqwalk.tensor import Tensor


def test_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    named = [
        ("a.w", Tensor(rng.normal(size=(3, 4)))),
        ("a.b", Tensor(rng.normal(size=(4,)))),
        ("deep.nested.scalar", Tensor(rng.normal(size=()))),
    ]
    path = tmp_path / "params.ckpt"
    save_params(path, named)
    loaded = load_params(path)
    assert list(loaded) == [n for n, _ in named]
    for name, t in named:
        np.testing.assert_array_equal(loaded[name], t.data)


def test_model_params_round_trip(tmp_path):
    config = ModelConfig(hidden=16, heads=2, feature_dim=3, num_classes=2)
    params = init_params(config, seed=9)
    path = tmp_path / "model.ckpt"
    save_params(path, params.named())
    loaded = load_params(path)

    fresh = init_params(config, seed=10)
    fresh.load_values(loaded)
    for (name, a), (_, b) in zip(params.named(), fresh.named()):
        np.testing.assert_array_equal(a.data, b.data, err_msg=name)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"NOTMAGIC" + b"\x00" * 16)
    with pytest.raises(ContractViolation):
        load_params(path)


def test_truncation_detected(tmp_path):
    path = tmp_path / "params.ckpt"
    save_params(path, [("w", Tensor(np.ones((4, 4))))])
    blob = path.read_bytes()
    path.write_bytes(blob + b"\x00")
    with pytest.raises(ContractViolation):
        load_params(path)


def test_version_field_checked(tmp_path):
    path = tmp_path / "params.ckpt"
    save_params(path, [("w", Tensor(np.ones(2)))])
    blob = bytearray(path.read_bytes())
    blob[8] = 99  # version little-endian low byte
    path.write_bytes(bytes(blob))
    with pytest.raises(ContractViolation, match="version"):
        load_params(path)


def test_magic_constant():
    assert MAGIC == b"CTQWCKPT"
