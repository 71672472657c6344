"""Checkpoint container tests: bit-exact round-trips, save determinism,
and corruption rejection."""

import numpy as np
import pytest

from mole.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from mole.layers import LayerSpec, init_params, reference_architecture


def _demo_state(seed=11):
    stack = reference_architecture("adult_mlp")
    specs = [s for s, _ in stack]
    params = []
    for i, spec in enumerate(specs):
        p = init_params(spec, seed=seed + i)
        params.append({k: t.data for k, t in p.tensors.items()})
    return specs, params


def test_round_trip_bit_exact(tmp_path):
    specs, params = _demo_state()
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, "adult_mlp", specs, params, seeds={"init": 11, "train": 0})
    loaded = load_checkpoint(path)
    assert loaded["architecture"] == "adult_mlp"
    assert loaded["specs"] == specs
    assert loaded["seeds"] == {"init": 11, "train": 0}
    for orig, back in zip(params, loaded["params"]):
        assert sorted(orig) == sorted(back)
        for name in orig:
            assert back[name].dtype == np.float64
            assert np.array_equal(orig[name], back[name])
            assert orig[name].tobytes() == back[name].tobytes()


def test_save_is_deterministic(tmp_path):
    specs, params = _demo_state()
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(p1, "adult_mlp", specs, params, seeds={"init": 11})
    save_checkpoint(p2, "adult_mlp", specs, params, seeds={"init": 11})
    assert p1.read_bytes() == p2.read_bytes()


def test_parameter_free_layers_round_trip(tmp_path):
    stack = reference_architecture("mnist_cnn")
    specs = [s for s, _ in stack]
    params = []
    for i, spec in enumerate(specs):
        p = init_params(spec, seed=i)
        params.append({k: t.data for k, t in p.tensors.items()})
    path = tmp_path / "cnn.ckpt"
    save_checkpoint(path, "mnist_cnn", specs, params, seeds={})
    loaded = load_checkpoint(path)
    assert len(loaded["params"]) == len(specs)
    assert loaded["params"][1] == {}  # maxpool carries no tensors
    assert loaded["specs"][4].kind == "flatten"


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"NOTACKPT" + b"\x00" * 64)
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)


def test_truncated_payload_rejected(tmp_path):
    specs, params = _demo_state()
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, "adult_mlp", specs, params, seeds={})
    blob = path.read_bytes()
    path.write_bytes(blob[:-16])
    with pytest.raises(CheckpointError, match="overruns|truncated"):
        load_checkpoint(path)


def test_garbage_header_rejected(tmp_path):
    path = tmp_path / "model.ckpt"
    import struct
    path.write_bytes(b"MOLECKPT" + struct.pack("<I", 1) + struct.pack("<Q", 4) + b"{{{{")
    with pytest.raises(CheckpointError, match="parse"):
        load_checkpoint(path)


def test_missing_file():
    with pytest.raises(CheckpointError):
        load_checkpoint("/nonexistent/path.ckpt")
