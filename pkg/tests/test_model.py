"""Checkpoint container: serialization roundtrip and validation."""

import json

import numpy as np
import pytest

from graphkde.errors import DataFormatError
from graphkde.gnn import encode
from graphkde.model import CHECKPOINT_VERSION, DensityModel, default_model
from graphkde.synth import GenSpec, generate


def small_model():
    return default_model(1, 8, 4, seed=3, bandwidths=(0.1, 1.0, 10.0))


def test_roundtrip_preserves_every_value(tmp_path):
    model = small_model()
    model.gnn.running_mean[0][:] = 0.25
    model.gnn.running_var[0][:] = 2.0
    path = tmp_path / "ckpt.json"
    model.save(path)
    loaded = DensityModel.load(path)
    for a, b in zip(model.gnn.weights, loaded.gnn.weights):
        assert np.array_equal(a.value, b.value)
    assert np.array_equal(model.kde.logits.value, loaded.kde.logits.value)
    assert loaded.kde.bandwidths == model.kde.bandwidths
    assert loaded.family.gammas == model.family.gammas
    for a, b in zip(model.gnn.running_mean, loaded.gnn.running_mean):
        assert np.array_equal(a, b)
    for a, b in zip(model.gnn.running_var, loaded.gnn.running_var):
        assert np.array_equal(a, b)
    assert loaded.gnn.batch_norm == model.gnn.batch_norm
    assert loaded.gnn.dropout == model.gnn.dropout
    assert loaded.gnn.final_activation == model.gnn.final_activation


def test_loaded_model_encodes_identically(tmp_path):
    model = small_model()
    gs, _ = generate(GenSpec("er", 3, (6, 10), seed=2))
    path = tmp_path / "ckpt.json"
    model.save(path)
    loaded = DensityModel.load(path)
    for g in gs:
        assert np.array_equal(
            encode(g, model.gnn).value, encode(g, loaded.gnn).value
        )


def test_trainable_parameters_order():
    model = small_model()
    params = model.trainable_parameters()
    assert params[:-1] == model.gnn.weights
    assert params[-1] is model.kde.logits
    assert all(p.requires_grad for p in params)


def test_load_state_dict_restores_mutated_values():
    model = small_model()
    saved = model.state_dict()
    for w in model.gnn.weights:
        w.value += 1.0
    model.kde.logits.value += 0.5
    model.load_state_dict(saved)
    restored = model.state_dict()
    assert restored["weights"] == saved["weights"]
    assert restored["mixture_logits"] == saved["mixture_logits"]


def test_unsupported_version_rejected(tmp_path):
    model = small_model()
    state = model.state_dict()
    state["format_version"] = CHECKPOINT_VERSION + 1
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(state))
    with pytest.raises(DataFormatError):
        DensityModel.load(path)


def test_missing_field_rejected(tmp_path):
    state = small_model().state_dict()
    del state["weights"]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(state))
    with pytest.raises(DataFormatError):
        DensityModel.load(path)


def test_garbage_file_rejected(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("not json {")
    with pytest.raises(DataFormatError):
        DensityModel.load(path)
    path.write_text("[1, 2, 3]")
    with pytest.raises(DataFormatError):
        DensityModel.load(path)


def test_default_model_dimension_chain():
    model = default_model(5, 16, 8, seed=0)
    assert model.gnn.dimension_chain == (5, 16, 8)
    assert model.kde.bandwidths == (0.01, 0.1, 1.0, 10.0, 100.0)
    assert len(model.family) == 5
