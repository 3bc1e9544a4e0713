"""Encoder behavior: initialization, forward contracts, equivariance."""

import math

import numpy as np
import pytest

import graphkde.gnn as G
from graphkde.errors import DimensionError, ValidationError
from graphkde.graphs import build_graph, permute
from graphkde.synth import GenSpec, generate
from graphkde.tensor import finite_diff_check, mean_all, parameter


def small_params(dims=(1, 16, 8), seed=2, **kw):
    return G.init_params(dims, seed=seed, **kw)


def test_init_deterministic_per_seed():
    a = G.init_params([3, 8, 4], seed=9)
    b = G.init_params([3, 8, 4], seed=9)
    for wa, wb in zip(a.weights, b.weights):
        assert np.array_equal(wa.value, wb.value)
    c = G.init_params([3, 8, 4], seed=10)
    assert not np.array_equal(a.weights[0].value, c.weights[0].value)


def test_init_entries_within_uniform_bound():
    params = G.init_params([5, 11, 7], seed=3)
    for w in params.weights:
        fan_in, fan_out = w.shape
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        assert np.all(np.abs(w.value) <= bound)


def test_init_mean_within_three_sigma():
    params = G.init_params([128, 128], seed=0)
    bound = math.sqrt(6.0 / 256)
    sigma_mean = bound / math.sqrt(3.0 * 128 * 128)
    assert abs(params.weights[0].value.mean()) <= 3.0 * sigma_mean


def test_init_rejects_bad_dimension_chains():
    with pytest.raises(ValidationError):
        G.init_params([4], seed=0)
    with pytest.raises(ValidationError):
        G.init_params([4, 0, 2], seed=0)


def test_params_validation():
    with pytest.raises(ValidationError):
        G.GnnParams([])
    with pytest.raises(DimensionError):
        G.GnnParams([parameter(np.zeros((3, 4))), parameter(np.zeros((5, 2)))])
    with pytest.raises(ValidationError):
        G.GnnParams([parameter(np.zeros((3, 4)))], dropout=1.0)


def test_params_dimension_properties():
    params = G.init_params([3, 8, 5], seed=0)
    assert params.layer_count == 2
    assert params.input_dim == 3
    assert params.output_dim == 5
    assert params.dimension_chain == (3, 8, 5)


def test_single_node_identity_weights_is_relu_chain():
    params = G.GnnParams([parameter([[1.0]]), parameter([[1.0]])])
    for x in (0.7, -0.3):
        g = build_graph(1, [], features=np.array([[x]]))
        out = G.encode(g, params).value
        assert out.shape == (1, 1)
        assert out[0, 0] == pytest.approx(max(x, 0.0), abs=1e-15)


def test_final_activation_flag_applies_relu_on_last_layer():
    neg = parameter([[-1.0]])
    g = build_graph(1, [], features=np.array([[2.0]]))
    linear = G.GnnParams([parameter([[1.0]]), neg])
    assert G.encode(g, linear).value[0, 0] == pytest.approx(-2.0)
    relu_out = G.GnnParams(
        [parameter([[1.0]]), parameter([[-1.0]])], final_activation=True
    )
    assert G.encode(g, relu_out).value[0, 0] == 0.0


def test_zero_weights_give_zero_embeddings():
    params = G.GnnParams([parameter(np.zeros((1, 4))), parameter(np.zeros((4, 3)))])
    g = generate(GenSpec("er", 1, (10, 12), seed=0))[0][0]
    assert np.all(G.encode(g, params).value == 0.0)


def test_encode_rejects_feature_dim_mismatch():
    params = G.init_params([3, 4, 2], seed=0)
    g = generate(GenSpec("er", 1, (8, 10), seed=0))[0][0]
    with pytest.raises(DimensionError):
        G.encode(g, params)


def test_encode_is_deterministic():
    params = small_params()
    g = generate(GenSpec("ws", 1, (15, 20), seed=1))[0][0]
    assert np.array_equal(G.encode(g, params).value, G.encode(g, params).value)


def test_permutation_equivariance():
    params = small_params()
    rng = np.random.default_rng(0)
    gs, _ = generate(GenSpec("ws", 3, (15, 25), seed=5))
    for g in gs:
        perm = rng.permutation(g.num_nodes)
        direct = G.encode(permute(g, perm), params).value
        permuted = G.encode(g, params).value[perm]
        assert np.max(np.abs(direct - permuted)) <= 1e-10


def test_encode_gradient_matches_finite_differences():
    g = generate(GenSpec("ws", 1, (10, 14), seed=5))[0][0]

    def build(weight_nodes):
        return mean_all(G.encode(g, G.GnnParams(list(weight_nodes))))

    seed_params = small_params(dims=(1, 6, 4))
    report = finite_diff_check(build, [w.value for w in seed_params.weights])
    assert report.max_rel_error < 1e-4
    assert report.checked > 0


def test_dropout_training_vs_inference():
    params = small_params(dims=(1, 8, 4), dropout=0.5)
    g = generate(GenSpec("er", 1, (12, 15), seed=2))[0][0]
    clean = G.encode(g, params, training=False).value
    dropped = G.encode(g, params, training=True, rng=np.random.default_rng(0)).value
    assert not np.array_equal(clean, dropped)
    with pytest.raises(ValidationError):
        G.encode(g, params, training=True)


def test_batch_norm_standardizes_and_tracks_running_stats():
    params = small_params(dims=(1, 8, 4), batch_norm=True)
    g = generate(GenSpec("er", 1, (20, 25), seed=3))[0][0]
    before = [m.copy() for m in params.running_mean]
    G.encode(g, params, training=True)
    assert any(not np.array_equal(b, m) for b, m in zip(before, params.running_mean))
    # inference path only reads the running statistics
    one = G.encode(g, params, training=False).value
    two = G.encode(g, params, training=False).value
    assert np.array_equal(one, two)
