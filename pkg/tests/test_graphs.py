"""Graph type, validation, normalization, permutation, and loaders."""

import json

import numpy as np
import pytest

from graphkde import graphs as G
from graphkde.errors import DataFormatError, GraphDataWarning, ValidationError


def two_path():
    return G.build_graph(3, [[0, 1], [1, 2]], graph_id="path3")


def test_validate_minimal_graph_ok():
    g = G.build_graph(1, [], features=np.array([[1.0]]))
    assert G.validate(g) == []


def test_validate_reports_asymmetry():
    adj = np.zeros((2, 2))
    adj[0, 1] = 1.0
    g = G.Graph(adj, np.zeros((2, 1)))
    assert any("asymmetric" in v for v in G.validate(g))


def test_validate_reports_nan_feature_position():
    g = G.build_graph(2, [[0, 1]])
    feats = g.features.copy()
    feats[1, 0] = np.nan
    bad = G.Graph(g.adjacency, feats)
    [viol] = [v for v in G.validate(bad) if "non-finite" in v]
    assert "row 1" in viol and "col 0" in viol


def test_validate_reports_nonbinary_and_diagonal():
    adj = np.array([[1.0, 0.5], [0.5, 0.0]])
    g = G.Graph(adj, np.zeros((2, 1)))
    msgs = " ".join(G.validate(g))
    assert "diagonal" in msgs and "non-binary" in msgs


def test_normalized_adjacency_isolated_node():
    g = G.build_graph(1, [], features=np.array([[1.0]]))
    np.testing.assert_allclose(G.normalized_adjacency(g), [[1.0]])


def test_normalized_adjacency_single_edge():
    g = G.build_graph(2, [[0, 1]])
    np.testing.assert_allclose(
        G.normalized_adjacency(g), [[0.5, 0.5], [0.5, 0.5]], atol=1e-15
    )


@pytest.mark.parametrize("seed", range(5))
def test_normalized_adjacency_spectral_norm(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 40))
    upper = np.triu((rng.random((n, n)) < 0.2).astype(float), 1)
    g = G.Graph(upper + upper.T, np.zeros((n, 1)))
    norm = np.linalg.norm(G.normalized_adjacency(g), ord=2)
    assert norm <= 1.0 + 1e-10


def test_permute_identity_and_involution():
    g = two_path()
    same = G.permute(g, [0, 1, 2])
    np.testing.assert_array_equal(same.adjacency, g.adjacency)
    np.testing.assert_array_equal(same.features, g.features)
    twice = G.permute(G.permute(g, [1, 0, 2]), [1, 0, 2])
    np.testing.assert_array_equal(twice.adjacency, g.adjacency)


def test_permute_preserves_degree_multiset():
    rng = np.random.default_rng(7)
    upper = np.triu((rng.random((9, 9)) < 0.4).astype(float), 1)
    g = G.Graph(upper + upper.T, np.zeros((9, 1)))
    perm = rng.permutation(9)
    before = sorted(g.adjacency.sum(axis=1))
    after = sorted(G.permute(g, perm).adjacency.sum(axis=1))
    assert before == after


def test_permute_conjugates_normalized_adjacency_exactly():
    rng = np.random.default_rng(8)
    upper = np.triu((rng.random((7, 7)) < 0.4).astype(float), 1)
    g = G.Graph(upper + upper.T, rng.normal(size=(7, 2)))
    perm = rng.permutation(7)
    direct = G.normalized_adjacency(G.permute(g, perm))
    conjugated = G.normalized_adjacency(g)[np.ix_(perm, perm)]
    np.testing.assert_array_equal(direct, conjugated)


def test_permute_rejects_non_bijection():
    with pytest.raises(ValidationError):
        G.permute(two_path(), [0, 0, 1])


def test_build_graph_drops_self_loops_with_warning():
    with pytest.warns(GraphDataWarning):
        g = G.build_graph(3, [[0, 1], [2, 2]])
    assert g.num_edges == 1


def test_load_jsonl_basic(tmp_path):
    p = tmp_path / "d.jsonl"
    p.write_text('{"num_nodes":2,"edges":[[0,1]],"features":[[1],[1]]}\n')
    gs = G.load_jsonl(p)
    assert len(gs) == 1
    assert gs[0].num_nodes == 2
    assert gs[0].num_edges == 1


def test_load_jsonl_out_of_range_edge_has_line_number(tmp_path):
    p = tmp_path / "d.jsonl"
    good = '{"num_nodes":2,"edges":[[0,1]],"features":[[1],[1]]}'
    bad = '{"num_nodes":3,"edges":[[0,5]],"features":[[1],[1],[1]]}'
    p.write_text(good + "\n" + bad + "\n")
    with pytest.raises(DataFormatError, match=":2:"):
        G.load_jsonl(p)


def test_load_jsonl_parse_error_has_line_number(tmp_path):
    p = tmp_path / "d.jsonl"
    p.write_text('{"num_nodes":2,"edges":[[0,1]],"features":[[1],[1]]}\n{oops\n')
    with pytest.raises(DataFormatError, match=":2:"):
        G.load_jsonl(p)


def test_load_jsonl_empty_file_warns(tmp_path):
    p = tmp_path / "d.jsonl"
    p.write_text("")
    with pytest.warns(GraphDataWarning):
        gs = G.load_jsonl(p)
    assert len(gs) == 0


def test_load_jsonl_rejects_mixed_feature_dims(tmp_path):
    p = tmp_path / "d.jsonl"
    lines = [
        '{"num_nodes":1,"edges":[],"features":[[1]]}',
        '{"num_nodes":1,"edges":[],"features":[[1,2]]}',
    ]
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataFormatError):
        G.load_jsonl(p)


def test_jsonl_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    gs = []
    for i in range(4):
        n = int(rng.integers(2, 8))
        upper = np.triu((rng.random((n, n)) < 0.5).astype(float), 1)
        gs.append(
            G.Graph(upper + upper.T, rng.normal(size=(n, 2)), i % 2, f"g{i}")
        )
    path = tmp_path / "round.jsonl"
    G.save_jsonl(G.GraphSet(tuple(gs)), path)
    back = G.load_jsonl(path)
    assert len(back) == 4
    for a, b in zip(gs, back):
        np.testing.assert_array_equal(a.adjacency, b.adjacency)
        np.testing.assert_allclose(a.features, b.features)
        assert a.label == b.label and a.graph_id == b.graph_id


def write_tu(tmp_path, node_labels=True, graph_labels=(1, 1, 2)):
    d = tmp_path / "TOY"
    d.mkdir()
    # three graphs of two nodes each, one edge per graph
    (d / "TOY_A.txt").write_text("1, 2\n2, 1\n3, 4\n4, 3\n5, 6\n6, 5\n")
    (d / "TOY_graph_indicator.txt").write_text("1\n1\n2\n2\n3\n3\n")
    if node_labels:
        (d / "TOY_node_labels.txt").write_text("0\n1\n0\n0\n1\n1\n")
    if graph_labels is not None:
        (d / "TOY_graph_labels.txt").write_text("\n".join(map(str, graph_labels)) + "\n")
    return d


def test_load_tu_basic(tmp_path):
    gs = G.load_tu(write_tu(tmp_path))
    assert len(gs) == 3
    assert all(g.num_nodes == 2 and g.num_edges == 1 for g in gs)
    assert gs.feature_dim == 2
    np.testing.assert_array_equal(gs[0].features, [[1.0, 0.0], [0.0, 1.0]])
    assert [g.label for g in gs] == [0, 0, 1]
    assert all(G.validate(g) == [] for g in gs)


def test_load_tu_degree_features_when_unlabeled(tmp_path):
    gs = G.load_tu(write_tu(tmp_path, node_labels=False, graph_labels=None))
    assert gs.feature_dim == 1
    np.testing.assert_allclose(gs[0].features, [[1.0], [1.0]])
    assert gs.labels() == [None, None, None]


def test_load_tu_missing_file(tmp_path):
    d = write_tu(tmp_path)
    (d / "TOY_A.txt").unlink()
    with pytest.raises(DataFormatError, match="_A.txt"):
        G.load_tu(d)


def test_load_tu_cross_graph_edge(tmp_path):
    d = write_tu(tmp_path)
    (d / "TOY_A.txt").write_text("1, 3\n")
    with pytest.raises(DataFormatError, match="spans"):
        G.load_tu(d)
