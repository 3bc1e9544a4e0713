"""Graph representation, validation, normalization, and dataset ingestion."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import DataFormatError, GraphDataWarning, ValidationError

__all__ = [
    "Graph",
    "GraphSet",
    "build_graph",
    "degree_features",
    "validate",
    "normalized_adjacency",
    "permute",
    "load_jsonl",
    "save_jsonl",
    "load_tu",
]


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph: symmetric binary adjacency, node features.

    ``label`` is 0 for normal, 1 for anomalous, None when unknown.
    """

    adjacency: np.ndarray
    features: np.ndarray
    label: int | None = None
    graph_id: str = ""

    @property
    def num_nodes(self) -> int:
        return self.adjacency.shape[0]

    @property
    def num_edges(self) -> int:
        return int(self.adjacency.sum()) // 2


@dataclass(frozen=True)
class GraphSet:
    """Immutable collection of graphs sharing one feature dimension."""

    graphs: tuple[Graph, ...]

    def __post_init__(self):
        dims = {g.features.shape[1] for g in self.graphs}
        if len(dims) > 1:
            raise ValidationError(f"inconsistent feature dimensions {sorted(dims)}")

    @property
    def feature_dim(self) -> int:
        return self.graphs[0].features.shape[1] if self.graphs else 0

    def __len__(self) -> int:
        return len(self.graphs)

    def __iter__(self) -> Iterator[Graph]:
        return iter(self.graphs)

    def __getitem__(self, i) -> Graph:
        return self.graphs[i]

    def labels(self) -> list[int | None]:
        return [g.label for g in self.graphs]

    def subset(self, indices: Sequence[int]) -> "GraphSet":
        return GraphSet(tuple(self.graphs[i] for i in indices))


def degree_features(adjacency: np.ndarray) -> np.ndarray:
    """Single per-node feature: degree divided by the graph's max degree."""
    deg = adjacency.sum(axis=1)
    top = deg.max()
    if top == 0.0:
        return np.zeros((adjacency.shape[0], 1))
    return (deg / top).reshape(-1, 1)


def build_graph(
    num_nodes: int,
    edges: Iterable[Sequence[int]],
    features: np.ndarray | None = None,
    label: int | None = None,
    graph_id: str = "",
) -> Graph:
    """Construct a Graph from an undirected edge list.

    Edges are symmetrized and deduplicated; self-loops are dropped with a
    warning. ``features`` defaults to the normalized degree.
    """
    if num_nodes < 1:
        raise ValidationError("graph needs at least one node")
    adj = np.zeros((num_nodes, num_nodes))
    dropped = 0
    for e in edges:
        u, v = int(e[0]), int(e[1])
        if not (0 <= u < num_nodes and 0 <= v < num_nodes):
            raise ValidationError(
                f"edge [{u}, {v}] out of range for {num_nodes} nodes"
            )
        if u == v:
            dropped += 1
            continue
        adj[u, v] = 1.0
        adj[v, u] = 1.0
    if dropped:
        warnings.warn(
            f"dropped {dropped} self-loop(s) in graph '{graph_id}'", GraphDataWarning
        )
    if features is None:
        feats = degree_features(adj)
    else:
        feats = np.array(features, dtype=np.float64)
        if feats.ndim == 1:
            feats = feats.reshape(-1, 1)
        if feats.shape[0] != num_nodes:
            raise ValidationError(
                f"feature rows {feats.shape[0]} != num_nodes {num_nodes}"
            )
    return Graph(adj, feats, label, graph_id)


def validate(g: Graph) -> list[str]:
    """Return a list of invariant violations; empty means the graph is valid."""
    out: list[str] = []
    a = g.adjacency
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        out.append(f"adjacency not square: shape {a.shape}")
        return out
    asym = np.argwhere(a != a.T)
    if asym.size:
        i, j = asym[0]
        out.append(f"adjacency asymmetric at ({i}, {j})")
    diag = np.flatnonzero(np.diag(a))
    if diag.size:
        out.append(f"nonzero diagonal at node {diag[0]}")
    nonbin = np.argwhere((a != 0.0) & (a != 1.0))
    if nonbin.size:
        i, j = nonbin[0]
        out.append(f"non-binary adjacency entry {a[i, j]} at ({i}, {j})")
    if g.features.ndim != 2 or g.features.shape[0] != a.shape[0]:
        out.append(
            f"feature rows {g.features.shape[0]} != node count {a.shape[0]}"
        )
    else:
        bad = np.argwhere(~np.isfinite(g.features))
        if bad.size:
            i, j = bad[0]
            out.append(f"non-finite feature at row {i}, col {j}")
    if g.label is not None and g.label not in (0, 1):
        out.append(f"label {g.label} not in {{0, 1}}")
    return out


def normalized_adjacency(g: Graph) -> np.ndarray:
    """Self-loop-augmented symmetric normalization D^-1/2 (A+I) D^-1/2.

    Degrees come from A+I, so every degree is positive and the spectral norm
    is at most 1.
    """
    a_hat = g.adjacency + np.eye(g.num_nodes)
    inv_sqrt = 1.0 / np.sqrt(a_hat.sum(axis=1))
    return a_hat * np.outer(inv_sqrt, inv_sqrt)


def permute(g: Graph, perm: Sequence[int]) -> Graph:
    """Relabel nodes so new node i is old node perm[i]."""
    perm = np.asarray(perm, dtype=np.int64)
    n = g.num_nodes
    if perm.shape != (n,) or not np.array_equal(np.sort(perm), np.arange(n)):
        raise ValidationError(f"perm is not a permutation of 0..{n - 1}")
    return Graph(
        g.adjacency[np.ix_(perm, perm)].copy(),
        g.features[perm].copy(),
        g.label,
        g.graph_id,
    )


def load_jsonl(path) -> GraphSet:
    """Read a graphs-per-line JSON file.

    Each line holds num_nodes, edges, features, and optionally label and id.
    Errors carry the offending 1-based line number.
    """
    path = Path(path)
    graphs: list[Graph] = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataFormatError(f"{path}:{lineno}: invalid JSON: {e}") from e
            try:
                graphs.append(_graph_from_record(rec, default_id=f"g{lineno}"))
            except (ValidationError, KeyError, TypeError) as e:
                raise DataFormatError(f"{path}:{lineno}: {e}") from e
    if not graphs:
        warnings.warn(f"{path}: no graphs found", GraphDataWarning)
    try:
        return GraphSet(tuple(graphs))
    except ValidationError as e:
        raise DataFormatError(f"{path}: {e}") from e


def _graph_from_record(rec: dict, default_id: str) -> Graph:
    n = int(rec["num_nodes"])
    feats = np.array(rec["features"], dtype=np.float64)
    label = rec.get("label")
    return build_graph(
        n,
        rec["edges"],
        features=feats,
        label=None if label is None else int(label),
        graph_id=str(rec.get("id", default_id)),
    )


def save_jsonl(graphs: GraphSet | Sequence[Graph], path) -> None:
    """Write graphs one JSON object per line; inverse of load_jsonl."""
    path = Path(path)
    with path.open("w") as fh:
        for g in graphs:
            rows, cols = np.nonzero(np.triu(g.adjacency))
            rec = {
                "num_nodes": g.num_nodes,
                "edges": [[int(u), int(v)] for u, v in zip(rows, cols)],
                "features": g.features.tolist(),
                "id": g.graph_id,
            }
            if g.label is not None:
                rec["label"] = int(g.label)
            fh.write(json.dumps(rec) + "\n")


def _tu_file(directory: Path, suffix: str, required: bool) -> Path | None:
    hits = sorted(directory.glob(f"*_{suffix}.txt"))
    if not hits:
        if required:
            raise DataFormatError(f"{directory}: missing *_{suffix}.txt")
        return None
    return hits[0]


def load_tu(directory) -> GraphSet:
    """Read a dataset directory in the TU benchmark plain-text layout.

    Node labels, when present, become one-hot features over the label
    alphabet of the whole dataset; otherwise each node carries its
    normalized degree. Graph labels are remapped so the majority class is 0
    (normal) and every minority class is 1 (anomalous).
    """
    directory = Path(directory)
    edges_path = _tu_file(directory, "A", required=True)
    indicator_path = _tu_file(directory, "graph_indicator", required=True)
    node_labels_path = _tu_file(directory, "node_labels", required=False)
    graph_labels_path = _tu_file(directory, "graph_labels", required=False)

    indicator = np.loadtxt(indicator_path, dtype=np.int64, ndmin=1)
    num_graphs = int(indicator.max())
    counts = np.bincount(indicator, minlength=num_graphs + 1)[1:]
    if np.any(counts == 0):
        raise DataFormatError(f"{indicator_path}: graph with zero nodes")
    node_offset = np.concatenate(([0], np.cumsum(counts)))
    if not np.array_equal(indicator, np.repeat(np.arange(1, num_graphs + 1), counts)):
        raise DataFormatError(f"{indicator_path}: node ids not grouped by graph")

    per_graph_edges: list[list[tuple[int, int]]] = [[] for _ in range(num_graphs)]
    with edges_path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                u, v = (int(x) for x in line.replace(",", " ").split())
            except ValueError as e:
                raise DataFormatError(f"{edges_path}:{lineno}: {e}") from e
            if not (1 <= u <= indicator.size and 1 <= v <= indicator.size):
                raise DataFormatError(f"{edges_path}:{lineno}: node id out of range")
            gu, gv = indicator[u - 1], indicator[v - 1]
            if gu != gv:
                raise DataFormatError(
                    f"{edges_path}:{lineno}: edge spans graphs {gu} and {gv}"
                )
            base = node_offset[gu - 1]
            per_graph_edges[gu - 1].append((u - 1 - base, v - 1 - base))

    features_per_graph: list[np.ndarray | None] = [None] * num_graphs
    if node_labels_path is not None:
        raw = np.loadtxt(node_labels_path, dtype=np.int64, ndmin=1)
        if raw.size != indicator.size:
            raise DataFormatError(f"{node_labels_path}: label count != node count")
        alphabet = np.unique(raw)
        onehot = (raw[:, None] == alphabet[None, :]).astype(np.float64)
        for gi in range(num_graphs):
            features_per_graph[gi] = onehot[node_offset[gi] : node_offset[gi + 1]]

    labels: list[int | None] = [None] * num_graphs
    if graph_labels_path is not None:
        raw = np.loadtxt(graph_labels_path, dtype=np.int64, ndmin=1)
        if raw.size != num_graphs:
            raise DataFormatError(f"{graph_labels_path}: label count != graph count")
        classes, freq = np.unique(raw, return_counts=True)
        majority = classes[np.argmax(freq)]
        labels = [0 if c == majority else 1 for c in raw]

    name = edges_path.name[: -len("_A.txt")]
    graphs = [
        build_graph(
            int(counts[gi]),
            per_graph_edges[gi],
            features=features_per_graph[gi],
            label=labels[gi],
            graph_id=f"{name}_{gi + 1}",
        )
        for gi in range(num_graphs)
    ]
    return GraphSet(tuple(graphs))
