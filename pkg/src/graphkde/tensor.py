"""Reverse-mode automatic differentiation over dense float64 matrices.

Every value on the tape is a 2-D row-major numpy array of float64. Operations
build an acyclic graph of ``Node`` objects; ``backward`` walks the graph once
in reverse topological order and adds gradients into every node it reaches.
Gradients accumulate additively across calls; callers reset with
``zero_grad``. Subgradient conventions: relu'(0) = 0 and sqrt'(0) = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, NumericalError, ValidationError

__all__ = [
    "Node",
    "as_matrix",
    "parameter",
    "constant",
    "matmul",
    "add",
    "subtract",
    "multiply",
    "divide",
    "scale",
    "negate",
    "exp",
    "relu",
    "square",
    "sqrt",
    "softmax",
    "maximum",
    "transpose",
    "reshape",
    "sum_all",
    "mean_all",
    "concat_rows",
    "concat_cols",
    "slice_rows",
    "pairwise_sq_dists",
    "block_kernel_means",
    "backward",
    "zero_grad",
    "finite_diff_check",
    "FiniteDiffReport",
]

# Elementwise work on large kernel matrices is done in row chunks of this many
# entries to bound transient memory.
_CHUNK_ENTRIES = 8_000_000


def as_matrix(data) -> np.ndarray:
    """Coerce ``data`` to a finite 2-D float64 array.

    Scalars become 1x1; 1-D sequences become a single row.
    """
    arr = np.array(data, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise DimensionError(f"expected at most 2 dimensions, got {arr.ndim}")
    if arr.size == 0:
        raise DimensionError("matrix must have positive size")
    if not np.all(np.isfinite(arr)):
        raise NumericalError("matrix contains non-finite entries")
    return np.ascontiguousarray(arr)


class Node:
    """One tape entry: a value, its accumulated gradient, and a backward rule.

    ``rule`` maps the upstream gradient (same shape as ``value``) to a tuple
    of gradients aligned with ``parents``; ``None`` entries skip a parent.
    """

    __slots__ = ("value", "grad", "parents", "rule", "requires_grad")

    def __init__(self, value, parents=(), rule=None, requires_grad=False):
        self.value = value
        self.grad = None
        self.parents = tuple(parents)
        self.rule = rule
        self.requires_grad = requires_grad or any(p.requires_grad for p in self.parents)

    @property
    def shape(self):
        return self.value.shape


def parameter(data) -> Node:
    """Leaf node that receives gradients."""
    return Node(as_matrix(data), requires_grad=True)


def constant(data) -> Node:
    """Leaf node treated as fixed data."""
    return Node(as_matrix(data))


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum ``g`` down to ``shape`` along axes that numpy broadcast."""
    for ax in range(2):
        if shape[ax] == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _broadcast_shape(a: Node, b: Node):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"shapes {a.shape} and {b.shape} do not broadcast")


def matmul(a: Node, b: Node) -> Node:
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shapes {a.shape} x {b.shape}")
    out = a.value @ b.value

    def rule(g):
        return (
            g @ b.value.T if a.requires_grad else None,
            a.value.T @ g if b.requires_grad else None,
        )

    return Node(out, (a, b), rule)


def add(a: Node, b: Node) -> Node:
    _broadcast_shape(a, b)

    def rule(g):
        return (
            _unbroadcast(g, a.shape) if a.requires_grad else None,
            _unbroadcast(g, b.shape) if b.requires_grad else None,
        )

    return Node(a.value + b.value, (a, b), rule)


def subtract(a: Node, b: Node) -> Node:
    _broadcast_shape(a, b)

    def rule(g):
        return (
            _unbroadcast(g, a.shape) if a.requires_grad else None,
            _unbroadcast(-g, b.shape) if b.requires_grad else None,
        )

    return Node(a.value - b.value, (a, b), rule)


def multiply(a: Node, b: Node) -> Node:
    _broadcast_shape(a, b)

    def rule(g):
        return (
            _unbroadcast(g * b.value, a.shape) if a.requires_grad else None,
            _unbroadcast(g * a.value, b.shape) if b.requires_grad else None,
        )

    return Node(a.value * b.value, (a, b), rule)


def divide(a: Node, b: Node) -> Node:
    _broadcast_shape(a, b)
    if np.any(b.value == 0.0):
        raise NumericalError("division by zero entry")
    out = a.value / b.value

    def rule(g):
        return (
            _unbroadcast(g / b.value, a.shape) if a.requires_grad else None,
            _unbroadcast(-g * out / b.value, b.shape) if b.requires_grad else None,
        )

    return Node(out, (a, b), rule)


def scale(a: Node, c: float) -> Node:
    c = float(c)

    def rule(g):
        return (g * c,)

    return Node(a.value * c, (a,), rule)


def negate(a: Node) -> Node:
    return scale(a, -1.0)


def exp(a: Node) -> Node:
    out = np.exp(a.value)
    if not np.all(np.isfinite(out)):
        raise NumericalError("exp overflow")

    def rule(g):
        return (g * out,)

    return Node(out, (a,), rule)


def relu(a: Node) -> Node:
    # Subgradient 0 at exactly 0: the mask is strict.
    def rule(g):
        return (g * (a.value > 0.0),)

    return Node(np.maximum(a.value, 0.0), (a,), rule)


def square(a: Node) -> Node:
    def rule(g):
        return (g * (2.0 * a.value),)

    return Node(a.value * a.value, (a,), rule)


def sqrt(a: Node) -> Node:
    if np.any(a.value < 0.0):
        raise NumericalError("sqrt of negative entry")
    out = np.sqrt(a.value)

    def rule(g):
        # Subgradient 0 at exactly 0.
        gr = np.zeros_like(g)
        mask = a.value > 0.0
        gr[mask] = g[mask] * (0.5 / out[mask])
        return (gr,)

    return Node(out, (a,), rule)


def softmax(a: Node) -> Node:
    """Row-wise softmax, stabilized by max subtraction."""
    shifted = a.value - a.value.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)

    def rule(g):
        inner = (g * out).sum(axis=1, keepdims=True)
        return (out * (g - inner),)

    return Node(out, (a,), rule)


def maximum(a: Node, b: Node) -> Node:
    """Elementwise max; at ties the gradient goes to ``a``."""
    if a.shape != b.shape:
        raise DimensionError(f"maximum shapes {a.shape} vs {b.shape}")
    take_a = a.value >= b.value

    def rule(g):
        return (
            g * take_a if a.requires_grad else None,
            g * ~take_a if b.requires_grad else None,
        )

    return Node(np.maximum(a.value, b.value), (a, b), rule)


def transpose(a: Node) -> Node:
    def rule(g):
        return (np.ascontiguousarray(g.T),)

    return Node(np.ascontiguousarray(a.value.T), (a,), rule)


def reshape(a: Node, rows: int, cols: int) -> Node:
    if rows * cols != a.value.size:
        raise DimensionError(f"cannot reshape {a.shape} to {(rows, cols)}")

    def rule(g):
        return (g.reshape(a.shape),)

    return Node(a.value.reshape(rows, cols), (a,), rule)


def sum_all(a: Node) -> Node:
    def rule(g):
        return (np.full(a.shape, g[0, 0]),)

    return Node(np.array([[a.value.sum()]]), (a,), rule)


def mean_all(a: Node) -> Node:
    inv = 1.0 / a.value.size

    def rule(g):
        return (np.full(a.shape, g[0, 0] * inv),)

    return Node(np.array([[a.value.mean()]]), (a,), rule)


def concat_rows(nodes: Sequence[Node]) -> Node:
    nodes = list(nodes)
    if not nodes:
        raise DimensionError("concat_rows of empty sequence")
    cols = nodes[0].shape[1]
    for n in nodes:
        if n.shape[1] != cols:
            raise DimensionError("concat_rows column mismatch")
    offsets = np.cumsum([0] + [n.shape[0] for n in nodes])

    def rule(g):
        return tuple(
            g[offsets[i] : offsets[i + 1]] if n.requires_grad else None
            for i, n in enumerate(nodes)
        )

    return Node(np.vstack([n.value for n in nodes]), nodes, rule)


def concat_cols(nodes: Sequence[Node]) -> Node:
    nodes = list(nodes)
    if not nodes:
        raise DimensionError("concat_cols of empty sequence")
    rows = nodes[0].shape[0]
    for n in nodes:
        if n.shape[0] != rows:
            raise DimensionError("concat_cols row mismatch")
    offsets = np.cumsum([0] + [n.shape[1] for n in nodes])

    def rule(g):
        return tuple(
            np.ascontiguousarray(g[:, offsets[i] : offsets[i + 1]])
            if n.requires_grad
            else None
            for i, n in enumerate(nodes)
        )

    return Node(np.hstack([n.value for n in nodes]), nodes, rule)


def slice_rows(a: Node, start: int, stop: int) -> Node:
    if not (0 <= start < stop <= a.shape[0]):
        raise DimensionError(f"slice [{start}:{stop}] of {a.shape[0]} rows")

    def rule(g):
        full = np.zeros(a.shape)
        full[start:stop] = g
        return (full,)

    return Node(a.value[start:stop].copy(), (a,), rule)


def matmul_canonical(a: Node, b: Node) -> Node:
    """Matrix product with a value-sorted per-entry summation order.

    Each output entry sums its products in ascending value order, so the
    result depends only on the multiset of terms. Consistently permuting
    the contraction axis of both operands then reproduces the output
    bitwise, which plain BLAS summation does not guarantee. Costs an
    n*k*m intermediate; reserve for small operands needing exact
    relabeling invariance.
    """
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul {a.shape} @ {b.shape}")
    terms = a.value[:, :, None] * b.value[None, :, :]
    terms.sort(axis=1, kind="stable")
    out = terms.sum(axis=1)

    def rule(g):
        ga = g @ b.value.T if a.requires_grad else None
        gb = a.value.T @ g if b.requires_grad else None
        return (ga, gb)

    return Node(out, (a, b), rule)


def pairwise_sq_dists_value(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Plain-array forward pass shared with the taped op below."""
    xsq = np.einsum("ij,ij->i", x, x)
    ysq = np.einsum("ij,ij->i", y, y)
    out = xsq[:, None] + ysq[None, :] - 2.0 * (x @ y.T)
    np.maximum(out, 0.0, out=out)
    return out


def pairwise_sq_dists_canonical(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Squared row distances with position-independent per-entry rounding.

    Sums (x_i - y_j)^2 directly over the feature axis, so each entry's
    floating-point result depends only on the two rows involved, never on
    where they sit in the matrix. BLAS-backed products do not guarantee
    that, which matters when comparing relabeled graphs. Costs an
    n*m*dim intermediate, chunked to bound memory.
    """
    n = x.shape[0]
    out = np.empty((n, y.shape[0]))
    rows = max(1, _CHUNK_ENTRIES // max(1, y.shape[0] * y.shape[1]))
    for start in range(0, n, rows):
        stop = min(n, start + rows)
        diff = x[start:stop, None, :] - y[None, :, :]
        np.einsum("ijk,ijk->ij", diff, diff, out=out[start:stop])
    return out


def pairwise_sq_dists(x: Node, y: Node) -> Node:
    """All squared Euclidean distances between rows of ``x`` and rows of ``y``.

    Output[i, j] = ||x_i - y_j||^2, clamped at 0 against roundoff. The
    backward rule differentiates the unclamped quadratic form, which matches
    the true distance gradient everywhere including coincident rows.
    """
    if x.shape[1] != y.shape[1]:
        raise DimensionError(f"row dims {x.shape[1]} vs {y.shape[1]}")
    out = pairwise_sq_dists_value(x.value, y.value)

    def rule(g):
        gx = gy = None
        if x.requires_grad:
            gx = 2.0 * (x.value * g.sum(axis=1, keepdims=True) - g @ y.value)
        if y.requires_grad:
            gy = 2.0 * (y.value * g.sum(axis=0)[:, None] - g.T @ x.value)
        return (gx, gy)

    return Node(out, (x, y), rule)


def _segment_offsets(sizes: Sequence[int], total: int, what: str) -> np.ndarray:
    sizes = np.asarray(sizes, dtype=np.int64)
    if sizes.ndim != 1 or sizes.size == 0 or np.any(sizes <= 0):
        raise DimensionError(f"{what} segment sizes must be positive")
    if int(sizes.sum()) != total:
        raise DimensionError(f"{what} segment sizes sum {sizes.sum()} != {total}")
    return np.concatenate(([0], np.cumsum(sizes)[:-1]))


def block_kernel_means(d: Node, gamma: float, row_sizes, col_sizes) -> Node:
    """Per-block means of the Gaussian kernel exp(-gamma * d).

    ``d`` holds pairwise squared distances; ``row_sizes``/``col_sizes``
    partition its rows and columns into contiguous segments (one per graph).
    Output[a, b] is the mean kernel value over block (a, b). The kernel
    matrix is recomputed in chunks during backward instead of being stored.
    """
    gamma = float(gamma)
    if gamma <= 0.0:
        raise ValidationError("gamma must be positive")
    row_sizes = np.asarray(row_sizes, dtype=np.int64)
    col_sizes = np.asarray(col_sizes, dtype=np.int64)
    row_off = _segment_offsets(row_sizes, d.shape[0], "row")
    col_off = _segment_offsets(col_sizes, d.shape[1], "col")
    inv_counts = 1.0 / np.outer(row_sizes, col_sizes)

    chunk = max(1, _CHUNK_ENTRIES // max(1, d.shape[1]))
    sums = np.zeros((len(row_sizes), len(col_sizes)))
    row_id = np.repeat(np.arange(len(row_sizes)), row_sizes)
    buf = np.empty((min(chunk, d.shape[0]), d.shape[1]))
    for lo in range(0, d.shape[0], chunk):
        hi = min(lo + chunk, d.shape[0])
        k = buf[: hi - lo]
        np.multiply(d.value[lo:hi], -gamma, out=k)
        np.exp(k, out=k)
        part = np.add.reduceat(k, col_off, axis=1)
        first, last = row_id[lo], row_id[hi - 1]
        starts = row_off[first : last + 1] - lo
        starts[0] = 0
        sums[first : last + 1] += np.add.reduceat(part, starts, axis=0)
    out = sums * inv_counts

    def rule(g):
        w = g * inv_counts
        gd = np.empty(d.shape)
        w_cols = np.repeat(w, col_sizes, axis=1)
        for lo in range(0, d.shape[0], chunk):
            hi = min(lo + chunk, d.shape[0])
            part = gd[lo:hi]
            np.multiply(d.value[lo:hi], -gamma, out=part)
            np.exp(part, out=part)
            part *= w_cols[row_id[lo:hi]]
            part *= -gamma
        return (gd,)

    return Node(out, (d,), rule)


def backward(loss: Node) -> None:
    """Accumulate d(loss)/d(node) into ``grad`` of every reachable node.

    ``loss`` must be 1x1. Repeated calls without ``zero_grad`` add their
    contributions.
    """
    if loss.shape != (1, 1):
        raise DimensionError(f"loss must be 1x1, got {loss.shape}")
    order = _topo_order(loss)
    upstream: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
    for node in order:
        g = upstream.pop(id(node), None)
        if g is None:
            continue
        if node.grad is None:
            node.grad = np.zeros(node.shape)
        node.grad += g
        if node.rule is None or not node.parents:
            continue
        donated: set[int] = set()
        for parent, pg in zip(node.parents, node.rule(g)):
            if pg is None or not parent.requires_grad:
                continue
            acc = upstream.get(id(parent))
            if acc is None:
                # Copy views and already-donated buffers: stored arrays are
                # mutated in place by later accumulation.
                if pg.base is not None or id(pg) in donated:
                    pg = pg.copy()
                donated.add(id(pg))
                upstream[id(parent)] = pg
            else:
                acc += pg


def _topo_order(root: Node) -> list[Node]:
    """Reverse topological order from ``root``, iterative to spare the stack."""
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in seen and parent.requires_grad:
                stack.append((parent, False))
    order.reverse()
    return order


def zero_grad(nodes: Sequence[Node]) -> None:
    for n in nodes:
        n.grad = None


@dataclass
class FiniteDiffReport:
    """Outcome of a finite-difference gradient audit."""

    max_rel_error: float
    checked: int
    excluded: int
    excluded_coords: list[tuple[int, int, int]] = field(default_factory=list)


def finite_diff_check(
    build_loss: Callable[[list[Node]], Node],
    param_values: Sequence[np.ndarray],
    step: float = 1e-4,
    kink_tol: float = 0.05,
) -> FiniteDiffReport:
    """Compare analytic gradients of ``build_loss`` with central differences.

    ``build_loss`` maps a list of parameter nodes to a 1x1 loss node and must
    be deterministic. Coordinates where the one-sided difference quotients
    disagree (a kink under the step window) are excluded from the maximum and
    reported. Relative error per coordinate is
    |analytic - central| / (|central| + 1e-12).
    """
    if step <= 0.0:
        raise ValidationError("step must be positive")
    values = [as_matrix(v) for v in param_values]

    params = [parameter(v) for v in values]
    loss = build_loss(params)
    backward(loss)
    analytic = [
        p.grad if p.grad is not None else np.zeros(p.shape) for p in params
    ]

    def eval_at(vals: list[np.ndarray]) -> float:
        out = build_loss([constant(v) for v in vals]).value
        f = float(out[0, 0])
        if not np.isfinite(f):
            raise NumericalError("non-finite loss during finite differencing")
        return f

    base = eval_at(values)
    jump_floor = 100.0 * step
    max_rel = 0.0
    checked = 0
    excluded: list[tuple[int, int, int]] = []
    for pi, v in enumerate(values):
        work = [u.copy() for u in values]
        for (i, j), _ in np.ndenumerate(v):
            orig = work[pi][i, j]
            work[pi][i, j] = orig + step
            f_plus = eval_at(work)
            work[pi][i, j] = orig - step
            f_minus = eval_at(work)
            work[pi][i, j] = orig
            fwd = (f_plus - base) / step
            bwd = (base - f_minus) / step
            jump = abs(fwd - bwd)
            central = (f_plus - f_minus) / (2.0 * step)
            if jump > max(kink_tol * abs(central), jump_floor):
                excluded.append((pi, i, j))
                continue
            rel = abs(analytic[pi][i, j] - central) / (abs(central) + 1e-12)
            max_rel = max(max_rel, rel)
            checked += 1
    return FiniteDiffReport(max_rel, checked, len(excluded), excluded)
