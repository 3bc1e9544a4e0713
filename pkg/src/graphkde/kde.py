"""Multi-scale kernel density estimation over graph distances."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .tensor import (
    Node,
    concat_cols,
    constant,
    exp,
    matmul,
    mean_all,
    multiply,
    parameter,
    scale,
    softmax,
    square,
    sum_all,
)

DEFAULT_KDE_BANDWIDTHS = (0.01, 0.1, 1.0, 10.0, 100.0)
STRATIFIED_RETENTION = (0.9, 0.8, 0.7)
NORMALIZER = math.sqrt(2.0 * math.pi)


@dataclass
class KdeParams:
    """Bandwidth grid plus learnable mixture logits (a 1 x M tape leaf)."""

    bandwidths: tuple[float, ...]
    logits: Node

    def __post_init__(self) -> None:
        values = tuple(float(h) for h in self.bandwidths)
        if not values:
            raise ValidationError("bandwidth grid must be non-empty")
        if any(not np.isfinite(h) or h <= 0.0 for h in values):
            raise ValidationError("bandwidths must be positive finite reals")
        if any(nxt <= cur for cur, nxt in zip(values, values[1:])):
            raise ValidationError("bandwidths must be strictly ascending")
        self.bandwidths = values
        if self.logits.shape != (1, len(values)):
            raise ValidationError(
                f"logits shape {self.logits.shape} != (1, {len(values)})"
            )
        if not np.all(np.isfinite(self.logits.value)):
            raise ValidationError("mixture logits must be finite")

    @property
    def scale_count(self) -> int:
        return len(self.bandwidths)

    def weights(self) -> np.ndarray:
        """Current mixture weights (softmax of the logits), as plain floats."""
        return softmax(self.logits).value[0].copy()


def init_kde_params(bandwidths=DEFAULT_KDE_BANDWIDTHS) -> KdeParams:
    """Uniform mixture over the grid: every logit starts at 1/M."""
    grid = tuple(float(h) for h in bandwidths)
    logits = parameter(np.full((1, len(grid)), 1.0 / len(grid)))
    return KdeParams(grid, logits)


def kde_kernel(d: float, h: float) -> float:
    """Gaussian density kernel at distance ``d`` with bandwidth ``h``."""
    if d < 0.0:
        raise ValidationError("distance must be non-negative")
    if h <= 0.0:
        raise ValidationError("bandwidth must be positive")
    return math.exp(-(d * d) / (2.0 * h * h)) / (NORMALIZER * h)


def _as_distance_node(distances) -> Node:
    if isinstance(distances, Node):
        node = distances
    else:
        arr = np.asarray(distances, dtype=np.float64)
        if arr.size == 0:
            raise ValidationError("empty reference set")
        node = constant(arr.reshape(1, -1))
    if node.value.size == 0:
        raise ValidationError("empty reference set")
    return node


def component_density(distances, h: float) -> Node:
    """Mean kernel mass at one bandwidth; scalar tape node.

    ``distances`` may be a tape node (gradients flow through it) or any
    sequence of plain distances.
    """
    if h <= 0.0:
        raise ValidationError("bandwidth must be positive")
    d = _as_distance_node(distances)
    k = scale(exp(scale(square(d), -1.0 / (2.0 * h * h))), 1.0 / (NORMALIZER * h))
    return mean_all(k)


@dataclass(frozen=True)
class DensityResult:
    """Mixture density of one graph with its per-bandwidth breakdown."""

    density: float
    components: tuple[float, ...]
    weights: tuple[float, ...]
    node: Node

    def __post_init__(self) -> None:
        mixed = float(np.dot(self.weights, self.components))
        if abs(self.density - mixed) > 1e-12 * max(1.0, abs(mixed)):
            raise ValidationError("density does not match its mixture breakdown")
        if not self.density > 0.0:
            raise ValidationError("density must be strictly positive")


def density(distances, params: KdeParams) -> DensityResult:
    """Mixture density over all bandwidths; carries its scalar tape node."""
    d = _as_distance_node(distances)
    comps = [component_density(d, h) for h in params.bandwidths]
    phi = concat_cols(comps)
    weights = softmax(params.logits)
    mixed = sum_all(multiply(weights, phi))
    return DensityResult(
        mixed.value.item(),
        tuple(c.value.item() for c in comps),
        tuple(weights.value[0]),
        mixed,
    )


def density_matrix(dist_sq: Node, params: KdeParams) -> Node:
    """Densities of many queries at once from squared reference distances.

    ``dist_sq`` is a Q x N tape node of squared distances; the result is a
    Q x 1 node, equal row-wise to :func:`density` on the unsquared row.
    """
    n_refs = dist_sq.shape[1]
    if n_refs == 0:
        raise ValidationError("empty reference set")
    row_mean = constant(np.full((n_refs, 1), 1.0 / n_refs))
    comps = []
    for h in params.bandwidths:
        k = scale(exp(scale(dist_sq, -1.0 / (2.0 * h * h))), 1.0 / (NORMALIZER * h))
        comps.append(matmul(k, row_mean))
    phi = concat_cols(comps)
    weights = softmax(params.logits)
    ones = constant(np.ones((params.scale_count, 1)))
    return matmul(multiply(phi, weights), ones)


def density_difference_bound(distance: float, bandwidths) -> float:
    """Smoothness cap on how far densities of two graphs can differ.

    The mixture density is Lipschitz in the graph distance with constant
    1/(sqrt(2*e*pi) * c^2) where c is the smallest bandwidth.
    """
    c = min(float(h) for h in bandwidths)
    return float(distance) / (math.sqrt(2.0 * math.e * math.pi) * c * c)


def stratified_sample(densities, rng: np.random.Generator) -> np.ndarray:
    """Density-tercile subsample keeping 90/80/70 percent (low/mid/high).

    Terciles come from a stable ascending density sort; each stratum keeps
    floor(rate * size) members chosen uniformly.
    """
    rho = np.asarray(densities, dtype=np.float64).ravel()
    if rho.size < 3:
        raise ValidationError("stratified sampling needs at least 3 references")
    order = np.argsort(rho, kind="stable")
    kept = []
    for stratum, rate in zip(np.array_split(order, 3), STRATIFIED_RETENTION):
        count = int(math.floor(rate * stratum.size))
        if count > 0:
            kept.append(rng.choice(stratum, size=count, replace=False))
    return np.sort(np.concatenate(kept)) if kept else np.zeros(0, dtype=np.int64)


def importance_sample(
    densities, ratio: float, rng: np.random.Generator
) -> np.ndarray:
    """Draw ceil(ratio * N) reference indices, weighted toward high density.

    Selection probability follows a sigmoid of the density's offset from
    the median density; draws are without replacement.
    """
    rho = np.asarray(densities, dtype=np.float64).ravel()
    if rho.size == 0:
        raise ValidationError("empty reference set")
    if not 0.0 < ratio <= 1.0:
        raise ValidationError(f"ratio {ratio} outside (0, 1]")
    count = int(math.ceil(ratio * rho.size))
    if count >= rho.size:
        return np.arange(rho.size)
    offset = rho - np.median(rho)
    weight = np.empty_like(offset)
    pos = offset >= 0.0
    weight[pos] = 1.0 / (1.0 + np.exp(-offset[pos]))
    weight[~pos] = np.exp(offset[~pos]) / (1.0 + np.exp(offset[~pos]))
    return np.sort(rng.choice(rho.size, size=count, replace=False, p=weight / weight.sum()))


def save_density_csv(path, graph_ids, results) -> None:
    """Density table export: id, mixture density, components, weights."""
    results = list(results)
    if not results:
        raise ValidationError("no density results to export")
    scales = len(results[0].components)
    header = (
        ["graph_id", "density"]
        + [f"component_{k}" for k in range(scales)]
        + [f"weight_{k}" for k in range(scales)]
    )
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for gid, res in zip(graph_ids, results):
            writer.writerow(
                [gid, repr(float(res.density))]
                + [repr(float(c)) for c in res.components]
                + [repr(float(w)) for w in res.weights]
            )
