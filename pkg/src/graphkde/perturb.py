"""Structure-aware perturbed-sample generation.

Negative samples for contrastive training come from two edits: swapping the
feature rows of a small node subset, and rescaling singular values of the
adjacency grouped by cumulative spectral energy, then reconstructing and
re-binarizing. Gradients never flow through sample generation; perturbed
graphs are detached inputs.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import GraphDataWarning, ValidationError
from .graphs import Graph
from .linalg import SvdResult, svd

__all__ = [
    "PerturbationConfig",
    "EnergyPartition",
    "energy_partition",
    "feature_perturb",
    "spectral_perturb",
    "generate_sample",
]


@dataclass(frozen=True)
class PerturbationConfig:
    """Knobs for sample generation; defaults target a moderate edit regime."""

    r_swap: float = 0.1
    tau1: float = 0.5
    tau2: float = 0.75
    p_pert: float = 0.3
    r_max: float = 10.0
    n_pert: int = 2
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.r_swap <= 1.0:
            raise ValidationError(f"r_swap {self.r_swap} outside [0, 1]")
        if not 0.0 <= self.tau1 < self.tau2 <= 1.0:
            raise ValidationError(
                f"need 0 <= tau1 < tau2 <= 1, got {self.tau1}, {self.tau2}"
            )
        if not 0.0 < self.p_pert <= 1.0:
            raise ValidationError(f"p_pert {self.p_pert} outside (0, 1]")
        if self.r_max <= 1.0:
            raise ValidationError("r_max must exceed 1")
        if self.n_pert < 1:
            raise ValidationError("n_pert must be positive")


@dataclass(frozen=True)
class EnergyPartition:
    """Index groups of a spectrum by cumulative energy, with scale ratio.

    ``high`` carries the leading mass, ``low`` the tail. ``ratio`` is the
    mean-high over mean-low scale factor capped at r_max, or NaN when a
    group is empty so no ratio is defined.
    """

    high: tuple[int, ...]
    mid: tuple[int, ...]
    low: tuple[int, ...]
    cumulative_energy: np.ndarray
    ratio: float


def energy_partition(
    singular_values, tau1: float = 0.5, tau2: float = 0.75, r_max: float = 10.0
) -> EnergyPartition:
    """Split a descending spectrum at cumulative-energy thresholds.

    Index i lands in ``high`` when the energy through i is at most tau1, in
    ``mid`` up to tau2, else in ``low``. An empty ``high`` gets index 0; an
    empty ``low`` gets the last index unless that would empty ``high``.
    """
    s = np.asarray(singular_values, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise ValidationError("spectrum must be a non-empty 1-D sequence")
    if np.any(s < 0.0):
        raise ValidationError("singular values must be non-negative")
    if np.any(np.diff(s) > 1e-12 * max(s[0], 1.0)):
        raise ValidationError("singular values must be sorted descending")
    total = float(np.sum(s * s))
    if total == 0.0:
        raise ValidationError("all-zero spectrum is degenerate")
    energy = np.cumsum(s * s) / total
    groups: list[list[int]] = [[], [], []]
    for i, e in enumerate(energy):
        groups[0 if e <= tau1 else (1 if e <= tau2 else 2)].append(i)
    high, mid, low = groups
    if not high:
        for g in (mid, low):
            if 0 in g:
                g.remove(0)
        high.append(0)
    if not low and s.size - 1 not in high:
        if s.size - 1 in mid:
            mid.remove(s.size - 1)
        low.append(s.size - 1)
    if high and low:
        mean_low = float(np.mean(s[low]))
        raw = np.inf if mean_low == 0.0 else float(np.mean(s[high])) / mean_low
        ratio = min(raw, r_max)
    else:
        ratio = math.nan
    return EnergyPartition(tuple(high), tuple(mid), tuple(low), energy, ratio)


def feature_perturb(features: np.ndarray, r_swap: float, rng) -> np.ndarray:
    """Replace floor(r_swap * n) feature rows via a permutation of that subset.

    The row multiset is preserved exactly; unselected rows never move.
    """
    if not 0.0 <= r_swap <= 1.0:
        raise ValidationError(f"r_swap {r_swap} outside [0, 1]")
    out = np.array(features, dtype=np.float64, copy=True)
    k = int(math.floor(r_swap * out.shape[0]))
    if k < 2:
        return out
    selected = rng.choice(out.shape[0], size=k, replace=False)
    out[selected] = out[selected[rng.permutation(k)]]
    return out


def spectral_perturb(
    adjacency: np.ndarray,
    config: PerturbationConfig,
    flag: int,
    rng,
    factors: SvdResult | None = None,
) -> np.ndarray:
    """Edit edges by rescaling part of the spectrum and re-binarizing.

    flag 0 shrinks chosen leading singular values by the adaptive ratio
    (edge removal); flag 1 grows chosen trailing ones (edge addition). The
    reconstruction is thresholded at 0.5, symmetrized by OR, and the
    diagonal zeroed. Degenerate spectra or an undefined ratio leave the
    adjacency unchanged. ``factors`` may carry a precomputed decomposition
    of the same adjacency.
    """
    if flag not in (0, 1):
        raise ValidationError(f"flag must be 0 or 1, got {flag}")
    adjacency = np.asarray(adjacency, dtype=np.float64)
    if not adjacency.any():
        return adjacency.copy()
    if factors is None:
        factors = svd(adjacency)
    part = energy_partition(factors.s, config.tau1, config.tau2, config.r_max)
    eligible = part.high if flag == 0 else part.low
    if not eligible or math.isnan(part.ratio):
        warnings.warn(
            "no usable spectral group for perturbation; adjacency unchanged",
            GraphDataWarning,
        )
        return adjacency.copy()
    count = min(int(math.floor(config.p_pert * factors.s.size)), len(eligible))
    if count == 0:
        return adjacency.copy()
    chosen = rng.choice(np.asarray(eligible), size=count, replace=False)
    scaled = factors.s.copy()
    scaled[chosen] *= (1.0 / part.ratio) if flag == 0 else part.ratio
    recon = (factors.u * scaled) @ factors.v.T
    edges = recon >= 0.5
    edges |= edges.T
    np.fill_diagonal(edges, False)
    return edges.astype(np.float64)


def generate_sample(
    g: Graph,
    config: PerturbationConfig,
    rng,
    factors: SvdResult | None = None,
) -> Graph:
    """One perturbed counterpart: feature swap, then a spectral edge edit.

    The edit direction is drawn uniformly; node count is preserved. The
    sample carries no label.
    """
    feats = feature_perturb(g.features, config.r_swap, rng)
    flag = int(rng.integers(2))
    adj = spectral_perturb(g.adjacency, config, flag, rng, factors)
    return Graph(adj, feats, None, f"{g.graph_id}#pert")
