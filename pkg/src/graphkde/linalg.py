"""Singular value decomposition by one-sided Jacobi rotations.

Small dense square matrices only; robustness is preferred over speed. The
decomposition is never part of the gradient tape: it feeds sample
generation, which is treated as fixed data augmentation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NumericalError

__all__ = ["SvdResult", "svd"]

ORTHOGONALITY_TOL = 1e-12
SWEEP_CAP_FACTOR = 100
# Column norms at or below max-norm times this are treated as zero columns.
ZERO_COLUMN_RTOL = 1e-13


@dataclass(frozen=True)
class SvdResult:
    """Factors of A = U diag(s) V^T with s sorted descending, entries >= 0."""

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray


def svd(a) -> SvdResult:
    """Decompose a square real matrix via one-sided Jacobi sweeps.

    Column pairs of the working matrix are rotated until all pairs are
    orthogonal to relative tolerance ORTHOGONALITY_TOL; the same rotations
    accumulate into V. Raises NumericalError if SWEEP_CAP_FACTOR * n sweeps
    do not converge.
    """
    w = np.array(a, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise DimensionError(f"svd expects a square matrix, got {w.shape}")
    if not np.all(np.isfinite(w)):
        raise NumericalError("svd input contains non-finite entries")
    n = w.shape[0]
    v = np.eye(n)

    converged = False
    for _ in range(SWEEP_CAP_FACTOR * n):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                if _rotate_pair(w, v, p, q):
                    rotated = True
        if not rotated:
            converged = True
            break
    if not converged:
        raise NumericalError(
            f"svd failed to converge after {SWEEP_CAP_FACTOR * n} sweeps "
            f"(n={n}, frobenius={np.linalg.norm(w):.3e})"
        )

    sigma = np.linalg.norm(w, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    w = w[:, order]
    v = v[:, order]

    u = np.zeros((n, n))
    cutoff = sigma[0] * ZERO_COLUMN_RTOL if sigma[0] > 0.0 else 0.0
    rank = int(np.sum(sigma > cutoff))
    if rank > 0:
        u[:, :rank] = w[:, :rank] / sigma[:rank]
    sigma[rank:] = 0.0
    if rank < n:
        _complete_basis(u, rank)
    return SvdResult(u, sigma, v)


def _rotate_pair(w: np.ndarray, v: np.ndarray, p: int, q: int) -> bool:
    """Orthogonalize columns p and q of w; mirror the rotation into v."""
    wp = w[:, p]
    wq = w[:, q]
    alpha = wp @ wp
    beta = wq @ wq
    gamma = wp @ wq
    if gamma == 0.0 or abs(gamma) <= ORTHOGONALITY_TOL * np.sqrt(alpha * beta):
        return False
    zeta = (beta - alpha) / (2.0 * gamma)
    if zeta == 0.0:
        t = 1.0
    elif abs(zeta) > 1.0e150:
        # Asymptotic root; the direct formula would overflow in zeta**2.
        t = 1.0 / (2.0 * zeta)
    else:
        t = np.sign(zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
    if abs(t) < 1e-16:
        # Rotation below machine precision cannot change the columns.
        return False
    c = 1.0 / np.sqrt(1.0 + t * t)
    s = c * t
    for m in (w, v):
        mp = m[:, p].copy()
        m[:, p] = c * mp - s * m[:, q]
        m[:, q] = s * mp + c * m[:, q]
    return True


def _complete_basis(u: np.ndarray, rank: int) -> None:
    """Fill columns rank..n-1 of u with an orthonormal completion.

    Candidates are standard basis vectors, orthogonalized against existing
    columns; deterministic by construction.
    """
    n = u.shape[0]
    col = rank
    for k in range(n):
        if col == n:
            return
        cand = np.zeros(n)
        cand[k] = 1.0
        cand -= u[:, :col] @ (u[:, :col].T @ cand)
        norm = np.linalg.norm(cand)
        if norm > 1e-8:
            u[:, col] = cand / norm
            col += 1
    if col < n:
        raise NumericalError("orthonormal completion failed")
