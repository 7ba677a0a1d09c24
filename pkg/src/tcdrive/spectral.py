"""Eigendecomposition of the sector Hamiltonian.

Supplies the initial ground state and the instantaneous eigenbasis used for
the cycle-averaged weights.  Sizes are tiny (d <= ~50), so a dense
tridiagonal solver is used throughout; robustness matters more than speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .sector import QuantumState, SectorParams, build_hamiltonian

__all__ = ["SpectralDecomposition", "diagonalize", "ground_state"]

# Eigenvalues closer than this (relative to ||H||) are treated as one
# degenerate cluster; weights must then be projections onto the cluster.
DEGENERACY_REL_TOL = 1e-10


@dataclass
class SpectralDecomposition:
    """Eigenvalues (ascending) and orthonormal eigenvector columns.

    Each eigenvector is phase-fixed so its largest-magnitude component is
    positive, which makes the decomposition deterministic.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dimension(self) -> int:
        return self.eigenvalues.size

    def clusters(self, rel_tol: float = DEGENERACY_REL_TOL) -> list[list[int]]:
        """Indices grouped into degenerate clusters (gap < rel_tol * ||H||)."""
        w = self.eigenvalues
        scale = float(np.max(np.abs(w))) if w.size else 0.0
        gap_tol = rel_tol * max(scale, 1e-300)
        groups: list[list[int]] = [[0]]
        for i in range(1, w.size):
            if w[i] - w[i - 1] < gap_tol:
                groups[-1].append(i)
            else:
                groups.append([i])
        return groups

    def residuals(self, hamiltonian: np.ndarray) -> tuple[float, float]:
        """(max eigen-residual, max orthonormality defect) against ``hamiltonian``."""
        v, w = self.eigenvectors, self.eigenvalues
        res = float(np.max(np.linalg.norm(hamiltonian @ v - v * w, axis=0)))
        ortho = float(np.max(np.abs(v.T @ v - np.eye(w.size))))
        return res, ortho


def diagonalize(hamiltonian: np.ndarray, check: bool = False) -> SpectralDecomposition:
    """Full eigendecomposition of a real symmetric tridiagonal matrix.

    Parameters
    ----------
    hamiltonian : ndarray
        Real symmetric tridiagonal d x d matrix.
    check : bool
        When set, verify the eigen-residual (<= 1e-10 * ||H||) and the
        orthonormality defect (<= 1e-12) and raise ``RuntimeError`` otherwise.
    """
    h = np.asarray(hamiltonian, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1] or h.shape[0] < 1:
        raise ValueError(f"expected a square matrix, got shape {h.shape}")
    if not np.array_equal(h, h.T):
        raise ValueError("matrix is not symmetric")
    if h.shape[0] > 2 and np.any(np.triu(h, 2) != 0.0):
        raise ValueError("matrix is not tridiagonal")

    d = h.shape[0]
    if d == 1:
        w = np.array([h[0, 0]])
        v = np.ones((1, 1))
    else:
        w, v = eigh_tridiagonal(np.diag(h).copy(), np.diag(h, 1).copy())

    order = np.argsort(w)
    w = w[order]
    v = v[:, order]
    # deterministic sign: largest-magnitude component of each column positive
    lead = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[lead, np.arange(d)])
    signs[signs == 0] = 1.0
    v = v * signs

    dec = SpectralDecomposition(w, v)
    if check:
        res, ortho = dec.residuals(h)
        scale = max(float(np.max(np.abs(w))), 1e-300)
        if res > 1e-10 * scale or ortho > 1e-12:
            raise RuntimeError(
                f"eigendecomposition failed validation: residual={res:.3e}, ortho={ortho:.3e}"
            )
    return dec


def ground_state(params: SectorParams, delta: float) -> QuantumState:
    """Normalized minimal-eigenvalue eigenstate of H(delta), at time 0."""
    dec = diagonalize(build_hamiltonian(params, delta))
    return QuantumState(dec.eigenvectors[:, 0].astype(complex), time=0.0)
