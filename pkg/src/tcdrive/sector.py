"""Fixed-excitation sector of the Tavis-Cummings model.

The Hamiltonian

    H = Delta * Sz + g * (b^dag S^- + b S^+)

commutes with the total excitation number M = b^dag b + Sz + S, so the
dynamics never leaves the subspace with a fixed integer M.  That subspace is
spanned by the states |n_b = M - k, Sz = k - S> indexed by the number of spin
excitations k = 0 .. min(M, 2S); its dimension is d = min(M, 2S) + 1.  In this
basis H is a real symmetric tridiagonal matrix with

    H[k, k]     = Delta * (k - S)
    H[k, k + 1] = g * sqrt((M - k) * (k + 1) * (2S - k))

Units: hbar = 1, energies in units of the coupling g (g = 1 by convention),
times in 1/g.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SectorParams",
    "QuantumState",
    "sector_dimension",
    "build_hamiltonian",
    "hamiltonian_parts",
    "boson_number",
    "spin_excitation_number",
    "energy_expectation",
]


@dataclass(frozen=True)
class SectorParams:
    """Sector definition plus drive parameters; the single source of model truth.

    Attributes
    ----------
    s : float
        Spin magnitude S; 2S must be a non-negative integer.
    m : int
        Conserved total excitation number M >= 0.
    g : float
        Spin-boson coupling strength (> 0); the working energy unit.
    delta0 : float
        Drive amplitude of the detuning, Delta(t) = delta0 * cos(omega * t).
    omega : float
        Drive angular frequency (> 0).
    """

    s: float
    m: int
    g: float = 1.0
    delta0: float = 0.0
    omega: float = 1.0

    def __post_init__(self) -> None:
        two_s = 2.0 * self.s
        if two_s < 0 or abs(two_s - round(two_s)) > 1e-12:
            raise ValueError(f"2S must be a non-negative integer, got S={self.s}")
        if self.m < 0 or int(self.m) != self.m:
            raise ValueError(f"M must be a non-negative integer, got {self.m}")
        if self.g <= 0:
            raise ValueError(f"coupling g must be positive, got {self.g}")
        if self.omega <= 0:
            raise ValueError(f"omega must be positive, got {self.omega}")

    @property
    def dimension(self) -> int:
        return sector_dimension(self)


@dataclass
class QuantumState:
    """Complex amplitude vector over the sector basis, indexed by k (spin excitations)."""

    amplitudes: np.ndarray
    time: float = 0.0

    def __post_init__(self) -> None:
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> "QuantumState":
        return QuantumState(self.amplitudes.copy(), self.time)


def sector_dimension(params: SectorParams) -> int:
    """Dimension of the fixed-M sector: min(M, 2S) + 1."""
    return int(min(params.m, round(2 * params.s))) + 1


def hamiltonian_parts(params: SectorParams) -> tuple[np.ndarray, np.ndarray]:
    """Detuning-independent pieces of the sector Hamiltonian.

    Returns ``(diag_slope, offdiag)`` such that H(Delta) has diagonal
    ``Delta * diag_slope`` and sub/super-diagonal ``offdiag``.  The split lets
    propagation loops rebuild H(Delta(t)) without reallocating matrices.
    """
    d = sector_dimension(params)
    k = np.arange(d, dtype=float)
    diag_slope = k - params.s
    kk = k[:-1]
    offdiag = params.g * np.sqrt((params.m - kk) * (kk + 1.0) * (2.0 * params.s - kk))
    return diag_slope, offdiag


def build_hamiltonian(params: SectorParams, delta: float) -> np.ndarray:
    """Dense d x d sector Hamiltonian at detuning ``delta`` (exactly symmetric)."""
    diag_slope, offdiag = hamiltonian_parts(params)
    h = np.diag(delta * diag_slope)
    d = h.shape[0]
    idx = np.arange(d - 1)
    h[idx, idx + 1] = offdiag
    h[idx + 1, idx] = offdiag
    return h


def _check_dimension(state: QuantumState, params: SectorParams) -> None:
    d = sector_dimension(params)
    if state.amplitudes.shape != (d,):
        raise ValueError(
            f"state dimension {state.amplitudes.shape} does not match sector dimension {d}"
        )


def boson_number(state: QuantumState, params: SectorParams) -> float:
    """Expectation of b^dag b: sum_k |psi_k|^2 * (M - k).  No normalization applied."""
    _check_dimension(state, params)
    k = np.arange(sector_dimension(params))
    return float(np.sum(np.abs(state.amplitudes) ** 2 * (params.m - k)))


def spin_excitation_number(state: QuantumState, params: SectorParams) -> float:
    """Expectation of Sz + S: sum_k |psi_k|^2 * k."""
    _check_dimension(state, params)
    k = np.arange(sector_dimension(params))
    return float(np.sum(np.abs(state.amplitudes) ** 2 * k))


def energy_expectation(state: QuantumState, hamiltonian: np.ndarray) -> float:
    """Quadratic form <psi|H|psi>; the imaginary part (roundoff only) is discarded."""
    psi = state.amplitudes
    if hamiltonian.shape != (psi.size, psi.size):
        raise ValueError(
            f"Hamiltonian shape {hamiltonian.shape} does not match state size {psi.size}"
        )
    return float(np.vdot(psi, hamiltonian @ psi).real)
