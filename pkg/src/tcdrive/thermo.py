"""Cycle-averaged eigenstate weights and Boltzmann comparison.

The driven state sampled at the cycle times t_p is decomposed in the
eigenbasis of H(Delta(t_p)); since Delta(t_p) = Delta0 for every p, one
decomposition serves all cycles.  The averaged weights

    c_a = (1/P) sum_{p=1..P} |<psi(t_p)|a>|^2

are compared against the Boltzmann distribution with the same mean energy,
c_a = exp(-beta E_a)/Z, where beta is the unique real solution (possibly
negative, driving can invert populations) of the mean-energy constraint.
Distance from thermal equilibrium is reported as the L1 distance
sum_a |c_a - c^B_a|.

Degenerate eigenvalue clusters (gap below the spectral tolerance) are merged:
the weight of a cluster is the projection onto the full cluster subspace, so
the numbers are independent of the basis chosen inside the cluster.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .propagator import StroboscopicRecord
from .spectral import SpectralDecomposition

__all__ = [
    "WeightDistribution",
    "BoltzmannFit",
    "cycle_weights",
    "fit_boltzmann",
    "compare_runs",
]


@dataclass
class WeightDistribution:
    """Cycle-averaged weights per eigenvalue cluster.

    ``c[i]`` is the averaged projection onto cluster i, ``energies[i]`` its
    eigenvalue and ``multiplicities[i]`` its size (all 1 when the spectrum is
    non-degenerate).  ``mean_energy`` equals sum_i c_i E_i by construction.
    """

    c: np.ndarray
    energies: np.ndarray
    multiplicities: np.ndarray
    mean_energy: float
    n_cycles: int


@dataclass
class BoltzmannFit:
    """Boltzmann distribution matched to the empirical mean energy.

    ``beta`` may be negative.  ``saturated`` marks the degenerate case where
    the mean energy sits at (or outside) the edge of the spectrum, in which
    case all weight concentrates on the extremal cluster and ``beta`` is
    +/- inf.
    """

    beta: float
    weights: np.ndarray
    l1_distance: float
    saturated: bool = False


def cycle_weights(
    records: Sequence[StroboscopicRecord], spectrum: SpectralDecomposition
) -> WeightDistribution:
    """Average the eigenbasis weights of the records over cycles p = 1..P.

    Record 0 (the initial state) is excluded from the average; each record's
    weights are normalized by its norm so roundoff drift cannot bias the sum.
    The per-record (un-merged) weight vector is stored back onto the record.
    """
    if len(records) < 2:
        raise ValueError("need at least one driven cycle (records for p = 0 and p >= 1)")
    d = spectrum.dimension
    v = spectrum.eigenvectors

    acc = np.zeros(d)
    count = 0
    for rec in records[1:]:
        psi = rec.state.amplitudes
        if psi.shape != (d,):
            raise ValueError(
                f"record {rec.p}: state dimension {psi.shape} does not match spectrum ({d},)"
            )
        w = np.abs(v.T @ psi) ** 2
        w = w / w.sum()
        rec.weights = w
        acc += w
        count += 1
    acc /= count

    clusters = spectrum.clusters()
    c = np.array([acc[idx].sum() for idx in clusters])
    energies = np.array([spectrum.eigenvalues[idx].mean() for idx in clusters])
    mult = np.array([len(idx) for idx in clusters])
    mean_energy = float(np.dot(c, energies))
    return WeightDistribution(c, energies, mult, mean_energy, count)


def _boltzmann_weights(beta: float, energies: np.ndarray, mult: np.ndarray) -> np.ndarray:
    # shift exponents so the largest term is O(1); immune to overflow
    logw = -beta * energies + np.log(mult)
    logw -= logw.max()
    w = np.exp(logw)
    return w / w.sum()


def _mean_boltzmann_energy(beta: float, energies: np.ndarray, mult: np.ndarray) -> float:
    return float(np.dot(_boltzmann_weights(beta, energies, mult), energies))


def fit_boltzmann(weights: WeightDistribution) -> BoltzmannFit:
    """Find the real beta whose Boltzmann mean energy equals the empirical one.

    The map beta -> mean energy is strictly decreasing (its derivative is
    minus the energy variance), so a sign-changing bracket plus Brent's
    method pins beta to machine precision.  A mean energy at or outside the
    spectral edges yields a saturated fit instead of a finite beta.
    """
    energies = weights.energies
    mult = weights.multiplicities
    target = weights.mean_energy
    e_min, e_max = float(energies.min()), float(energies.max())
    width = max(e_max - e_min, 1e-300)

    edge = 1e-12 * width
    if energies.size == 1 or target <= e_min + edge or target >= e_max - edge:
        # all weight on the extremal cluster
        beta = np.inf if target <= e_min + edge else -np.inf
        w = np.zeros_like(energies)
        w[np.argmin(energies) if beta > 0 else np.argmax(energies)] = 1.0
        l1 = float(np.sum(np.abs(weights.c - w)))
        return BoltzmannFit(float(beta), w, l1, saturated=True)

    def h(beta: float) -> float:
        return _mean_boltzmann_energy(beta, energies, mult) - target

    lo, hi = -1.0 / width, 1.0 / width
    while h(hi) > 0:
        hi *= 2.0
    while h(lo) < 0:
        lo *= 2.0
    beta = brentq(h, lo, hi, xtol=1e-300, rtol=8.9e-16, maxiter=200)
    w = _boltzmann_weights(beta, energies, mult)
    l1 = float(np.sum(np.abs(weights.c - w)))
    return BoltzmannFit(float(beta), w, l1, saturated=False)


def compare_runs(fits: Sequence[tuple[float, BoltzmannFit]]) -> list[tuple[float, float]]:
    """Order (frequency, fit) pairs by L1 distance from Boltzmann, ascending.

    Ties break by frequency ascending; the first entry is the run closest to
    thermal equilibrium.
    """
    if not fits:
        raise ValueError("no fits to compare")
    rows = [(float(freq), float(fit.l1_distance)) for freq, fit in fits]
    return sorted(rows, key=lambda item: (item[1], item[0]))
