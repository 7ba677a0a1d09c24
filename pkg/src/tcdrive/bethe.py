"""Bethe-ansatz machinery for the fixed-M sector.

A Bethe state is the product B(l_1) ... B(l_M) |0> with creation operators
B(l) = b^dag - g S^+ / l acting on the vacuum (no bosons, spin fully down).
Expanding the product and using

    (b^dag)^(M-k) |0>_b = sqrt((M-k)!) |M-k>
    (S^+)^k |S,-S>      = sqrt(k! (2S)!/(2S-k)!) |S, k-S>

gives sector amplitudes

    psi_k  prop  (-g)^k e_k(1/l_1, ..., 1/l_M) w_k,
    w_k = sqrt((M-k)!) sqrt(k! (2S)!/(2S-k)!),

with e_k the k-th elementary symmetric polynomial.  Because the amplitudes
are symmetric functions of the rapidities, a state determines its rapidities
only as an unordered set: dividing out the w_k yields the coefficients of
the degree-M monic polynomial whose roots are mu_a = 1/l_a.

The residual vector

    f_a = -2 g^2 S / l_a + l_a - Delta + sum_{b != a} 2 g^2 / (l_a - l_b)

measures how far a set is from the static Bethe equations f_a = 0.  For any
finite, pairwise-distinct set the Hamiltonian acts as

    H |{l}> = E |{l}> + sum_a f_a * b^dag B(l_1)..[drop l_a]..B(l_M) |0>,
    E = Delta (M - S) - sum_a l_a,

which collapses to the eigenvalue equation on shell.  (Equivalently the
defect term can be written with S^+ instead of b^dag after moving
sum_a f_a into the first bracket; both forms are checked in the tests.)

Restriction: the rapidity machinery requires M <= 2S, so that the sector
dimension is M + 1 and the amplitude <-> root correspondence is invertible.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import lgamma

import numpy as np

from .exceptions import CollisionError, ConvergenceError, DivergedRootError
from .sector import QuantumState, SectorParams, sector_dimension

__all__ = [
    "RapiditySet",
    "BetheResidual",
    "NewtonResult",
    "bethe_amplitudes",
    "extract_rapidities",
    "bethe_residual",
    "bethe_energy",
    "offshell_identity_check",
    "refine_static_roots",
]

# |l_a - l_b| below this (in units of g) is a collision: the residual has a
# genuine pole there and silent evaluation would poison downstream ODE steps.
COLLISION_TOL = 1e-10

# |mu| below this relative threshold flags l = 1/mu as a root at infinity
# (a pure b^dag excitation, since B(inf) prop b^dag).
DIVERGENCE_REL_TOL = 1e-8

# Leading amplitudes below this are treated as exactly zero during
# extraction; each dropped polynomial degree costs one non-finite root.
LEADING_ZERO_TOL = 1e-12


@dataclass
class RapiditySet:
    """M complex rapidities with per-root flags for non-finite roots.

    ``lambdas[i]`` holds ``inf`` where ``diverged[i]`` is set, so the array
    always has length M and never contains NaN.  ``condition`` is a heuristic
    conditioning indicator of the extraction (largest monic polynomial
    coefficient magnitude); it is 1.0 for directly constructed sets.
    """

    lambdas: np.ndarray
    diverged: np.ndarray
    condition: float = 1.0

    def __post_init__(self) -> None:
        self.lambdas = np.asarray(self.lambdas, dtype=complex)
        self.diverged = np.asarray(self.diverged, dtype=bool)
        if self.lambdas.shape != self.diverged.shape:
            raise ValueError("lambdas and diverged flags must have matching shapes")
        if np.any(np.isnan(self.lambdas)):
            raise ValueError("rapidities must not contain NaN")

    @classmethod
    def from_finite(cls, lambdas, condition: float = 1.0) -> "RapiditySet":
        lam = np.asarray(lambdas, dtype=complex)
        return cls(lam, np.zeros(lam.shape, dtype=bool), condition)

    @property
    def size(self) -> int:
        return self.lambdas.size

    @property
    def n_diverged(self) -> int:
        return int(np.count_nonzero(self.diverged))

    @property
    def all_finite(self) -> bool:
        return self.n_diverged == 0

    @property
    def finite(self) -> np.ndarray:
        return self.lambdas[~self.diverged]


@dataclass
class BetheResidual:
    """Residual vector f_a of the static Bethe equations and its max magnitude."""

    f: np.ndarray
    max_abs: float


@dataclass
class NewtonResult:
    """Outcome of Newton refinement: the roots, iterations used, final residual."""

    rapidities: RapiditySet
    iterations: int
    max_residual: float


def _as_root_array(lambdas) -> np.ndarray:
    """Accept a RapiditySet or a bare array; reject non-finite roots."""
    if isinstance(lambdas, RapiditySet):
        if not lambdas.all_finite:
            raise DivergedRootError(
                f"{lambdas.n_diverged} non-finite root(s); this operation needs finite roots"
            )
        return lambdas.lambdas.copy()
    arr = np.asarray(lambdas, dtype=complex).ravel()
    if not np.all(np.isfinite(arr)):
        raise DivergedRootError("rapidity array contains non-finite entries")
    return arr


def _log_weights(s: float, m: int, d: int) -> np.ndarray:
    """log w_k for k = 0..d-1, via log-gamma so large 2S never overflows."""
    two_s = round(2 * s)
    k = np.arange(d)
    out = np.empty(d)
    for i, kk in enumerate(k):
        out[i] = 0.5 * (
            lgamma(m - kk + 1)
            + lgamma(kk + 1)
            + lgamma(two_s + 1)
            - lgamma(two_s - kk + 1)
        )
    return out


def _esym_coeffs(values: np.ndarray, count: int) -> np.ndarray:
    """Elementary symmetric polynomials e_0..e_count of the given values."""
    c = np.zeros(count + 1, dtype=complex)
    c[0] = 1.0
    n_active = 0
    for v in values:
        n_active = min(n_active + 1, count)
        c[1 : n_active + 1] += v * c[:n_active]
    return c


def _raw_bethe_vector(lams: np.ndarray, params: SectorParams) -> np.ndarray:
    """Unnormalized sector amplitudes of B(l_1)..B(l_n) (b^dag)^(M-n) |0>.

    For n = M this is the plain Bethe state; for n = M - 1 it is the reduced
    state with one rapidity replaced by b^dag, as it appears in the defect
    term of the off-shell identity.  Sector weights always use the full M.
    """
    d = sector_dimension(params)
    e = _esym_coeffs(1.0 / lams, d - 1)
    k = np.arange(d)
    signs = (-params.g) ** k
    return signs * e * np.exp(_log_weights(params.s, params.m, d))


def _require_invertible_sector(params: SectorParams) -> None:
    if params.m > round(2 * params.s):
        raise ValueError(
            f"rapidity machinery requires M <= 2S (got M={params.m}, 2S={2 * params.s}): "
            "the sector dimension is below M + 1 and a single Bethe product "
            "cannot be inverted from amplitudes"
        )


def bethe_amplitudes(lambdas, params: SectorParams) -> tuple[QuantumState, float]:
    """Normalized sector state of the Bethe product, plus its pre-normalization norm.

    Parameters
    ----------
    lambdas : RapiditySet or array-like
        M finite rapidities.
    params : SectorParams
        Sector with M <= 2S.

    Returns
    -------
    (state, prenorm)
        ``state`` is normalized; ``prenorm`` is the Euclidean norm of the raw
        amplitude vector (useful as an overlap/conditioning diagnostic).
    """
    _require_invertible_sector(params)
    lams = _as_root_array(lambdas)
    if lams.size != params.m:
        raise ValueError(f"expected {params.m} rapidities, got {lams.size}")
    raw = _raw_bethe_vector(lams, params)
    prenorm = float(np.linalg.norm(raw))
    if prenorm == 0.0:
        raise ValueError("Bethe amplitudes vanished identically")
    return QuantumState(raw / prenorm, time=0.0), prenorm


def _polish_roots(coeffs: np.ndarray, roots: np.ndarray, steps: int = 2) -> np.ndarray:
    """Newton-polish companion-matrix roots on the polynomial itself."""
    dcoeffs = np.polyder(coeffs)
    for _ in range(steps):
        p = np.polyval(coeffs, roots)
        dp = np.polyval(dcoeffs, roots)
        safe = np.abs(dp) > 0
        roots = roots - np.where(safe, p / np.where(safe, dp, 1.0), 0.0)
    return roots


def extract_rapidities(state: QuantumState, params: SectorParams) -> RapiditySet:
    """Invert ``bethe_amplitudes``: recover the rapidity set of a sector state.

    Divides out signs and sector weights to get coefficients proportional to
    e_k(1/l), forms the monic degree-M polynomial in mu = 1/l, and takes its
    companion-matrix roots (with two Newton polishing steps).  Roots with
    |mu| below ``DIVERGENCE_REL_TOL * (max|mu| + 1)`` are flagged as roots at
    infinity.  Leading amplitudes that vanish (|psi_0| etc. below
    ``LEADING_ZERO_TOL``) drop the polynomial degree; each lost degree is
    flagged as a non-finite root as well.
    """
    _require_invertible_sector(params)
    d = sector_dimension(params)
    m = params.m
    psi = state.amplitudes
    if psi.shape != (d,):
        raise ValueError(f"state dimension {psi.shape} does not match sector ({d},)")

    k = np.arange(d)
    scaled = psi / ((-params.g) ** k * np.exp(_log_weights(params.s, params.m, d)))
    # coefficient of mu^(M-k) is (-1)^k e_k, up to one overall constant
    coeffs = (-1.0) ** k * scaled

    scale = float(np.max(np.abs(coeffs)))
    if scale == 0.0:
        raise ValueError("cannot extract rapidities from the zero state")
    lead = 0
    while lead < m and np.abs(coeffs[lead]) < LEADING_ZERO_TOL * scale:
        lead += 1
    n_lost = lead

    poly = coeffs[lead:] / coeffs[lead]
    condition = float(np.max(np.abs(poly)))
    if poly.size > 1:
        mu = np.roots(poly)
        mu = _polish_roots(poly, mu)
    else:
        mu = np.zeros(0, dtype=complex)

    mu_scale = float(np.max(np.abs(mu))) if mu.size else 0.0
    at_infinity = np.abs(mu) < DIVERGENCE_REL_TOL * (mu_scale + 1.0)

    lambdas = np.full(m, np.inf + 0.0j)
    diverged = np.ones(m, dtype=bool)
    finite_mu = mu[~at_infinity]
    n_finite = finite_mu.size
    lambdas[:n_finite] = 1.0 / finite_mu
    diverged[:n_finite] = False
    # remaining slots stay flagged: n_lost from the degree drop plus the
    # near-zero mu roots
    assert n_finite + n_lost + int(np.count_nonzero(at_infinity)) == m
    return RapiditySet(lambdas, diverged, condition)


def _check_collisions(lams: np.ndarray, g: float) -> None:
    n = lams.size
    if n < 2:
        return
    diff = np.abs(lams[:, None] - lams[None, :]) + np.eye(n) * np.inf
    if np.min(diff) < COLLISION_TOL * g:
        i, j = np.unravel_index(np.argmin(diff), diff.shape)
        raise CollisionError(
            f"rapidities {i} and {j} collide: |l_i - l_j| = {diff[i, j]:.3e}"
        )


def _residual_vector(lams: np.ndarray, params: SectorParams, delta: float) -> np.ndarray:
    g2 = params.g**2
    f = -2.0 * g2 * params.s / lams + lams - delta
    if lams.size > 1:
        diff = lams[:, None] - lams[None, :]
        np.fill_diagonal(diff, np.inf)
        f = f + np.sum(2.0 * g2 / diff, axis=1)
    return f


def bethe_residual(lambdas, params: SectorParams, delta: float) -> BetheResidual:
    """Evaluate f_a = -2g^2 S/l_a + l_a - Delta + sum_{b!=a} 2g^2/(l_a - l_b)."""
    lams = _as_root_array(lambdas)
    _check_collisions(lams, params.g)
    f = _residual_vector(lams, params, delta)
    return BetheResidual(f, float(np.max(np.abs(f))) if f.size else 0.0)


def bethe_energy(lambdas, params: SectorParams, delta: float) -> complex:
    """Energy of a Bethe state from its roots: Delta (M - S) - sum_a l_a."""
    lams = _as_root_array(lambdas)
    return complex(delta * (params.m - params.s) - np.sum(lams))


def offshell_identity_check(lambdas, params: SectorParams, delta: float) -> float:
    """Relative defect of the off-shell action of H on a Bethe state.

    Builds both sides of

        H |{l}> = E |{l}> + sum_a f_a * b^dag prod_{b != a} B(l_b) |0>

    in the sector basis and returns ||lhs - rhs|| / ||lhs||.  The defect is
    zero in exact arithmetic for any finite, pairwise-distinct set, so this
    single number exercises amplitudes, residuals, and energies jointly.
    """
    from .sector import build_hamiltonian  # local import keeps module deps one-way

    _require_invertible_sector(params)
    lams = _as_root_array(lambdas)
    if lams.size != params.m:
        raise ValueError(f"expected {params.m} rapidities, got {lams.size}")
    _check_collisions(lams, params.g)

    psi = _raw_bethe_vector(lams, params)
    h = build_hamiltonian(params, delta)
    lhs = h @ psi

    f = _residual_vector(lams, params, delta)
    energy = delta * (params.m - params.s) - np.sum(lams)
    rhs = energy * psi
    for a in range(params.m):
        reduced = np.delete(lams, a)
        rhs = rhs + f[a] * _raw_bethe_vector(reduced, params)

    lhs_norm = float(np.linalg.norm(lhs))
    if lhs_norm == 0.0:
        return float(np.linalg.norm(rhs))
    return float(np.linalg.norm(lhs - rhs) / lhs_norm)


def refine_static_roots(
    lambdas,
    params: SectorParams,
    delta: float,
    tol: float = 1e-12,
    max_iter: int = 100,
) -> NewtonResult:
    """Newton-iterate the static Bethe equations f_a = 0 with the analytic Jacobian.

        d f_a / d l_a = 2 g^2 S / l_a^2 + 1 - sum_{b != a} 2 g^2 / (l_a - l_b)^2
        d f_a / d l_b = 2 g^2 / (l_a - l_b)^2                        (b != a)

    Converged when max |f_a| < tol * g.  Raises ``ConvergenceError`` after
    ``max_iter`` iterations and ``CollisionError`` if roots collide (which
    makes the Jacobian singular).
    """
    lams = _as_root_array(lambdas)
    g2 = params.g**2
    threshold = tol * params.g
    for iteration in range(max_iter + 1):
        _check_collisions(lams, params.g)
        f = _residual_vector(lams, params, delta)
        max_abs = float(np.max(np.abs(f))) if f.size else 0.0
        if max_abs < threshold:
            return NewtonResult(RapiditySet.from_finite(lams), iteration, max_abs)
        if iteration == max_iter:
            break
        n = lams.size
        jac = np.zeros((n, n), dtype=complex)
        inv_sq = np.zeros((n, n), dtype=complex)
        if n > 1:
            diff = lams[:, None] - lams[None, :]
            np.fill_diagonal(diff, np.inf)
            inv_sq = 1.0 / diff**2
        for a in range(n):
            jac[a, a] = 2.0 * g2 * params.s / lams[a] ** 2 + 1.0 - 2.0 * g2 * np.sum(inv_sq[a])
            for b in range(n):
                if b != a:
                    jac[a, b] = 2.0 * g2 * inv_sq[a, b]
        try:
            step = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError as exc:
            raise CollisionError(f"singular Newton Jacobian: {exc}") from exc
        lams = lams + step
    raise ConvergenceError(
        f"Newton refinement did not reach max|f| < {threshold:.1e} in {max_iter} iterations "
        f"(last residual {max_abs:.3e})"
    )
