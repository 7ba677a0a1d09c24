"""Exact classical representation of the sector dynamics: rapidity flow.

The driven Schroedinger evolution of a Bethe state is equivalent to motion of
its M complex rapidities under the first-order flow

    i dl_a/dt / l_a = f_a({l}),   i.e.   dl_a/dt = -i l_a f_a({l}),

with f_a the static Bethe residual evaluated at the instantaneous detuning.
On-shell sets (f_a = 0) are fixed points, which is the stationary limit.

After the change of variables l_a = 2 x_a^2 the flow becomes

    dx_a/dt = i g^2 S / (2 x_a) + i Delta(t) x_a / 2 - i x_a^3
              - (i g^2 / 4) sum_{b != a} [1/(x_a + x_b) + 1/(x_a - x_b)],

so that dl_a/dt = 4 x_a dx_a/dt (the chain-rule factor is fixed by requiring
numerical agreement with the l-flow; see the tests).  Differentiating this
first-order flow along trajectories shows the x_a obey Newtonian dynamics
d2x_a/dt2 = -dV_a/dx_a in the complexified pair potential

    V_a = (g^4/16) sum_{b != a} [ (x_a-x_b)^-2 + (x_a+x_b)^-2 ]
          + x_a^6/2 - Delta(t) x_a^4/2 + gamma(t) x_a^2/2 + g^4 S^2/(8 x_a^2)

with gamma(t) = (M - 1 - S) g^2 + Delta(t)^2/4 - i dDelta/dt / 2.  (An extra
"- 2 g^2 S" in gamma sometimes quoted for this family fails the force/flow
consistency check for every M and is therefore not used; the constant above
is re-derived analytically and verified numerically in the test suite.)

Production stroboscopic maps are generated from the quantum side, which has
no collision problem; this integrator is a validation tool over shorter
horizons, so near-collisions halt with a diagnostic instead of being
regularized.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations
from typing import Callable, Optional

import numpy as np

from .bethe import COLLISION_TOL, RapiditySet, _as_root_array, _residual_vector
from .exceptions import CollisionError, DivergedRootError, ZeroRapidityError
from .propagator import DriveProtocol
from .sector import SectorParams

__all__ = [
    "ClassicalTrajectory",
    "StepStats",
    "rapidity_flow",
    "integrate_flow",
    "x_variables",
    "x_flow",
    "gamma_coefficient",
    "inozemtsev_potential",
    "inozemtsev_force",
    "pair_roots",
]

# Integration halts when roots approach closer than this (units of g) ...
COLLISION_HALT_TOL = 1e-8
# ... or when any |l| exceeds this (units of g).
BLOWUP_TOL = 1e6

_ZERO_TOL = 1e-10


@dataclass
class StepStats:
    accepted: int = 0
    rejected: int = 0
    min_step: float = np.inf


@dataclass
class ClassicalTrajectory:
    """Rapidity tracks on the requested sample grid.

    ``lambdas_per_time[i, a]`` is track a at ``times[i]``; tracks are
    continuous by construction since the ODE integrates each component.
    ``status`` is "completed", or one of "collision" / "blowup" /
    "underflow" with ``t_halt`` the time the integration stopped.
    """

    times: np.ndarray
    lambdas_per_time: np.ndarray
    step_stats: StepStats
    status: str = "completed"
    t_halt: Optional[float] = None

    def rapidity_sets(self) -> list[RapiditySet]:
        return [RapiditySet.from_finite(row) for row in self.lambdas_per_time]


def rapidity_flow(lambdas, params: SectorParams, delta_t: float) -> np.ndarray:
    """Velocities dl_a/dt = -i l_a f_a({l}) at detuning ``delta_t``."""
    lams = _as_root_array(lambdas)
    if np.any(np.abs(lams) < _ZERO_TOL * params.g):
        raise ZeroRapidityError("a rapidity sits at the origin where f diverges")
    _check_flow_collisions(lams, params.g, COLLISION_TOL)
    return -1j * lams * _residual_vector(lams, params, delta_t)


def _check_flow_collisions(lams: np.ndarray, g: float, tol: float) -> None:
    n = lams.size
    if n < 2:
        return
    diff = np.abs(lams[:, None] - lams[None, :]) + np.eye(n) * np.inf
    if np.min(diff) < tol * g:
        i, j = np.unravel_index(np.argmin(diff), diff.shape)
        raise CollisionError(f"roots {i} and {j} at distance {diff[i, j]:.3e}")


# Dormand-Prince 5(4) tableau (FSAL): 5th-order propagation with an embedded
# 4th-order error estimate.
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)


class _HaltSignal(Exception):
    def __init__(self, status: str):
        self.status = status


def _dp54(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    y0: np.ndarray,
    t0: float,
    t1: float,
    sample_times: np.ndarray,
    rtol: float,
    atol: float,
    guard: Optional[Callable[[float, np.ndarray], None]] = None,
) -> tuple[np.ndarray, np.ndarray, StepStats, str, Optional[float]]:
    """Adaptive embedded RK 5(4) for complex systems, landing exactly on sample times.

    ``guard(t, y)`` may raise ``_HaltSignal`` to stop the integration cleanly;
    the trajectory collected so far is returned with the halt status.
    """
    span = t1 - t0
    direction = 1.0 if span >= 0 else -1.0
    stats = StepStats()
    out_y = [y0.copy()]
    out_t = [t0]

    y = y0.astype(complex).copy()
    t = t0
    f0 = rhs(t, y)
    scale0 = np.max(np.abs(y)) + 1.0
    h = direction * min(abs(span) / 16.0, 0.01 * scale0 / (np.max(np.abs(f0)) + 1e-12))
    h_min = 1e-14 * max(abs(span), 1.0)

    k = np.empty((7,) + y.shape, dtype=complex)
    k[0] = f0
    status = "completed"
    t_halt: Optional[float] = None

    targets = list(sample_times)
    next_target = 0
    # skip sample times at or before t0 (t0 itself already recorded)
    while next_target < len(targets) and direction * (targets[next_target] - t0) <= 1e-15:
        next_target += 1

    try:
        while direction * (t - t1) < -1e-14 * max(abs(span), 1.0):
            clamped = False
            hit_sample = False
            h_try = h
            if next_target < len(targets):
                to_sample = targets[next_target] - t
                if direction * to_sample <= direction * h_try:
                    h_try = to_sample
                    hit_sample = True
                    clamped = True
            if direction * (t + h_try - t1) > 0:
                h_try = t1 - t
                hit_sample = False
                clamped = True

            for i in range(1, 7):
                yi = y + h_try * (k[:i].T @ _DP_A[i]).T
                k[i] = rhs(t + _DP_C[i] * h_try, yi)
            y5 = y + h_try * (k.T @ _DP_B5).T
            y4 = y + h_try * (k.T @ _DP_B4).T

            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y5))
            err = float(np.max(np.abs(y5 - y4) / scale))

            factor = min(5.0, max(0.2, 0.9 * err ** (-0.2) if err > 0 else 5.0))
            if err <= 1.0:
                t = t + h_try
                y = y5
                k[0] = k[6]  # FSAL
                stats.accepted += 1
                stats.min_step = min(stats.min_step, abs(h_try))
                if not clamped:
                    h = h_try * factor
                # a clamped accepted step keeps the natural step size
                if guard is not None:
                    guard(t, y)
                if hit_sample:
                    out_t.append(t)
                    out_y.append(y.copy())
                    next_target += 1
                    while (
                        next_target < len(targets)
                        and direction * (targets[next_target] - t) <= 1e-15
                    ):
                        out_t.append(t)
                        out_y.append(y.copy())
                        next_target += 1
            else:
                stats.rejected += 1
                h = h_try * factor
                if abs(h) < h_min:
                    raise _HaltSignal("underflow")
    except _HaltSignal as sig:
        status = sig.status
        t_halt = t

    return np.array(out_t), np.array(out_y), stats, status, t_halt


def integrate_flow(
    initial,
    params: SectorParams,
    drive: DriveProtocol,
    t_final: float,
    t0: float = 0.0,
    n_uniform: int = 65,
    rtol: float = 1e-10,
    atol: float = 1e-12,
) -> ClassicalTrajectory:
    """Integrate the rapidity flow under the drive from ``t0`` to ``t_final``.

    The trajectory is sampled on a uniform grid of ``n_uniform`` points plus
    every stroboscopic time in range.  Integration halts with a diagnostic
    status if roots collide (pairwise distance < 1e-8 g), any root norm
    exceeds 1e6 g, or the step size underflows.
    """
    lam0 = _as_root_array(initial)
    _check_flow_collisions(lam0, params.g, COLLISION_HALT_TOL)

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        return -1j * y * _residual_vector(y, params, drive.delta(t))

    def guard(t: float, y: np.ndarray) -> None:
        n = y.size
        if n > 1:
            diff = np.abs(y[:, None] - y[None, :]) + np.eye(n) * np.inf
            if np.min(diff) < COLLISION_HALT_TOL * params.g:
                raise _HaltSignal("collision")
        if np.max(np.abs(y)) > BLOWUP_TOL * params.g:
            raise _HaltSignal("blowup")

    grid = np.linspace(t0, t_final, max(2, n_uniform))
    period = drive.period
    lo, hi = sorted((t0, t_final))
    p_first = int(np.ceil(lo / period - 1e-12))
    p_last = int(np.floor(hi / period + 1e-12))
    strobes = [drive.cycle_time(p) for p in range(p_first, p_last + 1)]
    times = np.unique(np.concatenate([grid, np.array(strobes)]))
    if t_final < t0:
        times = times[::-1]

    out_t, out_y, stats, status, t_halt = _dp54(
        rhs, lam0, t0, t_final, times, rtol, atol, guard
    )
    return ClassicalTrajectory(out_t, out_y, stats, status, t_halt)


def x_variables(lambdas) -> np.ndarray:
    """Position variables x_a = sqrt(l_a / 2), principal branch.

    Re x >= 0; on the imaginary axis the branch with Im x >= 0 is taken.
    """
    lams = _as_root_array(lambdas)
    x = np.sqrt(lams / 2.0)
    flip = (x.real < 0) | ((x.real == 0) & (x.imag < 0))
    return np.where(flip, -x, x)


def _check_x_configuration(x: np.ndarray, g: float) -> None:
    if np.any(np.abs(x) < _ZERO_TOL):
        raise ZeroRapidityError("an x-variable sits at the origin")
    n = x.size
    if n > 1:
        d_minus = np.abs(x[:, None] - x[None, :]) + np.eye(n) * np.inf
        d_plus = np.abs(x[:, None] + x[None, :]) + np.eye(n) * np.inf
        if min(np.min(d_minus), np.min(d_plus)) < COLLISION_TOL * g:
            raise CollisionError("x-variables collide (x_a = +/- x_b)")


def x_flow(
    x, params: SectorParams, delta_t: float, delta_dot_t: float = 0.0
) -> np.ndarray:
    """First-order velocities of the position variables.

    ``delta_dot_t`` is accepted for interface symmetry with the force; the
    first-order flow itself does not involve the drive rate.
    """
    del delta_dot_t
    xa = np.asarray(x, dtype=complex).copy()
    _check_x_configuration(xa, params.g)
    g2 = params.g**2
    v = 1j * g2 * params.s / (2.0 * xa) + 0.5j * delta_t * xa - 1j * xa**3
    n = xa.size
    if n > 1:
        minus = xa[:, None] - xa[None, :]
        plus = xa[:, None] + xa[None, :]
        np.fill_diagonal(minus, np.inf)
        np.fill_diagonal(plus, np.inf)
        v = v - 0.25j * g2 * np.sum(1.0 / plus + 1.0 / minus, axis=1)
    return v


def gamma_coefficient(params: SectorParams, delta_t: float, delta_dot_t: float) -> complex:
    """Quadratic-confinement coefficient gamma(t) = (M-1-S) g^2 + Delta^2/4 - i dDelta/dt / 2."""
    g2 = params.g**2
    return complex(
        (params.m - 1 - params.s) * g2 + 0.25 * delta_t**2, -0.5 * delta_dot_t
    )


def inozemtsev_potential(
    x, params: SectorParams, delta_t: float, delta_dot_t: float = 0.0
) -> np.ndarray:
    """Per-particle potential V_a of the complexified BC-type pair model."""
    xa = np.asarray(x, dtype=complex).copy()
    _check_x_configuration(xa, params.g)
    g2 = params.g**2
    g4 = g2 * g2
    gamma = gamma_coefficient(params, delta_t, delta_dot_t)
    v = (
        0.5 * xa**6
        - 0.5 * delta_t * xa**4
        + 0.5 * gamma * xa**2
        + g4 * params.s**2 / (8.0 * xa**2)
    )
    n = xa.size
    if n > 1:
        minus = xa[:, None] - xa[None, :]
        plus = xa[:, None] + xa[None, :]
        np.fill_diagonal(minus, np.inf)
        np.fill_diagonal(plus, np.inf)
        v = v + g4 / 16.0 * np.sum(1.0 / minus**2 + 1.0 / plus**2, axis=1)
    return v


def inozemtsev_force(
    x, params: SectorParams, delta_t: float, delta_dot_t: float = 0.0
) -> np.ndarray:
    """Analytic force -dV_a/dx_a; matches d2x/dt2 of the first-order flow."""
    xa = np.asarray(x, dtype=complex).copy()
    _check_x_configuration(xa, params.g)
    g2 = params.g**2
    g4 = g2 * g2
    gamma = gamma_coefficient(params, delta_t, delta_dot_t)
    force = -(
        3.0 * xa**5
        - 2.0 * delta_t * xa**3
        + gamma * xa
        - g4 * params.s**2 / (4.0 * xa**3)
    )
    n = xa.size
    if n > 1:
        minus = xa[:, None] - xa[None, :]
        plus = xa[:, None] + xa[None, :]
        np.fill_diagonal(minus, np.inf)
        np.fill_diagonal(plus, np.inf)
        force = force + g4 / 8.0 * np.sum(1.0 / minus**3 + 1.0 / plus**3, axis=1)
    return force


def pair_roots(reference, candidate) -> tuple[np.ndarray, float, float]:
    """Match two unordered root sets by minimal total displacement.

    Returns ``(perm, max_dist, total_dist)`` with ``candidate[perm]`` aligned
    against ``reference``.  Exhaustive over permutations for M <= 8 (the
    intended regime); Hungarian assignment beyond that.
    """
    a = np.asarray(reference, dtype=complex).ravel()
    b = np.asarray(candidate, dtype=complex).ravel()
    if a.size != b.size:
        raise ValueError("root sets must have equal size")
    n = a.size
    if n == 0:
        return np.zeros(0, dtype=int), 0.0, 0.0
    cost = np.abs(a[:, None] - b[None, :])
    if n <= 8:
        best_perm, best_total = None, np.inf
        for perm in permutations(range(n)):
            total = float(cost[np.arange(n), perm].sum())
            if total < best_total:
                best_total, best_perm = total, perm
        perm = np.array(best_perm, dtype=int)
    else:
        from scipy.optimize import linear_sum_assignment

        rows, cols = linear_sum_assignment(cost)
        perm = cols[np.argsort(rows)]
        best_total = float(cost[np.arange(n), perm].sum())
    max_dist = float(np.max(cost[np.arange(n), perm]))
    return perm, max_dist, best_total
