"""Experiment runner: executes frequency sweeps and writes plot-ready CSV files.

One file per (frequency, panel):

    timeseries_<omega>.csv  t, N_b, mean_energy, norm_defect within cycles
    strobe_<omega>.csv      p, alpha, Re lambda, Im lambda, diverged
    weights_<omega>.csv     alpha, E_alpha, c_alpha, c_boltzmann
    crosscheck_<omega>.csv  p, t_p, max paired quantum/classical root distance
    summary.csv             one row per frequency

Every file carries '#'-prefixed metadata echoing the full configuration and a
format-version string.  Floats are written with 17 significant digits, so
identical configurations produce byte-identical bodies.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__ as _version
from .bethe import RapiditySet, extract_rapidities, refine_static_roots
from .classical import integrate_flow, pair_roots
from .config import ExperimentConfig
from .propagator import DriveProtocol, TimeSeries, run, run_timeseries
from .sector import build_hamiltonian
from .spectral import diagonalize, ground_state
from .thermo import BoltzmannFit, WeightDistribution, cycle_weights, fit_boltzmann

__all__ = [
    "FrequencyResult",
    "ExperimentResult",
    "CrosscheckResult",
    "run_experiment",
    "crosscheck_classical",
    "CROSSCHECK_TOL",
]

FORMAT_VERSION = "tcdrive-csv-1"

# Quantum and classical stroboscopic roots must agree to this (units of g).
CROSSCHECK_TOL = 1e-4


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def _write_csv(path: Path, meta: list[tuple[str, str]], columns: list[str], rows) -> None:
    lines = [f"# {key}: {value}" for key, value in meta]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _meta(config: ExperimentConfig, omega: Optional[float] = None, **extra) -> list[tuple[str, str]]:
    meta = [
        ("format_version", FORMAT_VERSION),
        ("generator", f"tcdrive {_version}"),
        ("config", config.as_flat_line()),
    ]
    if omega is not None:
        meta.append(("omega", _fmt(omega)))
    meta += [(key, str(value)) for key, value in extra.items()]
    return meta


def _omega_tag(omega: float) -> str:
    return format(omega, "g")


@dataclass
class FrequencyResult:
    omega: float
    files: list[Path]
    nb_min: float
    nb_max: float
    e_ground: float
    weights: WeightDistribution
    fit: BoltzmannFit
    convergence_deviation: Optional[float] = None

    @property
    def absorbed_energy(self) -> float:
        return self.weights.mean_energy - self.e_ground


@dataclass
class ExperimentResult:
    results: list[FrequencyResult]
    summary_path: Path

    @property
    def files(self) -> list[Path]:
        out = [p for r in self.results for p in r.files]
        out.append(self.summary_path)
        return out


@dataclass
class CrosscheckResult:
    omega: float
    passed: bool
    max_distance: float
    status: str
    t_halt: Optional[float]
    path: Path


def _strobe_rows(records, params) -> tuple[list[tuple], list[RapiditySet]]:
    """Extract rapidities per cycle and pair tracks by minimal displacement."""
    rows: list[tuple] = []
    sets: list[RapiditySet] = []
    prev: Optional[np.ndarray] = None
    for rec in records:
        rs = extract_rapidities(rec.state, params)
        lam, div = rs.lambdas, rs.diverged
        if rs.all_finite:
            if prev is None:
                order = np.lexsort((lam.imag, lam.real))
            else:
                order, _, _ = pair_roots(prev, lam)
            lam, div = lam[order], div[order]
            prev = lam
        else:
            prev = None
        paired = RapiditySet(lam, div, rs.condition)
        rec.rapidities = paired
        sets.append(paired)
        for a in range(lam.size):
            rows.append((rec.p, a, lam[a].real, lam[a].imag, int(div[a])))
    return rows, sets


def _run_one_frequency(
    config: ExperimentConfig,
    omega: float,
    out_dir: Path,
    convergence_check: bool,
    figures: bool,
) -> FrequencyResult:
    params = config.sector(omega)
    drive = DriveProtocol.from_params(params)
    tag = _omega_tag(omega)
    files: list[Path] = []

    records = run(params, drive, config.cycles, config.steps_per_cycle)
    spectrum = diagonalize(build_hamiltonian(params, drive.delta_in_cycle(0.0)))
    weights = cycle_weights(records, spectrum)
    fit = fit_boltzmann(weights)
    e_ground = float(spectrum.eigenvalues[0])

    timeseries: Optional[TimeSeries] = None
    if "timeseries" in config.emit:
        timeseries = run_timeseries(
            params,
            drive,
            min(config.timeseries_cycles, config.cycles),
            config.steps_per_cycle,
            config.timeseries_samples_per_cycle,
        )
        path = out_dir / f"timeseries_{tag}.csv"
        _write_csv(
            path,
            _meta(config, omega),
            ["t", "N_b", "mean_energy", "norm_defect"],
            zip(timeseries.times, timeseries.n_b, timeseries.energy, timeseries.norm_defect),
        )
        files.append(path)

    strobe_rows = None
    if "strobe_map" in config.emit:
        strobe_rows, _ = _strobe_rows(records, params)
        path = out_dir / f"strobe_{tag}.csv"
        _write_csv(
            path,
            _meta(config, omega),
            ["p", "alpha", "re_lambda", "im_lambda", "diverged"],
            strobe_rows,
        )
        files.append(path)

    if "weights" in config.emit:
        path = out_dir / f"weights_{tag}.csv"
        _write_csv(
            path,
            _meta(
                config,
                omega,
                beta=_fmt(fit.beta),
                l1_distance=_fmt(fit.l1_distance),
                mean_energy=_fmt(weights.mean_energy),
            ),
            ["alpha", "E_alpha", "c_alpha", "c_boltzmann"],
            zip(range(weights.c.size), weights.energies, weights.c, fit.weights),
        )
        files.append(path)

    if "classical_crosscheck" in config.emit:
        check = _crosscheck_one(config, omega, out_dir)
        files.append(check.path)

    convergence_deviation = None
    if convergence_check:
        fine = run(params, drive, config.cycles, 2 * config.steps_per_cycle)
        convergence_deviation = max(
            float(np.linalg.norm(a.state.amplitudes - b.state.amplitudes))
            for a, b in zip(records, fine)
        )

    if timeseries is not None:
        nb_min, nb_max = float(np.min(timeseries.n_b)), float(np.max(timeseries.n_b))
    else:
        nb = np.array([rec.n_b for rec in records])
        nb_min, nb_max = float(nb.min()), float(nb.max())

    if figures:
        from . import plots

        fig_paths = plots.render_frequency_figures(
            out_dir,
            tag,
            timeseries=timeseries,
            strobe_rows=strobe_rows,
            weights=weights,
            fit=fit,
        )
        files.extend(fig_paths)

    return FrequencyResult(
        omega=omega,
        files=files,
        nb_min=nb_min,
        nb_max=nb_max,
        e_ground=e_ground,
        weights=weights,
        fit=fit,
        convergence_deviation=convergence_deviation,
    )


def run_experiment(
    config: ExperimentConfig,
    out_dir: Optional[str | Path] = None,
    workers: int = 1,
    convergence_check: bool = False,
    figures: Optional[bool] = None,
) -> ExperimentResult:
    """Execute the configured sweep and emit all per-frequency files plus summary.csv.

    Frequencies are independent; with ``workers > 1`` they run in separate
    processes and the summary is written once by the coordinator.
    """
    out = Path(out_dir) if out_dir is not None else Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write_probe"
    probe.write_text("", encoding="utf-8")
    probe.unlink()

    render = config.figures if figures is None else figures
    freqs = list(config.frequencies)
    if workers > 1 and len(freqs) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_run_one_frequency, config, f, out, convergence_check, render)
                for f in freqs
            ]
            results = [fut.result() for fut in futures]
    else:
        results = [
            _run_one_frequency(config, f, out, convergence_check, render) for f in freqs
        ]

    meta = _meta(config)
    if convergence_check:
        for res in results:
            meta.append(
                (f"convergence_deviation_omega_{_omega_tag(res.omega)}",
                 _fmt(res.convergence_deviation)),
            )
    summary_path = out / "summary.csv"
    _write_csv(
        summary_path,
        meta,
        ["omega", "nb_min", "nb_max", "e_ground", "mean_energy",
         "absorbed_energy", "beta", "l1_distance"],
        [
            (r.omega, r.nb_min, r.nb_max, r.e_ground, r.weights.mean_energy,
             r.absorbed_energy, r.fit.beta, r.fit.l1_distance)
            for r in results
        ],
    )
    return ExperimentResult(results, summary_path)


def _crosscheck_one(config: ExperimentConfig, omega: float, out_dir: Path) -> CrosscheckResult:
    params = config.sector(omega)
    drive = DriveProtocol.from_params(params)
    horizon = config.crosscheck_cycles

    start = extract_rapidities(ground_state(params, drive.delta(0.0)), params)
    refined = refine_static_roots(start, params, drive.delta(0.0)).rapidities

    records = run(params, drive, horizon, config.steps_per_cycle)
    trajectory = integrate_flow(refined, params, drive, horizon * drive.period)

    rows: list[tuple] = []
    max_distance = 0.0
    for rec in records:
        idx = int(np.argmin(np.abs(trajectory.times - rec.t_p)))
        if abs(trajectory.times[idx] - rec.t_p) > 1e-9 * drive.period:
            break  # trajectory halted before this cycle
        quantum = extract_rapidities(rec.state, params)
        if not quantum.all_finite:
            break
        _, dist, _ = pair_roots(quantum.lambdas, trajectory.lambdas_per_time[idx])
        rows.append((rec.p, rec.t_p, dist))
        max_distance = max(max_distance, dist)

    passed = (
        trajectory.status == "completed"
        and len(rows) == len(records)
        and max_distance < CROSSCHECK_TOL * params.g
    )
    path = out_dir / f"crosscheck_{_omega_tag(omega)}.csv"
    _write_csv(
        path,
        _meta(
            config,
            omega,
            status=trajectory.status,
            t_halt="" if trajectory.t_halt is None else _fmt(trajectory.t_halt),
            tolerance=_fmt(CROSSCHECK_TOL * params.g),
            passed=str(int(passed)),
        ),
        ["p", "t_p", "max_root_distance"],
        rows,
    )
    return CrosscheckResult(
        omega=omega,
        passed=passed,
        max_distance=max_distance,
        status=trajectory.status,
        t_halt=trajectory.t_halt,
        path=path,
    )


def crosscheck_classical(
    config: ExperimentConfig,
    horizon_cycles: Optional[int] = None,
    out_dir: Optional[str | Path] = None,
) -> list[CrosscheckResult]:
    """Propagate quantum and classical routes over a short horizon and compare.

    For every configured frequency the quantum pipeline (propagate, then
    extract rapidities each cycle) is checked against the integrated rapidity
    flow started from the refined on-shell ground-state roots.  A classical
    collision halt is reported in the emitted file, not raised.
    """
    if horizon_cycles is not None:
        if horizon_cycles < 1:
            raise ValueError("horizon_cycles must be >= 1")
        config = ExperimentConfig(
            **{**{f.name: getattr(config, f.name) for f in config.__dataclass_fields__.values()},
               "crosscheck_cycles": horizon_cycles},
        )
    out = Path(out_dir) if out_dir is not None else Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return [_crosscheck_one(config, omega, out) for omega in config.frequencies]
