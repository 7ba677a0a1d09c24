"""Experiment configuration: flat key = value text files, versioned.

Schema (version 1), one ``key = value`` pair per line, ``#`` comments and
blank lines ignored:

    config_version    int, must be 1
    spin              half-integer S                      (required)
    excitations       integer M                           (required)
    coupling          g > 0                               (default 1.0)
    delta0            drive amplitude                     (required)
    frequencies       comma list of omega > 0             (required)
    cycles            P >= 1                              (default 4000)
    steps_per_cycle   RK4 steps per drive period          (default 2000)
    output_dir        where CSV/figure files go           (default "out")
    seed              RNG seed for randomized self-tests  (default 0)
    emit              comma subset of: timeseries, strobe_map, weights,
                      classical_crosscheck                (default: first three)
    timeseries_cycles            cycles covered by the time series (default 200)
    timeseries_samples_per_cycle samples within each cycle         (default 16)
    crosscheck_cycles            horizon of the classical crosscheck (default 5)
    figures           yes/no, render PNG figures next to the CSVs (default yes)
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .exceptions import ConfigError
from .sector import SectorParams

__all__ = ["ExperimentConfig", "parse_config", "load_config", "CONFIG_VERSION"]

CONFIG_VERSION = 1

EMIT_FLAGS = ("timeseries", "strobe_map", "weights", "classical_crosscheck")


@dataclass(frozen=True)
class ExperimentConfig:
    spin: float
    excitations: int
    delta0: float
    frequencies: tuple[float, ...]
    coupling: float = 1.0
    cycles: int = 4000
    steps_per_cycle: int = 2000
    output_dir: str = "out"
    seed: int = 0
    emit: tuple[str, ...] = ("timeseries", "strobe_map", "weights")
    timeseries_cycles: int = 200
    timeseries_samples_per_cycle: int = 16
    crosscheck_cycles: int = 5
    figures: bool = True

    def __post_init__(self) -> None:
        if not self.frequencies:
            raise ConfigError("at least one drive frequency is required")
        if any(f <= 0 for f in self.frequencies):
            raise ConfigError("all frequencies must be positive")
        if self.cycles < 1:
            raise ConfigError("cycles must be >= 1")
        if self.steps_per_cycle < 1:
            raise ConfigError("steps_per_cycle must be >= 1")
        if self.timeseries_cycles < 1 or self.timeseries_samples_per_cycle < 1:
            raise ConfigError("timeseries settings must be >= 1")
        if self.crosscheck_cycles < 1:
            raise ConfigError("crosscheck_cycles must be >= 1")
        unknown = set(self.emit) - set(EMIT_FLAGS)
        if unknown:
            raise ConfigError(f"unknown emit flag(s): {sorted(unknown)}")
        # canonical flag order makes serialization stable
        object.__setattr__(
            self, "emit", tuple(f for f in EMIT_FLAGS if f in self.emit)
        )
        try:
            self.sector(self.frequencies[0])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def sector(self, omega: float) -> SectorParams:
        return SectorParams(
            s=self.spin,
            m=self.excitations,
            g=self.coupling,
            delta0=self.delta0,
            omega=omega,
        )

    def to_text(self) -> str:
        lines = [f"config_version = {CONFIG_VERSION}"]
        for key, value in self._items():
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"

    def as_flat_line(self) -> str:
        """Single-line echo for output-file headers."""
        pairs = [f"config_version={CONFIG_VERSION}"]
        pairs += [f"{k}={v}" for k, v in self._items()]
        return "; ".join(pairs)

    def _items(self) -> list[tuple[str, str]]:
        out = []
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name in ("frequencies", "emit"):
                value = ", ".join(str(v) for v in value)
            elif f.name == "figures":
                value = "yes" if value else "no"
            out.append((f.name, str(value)))
        return out


_FIELD_PARSERS = {
    "spin": float,
    "excitations": int,
    "coupling": float,
    "delta0": float,
    "cycles": int,
    "steps_per_cycle": int,
    "output_dir": str,
    "seed": int,
    "timeseries_cycles": int,
    "timeseries_samples_per_cycle": int,
    "crosscheck_cycles": int,
}


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("yes", "true", "1", "on"):
        return True
    if low in ("no", "false", "0", "off"):
        return False
    raise ConfigError(f"expected yes/no, got {raw!r}")


def parse_config(text: str) -> ExperimentConfig:
    """Parse the flat key = value format into an ExperimentConfig."""
    values: dict[str, object] = {}
    version_seen = None
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw_line!r}")
        key, _, raw = line.partition("=")
        key = key.strip()
        raw = raw.strip()
        try:
            if key == "config_version":
                version_seen = int(raw)
            elif key == "frequencies":
                values[key] = tuple(float(tok) for tok in raw.split(",") if tok.strip())
            elif key == "emit":
                values[key] = tuple(tok.strip() for tok in raw.split(",") if tok.strip())
            elif key == "figures":
                values[key] = _parse_bool(raw)
            elif key in _FIELD_PARSERS:
                values[key] = _FIELD_PARSERS[key](raw)
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
    if version_seen is None:
        raise ConfigError("missing config_version")
    if version_seen != CONFIG_VERSION:
        raise ConfigError(f"unsupported config_version {version_seen} (expected {CONFIG_VERSION})")
    missing = {"spin", "excitations", "delta0", "frequencies"} - set(values)
    if missing:
        raise ConfigError(f"missing required key(s): {sorted(missing)}")
    try:
        return ExperimentConfig(**values)  # type: ignore[arg-type]
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config(text)
