"""Run configuration: declarative INI file mirrored by CLI flags.

A config file holds the same knobs the command line exposes; flags override
file values, and unknown sections or keys are rejected so a stale file
cannot silently misconfigure an experiment.  Example::

    [grid]
    n = 2048
    length = 40

    [kernels]
    a = 1.0
    b = 2.0
    alpha = 1.0
    beta = 2.0

    [run]
    scales = 0.8, 0.3, 0.1
    stimulus = tanh
    schedule = approx
    delta = 0.99
    seed = 7
    out = out

    [perturbation]
    global_rel = 1e-2
    local_eps = 1e-4
    n_trials = 5
"""

from __future__ import annotations

import configparser
import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError
from .kernels import ExpKernel, FeedforwardKernel, KernelBank
from .spectral import Signal, SpatialGrid, delta_signal, sample_function, taper

STIMULI = ("tanh", "step", "delta", "ramp", "quadratic", "file")
SCHEDULE_MODES = ("exact", "approx")

DEFAULT_SEED = 7

_SCHEMA = {
    "grid": {"n": int, "length": float},
    "kernels": {"a": float, "b": float, "alpha": float, "beta": float},
    "run": {
        "scales": "scales",
        "stimulus": str,
        "stimulus_file": str,
        "schedule": str,
        "delta": float,
        "seed": int,
        "out": str,
        "dt": float,
        "t_end": float,
        "taper_fraction": float,
    },
    "perturbation": {"global_rel": float, "local_eps": float, "n_trials": int},
}

_FIELD_BY_KEY = {
    ("grid", "n"): "grid_n",
    ("grid", "length"): "grid_len",
    ("kernels", "a"): "a",
    ("kernels", "b"): "b",
    ("kernels", "alpha"): "alpha",
    ("kernels", "beta"): "beta",
    ("run", "scales"): "scales",
    ("run", "stimulus"): "stimulus",
    ("run", "stimulus_file"): "stimulus_file",
    ("run", "schedule"): "schedule",
    ("run", "delta"): "delta",
    ("run", "seed"): "seed",
    ("run", "out"): "out",
    ("run", "dt"): "dt",
    ("run", "t_end"): "t_end",
    ("run", "taper_fraction"): "taper_fraction",
    ("perturbation", "global_rel"): "global_rel",
    ("perturbation", "local_eps"): "local_eps",
    ("perturbation", "n_trials"): "n_trials",
}


@dataclass(frozen=True)
class RunConfig:
    """Validated parameters for one CLI invocation."""

    grid_n: int = 2048
    grid_len: float = 40.0
    a: float = 1.0
    b: float = 2.0
    alpha: float = 1.0
    beta: float = 2.0
    scales: tuple = (0.8, 0.3, 0.1)
    stimulus: str = "tanh"
    stimulus_file: str | None = None
    schedule: str = "exact"
    delta: float = 0.99
    seed: int = DEFAULT_SEED
    out: str = "out"
    dt: float | None = None
    t_end: float | None = None
    taper_fraction: float = 0.1
    global_rel: float = 1e-2
    local_eps: float = 1e-4
    n_trials: int = 5

    def validated(self) -> "RunConfig":
        """Check every module precondition up front; raise ConfigError on failure."""
        n = self.grid_n
        if n < 8 or (n & (n - 1)) != 0:
            raise ConfigError(f"[grid] n must be a power of two >= 8, got {n}")
        if not self.grid_len > 0:
            raise ConfigError(f"[grid] length must be positive, got {self.grid_len}")
        if not 0 < self.a < self.b:
            raise ConfigError(f"[kernels] need 0 < a < b, got a={self.a}, b={self.b}")
        if not 0 < self.alpha < self.beta:
            raise ConfigError(
                f"[kernels] need 0 < alpha < beta, got alpha={self.alpha}, beta={self.beta}"
            )
        if not self.scales:
            raise ConfigError("[run] scales must be non-empty")
        for s in self.scales:
            if not 0 < s <= 1:
                raise ConfigError(f"[run] scales must lie in (0, 1], got {s}")
        if self.stimulus not in STIMULI:
            raise ConfigError(
                f"[run] stimulus must be one of {', '.join(STIMULI)}, got {self.stimulus!r}"
            )
        if self.stimulus == "file" and not self.stimulus_file:
            raise ConfigError("[run] stimulus = file requires stimulus_file")
        if self.schedule not in SCHEDULE_MODES:
            raise ConfigError(
                f"[run] schedule must be one of {', '.join(SCHEDULE_MODES)}, got {self.schedule!r}"
            )
        if not 0 < self.delta <= 1:
            raise ConfigError(f"[run] delta must lie in (0, 1], got {self.delta}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"[run] seed must be a u64, got {self.seed}")
        if self.dt is not None and not self.dt > 0:
            raise ConfigError(f"[run] dt must be positive, got {self.dt}")
        if self.t_end is not None and not self.t_end > 0:
            raise ConfigError(f"[run] t_end must be positive, got {self.t_end}")
        if not 0 < self.taper_fraction < 1:
            raise ConfigError(
                f"[run] taper_fraction must be in (0, 1), got {self.taper_fraction}"
            )
        if self.global_rel < 0 or self.local_eps < 0:
            raise ConfigError("[perturbation] magnitudes must be >= 0")
        if self.n_trials < 1:
            raise ConfigError(f"[perturbation] n_trials must be >= 1, got {self.n_trials}")
        return self

    def grid(self) -> SpatialGrid:
        return SpatialGrid(self.grid_n, self.grid_len)

    def bank(self) -> KernelBank:
        return KernelBank(
            ff=FeedforwardKernel(self.a, self.b),
            exc=ExpKernel(self.alpha),
            inh=ExpKernel(self.beta),
        )


def parse_scales(text: str) -> tuple:
    try:
        values = tuple(float(tok) for tok in text.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"cannot parse scales {text!r}: {exc}") from exc
    if not values:
        raise ConfigError("scales list is empty")
    return values


def load_config_file(path) -> dict:
    """Parse an INI config file into RunConfig field overrides."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        read = parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from exc
    if not read:
        raise ConfigError(f"config file not found: {path}")
    overrides = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            kind = _SCHEMA[section][key]
            field_name = _FIELD_BY_KEY[(section, key)]
            try:
                if kind == "scales":
                    overrides[field_name] = parse_scales(raw)
                elif kind is int:
                    overrides[field_name] = int(raw)
                elif kind is float:
                    overrides[field_name] = float(raw)
                else:
                    overrides[field_name] = raw.strip()
            except ValueError as exc:
                raise ConfigError(
                    f"bad value for [{section}] {key} = {raw!r}: {exc}"
                ) from exc
    return overrides


def build_config(file_path=None, **flag_overrides) -> RunConfig:
    """Defaults, then config file, then explicit flags; validated."""
    fields = {}
    if file_path:
        fields.update(load_config_file(file_path))
    fields.update({k: v for k, v in flag_overrides.items() if v is not None})
    try:
        config = replace(RunConfig(), **fields)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return config.validated()


def tanh_second_derivative(x):
    return -2.0 * np.tanh(x) / np.cosh(x) ** 2


def build_stimulus(config: RunConfig, grid: SpatialGrid):
    """Named stimulus on the grid.

    Returns ``(signal, name, second_derivative_or_None)``.  Non-decaying
    shapes (tanh, step, ramp, quadratic) are cosine-tapered over the outer
    fraction of the domain so they are compatible with the periodic
    transform; the analytic second derivative is supplied where the
    wavelet-zoom comparison is meaningful.
    """
    name = config.stimulus
    frac = config.taper_fraction
    if name == "tanh":
        return taper(sample_function(grid, np.tanh), frac), name, tanh_second_derivative
    if name == "step":
        return taper(sample_function(grid, np.sign), frac), name, None
    if name == "delta":
        return delta_signal(grid), name, None
    if name == "ramp":
        return taper(sample_function(grid, lambda x: x), frac), name, None
    if name == "quadratic":
        return (
            taper(sample_function(grid, np.square), frac),
            name,
            lambda x: np.full_like(np.asarray(x, dtype=float), 2.0),
        )
    if name == "file":
        return _read_stimulus_file(config.stimulus_file, grid), name, None
    raise ConfigError(f"unknown stimulus {name!r}")


def _read_stimulus_file(path, grid: SpatialGrid) -> Signal:
    """CSV stimulus: a ``value`` column with exactly one row per grid point."""
    values = []
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or "value" not in reader.fieldnames:
                raise ConfigError(f"stimulus file {path} needs a 'value' column")
            for row in reader:
                values.append(float(row["value"]))
    except OSError as exc:
        raise ConfigError(f"cannot read stimulus file {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"bad number in stimulus file {path}: {exc}") from exc
    if len(values) != grid.n_points:
        raise ConfigError(
            f"stimulus file {path} has {len(values)} rows, grid needs {grid.n_points}"
        )
    arr = np.asarray(values)
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"stimulus file {path} contains non-finite values")
    return Signal(grid, arr)


def default_dt(s: float) -> float:
    """Step at one percent of the stiffest mode's time constant (s^{5/2})."""
    return 1e-2 * s**2.5


def default_t_end(gamma: float) -> float:
    """Horizon of twenty slowest-mode time constants (equilibration)."""
    return 20.0 / gamma


def format_float(x: float) -> str:
    """17 significant digits; canonical text form for CSV output."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    return f"{x:.17g}"
