"""Seeded perturbation experiments on the gain-scheduled closed loop.

Each trial perturbs the configuration three ways and re-runs the full
matrix pipeline:

* *global* multiplicative noise ``(1 + global_rel * z)`` with independent
  standard normal draws on the feedback scales (alpha, beta), the
  feedforward scales (a, b) -- breaking the matched-scale pairing -- and on
  the scale argument handed to the gain schedule;
* the *proportional* gain coupling ``k_e = delta (alpha^2/beta^2) k_i``
  instead of the exact schedule, whose deliberate ``delta <= 1`` slack keeps
  the sufficient stability ratio satisfied by construction;
* *local* heterogeneity: every excitatory and inhibitory connectivity entry
  scaled by ``1 + local_eps * z`` (independent draws), which destroys the
  circulant structure and forces the dense matrix representation.

The perturbed feedback scales enter both the connectivity kernels and the
gain formulas (the schedule is driven by the spreads the loop actually has,
only the scale dial and the feedforward path carry independent errors);
that is what makes the ratio-by-construction stability argument apply
trial-by-trial.

Per trial: closed-loop kernel (steady-state response to a discrete delta
through the perturbed matrix), steady-state response to the stimulus, a
spectral stability verdict, and deviation metrics against the unperturbed
same-``delta`` pipeline.  Draws come from a counter-based Philox generator
with one sub-stream per trial index (order: z_alpha, z_beta, z_a, z_b, z_s,
then the excitatory and inhibitory entry noise), so trials are reproducible
and independent of execution order.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import SolverConditionError, UnstableFilterError
from .fieldsim import (
    build_connectivity,
    equilibrium_solver,
    feedforward_drive,
    operator_spectrum_check,
)
from .kernels import ExpKernel, FeedforwardKernel, KernelBank
from .spectral import Signal, SpatialGrid, delta_signal
from .zoomctl import approx_gain_schedule

FIG3_SCALES = (0.8, 0.3, 0.1)


@dataclass(frozen=True)
class PerturbationSpec:
    """Magnitudes, seed and trial count for one experiment."""

    seed: int
    global_rel: float = 1e-2
    local_eps: float = 1e-4
    delta: float = 0.99
    n_trials: int = 5

    def __post_init__(self):
        if self.global_rel < 0 or self.local_eps < 0:
            raise ValueError("perturbation magnitudes must be >= 0")
        if not 0 < self.delta <= 1:
            raise ValueError(f"delta must lie in (0, 1], got {self.delta}")
        if self.n_trials < 1:
            raise ValueError(f"n_trials must be >= 1, got {self.n_trials}")


def trial_rng(seed: int, trial_index: int) -> np.random.Generator:
    """Philox sub-stream for one trial; independent of execution order."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(seed, spawn_key=(trial_index,)))
    )


@dataclass(frozen=True)
class TrialResult:
    """One perturbed realization plus its deviation metrics."""

    index: int
    params: dict
    kernel: np.ndarray
    response: np.ndarray
    normalized_response: np.ndarray
    max_real_part: float
    stable: bool
    kernel_dev: float
    response_dev: float
    normalized_error: float | None
    failure: str | None = None


@dataclass(frozen=True)
class NominalCase:
    """Unperturbed same-delta pipeline outputs used as the deviation baseline."""

    kernel: np.ndarray
    response: np.ndarray
    normalized_response: np.ndarray
    max_real_part: float


def _central_mask(grid: SpatialGrid) -> np.ndarray:
    return np.abs(grid.x) <= grid.length / 4.0


def _rel_l2(delta: np.ndarray, reference: np.ndarray, mask: np.ndarray) -> float:
    return float(
        np.linalg.norm(delta[mask]) / max(np.linalg.norm(reference[mask]), 1e-300)
    )


def _pipeline(grid, gains, bank, stimulus, local_eps=0.0, rng=None):
    """Kernel + response + verdict through the (possibly perturbed) matrix path."""
    conn = build_connectivity(grid, gains, bank, local_eps=local_eps, rng=rng)
    solve = equilibrium_solver(conn, gains)
    kernel = solve(feedforward_drive(grid, bank, delta_signal(grid)))
    response = solve(feedforward_drive(grid, bank, stimulus))
    verdict = operator_spectrum_check(conn, gains)
    return kernel.samples, response.samples, verdict


def nominal_case(
    spec: PerturbationSpec,
    s: float,
    stimulus: Signal,
    grid: SpatialGrid,
    bank: KernelBank,
) -> NominalCase:
    """Run the unperturbed pipeline at the experiment's own delta."""
    gains = approx_gain_schedule(s, bank.exc.r, bank.inh.r, spec.delta).gains
    kernel, response, verdict = _pipeline(grid, gains, bank, stimulus)
    k_const = bank.ff.zoom_constant()
    return NominalCase(
        kernel=kernel,
        response=response,
        normalized_response=response * s**-2.5 / k_const,
        max_real_part=verdict.max_real_part,
    )


def run_trial(
    spec: PerturbationSpec,
    s: float,
    stimulus: Signal,
    grid: SpatialGrid,
    nominal_bank: KernelBank,
    trial_index: int = 0,
    nominal: NominalCase | None = None,
    second_derivative=None,
) -> TrialResult:
    """One seeded perturbed realization at scale ``s``.

    Solver failures and instabilities are recorded in the result, not
    raised; the normalization of the response uses the *nominal* scale and
    zoom constant (the experimenter's dials, not the perturbed ones).
    """
    if nominal is None:
        nominal = nominal_case(spec, s, stimulus, grid, nominal_bank)
    rng = trial_rng(spec.seed, trial_index)
    g = spec.global_rel
    alpha = nominal_bank.exc.r * (1.0 + g * rng.standard_normal())
    beta = nominal_bank.inh.r * (1.0 + g * rng.standard_normal())
    a_ff = nominal_bank.ff.a * (1.0 + g * rng.standard_normal())
    b_ff = nominal_bank.ff.b * (1.0 + g * rng.standard_normal())
    s_sched = s * (1.0 + g * rng.standard_normal())
    params = {"alpha": alpha, "beta": beta, "a": a_ff, "b": b_ff, "s_sched": s_sched}

    k_const = nominal_bank.ff.zoom_constant()
    mask = _central_mask(grid)
    try:
        bank = KernelBank(
            ff=FeedforwardKernel(a_ff, b_ff), exc=ExpKernel(alpha), inh=ExpKernel(beta)
        )
        gains = approx_gain_schedule(s_sched, alpha, beta, spec.delta).gains
        kernel, response, verdict = _pipeline(
            grid, gains, bank, stimulus, local_eps=spec.local_eps, rng=rng
        )
    except (SolverConditionError, UnstableFilterError, ValueError) as exc:
        nan = np.full(grid.n_points, np.nan)
        return TrialResult(
            index=trial_index,
            params=params,
            kernel=nan,
            response=nan,
            normalized_response=nan,
            max_real_part=math.inf,
            stable=False,
            kernel_dev=math.inf,
            response_dev=math.inf,
            normalized_error=None,
            failure=str(exc),
        )

    normalized = response * s**-2.5 / k_const
    if second_derivative is not None:
        target = second_derivative(grid.x)
        normalized_error = _rel_l2(normalized - target, target, mask)
    else:
        normalized_error = None
    return TrialResult(
        index=trial_index,
        params=params,
        kernel=kernel,
        response=response,
        normalized_response=normalized,
        max_real_part=verdict.max_real_part,
        stable=verdict.stable,
        kernel_dev=_rel_l2(kernel - nominal.kernel, nominal.kernel, mask),
        response_dev=_rel_l2(response - nominal.response, nominal.response, mask),
        normalized_error=normalized_error,
    )


@dataclass(frozen=True)
class ScaleSummary:
    """Aggregated statistics for one scale."""

    s: float
    nominal: NominalCase
    trials: list[TrialResult]
    median_kernel_dev: float
    max_kernel_dev: float
    median_response_dev: float
    max_response_dev: float
    median_normalized_error: float | None
    max_normalized_error: float | None
    n_failures: int


@dataclass(frozen=True)
class ExperimentReport:
    """Full experiment output: pure function of (spec, scales, stimulus, grid)."""

    spec: PerturbationSpec
    grid: SpatialGrid
    s_values: tuple
    stimulus_name: str
    scales: list[ScaleSummary] = field(default_factory=list)

    @property
    def total_failures(self) -> int:
        return sum(sc.n_failures for sc in self.scales)


def run_experiment(
    spec: PerturbationSpec,
    s_values,
    stimulus: Signal,
    grid: SpatialGrid,
    bank: KernelBank,
    stimulus_name: str = "custom",
    second_derivative=None,
) -> ExperimentReport:
    """``n_trials`` perturbed realizations per scale, aggregated per scale."""
    report = ExperimentReport(
        spec=spec,
        grid=grid,
        s_values=tuple(float(s) for s in s_values),
        stimulus_name=stimulus_name,
    )
    for s in report.s_values:
        nominal = nominal_case(spec, s, stimulus, grid, bank)
        trials = [
            run_trial(
                spec, s, stimulus, grid, bank,
                trial_index=i, nominal=nominal, second_derivative=second_derivative,
            )
            for i in range(spec.n_trials)
        ]
        ok = [t for t in trials if t.failure is None]
        kernel_devs = [t.kernel_dev for t in ok]
        response_devs = [t.response_dev for t in ok]
        norm_errs = [t.normalized_error for t in ok if t.normalized_error is not None]
        report.scales.append(
            ScaleSummary(
                s=s,
                nominal=nominal,
                trials=trials,
                median_kernel_dev=float(np.median(kernel_devs)) if kernel_devs else math.inf,
                max_kernel_dev=float(np.max(kernel_devs)) if kernel_devs else math.inf,
                median_response_dev=float(np.median(response_devs)) if response_devs else math.inf,
                max_response_dev=float(np.max(response_devs)) if response_devs else math.inf,
                median_normalized_error=float(np.median(norm_errs)) if norm_errs else None,
                max_normalized_error=float(np.max(norm_errs)) if norm_errs else None,
                n_failures=sum(1 for t in trials if t.failure is not None or not t.stable),
            )
        )
    return report


def write_experiment(report: ExperimentReport, outdir) -> list[Path]:
    """Write ``summary.json`` plus one ``trial_<scale>_<index>.csv`` per trial."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for sc in report.scales:
        for trial in sc.trials:
            path = outdir / f"trial_{sc.s:g}_{trial.index}.csv"
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["x", "kernel", "response"])
                for x, k, r in zip(report.grid.x, trial.kernel, trial.response):
                    writer.writerow([f"{x:.17g}", f"{k:.17g}", f"{r:.17g}"])
            written.append(path)

    summary = {
        "spec": {
            "seed": report.spec.seed,
            "global_rel": report.spec.global_rel,
            "local_eps": report.spec.local_eps,
            "delta": report.spec.delta,
            "n_trials": report.spec.n_trials,
        },
        "grid": {"n_points": report.grid.n_points, "length": report.grid.length},
        "stimulus": report.stimulus_name,
        "scales": [
            {
                "s": sc.s,
                "median_kernel_dev": sc.median_kernel_dev,
                "max_kernel_dev": sc.max_kernel_dev,
                "median_response_dev": sc.median_response_dev,
                "max_response_dev": sc.max_response_dev,
                "median_normalized_error": sc.median_normalized_error,
                "max_normalized_error": sc.max_normalized_error,
                "n_failures": sc.n_failures,
                "nominal_max_real_part": sc.nominal.max_real_part,
                "trials": [
                    {
                        "index": t.index,
                        "params": t.params,
                        "kernel_dev": _json_float(t.kernel_dev),
                        "response_dev": _json_float(t.response_dev),
                        "normalized_error": t.normalized_error,
                        "max_real_part": _json_float(t.max_real_part),
                        "stable": t.stable,
                        "failure": t.failure,
                    }
                    for t in sc.trials
                ],
            }
            for sc in report.scales
        ],
        "total_failures": report.total_failures,
    }
    summary_path = outdir / "summary.json"
    with open(summary_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(summary_path)
    return written


def _json_float(x: float):
    return x if math.isfinite(x) else None
