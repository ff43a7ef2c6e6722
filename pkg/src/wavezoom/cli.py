"""Command-line surface: named experiments with deterministic file outputs.

Commands write comma-separated data files (17 significant digits, header
row) and JSON (UTF-8, sorted keys) into the output directory, plus PNG
figures unless ``--no-figures`` is given.  Reruns with identical
configuration and seed overwrite byte-identical data files; figures carry
no timestamps either but only the delimited outputs are the contract.

Exit codes: 0 success, 2 configuration error, 3 unstable closed loop,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import plotting
from .config import (
    DEFAULT_SEED,
    RunConfig,
    build_stimulus,
    default_dt,
    default_t_end,
    format_float,
    load_config_file,
    parse_scales,
)
from .errors import (
    ConfigError,
    GridMismatchError,
    NonFiniteSampleError,
    ScaleResolutionError,
    SolverConditionError,
    SpectralSymmetryError,
    UnstableFilterError,
)
from .fieldsim import (
    build_connectivity,
    operator_spectrum_check,
    spectral_integrate,
    steady_state_spectral,
)
from .robustness import FIG3_SCALES, PerturbationSpec, run_experiment, write_experiment
from .spectral import SpatialGrid, forward_transform
from .wavelet import write_zoom_outputs, zoom_sweep
from .zoomctl import (
    closed_loop_kernel,
    closed_loop_spectrum,
    ratio_stability_test,
    schedule_for_bank,
    stability_margin,
)

ZOOM_DEFAULT_SCALES = (0.4, 0.2, 0.1, 0.05)
STABILITY_DEFAULT_SCALES = tuple(round(0.1 * k, 1) for k in range(1, 10))


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.print_help()
        return 2
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except UnstableFilterError as exc:
        print(f"instability: {exc}", file=sys.stderr)
        return 3
    except (
        SpectralSymmetryError,
        NonFiniteSampleError,
        SolverConditionError,
        ScaleResolutionError,
        GridMismatchError,
        ZeroDivisionError,
    ) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        # module-level precondition violations reached through CLI inputs
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return 0


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file; flags override its values")
    common.add_argument("--seed", type=int, help=f"u64 RNG seed (default {DEFAULT_SEED})")
    common.add_argument("--out", help="output directory (default 'out')")
    common.add_argument("--grid-n", type=int, dest="grid_n",
                        help="grid points, power of two >= 8 (default 2048)")
    common.add_argument("--grid-len", type=float, dest="grid_len",
                        help="periodic domain length in space units (default 40)")
    common.add_argument("--no-figures", action="store_true",
                        help="write data files only, skip PNG rendering")

    sched_opts = argparse.ArgumentParser(add_help=False)
    sched_opts.add_argument("--scales", type=parse_scales,
                            help="comma-separated scales in (0, 1]")
    sched_opts.add_argument("--schedule-mode", choices=("exact", "approx"),
                            dest="schedule",
                            help="exact gain schedule or proportional k_e = delta (alpha/beta)^2 k_i")
    sched_opts.add_argument("--delta", type=float,
                            help="proportional-schedule safety factor in (0, 1] (default 0.99)")

    stim_opts = argparse.ArgumentParser(add_help=False)
    stim_opts.add_argument("--stimulus",
                           choices=("tanh", "step", "delta", "ramp", "quadratic", "file"),
                           help="named stimulus shape (default tanh)")
    stim_opts.add_argument("--stimulus-file", dest="stimulus_file",
                           help="CSV with a 'value' column, one row per grid point")

    parser = argparse.ArgumentParser(
        prog="wavezoom",
        description="Gain-scheduled spatial band-pass filter: schedules, kernels, "
        "responses, wavelet zoom, stability and robustness experiments.",
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser(
        "schedule", parents=[common, sched_opts],
        help="tabulate (gamma, K_E, K_I), gain ratio and stability margin per scale",
        description="Columns: s; gamma = s^(3/2) damping; k_e, k_i = feedback gains "
        "realizing the scale-s atom; kappa_ratio = k_e/k_i; margin = inf over "
        "frequency of the loop denominator (positive certifies stability); "
        "model_consistent = both gains nonnegative.",
    )
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser(
        "kernel", parents=[common, sched_opts],
        help="closed-loop spatial kernels per scale",
        description="kernel.csv columns: s, x, value -- the closed-loop impulse "
        "response (inverse transform of the filter spectrum) at each scale.",
    )
    p.set_defaults(func=cmd_kernel)

    p = sub.add_parser(
        "spectrum", parents=[common, sched_opts],
        help="closed-loop spectra against dictionary atom spectra",
        description="spectrum.csv columns: s, lambda (angular frequency), "
        "closed_loop = ff_spectrum/(gamma - k_e exc + k_i inh), atom = "
        "sqrt(s) ff_spectrum(s lambda); the two coincide under the exact schedule.",
    )
    p.add_argument("--lam-max", type=float, default=100.0,
                   help="maximum frequency (default 100)")
    p.add_argument("--lam-points", type=int, default=2001,
                   help="frequency samples (default 2001)")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser(
        "respond", parents=[common, sched_opts, stim_opts],
        help="steady-state responses to a stimulus per scale",
        description="response_<s>.csv columns: x, stimulus, response (steady state), "
        "normalized = response * s^(-5/2)/K with K the zoom constant; the "
        "normalized trace converges to the stimulus second derivative at "
        "small scales.",
    )
    p.add_argument("--transient", action="store_true",
                   help="also export the time course as trajectory_<s>.csv (t, x, activity)")
    p.add_argument("--dt", type=float, help="time step (default 1e-2 s^(5/2))")
    p.add_argument("--t-end", type=float, dest="t_end",
                   help="integration horizon (default 20/gamma)")
    p.set_defaults(func=cmd_respond)

    p = sub.add_parser(
        "zoom", parents=[common, sched_opts, stim_opts],
        help="wavelet transform sweep with decay-slope fits",
        description="zoom.csv columns: u (position), s (scale), raw = transform "
        "value, normalized = raw * s^(-5/2)/K; zoom.json records the zoom "
        "constant K, grid metadata and per-position log-log decay slopes "
        "(2.5 in the smooth-signal limit).",
    )
    p.set_defaults(func=cmd_zoom)

    p = sub.add_parser(
        "stability", parents=[common, sched_opts],
        help="margins, ratio test and discrete-operator eigenvalue check per scale",
        description="stability.csv columns: s, gamma, k_e, k_i, margin (inf of loop "
        "denominator), ratio (sufficient-test value (k_e/k_i)(beta/alpha)^2, "
        "<= 1 certifies margin >= gamma), ratio_applicable, max_real_part "
        "(largest eigenvalue real part of the discretized generator at --eig-n).",
    )
    p.add_argument("--eig-n", type=int, default=256,
                   help="grid size for the discrete eigenvalue check (default 256)")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser(
        "robustness", parents=[common, sched_opts, stim_opts],
        help="seeded perturbation experiment over scales",
        description="Writes trial_<s>_<i>.csv (x, kernel, response) per trial and "
        "summary.json with per-scale deviation statistics and stability "
        "verdicts. Perturbations: global (1 + global_rel z) on kernel scales "
        "and the schedule's scale argument; local (1 + local_eps z) on every "
        "connectivity entry; proportional schedule with safety factor delta.",
    )
    p.add_argument("--trials", type=int, dest="n_trials",
                   help="trials per scale (default 5)")
    p.add_argument("--global-rel", type=float, dest="global_rel",
                   help="global relative perturbation magnitude (default 1e-2)")
    p.add_argument("--local-eps", type=float, dest="local_eps",
                   help="per-entry connectivity noise magnitude (default 1e-4)")
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser(
        "reproduce-fig3", parents=[common],
        help="robustness experiment at its reference defaults",
        description="Robustness experiment pinned at the reference "
        "configuration: scales 0.8/0.3/0.1, 5 trials per scale, proportional "
        "schedule with delta=0.99, global relative noise 1e-2, per-entry "
        "connectivity noise 1e-4, tanh stimulus. Writes trial_<s>_<i>.csv "
        "(x, kernel, response), summary.json and fig_robustness.png.",
    )
    p.set_defaults(func=cmd_reproduce_fig3)
    return parser


_FLAG_FIELDS = (
    "seed", "out", "grid_n", "grid_len", "scales", "schedule", "delta",
    "stimulus", "stimulus_file", "n_trials", "global_rel", "local_eps",
    "dt", "t_end",
)


def _config_from_args(args, **command_defaults) -> RunConfig:
    """Per-command defaults, overridden by config file, overridden by flags."""
    file_fields = load_config_file(args.config) if args.config else {}
    fields = {k: v for k, v in command_defaults.items() if k not in file_fields}
    fields.update(file_fields)
    for name in _FLAG_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            fields[name] = value
    try:
        return replace(RunConfig(), **fields).validated()
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _outdir(config: RunConfig) -> Path:
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _gains_for(config: RunConfig, bank, s):
    delta = config.delta if config.schedule == "approx" else None
    return schedule_for_bank(bank, s, delta).gains


def cmd_schedule(args):
    config = _config_from_args(args)
    bank = config.bank()
    out = _outdir(config)
    rows = []
    print(f"{'s':>6} {'gamma':>12} {'K_E':>14} {'K_I':>14} {'ratio':>10} "
          f"{'margin':>12} {'consistent':>10}")
    for s in config.scales:
        gains = _gains_for(config, bank, s)
        margin = stability_margin(bank, gains)
        ratio = gains.k_e / gains.k_i if gains.k_i != 0 else float("nan")
        rows.append({
            "s": s, "gamma": gains.gamma, "k_e": gains.k_e, "k_i": gains.k_i,
            "kappa_ratio": ratio, "margin": margin,
            "model_consistent": gains.model_consistent,
        })
        print(f"{s:>6g} {gains.gamma:>12.6g} {gains.k_e:>14.6g} {gains.k_i:>14.6g} "
              f"{ratio:>10.6g} {margin:>12.6g} {str(gains.model_consistent):>10}")
    _write_csv(
        out / "schedule.csv",
        ["s", "gamma", "k_e", "k_i", "kappa_ratio", "margin", "model_consistent"],
        [[format_float(r["s"]), format_float(r["gamma"]), format_float(r["k_e"]),
          format_float(r["k_i"]), format_float(r["kappa_ratio"]),
          format_float(r["margin"]), str(r["model_consistent"]).lower()]
         for r in rows],
    )
    if not args.no_figures:
        plotting.save_schedule_figure(out / "schedule.png", rows)
    print(f"wrote {out / 'schedule.csv'}")


def cmd_kernel(args):
    config = _config_from_args(args)
    bank = config.bank()
    grid = config.grid()
    out = _outdir(config)
    curves = {}
    rows = []
    for s in config.scales:
        gains = _gains_for(config, bank, s)
        kernel = closed_loop_kernel(bank, gains, grid)
        curves[f"s={s:g}"] = kernel.samples
        rows.extend(
            [format_float(s), format_float(x), format_float(v)]
            for x, v in zip(grid.x, kernel.samples)
        )
    _write_csv(out / "kernel.csv", ["s", "x", "value"], rows)
    if not args.no_figures:
        plotting.save_kernel_figure(out / "kernel.png", grid.x, curves)
    print(f"wrote {out / 'kernel.csv'} ({len(config.scales)} scales x {grid.n_points} points)")


def cmd_spectrum(args):
    config = _config_from_args(args)
    bank = config.bank()
    out = _outdir(config)
    lam = np.linspace(0.0, args.lam_max, args.lam_points)
    rows = []
    curves = {}
    for s in config.scales:
        gains = _gains_for(config, bank, s)
        closed = np.asarray(closed_loop_spectrum(bank, gains, lam))
        atom = bank.ff.atom_spectrum(s, lam)
        curves[f"s={s:g}"] = (closed, atom)
        rows.extend(
            [format_float(s), format_float(l), format_float(c), format_float(a)]
            for l, c, a in zip(lam, closed, atom)
        )
    _write_csv(out / "spectrum.csv", ["s", "lambda", "closed_loop", "atom"], rows)
    if not args.no_figures:
        plotting.save_spectrum_figure(
            out / "spectrum.png", np.maximum(lam, lam[1] if len(lam) > 1 else 1e-3), curves
        )
    print(f"wrote {out / 'spectrum.csv'}")


def cmd_respond(args):
    config = _config_from_args(args)
    bank = config.bank()
    grid = config.grid()
    out = _outdir(config)
    stimulus, name, second_derivative = build_stimulus(config, grid)
    k_const = bank.ff.zoom_constant()
    responses = {}
    for s in config.scales:
        gains = _gains_for(config, bank, s)
        margin = stability_margin(bank, gains)
        if margin <= 0:
            raise UnstableFilterError(f"margin {margin:.3e} <= 0 at s={s}")
        response = steady_state_spectral(grid, gains, bank, stimulus)
        normalized = response.samples * s**-2.5 / k_const
        responses[f"s={s:g}"] = normalized
        _write_csv(
            out / f"response_{s:g}.csv",
            ["x", "stimulus", "response", "normalized"],
            [[format_float(x), format_float(h), format_float(r), format_float(nv)]
             for x, h, r, nv in zip(grid.x, stimulus.samples, response.samples, normalized)],
        )
        if args.transient:
            dt = config.dt if config.dt is not None else default_dt(s)
            t_end = config.t_end if config.t_end is not None else default_t_end(gains.gamma)
            n_steps = int(np.ceil(t_end / dt))
            stride = max(1, n_steps // 25)
            traj = spectral_integrate(
                grid, gains, bank, forward_transform(stimulus), dt, t_end, stride=stride
            )
            _write_trajectory(out / f"trajectory_{s:g}.csv", grid, traj)
    if not args.no_figures:
        target = second_derivative(grid.x) if second_derivative else None
        plotting.save_response_figure(
            out / "response.png", grid.x, stimulus.samples, responses, target
        )
    print(f"wrote {len(config.scales)} response files to {out} (stimulus {name})")


def _write_trajectory(path, grid, traj):
    from .spectral import Spectrum, inverse_transform

    rows = []
    for t, spec_row in zip(traj.times, traj.spectra):
        signal = inverse_transform(Spectrum(grid, spec_row))
        rows.extend(
            [format_float(t), format_float(x), format_float(v)]
            for x, v in zip(grid.x, signal.samples)
        )
    _write_csv(path, ["t", "x", "activity"], rows)


def cmd_zoom(args):
    config = _config_from_args(args, scales=ZOOM_DEFAULT_SCALES)
    bank = config.bank()
    grid = config.grid()
    out = _outdir(config)
    stimulus, name, second_derivative = build_stimulus(config, grid)
    singular = (0.0,) if name == "step" else ()
    sweep = zoom_sweep(stimulus, config.scales, bank, singular_points=singular)
    write_zoom_outputs(sweep, out / "zoom.csv", out / "zoom.json")
    if not args.no_figures:
        target = second_derivative(grid.x) if second_derivative else None
        plotting.save_zoom_figure(out / "zoom.png", sweep, target)
    median_slope = float(np.median(sweep.slopes))
    print(f"wrote {out / 'zoom.csv'}; median decay slope over fitted positions: "
          f"{median_slope:.3f}")


def cmd_stability(args):
    config = _config_from_args(args, scales=STABILITY_DEFAULT_SCALES)
    bank = config.bank()
    out = _outdir(config)
    eig_grid = SpatialGrid(args.eig_n, config.grid_len)
    rows = []
    print(f"{'s':>6} {'margin':>12} {'ratio':>10} {'applicable':>10} {'maxRe(eig)':>14}")
    for s in config.scales:
        gains = _gains_for(config, bank, s)
        margin = stability_margin(bank, gains)
        ratio = ratio_stability_test(gains, bank.exc.r, bank.inh.r)
        conn = build_connectivity(eig_grid, gains, bank)
        verdict = operator_spectrum_check(conn, gains)
        rows.append({
            "s": s, "gamma": gains.gamma, "k_e": gains.k_e, "k_i": gains.k_i,
            "margin": margin, "ratio": ratio.ratio,
            "ratio_applicable": ratio.applicable,
            "ratio_satisfied": ratio.satisfied,
            "max_real_part": verdict.max_real_part,
        })
        print(f"{s:>6g} {margin:>12.6g} "
              f"{(ratio.ratio if ratio.ratio is not None else float('nan')):>10.4g} "
              f"{str(ratio.applicable):>10} {verdict.max_real_part:>14.6g}")
    _write_csv(
        out / "stability.csv",
        ["s", "gamma", "k_e", "k_i", "margin", "ratio", "ratio_applicable",
         "ratio_satisfied", "max_real_part"],
        [[format_float(r["s"]), format_float(r["gamma"]), format_float(r["k_e"]),
          format_float(r["k_i"]), format_float(r["margin"]),
          format_float(r["ratio"]) if r["ratio"] is not None else "",
          str(r["ratio_applicable"]).lower(), str(r["ratio_satisfied"]).lower(),
          format_float(r["max_real_part"])]
         for r in rows],
    )
    if not args.no_figures:
        plotting.save_stability_figure(out / "stability.png", rows)
    print(f"wrote {out / 'stability.csv'}")


def _run_robustness(config: RunConfig, args):
    bank = config.bank()
    grid = config.grid()
    out = _outdir(config)
    stimulus, name, second_derivative = build_stimulus(config, grid)
    spec = PerturbationSpec(
        seed=config.seed,
        global_rel=config.global_rel,
        local_eps=config.local_eps,
        delta=config.delta,
        n_trials=config.n_trials,
    )
    report = run_experiment(
        spec, config.scales, stimulus, grid, bank,
        stimulus_name=name, second_derivative=second_derivative,
    )
    written = write_experiment(report, out)
    if not args.no_figures:
        target = second_derivative(grid.x) if second_derivative else None
        plotting.save_robustness_figure(out / "fig_robustness.png", report, target)
    for sc in report.scales:
        print(f"s={sc.s:g}: median kernel dev {sc.median_kernel_dev:.4g}, "
              f"median response dev {sc.median_response_dev:.4g}, "
              f"failures {sc.n_failures}/{spec.n_trials}")
    print(f"total stability failures: {report.total_failures}")
    print(f"wrote {len(written)} files to {out}")


def cmd_robustness(args):
    config = _config_from_args(args, schedule="approx")
    _run_robustness(config, args)


def cmd_reproduce_fig3(args):
    config = _config_from_args(
        args,
        scales=FIG3_SCALES,
        stimulus="tanh",
        schedule="approx",
        delta=0.99,
        global_rel=1e-2,
        local_eps=1e-4,
        n_trials=5,
    )
    _run_robustness(config, args)


if __name__ == "__main__":
    sys.exit(main())
