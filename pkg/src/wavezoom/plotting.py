"""Figure rendering for the CLI report paths.

Every CLI command that writes data files can also render a PNG next to
them.  Figures are presentation only: the delimited files remain the
deterministic contract, and plotting failures never corrupt a data run.
Matplotlib is imported lazily with the Agg backend so headless runs work.
"""

from __future__ import annotations

import numpy as np


def _plt():
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path):
    fig.savefig(path, dpi=150, bbox_inches="tight")
    _plt().close(fig)


def save_schedule_figure(path, rows):
    """Gains and margin against scale (log-y; gains grow like s^{-5/2})."""
    plt = _plt()
    s = np.array([r["s"] for r in rows])
    order = np.argsort(s)
    s = s[order]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    for key, label in (("gamma", "gamma"), ("k_e", "K_E"), ("k_i", "K_I")):
        vals = np.array([rows[i][key] for i in order])
        ax1.plot(s, np.abs(vals), marker="o", label=f"|{label}|")
    ax1.set_xlabel("scale s")
    ax1.set_ylabel("gain magnitude")
    ax1.set_yscale("log")
    ax1.legend(fontsize=8)
    margins = np.array([rows[i]["margin"] for i in order])
    ax2.plot(s, margins, marker="o", label="stability margin")
    ax2.plot(s, s**1.5, "--", label="s^(3/2)")
    ax2.set_xlabel("scale s")
    ax2.set_ylabel("margin")
    ax2.set_yscale("log")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def save_kernel_figure(path, x, curves, xlim=None):
    """Closed-loop kernels per scale on a shared axis."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 3.6))
    for label, samples in curves.items():
        ax.plot(x, samples, label=label, linewidth=1.0)
    ax.set_xlabel("x")
    ax.set_ylabel("kernel")
    ax.set_xlim(xlim if xlim else (-8, 8))
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def save_spectrum_figure(path, lam, curves):
    """Closed-loop spectra (solid) against atom spectra (dashed)."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 3.6))
    for label, (closed, atom) in curves.items():
        (line,) = ax.plot(lam, closed, label=f"{label} closed loop", linewidth=1.0)
        ax.plot(lam, atom, "--", color=line.get_color(), linewidth=1.0)
    ax.set_xlabel("frequency")
    ax.set_ylabel("spectrum")
    ax.set_xscale("log")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def save_response_figure(path, x, stimulus, responses, target=None, xlim=(-10, 10)):
    """Normalized responses per scale, with the stimulus and optional target."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 3.6))
    ax.plot(x, stimulus, color="0.7", label="stimulus")
    if target is not None:
        ax.plot(x, target, "k--", linewidth=1.0, label="f''")
    for label, samples in responses.items():
        ax.plot(x, samples, linewidth=1.0, label=label)
    ax.set_xlabel("x")
    ax.set_ylabel("response (scaled)")
    ax.set_xlim(xlim)
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def save_zoom_figure(path, sweep, target=None, xlim=(-10, 10)):
    """Normalized transforms across scales plus the per-position slope fit."""
    plt = _plt()
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    for res in sweep.results:
        ax1.plot(res.u_grid, res.normalized_values, linewidth=1.0, label=f"s={res.s:g}")
    if target is not None:
        ax1.plot(sweep.results[0].u_grid, target, "k--", linewidth=1.0, label="f''")
    ax1.set_xlabel("u")
    ax1.set_ylabel("normalized transform")
    ax1.set_xlim(xlim)
    ax1.legend(fontsize=8)
    ax2.plot(sweep.fit_u, sweep.slopes, marker=".", linestyle="none")
    ax2.axhline(2.5, color="0.6", linestyle="--")
    ax2.set_xlabel("u")
    ax2.set_ylabel("log-log decay slope")
    fig.tight_layout()
    _save(fig, path)


def save_stability_figure(path, rows):
    """Margin and discrete max eigenvalue real part against scale."""
    plt = _plt()
    s = np.array([r["s"] for r in rows])
    order = np.argsort(s)
    fig, ax = plt.subplots(figsize=(6, 3.6))
    ax.plot(s[order], [rows[i]["margin"] for i in order], marker="o", label="margin")
    ax.plot(
        s[order],
        [-rows[i]["max_real_part"] for i in order],
        marker="s",
        label="-max Re(eig)",
    )
    ax.plot(s[order], s[order] ** 1.5, "--", color="0.6", label="s^(3/2)")
    ax.set_xlabel("scale s")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def save_robustness_figure(path, report, target=None, xlim=(-10, 10)):
    """Per-scale panels: kernel realizations (top) and scaled responses (bottom)."""
    plt = _plt()
    scales = report.scales
    fig, axes = plt.subplots(
        2, len(scales), figsize=(3.2 * len(scales), 6.0), squeeze=False
    )
    x = report.grid.x
    for col, sc in enumerate(scales):
        ax_k, ax_r = axes[0][col], axes[1][col]
        for trial in sc.trials:
            if trial.failure is None:
                ax_k.plot(x, trial.kernel, color="0.6", linewidth=0.7)
                ax_r.plot(x, trial.normalized_response, color="0.4", linewidth=0.7)
        ax_k.plot(x, sc.nominal.kernel, "k", linewidth=1.0)
        ax_k.set_title(f"s = {sc.s:g}", fontsize=9)
        span = 16.0 * sc.s  # a few broad-lobe widths at this scale
        ax_k.set_xlim(-span, span)
        if target is not None:
            ax_r.plot(x, target, "k--", linewidth=1.0)
        ax_r.set_xlim(xlim)
        ax_r.set_xlabel("x")
        if col == 0:
            ax_k.set_ylabel("closed-loop kernel")
            ax_r.set_ylabel("response x s^(-5/2)/K")
    fig.tight_layout()
    _save(fig, path)
