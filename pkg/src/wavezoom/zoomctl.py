"""Gain scheduling and closed-loop analysis of the spatial feedback filter.

The closed loop maps a stimulus spectrum through

    H(lam) = ff_spectrum(lam) / (gamma - k_e * exc_spectrum(lam) + k_i * inh_spectrum(lam))

and the schedule below chooses ``(gamma, k_e, k_i)`` as functions of a scale
``s`` so that ``H`` equals the spectrum of the scale-``s`` dictionary atom of
the feedforward kernel: three scalar gains retune the filter resolution
across the whole dictionary without touching any kernel.

With ``rho(s) = s^(3/2)`` and matched kernel scales ``a = alpha``,
``b = beta``:

    kappa_e(s) = [alpha^2 (s^-5/2 - s^-1/2) - beta^2 (s^-1/2 - s^3/2)] / (beta^2 - alpha^2)
    kappa_i(s) = [beta^2 (s^-5/2 - s^-1/2) - alpha^2 (s^-1/2 - s^3/2)] / (beta^2 - alpha^2)

Equating monomial coefficients of the closed-loop denominator gives the
three identities (each testable to machine precision):

    gamma - k_e + k_i                              = s^-5/2
    gamma (alpha^2+beta^2) - k_e beta^2 + k_i alpha^2 = (alpha^2+beta^2) s^-1/2
    gamma alpha^2 beta^2                           = alpha^2 beta^2 s^3/2

Temporal stability of every spatial Fourier mode holds iff the denominator
stays positive; ``stability_margin`` computes its infimum over frequency.
A cheaper sufficient test: ``gamma > 0`` and
``(k_e/k_i) * (beta^2/alpha^2) <= 1`` imply a margin of at least ``gamma``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UnstableFilterError
from .kernels import KernelBank
from .spectral import Signal, SpatialGrid, Spectrum, inverse_transform

#: lambda-grid used to bracket the denominator minimum before refinement.
_MARGIN_GRID_POINTS = 10_000
_MARGIN_LAMBDA_MIN = 1e-4
_MARGIN_LAMBDA_MAX = 1e3
_GOLDEN_TOL = 1e-12


@dataclass(frozen=True)
class Gains:
    """Damping and feedback gain triple ``(gamma, k_e, k_i)``.

    No sign constraint is imposed on the gains; ``model_consistent`` reports
    whether both are nonnegative (the regime where the excitatory/inhibitory
    interpretation holds literally).  ``gamma > 0`` is required for any
    stability claim but not at construction.
    """

    gamma: float
    k_e: float
    k_i: float

    @property
    def model_consistent(self) -> bool:
        return self.k_e >= 0.0 and self.k_i >= 0.0


@dataclass(frozen=True)
class ScheduledGains:
    """Gains produced by a schedule at scale ``s`` (``delta`` set when approximate)."""

    s: float
    gains: Gains
    delta: float | None = None


def _check_scale(s: float):
    if not 0.0 < s <= 1.0:
        raise ValueError(f"scale must lie in (0, 1], got s={s}")


def _check_scales(alpha: float, beta: float):
    if not 0.0 < alpha < beta:
        raise ValueError(
            f"feedback scales must satisfy 0 < alpha < beta, got {alpha}, {beta}"
        )


def gain_schedule(s: float, alpha: float, beta: float) -> ScheduledGains:
    """Exact schedule realizing the scale-``s`` atom as the closed-loop filter.

    ``k_e`` vanishes at ``s = alpha/beta`` and is negative for larger ``s``
    (flagged by ``Gains.model_consistent``); the closed-loop identity holds
    algebraically regardless, and stability follows from the denominator
    being bounded below by ``rho(s) = s^(3/2) > 0``.
    """
    _check_scale(s)
    _check_scales(alpha, beta)
    a2, b2 = alpha * alpha, beta * beta
    hi = s**-2.5 - s**-0.5
    lo = s**-0.5 - s**1.5
    k_e = (a2 * hi - b2 * lo) / (b2 - a2)
    k_i = (b2 * hi - a2 * lo) / (b2 - a2)
    return ScheduledGains(s=s, gains=Gains(gamma=s**1.5, k_e=k_e, k_i=k_i))


def approx_gain_schedule(
    s: float, alpha: float, beta: float, delta: float
) -> ScheduledGains:
    """Proportional-gain schedule: ``k_e = delta (alpha^2/beta^2) k_i``.

    Keeps ``k_i`` and ``gamma`` from the exact schedule but couples the
    excitatory gain proportionally, which makes the sufficient stability
    ratio equal ``delta <= 1`` by construction.  Coincides with the exact
    schedule in the small-``s`` limit; at coarse scales it is a deliberate
    approximation.
    """
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    exact = gain_schedule(s, alpha, beta)
    k_i = exact.gains.k_i
    k_e = delta * (alpha * alpha) / (beta * beta) * k_i
    return ScheduledGains(
        s=s, gains=Gains(gamma=exact.gains.gamma, k_e=k_e, k_i=k_i), delta=delta
    )


def schedule_for_bank(
    bank: KernelBank, s: float, delta: float | None = None
) -> ScheduledGains:
    """Schedule gains for a bank, requiring the matched-scale pairing.

    The atom-realization identity needs ``ff.a == exc.r`` and
    ``ff.b == inh.r``; unmatched banks are rejected rather than silently
    producing a filter that realizes no atom.
    """
    if not bank.matched:
        raise ValueError(
            "gain schedule requires a matched bank (ff.a == exc.r, ff.b == inh.r); "
            f"got ff=({bank.ff.a}, {bank.ff.b}), feedback=({bank.exc.r}, {bank.inh.r})"
        )
    if delta is None:
        return gain_schedule(s, bank.exc.r, bank.inh.r)
    return approx_gain_schedule(s, bank.exc.r, bank.inh.r, delta)


def loop_denominator(bank: KernelBank, g: Gains, lam):
    """``gamma - k_e * exc_spectrum + k_i * inh_spectrum`` at the given frequencies."""
    lam = np.asarray(lam, dtype=float)
    return g.gamma - g.k_e * bank.exc.spectrum(lam) + g.k_i * bank.inh.spectrum(lam)


def closed_loop_spectrum(bank: KernelBank, g: Gains, lam):
    """Steady-state filter spectrum ``ff_spectrum / denominator``.

    Raises
    ------
    UnstableFilterError
        If the denominator vanishes at any requested frequency (marginal or
        unstable configuration); the offending frequency is reported.
    """
    lam = np.asarray(lam, dtype=float)
    den = loop_denominator(bank, g, lam)
    bad = np.abs(den) < 1e-300
    if np.any(bad):
        lam_bad = float(np.atleast_1d(lam)[np.atleast_1d(bad)][0])
        raise UnstableFilterError(
            f"closed-loop denominator vanishes at lam={lam_bad:g}; "
            "configuration is marginal or unstable"
        )
    result = bank.ff.spectrum(lam) / den
    return result if result.ndim else float(result)


def stability_margin(bank: KernelBank, g: Gains) -> float:
    """Infimum over frequency of the closed-loop denominator.

    A positive value certifies exponential temporal stability of every
    spatial mode.  The denominator is an even, smooth rational function of
    ``lam``, so the infimum is bracketed on a dense logarithmic grid
    (plus lam=0 and the lam->inf limit, which equals ``gamma``) and refined
    by golden-section search.
    """
    lam = np.concatenate(
        ([0.0], np.logspace(
            math.log10(_MARGIN_LAMBDA_MIN), math.log10(_MARGIN_LAMBDA_MAX),
            _MARGIN_GRID_POINTS,
        ))
    )
    values = loop_denominator(bank, g, lam)
    best = int(np.argmin(values))
    margin = float(values[best])
    if 0 < best < len(lam) - 1:
        margin = min(margin, _golden_min(
            lambda x: float(loop_denominator(bank, g, x)),
            lam[best - 1], lam[best + 1],
        ))
    return min(margin, g.gamma)


def _golden_min(fn, lo: float, hi: float, tol: float = _GOLDEN_TOL) -> float:
    """Golden-section minimization of a unimodal bracket."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - inv_phi * (hi - lo)
    x2 = lo + inv_phi * (hi - lo)
    f1, f2 = fn(x1), fn(x2)
    while hi - lo > tol * max(1.0, abs(lo)):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - inv_phi * (hi - lo)
            f1 = fn(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + inv_phi * (hi - lo)
            f2 = fn(x2)
    return min(f1, f2)


def closed_loop_kernel(bank: KernelBank, g: Gains, grid: SpatialGrid) -> Signal:
    """Spatial impulse response of the closed loop on the given grid.

    Inverse transform of the closed-loop spectrum at the grid frequencies.
    Requires a positive stability margin; the result is real and even.
    """
    margin = stability_margin(bank, g)
    if margin <= 0:
        raise UnstableFilterError(
            f"cannot form closed-loop kernel: stability margin {margin:.3e} <= 0"
        )
    spectrum = Spectrum(grid, closed_loop_spectrum(bank, g, grid.lam).astype(complex))
    return inverse_transform(spectrum)


@dataclass(frozen=True)
class RatioTestResult:
    """Outcome of the sufficient gain-ratio stability test.

    ``applicable`` is False outside the regime ``k_i > 0, k_e >= 0`` where
    the test's derivation holds (fall back to ``stability_margin``).  When
    the test passes, ``margin_lower_bound = gamma`` is certified.
    """

    applicable: bool
    satisfied: bool | None
    ratio: float | None
    margin_lower_bound: float | None


def ratio_stability_test(g: Gains, alpha: float, beta: float) -> RatioTestResult:
    """Sufficient test: ``gamma > 0`` and ``(k_e/k_i)(beta^2/alpha^2) <= 1``."""
    _check_scales(alpha, beta)
    if not (g.k_i > 0 and g.k_e >= 0):
        return RatioTestResult(
            applicable=False, satisfied=None, ratio=None, margin_lower_bound=None
        )
    ratio = (g.k_e / g.k_i) * (beta * beta) / (alpha * alpha)
    ok = g.gamma > 0 and ratio <= 1.0
    return RatioTestResult(
        applicable=True,
        satisfied=ok,
        ratio=ratio,
        margin_lower_bound=g.gamma if ok else None,
    )


@dataclass(frozen=True)
class GainRatioCurve:
    """``kappa(s) = k_e(s)/k_i(s)`` sampled on a scale grid.

    ``small_s_limit`` carries the analytic limit ``alpha^2/beta^2`` for
    reference.  Near ``s = 1`` the ratio is an indeterminate 0/0 whose
    numeric value is reported as sampled, not hard-coded.
    """

    s: np.ndarray
    ratio: np.ndarray
    small_s_limit: float


def gain_ratio_curve(alpha: float, beta: float, s_grid) -> GainRatioCurve:
    """Evaluate the gain ratio across scales (all strictly inside (0, 1))."""
    _check_scales(alpha, beta)
    s_grid = np.asarray(s_grid, dtype=float)
    if np.any(s_grid <= 0) or np.any(s_grid >= 1):
        raise ValueError("gain ratio curve is defined on scales strictly in (0, 1)")
    ratios = np.empty_like(s_grid)
    for i, s in enumerate(s_grid):
        sched = gain_schedule(float(s), alpha, beta)
        if sched.gains.k_i == 0.0:
            raise ZeroDivisionError(f"k_i vanished at s={s}; outside expected regime")
        ratios[i] = sched.gains.k_e / sched.gains.k_i
    return GainRatioCurve(
        s=s_grid, ratio=ratios, small_s_limit=(alpha * alpha) / (beta * beta)
    )
