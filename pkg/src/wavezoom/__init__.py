"""Feedback realization of a wavelet zoom.

A spatially-distributed linear filter whose band-pass resolution is retuned
across scales by scaling three scalar gains: the exact schedule makes the
closed-loop spatial transfer function equal the spectrum of a dictionary
atom at any scale in (0, 1], while keeping every spatial mode exponentially
stable, and the construction survives parameter uncertainty and
heterogeneous connectivity perturbations.
"""

from .kernels import (
    ExpKernel,
    FeedforwardKernel,
    KernelBank,
    default_bank,
    normalization_constant,
)
from .spectral import (
    Signal,
    SpatialGrid,
    Spectrum,
    convolve,
    default_grid,
    delta_signal,
    forward_transform,
    inverse_transform,
    sample_function,
    taper,
)
from .zoomctl import (
    Gains,
    ScheduledGains,
    approx_gain_schedule,
    closed_loop_kernel,
    closed_loop_spectrum,
    gain_ratio_curve,
    gain_schedule,
    ratio_stability_test,
    schedule_for_bank,
    stability_margin,
)
from .fieldsim import (
    Connectivity,
    FieldState,
    build_connectivity,
    integrate,
    operator_spectrum_check,
    spectral_integrate,
    steady_state,
    steady_state_spectral,
)
from .wavelet import (
    ZoomResult,
    admissibility_check,
    feedforward_rescaling_demo,
    wavelet_transform,
    zoom_sweep,
)
from .robustness import PerturbationSpec, TrialResult, run_experiment, run_trial

__version__ = "0.1.0"

__all__ = [
    "ExpKernel", "FeedforwardKernel", "KernelBank", "default_bank",
    "normalization_constant",
    "Signal", "SpatialGrid", "Spectrum", "convolve", "default_grid",
    "delta_signal", "forward_transform", "inverse_transform",
    "sample_function", "taper",
    "Gains", "ScheduledGains", "approx_gain_schedule", "closed_loop_kernel",
    "closed_loop_spectrum", "gain_ratio_curve", "gain_schedule",
    "ratio_stability_test", "schedule_for_bank", "stability_margin",
    "Connectivity", "FieldState", "build_connectivity", "integrate",
    "operator_spectrum_check", "spectral_integrate", "steady_state",
    "steady_state_spectral",
    "ZoomResult", "admissibility_check", "feedforward_rescaling_demo",
    "wavelet_transform", "zoom_sweep",
    "PerturbationSpec", "TrialResult", "run_experiment", "run_trial",
    "__version__",
]
