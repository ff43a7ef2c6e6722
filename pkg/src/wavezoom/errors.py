"""Exception types shared across the package.

The CLI maps these onto distinct exit codes: configuration problems exit
with 2, an unstable closed loop with 3, and numerical failures (asymmetric
spectra, non-finite samples, ill-conditioned solves, unresolvable scales)
with 4.
"""


class ConfigError(ValueError):
    """Invalid run configuration (bad key, bad value, failed precondition)."""


class GridMismatchError(ValueError):
    """Two operands live on different spatial grids."""


class ScaleResolutionError(ValueError):
    """Requested atom scale is too small for the grid spacing."""


class NonFiniteSampleError(ValueError):
    """A sampled function produced NaN or infinity."""


class SpectralSymmetryError(RuntimeError):
    """Inverse transform input was not conjugate-symmetric to tolerance."""


class UnstableFilterError(RuntimeError):
    """Closed-loop configuration is marginal or unstable."""


class SolverConditionError(RuntimeError):
    """Linear system is singular or too ill-conditioned to trust."""
