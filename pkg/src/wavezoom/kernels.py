"""Closed-form spatial kernels and their exact Fourier spectra.

All kernels here are analytic objects: evaluation at a point or a frequency
is exact up to floating point, and no grid is involved.  Discretization
lives in :mod:`wavezoom.spectral`; everything downstream tests its numerics
against the closed forms defined in this module.

Three kernel shapes appear:

* ``ExpKernel`` -- the two-sided exponential ``e^{-|x|/r} / (2r)`` used for
  the recurrent excitatory and inhibitory feedback, with spectrum
  ``1 / (1 + r^2 lam^2)``.
* ``FeedforwardKernel`` -- the band-pass difference of two exponentials
  (narrow minus broad), scaled to unit L2 norm.  Its spectrum vanishes at
  zero frequency, so it annihilates constants; it is the mother wavelet of
  the whole construction.
* the antiderivative-squared companion of the feedforward kernel, exposed
  only through ``theta_spectrum``: the feedforward kernel equals the second
  derivative of a fast-decaying function whose spectrum is
  ``-(b^2-a^2) / (N (1+a^2 lam^2)(1+b^2 lam^2))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def normalization_constant(a: float, b: float) -> float:
    """L2 normalization factor for the difference-of-exponentials kernel.

    Returns ``sqrt((b-a)^2 / (4ab(a+b)))``, the L2 norm of
    ``e^{-|x|/a}/(2a) - e^{-|x|/b}/(2b)``, so that dividing by it yields a
    unit-norm kernel.

    Raises
    ------
    ValueError
        If ``a <= 0``, ``b <= 0`` or ``a >= b`` (the kernel would be
        degenerate or of the wrong polarity).
    """
    if not (0 < a < b):
        raise ValueError(f"kernel scales must satisfy 0 < a < b, got a={a}, b={b}")
    return math.sqrt((b - a) ** 2 / (4.0 * a * b * (a + b)))


@dataclass(frozen=True)
class ExpKernel:
    """Two-sided exponential kernel ``value(x) = e^{-|x|/r} / (2r)``.

    Unit mass, peak ``1/(2r)`` at the origin, spectrum
    ``1 / (1 + r^2 lam^2)`` (low-pass, equal to 1 at zero frequency).
    """

    r: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"spatial scale must be positive, got r={self.r}")

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(-np.abs(x) / self.r) / (2.0 * self.r)

    def spectrum(self, lam):
        lam = np.asarray(lam, dtype=float)
        return 1.0 / (1.0 + (self.r * lam) ** 2)

    def deriv_jump_at_zero(self) -> float:
        """Jump of the first derivative across x=0 (right minus left limit)."""
        return -1.0 / self.r**2

    def tail_mass(self, x0: float) -> float:
        """Integral of the kernel over ``|x| > x0``."""
        return math.exp(-x0 / self.r)


@dataclass(frozen=True)
class FeedforwardKernel:
    """Unit-norm band-pass kernel: narrow excitatory minus broad inhibitory lobe.

    ``value(x) = (e^{-|x|/a}/(2a) - e^{-|x|/b}/(2b)) / n`` with ``0 < a < b``
    and ``n = normalization_constant(a, b)``.  The spectrum

    ``spectrum(lam) = (b^2 - a^2) lam^2 / (n (1+a^2 lam^2)(1+b^2 lam^2))``

    is nonnegative, even, vanishes at lam=0 (zero average) and decays like
    ``lam^-2``; its maximum sits at ``lam = 1/sqrt(ab)``.  Together with a
    zero average and unit L2 norm this makes the kernel a wavelet, and its
    dilations ``atom_value`` form the analysis dictionary.
    """

    a: float
    b: float
    norm: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "norm", normalization_constant(self.a, self.b))

    def value(self, x):
        x = np.asarray(x, dtype=float)
        ax = np.abs(x)
        narrow = np.exp(-ax / self.a) / (2.0 * self.a)
        broad = np.exp(-ax / self.b) / (2.0 * self.b)
        return (narrow - broad) / self.norm

    def spectrum(self, lam):
        lam = np.asarray(lam, dtype=float)
        lam2 = lam * lam
        num = (self.b**2 - self.a**2) * lam2
        den = (1.0 + self.a**2 * lam2) * (1.0 + self.b**2 * lam2)
        return num / den / self.norm

    def theta_spectrum(self, lam):
        """Spectrum of the fast-decaying antiderivative pair.

        Satisfies ``spectrum(lam) = -lam^2 * theta_spectrum(lam)``; its
        nonzero value at lam=0 is the constant that calibrates the
        multiscale second-derivative limit of the wavelet transform.
        """
        lam = np.asarray(lam, dtype=float)
        lam2 = lam * lam
        den = (1.0 + self.a**2 * lam2) * (1.0 + self.b**2 * lam2)
        return -(self.b**2 - self.a**2) / den / self.norm

    def zoom_constant(self) -> float:
        """theta_spectrum(0): normalizer of the wavelet-zoom limit."""
        return -(self.b**2 - self.a**2) / self.norm

    def atom_value(self, u: float, s: float, x):
        """Dictionary atom: translate by u, dilate by s, keep unit L2 norm."""
        if not s > 0:
            raise ValueError(f"atom scale must be positive, got s={s}")
        x = np.asarray(x, dtype=float)
        return self.value((x - u) / s) / math.sqrt(s)

    def atom_spectrum(self, s: float, lam):
        """Spectrum of the scale-s atom at u=0: ``sqrt(s) * spectrum(s lam)``."""
        if not s > 0:
            raise ValueError(f"atom scale must be positive, got s={s}")
        lam = np.asarray(lam, dtype=float)
        return math.sqrt(s) * self.spectrum(s * lam)

    def peak_frequency(self) -> float:
        """Frequency of the spectrum maximum, ``1/sqrt(ab)``."""
        return 1.0 / math.sqrt(self.a * self.b)

    def deriv_jump_at_zero(self) -> float:
        """Jump of value' across x=0: ``(1/b^2 - 1/a^2) / n`` (negative)."""
        return (1.0 / self.b**2 - 1.0 / self.a**2) / self.norm

    def tail_mass(self, x0: float) -> float:
        """Integral of value over ``|x| > x0`` (signed; the lobes differ)."""
        return (math.exp(-x0 / self.a) - math.exp(-x0 / self.b)) / self.norm

    def sq_tail_mass(self, x0: float) -> float:
        """Integral of value^2 over ``|x| > x0``."""
        a, b, n = self.a, self.b, self.norm
        t_aa = math.exp(-2.0 * x0 / a) / (4.0 * a)
        t_bb = math.exp(-2.0 * x0 / b) / (4.0 * b)
        t_ab = math.exp(-x0 * (a + b) / (a * b)) / (a + b)
        return (t_aa + t_bb - t_ab) / n**2

    def sq_deriv_jump_at_zero(self) -> float:
        """Jump of (value^2)' across x=0: ``2 value(0) * deriv jump``."""
        v0 = (1.0 / (2.0 * self.a) - 1.0 / (2.0 * self.b)) / self.norm
        return 2.0 * v0 * self.deriv_jump_at_zero()

    def envelope(self, x):
        """Pointwise decay envelope ``max of the two exponential lobes / n``."""
        x = np.asarray(x, dtype=float)
        ax = np.abs(x)
        narrow = np.exp(-ax / self.a) / (2.0 * self.a)
        broad = np.exp(-ax / self.b) / (2.0 * self.b)
        return np.maximum(narrow, broad) / self.norm


@dataclass(frozen=True)
class KernelBank:
    """The three kernels of the closed loop.

    ``ff`` drives the loop (band-pass feedforward), ``exc`` is the positive
    feedback kernel and ``inh`` the negative one, with ``exc.r < inh.r``
    (local excitation, broader inhibition).  The gain-schedule identity that
    realizes the atom dictionary additionally needs ``ff.a == exc.r`` and
    ``ff.b == inh.r``; ``matched`` records whether that pairing holds.
    """

    ff: FeedforwardKernel
    exc: ExpKernel
    inh: ExpKernel

    def __post_init__(self):
        if not self.exc.r < self.inh.r:
            raise ValueError(
                f"excitatory scale must be smaller than inhibitory scale, "
                f"got {self.exc.r} >= {self.inh.r}"
            )

    @property
    def matched(self) -> bool:
        return self.ff.a == self.exc.r and self.ff.b == self.inh.r

    @classmethod
    def matched_bank(cls, alpha: float, beta: float) -> "KernelBank":
        """Bank with the feedforward scales tied to the feedback scales."""
        return cls(
            ff=FeedforwardKernel(alpha, beta),
            exc=ExpKernel(alpha),
            inh=ExpKernel(beta),
        )


def default_bank() -> KernelBank:
    """The reference configuration: alpha=1, beta=2, matched feedforward."""
    return KernelBank.matched_bank(1.0, 2.0)
