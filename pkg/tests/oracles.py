"""Independent oracles the tests check the production code against.

Everything here is deliberately dumb: O(n^2) direct sums, closed forms
evaluated with ``math``, high-resolution quadrature of the exact continuum
expressions.  Nothing imports the transform or convolution code under test.

The frozen constants sprinkled through the test-suite (zoom convergence
values, decay slopes, relative-error curves) were produced by
``continuum_normalized_zoom`` and ``continuum_rel_l2`` below on quadrature
grids fine enough that the reported digits are converged; rerunning these
functions reproduces them.
"""

import math

import numpy as np


def direct_transform(samples, x, lam, dx):
    """O(n^2) Riemann sum for ``integral f(x) e^{-i lam x} dx``."""
    return dx * np.exp(-1j * np.outer(lam, x)) @ samples


def direct_circular_convolution(f_samples, kernel_samples, dx):
    """O(n^2) circular quadrature ``sum_j f_j k(x_i - x_j) dx``.

    ``kernel_samples`` live on the grid (first sample at x = -L/2), so the
    displacement ``(i - j) dx`` corresponds to sample index
    ``(i - j + n/2) mod n``.
    """
    n = len(f_samples)
    out = np.empty(n)
    idx = np.arange(n)
    for i in range(n):
        out[i] = dx * np.sum(f_samples * kernel_samples[(i - idx + n // 2) % n])
    return out


def corrected_kernel_convolution(f_samples, grid, kernel, target_indices):
    """Direct quadrature of ``(f * kernel)(x_i)`` with the kink correction.

    The integrand ``f(y) kernel(x_i - y)`` has a derivative jump at
    ``y = x_i`` (a grid node), so the plain Riemann sum carries an
    O(dx^2) error ``-(dx^2/12) f(x_i) jump``; adding it back restores
    O(dx^4) and makes the direct sum a valid 1e-6-level oracle.
    """
    dx = grid.dx
    jump = kernel.deriv_jump_at_zero()
    out = np.empty(len(target_indices))
    for row, i in enumerate(target_indices):
        d = grid.wrap(grid.x[i] - grid.x)
        plain = dx * np.sum(f_samples * kernel.value(d))
        out[row] = plain + (dx * dx / 12.0) * f_samples[i] * jump
    return out


def corrected_atom_correlation(f_samples, grid, bank, u_index, s):
    """Direct quadrature of ``integral f(x) atom_{u,s}(x) dx`` at a grid node.

    The atom is periodized over neighbouring images (the periodic analogue
    of the continuum correlation, matching the circular convolution), and
    the kink at ``x = u`` gets the O(dx^2) trapezoid correction.  The
    remaining error is the O(dx^4) Euler-Maclaurin term, growing like
    ``s^(-7/2)`` as the atom sharpens.
    """
    dx = grid.dx
    u = grid.x[u_index]
    d = grid.wrap(grid.x - u)
    atom = sum(
        bank.ff.atom_value(0.0, s, d + m * grid.length) for m in (-1, 0, 1)
    )
    plain = dx * np.sum(f_samples * atom)
    jump = bank.ff.deriv_jump_at_zero() * s**-1.5
    return plain + (dx * dx / 12.0) * f_samples[u_index] * jump


def exp_kernel_value(r, x):
    return math.exp(-abs(x) / r) / (2.0 * r)


def ff_value_closed_form(a, b, norm, x):
    return (exp_kernel_value(a, x) - exp_kernel_value(b, x)) / norm


def tanh_second_derivative(x):
    return -2.0 * np.tanh(x) / np.cosh(x) ** 2


def band_smoothing_kernel(x, s, a, b):
    """Unit-mass kernel whose convolution with f'' equals the normalized zoom.

    Inverse transform of ``1/((1 + a^2 s^2 lam^2)(1 + b^2 s^2 lam^2))``: the
    normalized transform of any signal equals its second derivative smoothed
    by this two-sided exponential mixture of widths ``s a`` and ``s b``.
    """
    p, q = s * a, s * b
    return ((q / 2) * np.exp(-np.abs(x) / q) - (p / 2) * np.exp(-np.abs(x) / p)) / (
        q * q - p * p
    )


_QUAD_X = np.linspace(-40.0, 40.0, 800_001)
_QUAD_DX = _QUAD_X[1] - _QUAD_X[0]


def continuum_normalized_zoom(u, s, a=1.0, b=2.0):
    """Exact (continuum) normalized transform of tanh at position u, scale s."""
    kernel = band_smoothing_kernel(_QUAD_X, s, a, b)
    return float(np.sum(tanh_second_derivative(u - _QUAD_X) * kernel) * _QUAD_DX)


def continuum_rel_l2(s, a=1.0, b=2.0, window=10.0, points=401):
    """Relative L2 distance of the continuum normalized zoom from tanh''."""
    x = np.linspace(-window, window, points)
    target = tanh_second_derivative(x)
    values = np.array([continuum_normalized_zoom(u, s, a, b) for u in x])
    return float(np.linalg.norm(values - target) / np.linalg.norm(target))


def exact_exponential_step(mu, drive, state, dt):
    """Exact solution of ``y' = mu y + drive`` over one step."""
    if abs(mu) < 1e-14:
        return state + dt * drive
    return math.exp(mu * dt) * state + math.expm1(mu * dt) / mu * drive
