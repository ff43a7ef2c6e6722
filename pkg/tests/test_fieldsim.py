import math

import numpy as np
import pytest
import scipy.linalg

from wavezoom import (
    FieldState,
    Gains,
    Signal,
    SpatialGrid,
    build_connectivity,
    gain_schedule,
    approx_gain_schedule,
    integrate,
    operator_spectrum_check,
    spectral_integrate,
    steady_state,
    steady_state_spectral,
)
from wavezoom.errors import (
    NonFiniteSampleError,
    SolverConditionError,
    UnstableFilterError,
)
from wavezoom.fieldsim import Connectivity, circulant_symbol, feedforward_drive
from wavezoom.spectral import (
    delta_signal,
    forward_transform,
    inverse_transform,
    sample_function,
    sample_spectrum,
    taper,
)


def tanh_stimulus(grid):
    return taper(sample_function(grid, np.tanh))


class TestBuildConnectivity:
    def test_zero_gains_zero_matrix(self, small_grid, bank):
        conn = build_connectivity(small_grid, Gains(1.0, 0.0, 0.0), bank)
        assert np.all(conn.matrix == 0)

    def test_matches_independent_construction(self, small_grid, bank):
        g = gain_schedule(0.3, 1.0, 2.0).gains
        conn = build_connectivity(small_grid, g, bank)
        x = small_grid.x
        d = small_grid.wrap(x[:, None] - x[None, :])
        expected = small_grid.dx * (
            g.k_e * bank.exc.value(d) - g.k_i * bank.inh.value(d)
        )
        assert np.max(np.abs(conn.matrix - expected)) < 1e-14

    def test_symmetric_and_circulant(self, small_grid, bank):
        g = gain_schedule(0.3, 1.0, 2.0).gains
        m = build_connectivity(small_grid, g, bank).matrix
        assert np.max(np.abs(m - m.T)) < 1e-12
        n = small_grid.n_points
        for i in (1, 7, n // 2):
            assert np.max(np.abs(m[i] - np.roll(m[0], i))) < 1e-12

    def test_perturbation_construction_exact(self, small_grid, bank):
        # reconstruct from an identical generator: entries must be exactly
        # exc (1 + eps p) - inh (1 + eps q), excitatory noise drawn first
        g = gain_schedule(0.1, 1.0, 2.0).gains
        eps = 1e-4
        pert = build_connectivity(
            small_grid, g, bank, local_eps=eps, rng=np.random.default_rng(7)
        )
        x = small_grid.x
        d = small_grid.wrap(x[:, None] - x[None, :])
        exc = small_grid.dx * g.k_e * bank.exc.value(d)
        inh = small_grid.dx * g.k_i * bank.inh.value(d)
        ref = np.random.default_rng(7)
        n = small_grid.n_points
        expected = exc * (1.0 + eps * ref.standard_normal((n, n)))
        expected -= inh * (1.0 + eps * ref.standard_normal((n, n)))
        assert np.array_equal(pert.matrix, expected)

    def test_perturbation_scale_and_asymmetry(self, small_grid, bank, rng):
        g = gain_schedule(0.1, 1.0, 2.0).gains
        base = build_connectivity(small_grid, g, bank)
        pert = build_connectivity(small_grid, g, bank, local_eps=1e-4, rng=rng)
        assert pert.perturbed and not base.perturbed
        assert np.max(np.abs(pert.matrix - pert.matrix.T)) > 0
        nonzero = np.abs(base.matrix) > 1e-300
        rel = np.abs(
            (pert.matrix[nonzero] - base.matrix[nonzero]) / base.matrix[nonzero]
        )
        # per-entry relative deviation sits at the eps scale except near the
        # feedback kernel's zero crossing, where the denominator vanishes
        assert np.median(rel) == pytest.approx(1e-4, rel=0.5)
        assert np.percentile(rel, 90) < 1e-3

    def test_perturbation_requires_rng(self, small_grid, bank):
        g = Gains(1.0, 1.0, 2.0)
        with pytest.raises(ValueError):
            build_connectivity(small_grid, g, bank, local_eps=1e-4)

    def test_rejects_nonfinite(self, small_grid):
        bad = np.zeros((small_grid.n_points, small_grid.n_points))
        bad[0, 0] = np.nan
        with pytest.raises(NonFiniteSampleError):
            Connectivity(small_grid, bad, perturbed=False, base_column=bad[:, 0])


class TestCirculantSymbol:
    def test_matches_matrix_eigenvalues(self, small_grid, bank):
        g = gain_schedule(0.3, 1.0, 2.0).gains
        conn = build_connectivity(small_grid, g, bank)
        symbol = circulant_symbol(small_grid, g, bank)
        eigs = np.linalg.eigvals(conn.matrix)
        assert np.max(np.abs(np.sort(symbol) - np.sort(eigs.real))) < 1e-9

    @pytest.mark.parametrize("n,tol", [(256, 1e-2), (2048, 2e-3)])
    def test_against_analytic_spectrum(self, bank, n, tol):
        # sampled-kernel transform vs analytic: O(dx^2) kink limit plus
        # near-nyquist deviation of the discrete symbol
        grid = SpatialGrid(n, 40.0)
        g = gain_schedule(0.3, 1.0, 2.0).gains
        symbol = circulant_symbol(grid, g, bank)
        analytic = g.k_e * bank.exc.spectrum(grid.lam) - g.k_i * bank.inh.spectrum(
            grid.lam
        )
        assert np.max(np.abs(symbol - analytic)) < tol


class TestSteadyState:
    def test_zero_stimulus(self, small_grid, bank):
        g = gain_schedule(0.3, 1.0, 2.0).gains
        conn = build_connectivity(small_grid, g, bank)
        out = steady_state(conn, g, Signal(small_grid, np.zeros(small_grid.n_points)), bank)
        assert np.max(np.abs(out.samples)) < 1e-14

    def test_open_loop_impulse_response(self, small_grid, bank):
        # gamma=1, no feedback: equilibrium is the feedforward drive itself,
        # i.e. the band-limited feedforward kernel
        g = Gains(1.0, 0.0, 0.0)
        conn = build_connectivity(small_grid, g, bank)
        out = steady_state(conn, g, delta_signal(small_grid), bank)
        expected = inverse_transform(sample_spectrum(small_grid, bank.ff.spectrum))
        assert np.max(np.abs(out.samples - expected.samples)) < 1e-12

    @pytest.mark.parametrize("s", [0.1, 0.3, 0.8])
    def test_matrix_vs_spectral_backend(self, small_grid, bank, s):
        g = gain_schedule(s, 1.0, 2.0).gains
        stim = tanh_stimulus(small_grid)
        conn = build_connectivity(small_grid, g, bank)
        a_m = steady_state(conn, g, stim, bank).samples
        a_s = steady_state_spectral(small_grid, g, bank, stim).samples
        assert np.linalg.norm(a_m - a_s) / np.linalg.norm(a_s) < 1e-10

    def test_linearity(self, small_grid, bank, rng):
        g = gain_schedule(0.3, 1.0, 2.0).gains
        conn = build_connectivity(small_grid, g, bank)
        l1 = Signal(small_grid, rng.standard_normal(small_grid.n_points))
        l2 = Signal(small_grid, rng.standard_normal(small_grid.n_points))
        combo = Signal(small_grid, l1.samples + 3.0 * l2.samples)
        lhs = steady_state(conn, g, combo, bank).samples
        rhs = (
            steady_state(conn, g, l1, bank).samples
            + 3.0 * steady_state(conn, g, l2, bank).samples
        )
        assert np.max(np.abs(lhs - rhs)) < 1e-9

    def test_translation_equivariance(self, small_grid, bank):
        g = gain_schedule(0.3, 1.0, 2.0).gains
        conn = build_connectivity(small_grid, g, bank)
        stim = tanh_stimulus(small_grid)
        shift = 13
        rolled = Signal(small_grid, np.roll(stim.samples, shift))
        a = steady_state(conn, g, stim, bank).samples
        a_rolled = steady_state(conn, g, rolled, bank).samples
        assert np.max(np.abs(a_rolled - np.roll(a, shift))) < 1e-10

    def test_singular_system_rejected(self, small_grid, bank):
        g = Gains(0.0, 0.0, 0.0)
        conn = build_connectivity(small_grid, g, bank)
        with pytest.raises(SolverConditionError):
            steady_state(conn, g, tanh_stimulus(small_grid), bank)

    @pytest.mark.parametrize("s,tol", [(0.3, 2e-4), (0.1, 1e-3)])
    def test_matches_analytic_transfer_function(self, grid, bank, s, tol):
        # dual route: equilibrium through the analytic closed-loop spectrum;
        # sampled-kernel vs analytic symbol gap is O(dx^2), hence the bands
        from wavezoom import closed_loop_spectrum
        from wavezoom.spectral import Spectrum

        g = gain_schedule(s, 1.0, 2.0).gains
        stim = tanh_stimulus(grid)
        conn = build_connectivity(grid, g, bank)
        a_matrix = steady_state(conn, g, stim, bank).samples
        response_hat = closed_loop_spectrum(bank, g, grid.lam) * forward_transform(
            stim
        ).samples
        a_analytic = inverse_transform(Spectrum(grid, response_hat)).samples
        central = np.abs(grid.x) <= 10.0
        rel = np.linalg.norm((a_matrix - a_analytic)[central]) / np.linalg.norm(
            a_analytic[central]
        )
        assert rel < tol


class TestIntegrate:
    def test_rest_stays_at_rest(self, small_grid, bank):
        g = gain_schedule(0.3, 1.0, 2.0).gains
        conn = build_connectivity(small_grid, g, bank)
        zero = Signal(small_grid, np.zeros(small_grid.n_points))
        traj = integrate(conn, g, zero, bank, dt=0.1, t_end=5.0)
        assert np.all(traj.states == 0)

    def test_scalar_decay_per_mode(self, small_grid, bank, rng):
        # no feedback: every sample decays independently; backward Euler
        # reproduces (1 + dt)^-k exactly and e^-t to first order
        g = Gains(1.0, 0.0, 0.0)
        conn = build_connectivity(small_grid, g, bank)
        zero = Signal(small_grid, np.zeros(small_grid.n_points))
        a0 = rng.standard_normal(small_grid.n_points)
        dt, t_end = 1e-3, 1.0
        traj = integrate(
            conn, g, zero, bank, dt=dt, t_end=t_end,
            initial=FieldState(Signal(small_grid, a0), 0.0), stride=1000,
        )
        final = traj.states[-1]
        steps = round(t_end / dt)
        assert np.max(np.abs(final - a0 / (1.0 + dt) ** steps)) < 1e-12
        assert np.max(np.abs(final - a0 * math.exp(-1.0))) < 1e-3 * np.max(np.abs(a0))

    def test_converges_to_steady_state(self, small_grid, bank):
        g = gain_schedule(0.3, 1.0, 2.0).gains
        conn = build_connectivity(small_grid, g, bank)
        stim = tanh_stimulus(small_grid)
        eq = steady_state(conn, g, stim, bank).samples
        traj = integrate(conn, g, stim, bank, dt=0.05, t_end=20.0 / g.gamma, stride=10**6)
        final = traj.states[-1]
        assert np.linalg.norm(final - eq) / np.linalg.norm(eq) < 1e-6

    def test_overflow_guard(self, small_grid, bank):
        # negative damping grows without bound; the guard aborts
        g = Gains(-1.0, 0.0, 0.0)
        conn = build_connectivity(small_grid, g, bank)
        init = FieldState(Signal(small_grid, np.ones(small_grid.n_points)), 0.0)
        with pytest.raises(UnstableFilterError):
            integrate(
                conn, g, Signal(small_grid, np.zeros(small_grid.n_points)), bank,
                dt=0.5, t_end=200.0, initial=init,
            )

    def test_rejects_bad_steps(self, small_grid, bank):
        g = Gains(1.0, 0.0, 0.0)
        conn = build_connectivity(small_grid, g, bank)
        zero = Signal(small_grid, np.zeros(small_grid.n_points))
        with pytest.raises(ValueError):
            integrate(conn, g, zero, bank, dt=0.0, t_end=1.0)
        with pytest.raises(ValueError):
            integrate(conn, g, zero, bank, dt=0.1, t_end=-1.0)

    def test_trajectory_export(self, small_grid, bank, tmp_path):
        g = gain_schedule(0.3, 1.0, 2.0).gains
        conn = build_connectivity(small_grid, g, bank)
        traj = integrate(conn, g, tanh_stimulus(small_grid), bank, dt=0.5, t_end=2.0)
        path = tmp_path / "traj.csv"
        traj.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "t,x,activity"
        assert len(lines) == 1 + len(traj.times) * small_grid.n_points


class TestSpectralIntegrate:
    def test_zero_frequency_decay_rate(self, small_grid, bank):
        # mode 0 drains at the fastest scheduled rate s^(-5/2); the discrete
        # symbol matches it to quadrature accuracy
        s = 0.1
        g = gain_schedule(s, 1.0, 2.0).gains
        const = Signal(small_grid, np.ones(small_grid.n_points))
        init = forward_transform(const)
        t_end = 0.01
        traj = spectral_integrate(
            small_grid, g, bank,
            forward_transform(Signal(small_grid, np.zeros(small_grid.n_points))),
            dt=t_end, t_end=t_end, initial_spectrum=init,
        )
        rate = math.log(abs(traj.spectra[-1][0]) / abs(init.samples[0])) / t_end
        assert rate == pytest.approx(-(s**-2.5), rel=1e-4)

    def test_step_size_invariance(self, small_grid, bank):
        # exact per-step updates: one big step equals many small ones
        g = gain_schedule(0.3, 1.0, 2.0).gains
        stim_hat = forward_transform(tanh_stimulus(small_grid))
        one = spectral_integrate(small_grid, g, bank, stim_hat, dt=5.0, t_end=5.0)
        many = spectral_integrate(small_grid, g, bank, stim_hat, dt=0.01, t_end=5.0)
        diff = np.max(np.abs(one.spectra[-1] - many.spectra[-1]))
        assert diff < 1e-9 * np.max(np.abs(one.spectra[-1]))

    def test_long_run_reaches_equilibrium(self, small_grid, bank):
        g = gain_schedule(0.3, 1.0, 2.0).gains
        stim = tanh_stimulus(small_grid)
        traj = spectral_integrate(
            small_grid, g, bank, forward_transform(stim), dt=20.0 / g.gamma,
            t_end=20.0 / g.gamma,
        )
        final = traj.final_signal().samples
        eq = steady_state_spectral(small_grid, g, bank, stim).samples
        assert np.linalg.norm(final - eq) / np.linalg.norm(eq) < 1e-7

    def test_agrees_with_matrix_integrate(self, small_grid, bank):
        g = gain_schedule(0.3, 1.0, 2.0).gains
        stim = tanh_stimulus(small_grid)
        conn = build_connectivity(small_grid, g, bank)
        t_end = 20.0 / g.gamma
        matrix_final = integrate(
            conn, g, stim, bank, dt=0.05, t_end=t_end, stride=10**6
        ).states[-1]
        spectral_final = spectral_integrate(
            small_grid, g, bank, forward_transform(stim), dt=t_end, t_end=t_end
        ).final_signal().samples
        rel = np.linalg.norm(matrix_final - spectral_final) / np.linalg.norm(
            spectral_final
        )
        assert rel < 1e-6

    def test_first_order_step_refinement(self, small_grid, bank):
        # halving dt halves the backward-Euler error against the exact
        # per-mode trajectory at a finite time
        g = gain_schedule(0.3, 1.0, 2.0).gains
        stim = tanh_stimulus(small_grid)
        conn = build_connectivity(small_grid, g, bank)
        t_end = 2.0
        exact = spectral_integrate(
            small_grid, g, bank, forward_transform(stim), dt=t_end, t_end=t_end
        ).final_signal().samples
        errs = []
        for dt in (0.02, 0.01):
            final = integrate(conn, g, stim, bank, dt=dt, t_end=t_end, stride=10**6).states[-1]
            errs.append(np.linalg.norm(final - exact))
        ratio = errs[0] / errs[1]
        assert 1.7 < ratio < 2.3


class TestOperatorSpectrumCheck:
    def test_pure_damping(self, small_grid, bank):
        conn = build_connectivity(small_grid, Gains(1.0, 0.0, 0.0), bank)
        report = operator_spectrum_check(conn, Gains(1.0, 0.0, 0.0))
        assert report.method == "fft-circulant"
        assert report.max_real_part == pytest.approx(-1.0, abs=1e-14)
        assert report.stable

    @pytest.mark.parametrize("s", [0.1, 0.3, 0.8])
    def test_scheduled_operator_bounded_by_margin(self, small_grid, bank, s):
        g = gain_schedule(s, 1.0, 2.0).gains
        conn = build_connectivity(small_grid, g, bank)
        report = operator_spectrum_check(conn, g)
        assert report.max_real_part <= -(s**1.5) + 1e-6

    def test_perturbed_dense_stays_stable(self, small_grid, bank):
        # twenty seeded heterogeneous perturbations at the most fragile scale
        g = gain_schedule(0.1, 1.0, 2.0).gains
        for seed in range(20):
            rng = np.random.default_rng(seed)
            conn = build_connectivity(small_grid, g, bank, local_eps=1e-4, rng=rng)
            report = operator_spectrum_check(conn, g)
            assert report.method == "dense"
            assert report.max_real_part < 0

    def test_bound_path_is_valid_upper_bound(self, bank):
        # n beyond the dense limit: certified bound must sit above the true
        # max real part and stay conclusive (negative)
        grid = SpatialGrid(1024, 40.0)
        g = approx_gain_schedule(0.1, 1.0, 2.0, 0.99).gains
        rng = np.random.default_rng(42)
        conn = build_connectivity(grid, g, bank, local_eps=1e-4, rng=rng)
        report = operator_spectrum_check(conn, g)
        assert report.method == "circulant-plus-noise-bound"
        generator = -g.gamma * np.eye(grid.n_points) + conn.matrix
        true_max = float(np.max(scipy.linalg.eigvals(generator).real))
        assert true_max <= report.max_real_part <= true_max + 0.02
        assert report.max_real_part < 0


class TestFeedforwardDrive:
    def test_delta_gives_band_limited_kernel(self, small_grid, bank):
        drive = feedforward_drive(small_grid, bank, delta_signal(small_grid))
        expected = inverse_transform(sample_spectrum(small_grid, bank.ff.spectrum))
        assert np.max(np.abs(drive.samples - expected.samples)) < 1e-12
