"""Field containers, stencil/spectral operators, Poisson solve, GRF sampling.

Expected values come from independent oracles: hand-applied stencil formulas,
trigonometric identities, analytic Fourier symbols, and Monte-Carlo statistics.
"""

import numpy as np
import pytest

from pdecorrect.errors import InputContractError
from pdecorrect.grids import (
    Field,
    Grid,
    central_diff,
    fft_forward,
    fft_inverse,
    grf_spectral_density,
    laplacian_5pt,
    laplacian_5pt_symbol,
    poisson_solve_periodic,
    sample_grf,
    spectral_derivative,
)

from conftest import small_grid


def stencil_symbol(p, q, n, delta):
    # hand formula: (2cos(2*pi*p/n) + 2cos(2*pi*q/n) - 4) / delta^2
    return (2 * np.cos(2 * np.pi * p / n) + 2 * np.cos(2 * np.pi * q / n) - 4) / delta**2


class TestGridAndField:
    def test_grid_length_is_n_delta(self):
        g = Grid(ndim=2, n=64, delta=1 / 64)
        assert g.length == pytest.approx(1.0, abs=0)
        assert g.shape == (64, 64)
        assert g.npoints == 4096

    @pytest.mark.parametrize(
        "kwargs",
        [dict(ndim=3, n=8, delta=0.1), dict(ndim=2, n=3, delta=0.1), dict(ndim=1, n=8, delta=0.0)],
    )
    def test_grid_validation(self, kwargs):
        with pytest.raises(InputContractError):
            Grid(**kwargs)

    def test_field_shape_mismatch(self):
        with pytest.raises(InputContractError):
            Field(small_grid(n=8), np.zeros((4, 4)))

    def test_field_rejects_non_finite(self):
        vals = np.zeros((8, 8))
        vals[2, 3] = np.inf
        with pytest.raises(InputContractError):
            Field(small_grid(n=8), vals)

    def test_field_values_frozen(self):
        f = Field(small_grid(n=8), np.zeros((8, 8)))
        with pytest.raises(ValueError):
            f.values[0, 0] = 1.0


class TestFft:
    def test_zero_field_zero_coefficients(self):
        f = Field(small_grid(n=8), np.zeros((8, 8)))
        assert np.all(fft_forward(f).coefficients == 0)

    def test_impulse_gives_all_ones(self):
        vals = np.zeros((8, 8))
        vals[0, 0] = 1.0
        coeffs = fft_forward(Field(small_grid(n=8), vals)).coefficients
        assert np.allclose(coeffs, 1.0, atol=1e-14)

    def test_round_trip(self, rng):
        f = Field(small_grid(n=32), rng.standard_normal((32, 32)))
        back = fft_inverse(fft_forward(f))
        err = np.linalg.norm(back.values - f.values) / np.linalg.norm(f.values)
        assert err <= 1e-12

    def test_real_field_conjugate_symmetry(self, rng):
        f = Field(small_grid(n=16), rng.standard_normal((16, 16)))
        c = fft_forward(f).coefficients
        flipped = np.conj(c[(-np.arange(16)) % 16][:, (-np.arange(16)) % 16])
        assert np.allclose(c, flipped, atol=1e-9)


class TestLaplacian5pt:
    def test_annihilates_constants(self):
        f = Field(small_grid(n=12), np.full((12, 12), 3.7))
        assert np.allclose(laplacian_5pt(f).values, 0.0, atol=1e-12)

    def test_pure_mode_eigenvalue(self):
        n = 16
        g = Grid(ndim=2, n=n, delta=1.0)
        i = np.arange(n)[:, None] + np.zeros((1, n))
        f = np.cos(2 * np.pi * i / n)
        lam = 2 * np.cos(2 * np.pi / n) - 2  # hand-applied stencil on the cos mode
        out = laplacian_5pt(Field(g, f)).values
        assert np.allclose(out, lam * f, atol=1e-12)

    def test_impulse_stencil_definition(self):
        n = 4
        vals = np.zeros((n, n))
        vals[0, 0] = 1.0
        out = laplacian_5pt(Field(Grid(ndim=2, n=n, delta=1.0), vals)).values
        expected = np.zeros((n, n))
        expected[0, 0] = -4.0
        expected[1, 0] = expected[3, 0] = expected[0, 1] = expected[0, 3] = 1.0
        assert np.array_equal(out, expected)

    def test_linearity(self, rng):
        g = small_grid(n=16)
        f1 = rng.standard_normal(g.shape)
        f2 = rng.standard_normal(g.shape)
        a, b = 1.7, -0.3
        lhs = laplacian_5pt(Field(g, a * f1 + b * f2)).values
        rhs = a * laplacian_5pt(Field(g, f1)).values + b * laplacian_5pt(Field(g, f2)).values
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(rhs)))

    def test_requires_2d(self):
        f = Field(Grid(ndim=1, n=8, delta=1.0), np.zeros(8))
        with pytest.raises(InputContractError):
            laplacian_5pt(f)


class TestCentralDiff:
    def test_constant_is_zero(self):
        f = Field(small_grid(n=8), np.full((8, 8), 2.0))
        assert np.allclose(central_diff(f, axis=0).values, 0.0)

    def test_sine_identity(self):
        # (sin(2pi(i+1)/n) - sin(2pi(i-1)/n))/2 = sin(2pi/n) cos(2pi i/n)
        n = 64
        g = Grid(ndim=2, n=n, delta=1.0)
        i = np.arange(n)[:, None] + np.zeros((1, n))
        f = np.sin(2 * np.pi * i / n)
        out = central_diff(Field(g, f), axis=0).values
        expected = np.sin(2 * np.pi / n) * np.cos(2 * np.pi * i / n)
        assert np.allclose(out, expected, atol=1e-13)

    def test_impulse_stencil(self):
        # (f[i+1] - f[i-1])/(2 delta) at i=1 sees the impulse through f[i-1],
        # so the value there is -1/2 and the wrapped i=3 sees +1/2.
        n = 4
        vals = np.zeros((n, n))
        vals[0, 0] = 1.0
        out = central_diff(Field(Grid(ndim=2, n=n, delta=1.0), vals), axis=0).values
        expected = np.zeros((n, n))
        expected[1, 0] = -0.5
        expected[3, 0] = 0.5
        assert np.array_equal(out, expected)

    def test_bad_axis(self):
        f = Field(small_grid(n=8), np.zeros((8, 8)))
        with pytest.raises(InputContractError):
            central_diff(f, axis=2)


class TestSpectralDerivative:
    def test_constant_all_orders(self):
        g = Grid(ndim=1, n=16, delta=0.5)
        f = Field(g, np.full(16, 4.0))
        for order in (1, 2, 4):
            assert np.allclose(spectral_derivative(f, order).values, 0.0, atol=1e-12)

    def test_single_mode_second_derivative(self):
        # Machine precision up to the operator's round-off amplification,
        # which is eps * k_nyquist^order.
        L, n = 2 * np.pi, 16
        g = Grid(ndim=1, n=n, delta=L / n)
        x = np.arange(n) * g.delta
        f = np.sin(2 * np.pi * x / L)
        out = spectral_derivative(Field(g, f), 2).values
        assert np.max(np.abs(out + (2 * np.pi / L) ** 2 * f)) <= 1e-13

    def test_single_mode_fourth_derivative(self):
        L, n = 2 * np.pi, 16
        g = Grid(ndim=1, n=n, delta=L / n)
        x = np.arange(n) * g.delta
        f = np.sin(2 * np.pi * x / L)
        out = spectral_derivative(Field(g, f), 4).values
        assert np.max(np.abs(out - (2 * np.pi / L) ** 4 * f)) <= 1e-11

    def test_unsupported_order(self):
        g = Grid(ndim=1, n=16, delta=1.0)
        with pytest.raises(InputContractError):
            spectral_derivative(Field(g, np.zeros(16)), 3)

    def test_requires_1d(self):
        with pytest.raises(InputContractError):
            spectral_derivative(Field(small_grid(n=8), np.zeros((8, 8))), 2)


class TestOperatorSymbols:
    """Pure Fourier modes map to scalar multiples of themselves; measured
    eigenvalues must match the analytic symbols."""

    @pytest.mark.parametrize("n", [8, 16])
    def test_laplacian_symbols(self, n):
        g = Grid(ndim=2, n=n, delta=1.0 / n)
        ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        for p, q in [(0, 1), (1, 0), (1, 2), (3, 3), (n // 2, 1)]:
            phase = 2 * np.pi * (p * ii + q * jj) / n
            out_re = laplacian_5pt(Field(g, np.cos(phase))).values
            out_im = laplacian_5pt(Field(g, np.sin(phase))).values
            measured = (out_re + 1j * out_im) * np.exp(-1j * phase)
            expected = stencil_symbol(p, q, n, g.delta)
            assert np.max(np.abs(measured - expected)) <= 1e-10 * max(1.0, abs(expected))

    @pytest.mark.parametrize("n", [8, 16])
    def test_central_diff_symbols(self, n):
        g = Grid(ndim=2, n=n, delta=1.0 / n)
        ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        for p, q in [(1, 0), (2, 3), (0, 1)]:
            phase = 2 * np.pi * (p * ii + q * jj) / n
            out_re = central_diff(Field(g, np.cos(phase)), axis=0).values
            out_im = central_diff(Field(g, np.sin(phase)), axis=0).values
            measured = (out_re + 1j * out_im) * np.exp(-1j * phase)
            expected = 1j * np.sin(2 * np.pi * p / n) / g.delta
            assert np.max(np.abs(measured - expected)) <= 1e-10 * max(1.0, abs(expected))

    @pytest.mark.parametrize("n", [8, 16])
    @pytest.mark.parametrize("order", [1, 2, 4])
    def test_spectral_derivative_symbols(self, n, order):
        L = 2.5
        g = Grid(ndim=1, n=n, delta=L / n)
        x = np.arange(n)
        for m in [1, 2, n // 2 - 1]:
            phase = 2 * np.pi * m * x / n
            out_re = spectral_derivative(Field(g, np.cos(phase)), order).values
            out_im = spectral_derivative(Field(g, np.sin(phase)), order).values
            measured = (out_re + 1j * out_im) * np.exp(-1j * phase)
            expected = (1j * 2 * np.pi * m / L) ** order
            assert np.max(np.abs(measured - expected)) <= 1e-10 * max(1.0, abs(expected))


class TestPoisson:
    def test_zero_source(self):
        out = poisson_solve_periodic(Field(small_grid(n=8), np.zeros((8, 8))))
        assert np.array_equal(out.values, np.zeros((8, 8)))

    def test_eigenmode_inversion(self):
        n = 16
        g = Grid(ndim=2, n=n, delta=1.0 / n)
        i = np.arange(n)[:, None] + np.zeros((1, n))
        mode = np.cos(2 * np.pi * i / n)
        lam = stencil_symbol(1, 0, n, g.delta)  # negative
        omega = abs(lam) * mode
        psi = poisson_solve_periodic(Field(g, omega)).values
        assert np.allclose(psi, mode, atol=1e-10)

    def test_round_trip_on_zero_mean_fields(self, rng):
        g = small_grid(n=16)
        psi0 = rng.standard_normal(g.shape)
        psi0 -= psi0.mean()
        omega = -laplacian_5pt(Field(g, psi0)).values
        back = poisson_solve_periodic(Field(g, omega)).values
        assert np.linalg.norm(back - psi0) <= 1e-10 * np.linalg.norm(psi0)

    def test_gauge_zero_mean(self, rng):
        g = small_grid(n=16)
        psi = poisson_solve_periodic(Field(g, rng.standard_normal(g.shape)))
        assert abs(psi.values.mean()) <= 1e-12


class TestSampleGrf:
    def test_deterministic(self):
        g = small_grid(n=16)
        a = sample_grf(g, 512.0, 8.0, 4.0, seed=123)
        b = sample_grf(g, 512.0, 8.0, 4.0, seed=123)
        assert np.array_equal(a.values, b.values)

    def test_alpha_too_small(self):
        with pytest.raises(InputContractError):
            sample_grf(small_grid(n=8), 1.0, 1.0, 0.9, seed=0)

    def test_monte_carlo_zero_mean(self):
        g = small_grid(n=8)
        draws = np.array([sample_grf(g, 512.0, 8.0, 4.0, seed=s).values[3, 5] for s in range(200)])
        assert abs(draws.mean()) <= 3.0 * draws.std() / np.sqrt(200)

    def test_mode_variances_match_target_density(self):
        # Empirical per-mode variance over 500 draws within 1.5x of the target
        # for the 10 lowest non-mean modes.
        g = small_grid(n=16)
        sigma2, tau, alpha = 512.0, 8.0, 4.0
        coeffs = np.array(
            [np.fft.fft2(sample_grf(g, sigma2, tau, alpha, seed=s).values) for s in range(500)]
        )
        emp_var = np.mean(np.abs(coeffs) ** 2, axis=0)
        target = grf_spectral_density(g, sigma2, tau, alpha) * g.n ** (2 * g.ndim) / g.length**g.ndim
        m = np.fft.fftfreq(g.n) * g.n
        msq = m[:, None] ** 2 + m[None, :] ** 2
        order = np.argsort(msq.ravel(), kind="stable")
        checked = 0
        for flat in order:
            if msq.ravel()[flat] == 0:
                continue
            ratio = emp_var.ravel()[flat] / target.ravel()[flat]
            assert 1 / 1.5 <= ratio <= 1.5, f"mode variance ratio {ratio} at |m|^2={msq.ravel()[flat]}"
            checked += 1
            if checked == 10:
                break

    def test_ns_default_parameters(self):
        # The flow dataset uses sigma2 = 8^3 = 512, tau^2 = 64, alpha = 4.
        from pdecorrect.solvers import NsDatasetConfig

        cfg = NsDatasetConfig()
        assert cfg.grf_sigma2 == 512.0
        assert cfg.grf_tau**2 == 64.0
        assert cfg.grf_alpha == 4.0
