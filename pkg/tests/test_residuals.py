"""Residual operators and their Jacobian descriptions.

Oracles: literal index-by-index transcriptions of each discretization (double
loops with explicit periodic wrapping, direct DFT sums for the spectral
derivatives) and brute-force one-hot finite-difference Jacobians. Golden
arrays below were produced by those transcriptions on small integer inputs and
pin every term's sign.
"""

import numpy as np
import pytest

from pdecorrect.errors import InputContractError
from pdecorrect.grids import Field, Grid, laplacian_5pt, poisson_solve_periodic
from pdecorrect.residuals import (
    IMPLICIT,
    SEMI_IMPLICIT,
    JacobianSpec,
    KsModel,
    KsParams,
    NsModel,
    NsParams,
    StateContext,
    WaveModel,
    WaveParams,
    circulant_dense_from_symbol,
    ks_jacobian_implicit,
    ks_jacobian_semi_implicit,
    ks_residual,
    ks_residual_semi_implicit,
    ns_jacobian_symbol,
    ns_residual,
    vorticity_from_stream,
    wave_jacobian_symbol,
    wave_residual,
)
from pdecorrect.solvers import ks_implicit_step, ns_step_semi_implicit, wave_implicit_step

from conftest import small_grid


# ---------------------------------------------------------------------------
# Independent naive transcriptions
# ---------------------------------------------------------------------------


def naive_ns_residual(psi, psih, f, dt, re, d):
    n = psi.shape[0]

    def lap(a, i, j):
        return (a[(i + 1) % n, j] + a[(i - 1) % n, j] + a[i, (j + 1) % n] + a[i, (j - 1) % n] - 4 * a[i, j]) / d**2

    w = np.array([[-lap(psi, i, j) for j in range(n)] for i in range(n)])
    wh = np.array([[-lap(psih, i, j) for j in range(n)] for i in range(n)])
    r = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            adv = (psi[i, (j + 1) % n] - psi[i, (j - 1) % n]) * (w[(i + 1) % n, j] - w[(i - 1) % n, j]) - (
                psi[(i + 1) % n, j] - psi[(i - 1) % n, j]
            ) * (w[i, (j + 1) % n] - w[i, (j - 1) % n])
            r[i, j] = (
                (w[i, j] - wh[i, j]) / dt
                - adv / (4 * d * d)
                + 0.5 / re * (lap(w, i, j) + lap(wh, i, j))
                + f[i, j]
            )
    return r


def naive_wave_residual(up, uc, uh, dt, c, d):
    n = up.shape[0]

    def lap(a, i, j):
        return (a[(i + 1) % n, j] + a[(i - 1) % n, j] + a[i, (j + 1) % n] + a[i, (j - 1) % n] - 4 * a[i, j]) / d**2

    r = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            r[i, j] = (uh[i, j] + up[i, j] - 2 * uc[i, j]) / dt**2 - c**2 / 3.0 * (
                lap(up, i, j) + lap(uc, i, j) + lap(uh, i, j)
            )
    return r


def naive_dft_derivative(a, order, length):
    n = len(a)
    ah = np.array([sum(a[x] * np.exp(-2j * np.pi * m * x / n) for x in range(n)) for m in range(n)])
    out = np.zeros(n, dtype=complex)
    for m in range(n):
        signed = m if m <= n // 2 else m - n
        mult = (1j * 2 * np.pi * signed / length) ** order
        if order % 2 == 1 and n % 2 == 0 and m == n // 2:
            mult = 0.0
        for x in range(n):
            out[x] += ah[m] * mult * np.exp(2j * np.pi * m * x / n) / n
    return out.real


def naive_ks_residual(v, vh, dt, length):
    lin_t = naive_dft_derivative(v, 2, length) + naive_dft_derivative(v, 4, length)
    lin_h = naive_dft_derivative(vh, 2, length) + naive_dft_derivative(vh, 4, length)
    return (vh - v) / dt + 0.5 * (
        lin_t + v * naive_dft_derivative(v, 1, length) + lin_h + vh * naive_dft_derivative(vh, 1, length)
    )


def brute_force_jacobian(residual_fn, base, eps=1e-6):
    """One-hot central-difference Jacobian of residual_fn around base (2D or 1D)."""
    flat = base.ravel()
    npts = flat.size
    jac = np.empty((npts, npts))
    for j in range(npts):
        bump = np.zeros(npts)
        bump[j] = eps
        plus = residual_fn((flat + bump).reshape(base.shape))
        minus = residual_fn((flat - bump).reshape(base.shape))
        jac[:, j] = (plus - minus).ravel() / (2 * eps)
    return jac


# ---------------------------------------------------------------------------
# Flow residual
# ---------------------------------------------------------------------------


NS_GOLDEN_PSI = np.array([[1.0, 0, 0, 0], [0, 2, 0, 0], [0, 0, 0, 0], [0, 0, 0, -1]])
NS_GOLDEN_PSI_HAT = np.array([[0.0, 1, 0, 0], [0, 0, 0, 0], [0, 0, 3, 0], [0, 0, 0, 0]])
# naive_ns_residual(NS_GOLDEN_PSI, NS_GOLDEN_PSI_HAT, 0, dt=1, re=2, d=1), frozen
NS_GOLDEN_RESIDUAL = np.array(
    [
        [1.5, -6.0, 0.5, -0.5],
        [2.5, -1.0, 10.5, -2.5],
        [-2.5, 10.5, -27.5, 8.0],
        [-0.5, 0.5, 7.5, -1.0],
    ]
)


def ns_setup(n=8, delta=None, dt=0.01, re=1000.0, zero_forcing=False):
    g = Grid(ndim=2, n=n, delta=delta if delta else 1.0 / n)
    p = NsParams.default(g, dt=dt, reynolds=re)
    if zero_forcing:
        p = NsParams(grid=g, dt=dt, reynolds=re, forcing=Field(g, np.zeros(g.shape)))
    return g, p


class TestNsResidual:
    def test_golden_signs(self):
        g = Grid(ndim=2, n=4, delta=1.0)
        p = NsParams(grid=g, dt=1.0, reynolds=2.0, forcing=Field(g, np.zeros((4, 4))))
        ctx = StateContext.for_ns(Field(g, NS_GOLDEN_PSI))
        r = ns_residual(ctx, Field(g, NS_GOLDEN_PSI_HAT), p).values
        assert np.allclose(r, NS_GOLDEN_RESIDUAL, atol=1e-12)

    def test_matches_naive_transcription(self, rng):
        g, p = ns_setup(n=8)
        psi = rng.standard_normal(g.shape)
        psih = rng.standard_normal(g.shape)
        r = ns_residual(StateContext.for_ns(Field(g, psi)), Field(g, psih), p).values
        expected = naive_ns_residual(psi, psih, p.forcing.values, p.dt, p.reynolds, g.delta)
        assert np.max(np.abs(r - expected)) <= 1e-9 * max(1.0, np.max(np.abs(expected)))

    def test_zero_states_zero_forcing(self):
        g, p = ns_setup(n=8, zero_forcing=True)
        zero = Field(g, np.zeros(g.shape))
        r = ns_residual(StateContext.for_ns(zero), zero, p)
        assert np.array_equal(r.values, np.zeros(g.shape))

    def test_exact_step_zeroes_residual(self, rng):
        g, p = ns_setup(n=16)
        psi = Field(g, 0.01 * rng.standard_normal(g.shape))
        psi_next = ns_step_semi_implicit(psi, p)
        r = ns_residual(StateContext.for_ns(psi), psi_next, p).values
        assert np.max(np.abs(r)) <= 1e-9 / p.dt

    def test_affine_in_prediction(self, rng):
        # Perturbing by g changes the residual by the same linear map at
        #两 distinct base points: the Jacobian is constant.
        g, p = ns_setup(n=8)
        ctx = StateContext.for_ns(Field(g, rng.standard_normal(g.shape)))
        bump = rng.standard_normal(g.shape)
        u1 = rng.standard_normal(g.shape)
        u2 = rng.standard_normal(g.shape)
        d1 = ns_residual(ctx, Field(g, u1 + bump), p).values - ns_residual(ctx, Field(g, u1), p).values
        d2 = ns_residual(ctx, Field(g, u2 + bump), p).values - ns_residual(ctx, Field(g, u2), p).values
        assert np.max(np.abs(d1 - d2)) <= 1e-10 * max(1.0, np.max(np.abs(d1)))

    def test_shape_mismatch(self, rng):
        g, p = ns_setup(n=8)
        other = Field(small_grid(n=16), np.zeros((16, 16)))
        with pytest.raises(InputContractError):
            ns_residual(StateContext.for_ns(other), other, p)


class TestNsJacobianSymbol:
    def test_mean_mode_is_nullspace(self):
        _, p = ns_setup(n=8)
        assert ns_jacobian_symbol(p).fourier_symbol[0, 0] == 0.0

    def test_mode_10_formula(self):
        g, p = ns_setup(n=16, delta=1 / 16, dt=0.01, re=1000.0)
        lam = (2 * np.cos(2 * np.pi / 16) - 2) * 256  # stencil eigenvalue of mode (1, 0)
        expected = lam / p.dt - 0.5 * lam**2 / p.reynolds
        assert ns_jacobian_symbol(p).fourier_symbol[1, 0] == pytest.approx(expected, rel=1e-13)

    def test_mode_10_against_residual_application(self):
        g, p = ns_setup(n=16, zero_forcing=True)
        ii = np.arange(16)[:, None] + np.zeros((1, 16))
        mode_re = np.cos(2 * np.pi * ii / 16)
        mode_im = np.sin(2 * np.pi * ii / 16)
        ctx = StateContext.for_ns(Field(g, np.zeros(g.shape)))
        r_re = ns_residual(ctx, Field(g, mode_re), p).values
        r_im = ns_residual(ctx, Field(g, mode_im), p).values
        phase = np.exp(1j * 2 * np.pi * ii / 16)
        measured = (r_re + 1j * r_im) * np.conj(phase)
        sym = ns_jacobian_symbol(p).fourier_symbol[1, 0]
        assert np.max(np.abs(measured - sym)) <= 1e-8 * abs(sym)

    def test_symbol_matrix_matches_brute_force(self, rng):
        g, p = ns_setup(n=8)
        ctx = StateContext.for_ns(Field(g, rng.standard_normal(g.shape)))
        base = rng.standard_normal(g.shape)

        def res(x):
            return ns_residual(ctx, Field(g, x), p).values

        brute = brute_force_jacobian(res, base)
        dense = circulant_dense_from_symbol(ns_jacobian_symbol(p).fourier_symbol)
        assert np.max(np.abs(brute - dense)) <= 1e-8 * np.max(np.abs(dense))


# ---------------------------------------------------------------------------
# Wave residual
# ---------------------------------------------------------------------------


WAVE_GOLDEN_PREV = np.array([[1.0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 2, 0], [0, 0, 0, 0]])
WAVE_GOLDEN_CURR = np.array([[0.0, 1, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, -1, 0, 0]])
WAVE_GOLDEN_HAT = np.array([[0.0, 0, 0, 0], [0, 3, 0, 0], [0, 0, 0, 0], [0, 0, 0, 1]])
# naive_wave_residual(prev, curr, hat, dt=0.5, c=2, d=1) in exact thirds, frozen
WAVE_GOLDEN_RESIDUAL = (
    np.array(
        [
            [24, -20, -4, -8],
            [-16, 80, -20, 0],
            [0, -16, 56, -12],
            [-4, 4, -8, 28],
        ]
    )
    / 3.0
)


def wave_setup(n=8, dt=0.01, c=1.0):
    g = Grid(ndim=2, n=n, delta=1.0 / n)
    return g, WaveParams(grid=g, dt=dt, c=c)


class TestWaveResidual:
    def test_golden_signs(self):
        g = Grid(ndim=2, n=4, delta=1.0)
        p = WaveParams(grid=g, dt=0.5, c=2.0)
        ctx = StateContext.for_wave(Field(g, WAVE_GOLDEN_PREV), Field(g, WAVE_GOLDEN_CURR))
        r = wave_residual(ctx, Field(g, WAVE_GOLDEN_HAT), p).values
        assert np.allclose(r, WAVE_GOLDEN_RESIDUAL, atol=1e-12)

    def test_matches_naive_transcription(self, rng):
        g, p = wave_setup(n=8, dt=0.3, c=1.7)
        up, uc, uh = (rng.standard_normal(g.shape) for _ in range(3))
        r = wave_residual(StateContext.for_wave(Field(g, up), Field(g, uc)), Field(g, uh), p).values
        expected = naive_wave_residual(up, uc, uh, p.dt, p.c, g.delta)
        assert np.max(np.abs(r - expected)) <= 1e-9 * max(1.0, np.max(np.abs(expected)))

    def test_constant_equilibrium(self):
        g, p = wave_setup()
        const = Field(g, np.full(g.shape, 2.5))
        r = wave_residual(StateContext.for_wave(const, const), const, p).values
        assert np.max(np.abs(r)) <= 1e-9

    def test_exact_step_zeroes_residual(self, rng):
        g, p = wave_setup(n=16)
        up = Field(g, rng.standard_normal(g.shape))
        uc = Field(g, rng.standard_normal(g.shape))
        uh = wave_implicit_step(up, uc, p)
        r = wave_residual(StateContext.for_wave(up, uc), uh, p).values
        assert np.max(np.abs(r)) <= 1e-9 / p.dt**2

    def test_exactly_affine(self, rng):
        g, p = wave_setup()
        ctx = StateContext.for_wave(
            Field(g, rng.standard_normal(g.shape)), Field(g, rng.standard_normal(g.shape))
        )
        u1, u2 = rng.standard_normal(g.shape), rng.standard_normal(g.shape)
        zero = np.zeros(g.shape)
        combo = (
            wave_residual(ctx, Field(g, u1 + u2), p).values
            - wave_residual(ctx, Field(g, u1), p).values
            - wave_residual(ctx, Field(g, u2), p).values
            + wave_residual(ctx, Field(g, zero), p).values
        )
        assert np.max(np.abs(combo)) <= 1e-12 * max(1.0, 1.0 / p.dt**2)


class TestWaveJacobianSymbol:
    def test_mean_mode(self):
        _, p = wave_setup(dt=0.02)
        assert wave_jacobian_symbol(p).fourier_symbol[0, 0] == pytest.approx(1 / p.dt**2)

    def test_strictly_positive(self):
        _, p = wave_setup(n=32, dt=0.01, c=1.0)
        sym = wave_jacobian_symbol(p).fourier_symbol.real
        assert sym.min() >= 1e4

    def test_matches_brute_force(self, rng):
        g, p = wave_setup(n=8, dt=0.1, c=1.3)
        ctx = StateContext.for_wave(
            Field(g, rng.standard_normal(g.shape)), Field(g, rng.standard_normal(g.shape))
        )

        def res(x):
            return wave_residual(ctx, Field(g, x), p).values

        brute = brute_force_jacobian(res, rng.standard_normal(g.shape))
        dense = circulant_dense_from_symbol(wave_jacobian_symbol(p).fourier_symbol)
        assert np.max(np.abs(brute - dense)) <= 1e-8 * np.max(np.abs(dense))


# ---------------------------------------------------------------------------
# KS residual
# ---------------------------------------------------------------------------


KS_GOLDEN_V = np.array([0.0, 1, 0, -1, 2, 0, 0, 1])
KS_GOLDEN_V_HAT = np.array([1.0, 0, 0, 0, -1, 0, 2, 0])
# naive_ks_residual(v, v_hat, dt=0.5, length=8), frozen
KS_GOLDEN_RESIDUAL = np.array(
    [
        12.043175548033366,
        -9.767819298531094,
        12.409834489163046,
        -17.760072948387496,
        18.517589551675,
        -23.59896104920331,
        23.632074834781914,
        -17.475821127531436,
    ]
)


def ks_setup(n=64, length=64.0, dt=0.05):
    return KsParams(grid=Grid(ndim=1, n=n, delta=length / n), dt=dt)


class TestKsResidual:
    def test_golden_signs(self):
        p = ks_setup(n=8, length=8.0, dt=0.5)
        ctx = StateContext.for_ks(Field(p.grid, KS_GOLDEN_V))
        r = ks_residual(ctx, Field(p.grid, KS_GOLDEN_V_HAT), p).values
        assert np.allclose(r, KS_GOLDEN_RESIDUAL, atol=1e-10)

    def test_matches_naive_transcription(self, rng):
        p = ks_setup(n=16, length=5.0, dt=0.1)
        v, vh = rng.standard_normal(16), rng.standard_normal(16)
        r = ks_residual(StateContext.for_ks(Field(p.grid, v)), Field(p.grid, vh), p).values
        expected = naive_ks_residual(v, vh, p.dt, 5.0)
        assert np.max(np.abs(r - expected)) <= 1e-9 * max(1.0, np.max(np.abs(expected)))

    def test_zero_trajectory(self):
        p = ks_setup()
        zero = Field(p.grid, np.zeros(p.grid.n))
        r = ks_residual(StateContext.for_ks(zero), zero, p)
        assert np.array_equal(r.values, np.zeros(p.grid.n))

    def test_converged_implicit_step_zeroes_residual(self, rng):
        p = ks_setup(n=64)
        v = Field(p.grid, 0.5 * np.sin(2 * np.pi * np.arange(64) / 64 * 3))
        v_next = ks_implicit_step(v, p)
        r = ks_residual(StateContext.for_ks(v), v_next, p).values
        assert np.max(np.abs(r)) <= 1e-7 / p.dt

    def test_nonlinear_in_prediction(self):
        # The quadratic advection term breaks r(2v) = 2 r(v) - r(0).
        p = ks_setup(n=32, length=2 * np.pi)
        x = np.arange(32) * p.grid.delta
        v = Field(p.grid, np.sin(x))
        vh = Field(p.grid, np.cos(x))
        ctx = StateContext.for_ks(v)
        r1 = ks_residual(ctx, vh, p).values
        r2 = ks_residual(ctx, Field(p.grid, 2 * vh.values), p).values
        r0 = ks_residual(ctx, Field(p.grid, np.zeros(32)), p).values
        assert np.max(np.abs(r2 - 2 * r1 + r0)) > 1e-3

    def test_semi_implicit_variant_is_affine(self, rng):
        p = ks_setup(n=32)
        ctx = StateContext.for_ks(Field(p.grid, rng.standard_normal(32)))
        u1, u2 = rng.standard_normal(32), rng.standard_normal(32)
        zero = np.zeros(32)
        combo = (
            ks_residual_semi_implicit(ctx, Field(p.grid, u1 + u2), p).values
            - ks_residual_semi_implicit(ctx, Field(p.grid, u1), p).values
            - ks_residual_semi_implicit(ctx, Field(p.grid, u2), p).values
            + ks_residual_semi_implicit(ctx, Field(p.grid, zero), p).values
        )
        assert np.max(np.abs(combo)) <= 1e-9


class TestKsJacobians:
    def test_semi_implicit_mean_mode(self):
        p = ks_setup(dt=0.05)
        assert ks_jacobian_semi_implicit(p).fourier_symbol[0] == pytest.approx(1 / p.dt)

    def test_unit_wavenumber_root(self):
        # k = 1 zeroes -k^2 + k^4, leaving exactly 1/dt.
        p = ks_setup(n=16, length=4 * np.pi, dt=0.05)  # mode 2 has k = 1
        sym = ks_jacobian_semi_implicit(p).fourier_symbol.real
        assert sym[2] == pytest.approx(1 / p.dt, rel=1e-12)

    def test_default_symbols_all_positive(self):
        p = KsParams.default()
        sym = ks_jacobian_semi_implicit(p).fourier_symbol.real
        assert sym.shape == (512,)
        assert sym.min() > 0
        # parabola -k^2 + k^4 bottoms out at -1/4, so 1/dt dominates
        assert sym.min() >= 1 / p.dt - 0.25

    def test_implicit_at_zero_matches_semi_implicit(self):
        p = ks_setup(n=32)
        zero = Field(p.grid, np.zeros(32))
        dense = ks_jacobian_implicit(StateContext.for_ks(zero), zero, p)
        expected = circulant_dense_from_symbol(ks_jacobian_semi_implicit(p).fourier_symbol)
        assert np.max(np.abs(dense - expected)) <= 1e-9 * np.max(np.abs(expected))

    def test_implicit_matches_brute_force(self, rng):
        p = ks_setup(n=32)
        v = rng.standard_normal(32)
        ctx = StateContext.for_ks(Field(p.grid, rng.standard_normal(32)))

        def res(x):
            return ks_residual(ctx, Field(p.grid, x), p).values

        brute = brute_force_jacobian(res, v)
        dense = ks_jacobian_implicit(ctx, Field(p.grid, v), p)
        assert np.max(np.abs(brute - dense)) <= 1e-6 * np.max(np.abs(dense))

    def test_constant_state_nonlinear_part(self):
        # At v = c0 the diag(D1 v) term vanishes, leaving 0.5 * c0 * D1.
        from pdecorrect.grids import spectral_derivative_multiplier

        p = ks_setup(n=32)
        c0 = 1.8
        const = Field(p.grid, np.full(32, c0))
        dense = ks_jacobian_implicit(StateContext.for_ks(const), const, p)
        semi = circulant_dense_from_symbol(ks_jacobian_semi_implicit(p).fourier_symbol)
        d1 = circulant_dense_from_symbol(spectral_derivative_multiplier(32, p.grid.length, 1))
        assert np.max(np.abs(dense - semi - 0.5 * c0 * d1)) <= 1e-9


class TestVorticityFromStream:
    def test_constant_stream(self):
        g = small_grid(n=8)
        w = vorticity_from_stream(Field(g, np.full(g.shape, 5.0)))
        assert np.max(np.abs(w.values)) <= 1e-10

    def test_fourier_mode_eigenvalue(self):
        n = 16
        g = Grid(ndim=2, n=n, delta=1.0 / n)
        ii = np.arange(n)[:, None] + np.zeros((1, n))
        psi = np.cos(2 * np.pi * ii / n)
        lam = (2 * np.cos(2 * np.pi / n) - 2) / g.delta**2
        w = vorticity_from_stream(Field(g, psi)).values
        assert np.allclose(w, -lam * psi, atol=1e-9 * abs(lam))

    def test_inverse_of_poisson_solve(self, rng):
        g = small_grid(n=16)
        psi0 = rng.standard_normal(g.shape)
        psi0 -= psi0.mean()
        w = vorticity_from_stream(Field(g, psi0))
        back = poisson_solve_periodic(w).values
        assert np.linalg.norm(back - psi0) <= 1e-10 * np.linalg.norm(psi0)


class TestParamsValidation:
    def test_ns_params(self):
        g = small_grid(n=8)
        with pytest.raises(InputContractError):
            NsParams(grid=g, dt=0.01, reynolds=-1.0, forcing=Field(g, np.zeros(g.shape)))
        with pytest.raises(InputContractError):
            NsParams(grid=g, dt=0.0, reynolds=100.0, forcing=Field(g, np.zeros(g.shape)))

    def test_wave_params(self):
        g = small_grid(n=8)
        with pytest.raises(InputContractError):
            WaveParams(grid=g, dt=0.01, c=0.0)

    def test_ks_params_require_1d(self):
        with pytest.raises(InputContractError):
            KsParams(grid=small_grid(n=8), dt=0.05)

    def test_wave_context_needs_two_levels(self):
        g = small_grid(n=8)
        f = Field(g, np.zeros(g.shape))
        other = Field(small_grid(n=16), np.zeros((16, 16)))
        with pytest.raises(InputContractError):
            StateContext.for_wave(f, other)

    def test_ks_model_residual_form(self):
        with pytest.raises(InputContractError):
            KsModel(ks_setup(), residual_form="bogus")

    def test_jacobian_spec_needs_symbol(self):
        with pytest.raises(InputContractError):
            JacobianSpec("constant-circulant", small_grid(n=8), None)
