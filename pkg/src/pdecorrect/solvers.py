"""Reference time steppers and trajectory generators.

Two tiers per PDE: a stepper that solves the correction-target discretization
exactly (zero residual by construction), and an independent higher-order
integrator used to manufacture reference data whose residual under that
discretization is small but non-zero. The flow model gets a Crank-Nicolson
stepper plus a pseudo-spectral RK4 integrator; the wave model an implicit
stepper plus an RK4 generator with a 4th-order stencil; the KS model a
Newton-converged implicit stepper plus an exponential (ETDRK4) generator.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DivergenceError, InputContractError
from .grids import Field, Grid, poisson_solve_periodic, sample_grf
from .residuals import (
    KS,
    NS,
    WAVE,
    KsParams,
    NsParams,
    StateContext,
    WaveParams,
    ks_jacobian_implicit,
    ks_residual,
    ns_jacobian_symbol,
    ns_residual,
    wave_jacobian_symbol,
)

SOLVER_IDS = {
    "external": 0,
    "ns-semi-implicit": 1,
    "ns-high-order": 2,
    "wave-rk4": 3,
    "wave-implicit": 4,
    "ks-etdrk4": 5,
    "rollout": 6,
}


@dataclass(frozen=True)
class Trajectory:
    """An ordered sequence of recorded states with generation metadata."""

    grid: Grid
    dt: float
    kind: str
    states: np.ndarray
    meta: dict

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.float64)
        if states.ndim != self.grid.ndim + 1 or states.shape[1:] != self.grid.shape:
            raise InputContractError(
                f"trajectory states shape {states.shape} does not match grid {self.grid.shape}"
            )
        if states.shape[0] < 2:
            raise InputContractError("a trajectory needs at least two states")
        if not (self.dt > 0):
            raise InputContractError("recording interval must be positive")
        states = states.copy()
        states.flags.writeable = False
        object.__setattr__(self, "states", states)

    @property
    def n_states(self) -> int:
        return self.states.shape[0]

    def state(self, i: int) -> Field:
        return Field(self.grid, self.states[i])


# ---------------------------------------------------------------------------
# 2D flow (vorticity / stream function)
# ---------------------------------------------------------------------------


def _rfft2_symbol(symbol: np.ndarray) -> np.ndarray:
    n = symbol.shape[0]
    return symbol[:, : n // 2 + 1]


def ns_explicit_terms(psi: np.ndarray, p: NsParams):
    """Pieces of the residual that depend only on the current state.

    Returns (vorticity, advection_numerator, laplacian_of_vorticity); the
    advection numerator carries the raw stencil products, i.e. it still has to
    be divided by 4 delta^2.
    """
    d = p.grid.delta
    w = -(
        np.roll(psi, 1, 0) + np.roll(psi, -1, 0) + np.roll(psi, 1, 1) + np.roll(psi, -1, 1)
        - 4.0 * psi
    ) / (d * d)
    adv = (np.roll(psi, -1, 1) - np.roll(psi, 1, 1)) * (np.roll(w, -1, 0) - np.roll(w, 1, 0)) - (
        np.roll(psi, -1, 0) - np.roll(psi, 1, 0)
    ) * (np.roll(w, -1, 1) - np.roll(w, 1, 1))
    lap_w = (
        np.roll(w, 1, 0) + np.roll(w, -1, 0) + np.roll(w, 1, 1) + np.roll(w, -1, 1) - 4.0 * w
    ) / (d * d)
    return w, adv, lap_w


def ns_cn_solve(explicit: np.ndarray, p: NsParams) -> np.ndarray:
    """Solve J psi_hat = -explicit per Fourier mode, zeroing the gauge mode."""
    sym = _rfft2_symbol(ns_jacobian_symbol(p).fourier_symbol.real)
    rhs_hat = np.fft.rfft2(explicit)
    out = np.zeros_like(rhs_hat)
    nonzero = sym != 0.0
    out[nonzero] = -rhs_hat[nonzero] / sym[nonzero]
    return np.fft.irfft2(out, s=explicit.shape)


def ns_step_semi_implicit(psi_t: Field, p: NsParams) -> Field:
    """Advance the stream function one step of the semi-implicit scheme.

    The output zeroes the flow residual exactly (up to round-off): diffusion is
    treated by the trapezoidal rule per Fourier mode, advection explicitly, and
    the unobservable constant mode of psi is gauged to zero.
    """
    ctx = StateContext.for_ns(psi_t)
    zero = Field(p.grid, np.zeros(p.grid.shape))
    explicit = ns_residual(ctx, zero, p).values
    return Field(p.grid, ns_cn_solve(explicit, p))


class _NsSpectral:
    """Precomputed tables for the pseudo-spectral vorticity integrator."""

    def __init__(self, p: NsParams):
        n, L = p.grid.n, p.grid.length
        k1 = 2.0 * np.pi * np.fft.fftfreq(n) * n / L
        self.kx = k1[:, None]
        self.ky = k1[None, :]
        self.k2 = self.kx**2 + self.ky**2
        self.inv_k2 = np.zeros_like(self.k2)
        self.inv_k2[self.k2 != 0.0] = 1.0 / self.k2[self.k2 != 0.0]
        kmax = np.abs(k1).max()
        self.dealias = (np.abs(self.kx) <= 2.0 / 3.0 * kmax) & (
            np.abs(self.ky) <= 2.0 / 3.0 * kmax
        )
        self.f_hat = np.fft.fft2(p.forcing.values)
        self.re = p.reynolds

    def rhs(self, w_hat: np.ndarray) -> np.ndarray:
        psi_hat = w_hat * self.inv_k2
        psi_x = np.fft.ifft2(1j * self.kx * psi_hat).real
        psi_y = np.fft.ifft2(1j * self.ky * psi_hat).real
        w_x = np.fft.ifft2(1j * self.kx * w_hat).real
        w_y = np.fft.ifft2(1j * self.ky * w_hat).real
        adv_hat = np.fft.fft2(-psi_y * w_x + psi_x * w_y) * self.dealias
        return adv_hat - (self.k2 / self.re) * w_hat + self.f_hat


def ns_step_highorder(psi_t: Field, p: NsParams, substeps: int = 4) -> Field:
    """Advance by p.dt with a pseudo-spectral RK4 integrator on the vorticity.

    A deliberately different discretization from the semi-implicit scheme:
    spectral derivatives, 2/3-rule dealiasing, substeps >= 2 inner RK4 stages.
    Its output has a small but non-zero residual under the stencil scheme.
    """
    if substeps < 2:
        raise InputContractError("ns_step_highorder requires substeps >= 2")
    tables = _NsSpectral(p)
    psi_hat = np.fft.fft2(psi_t.values)
    w_hat = tables.k2 * psi_hat
    h = p.dt / substeps
    for step in range(substeps):
        k1 = tables.rhs(w_hat)
        k2 = tables.rhs(w_hat + 0.5 * h * k1)
        k3 = tables.rhs(w_hat + 0.5 * h * k2)
        k4 = tables.rhs(w_hat + h * k3)
        w_hat = w_hat + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        w_phys_max = np.abs(np.fft.ifft2(w_hat).real).max()
        if not np.isfinite(w_phys_max) or w_phys_max > 1e6:
            raise DivergenceError(f"pseudo-spectral flow step diverged at substep {step}")
    psi_hat = w_hat * tables.inv_k2
    return Field(p.grid, np.fft.ifft2(psi_hat).real)


# ---------------------------------------------------------------------------
# 2D wave
# ---------------------------------------------------------------------------


def wave_implicit_step(u_prev: Field, u_curr: Field, p: WaveParams) -> Field:
    """Exact solve of the implicit wave scheme (its symbol is always positive)."""
    sym = _rfft2_symbol(wave_jacobian_symbol(p).fourier_symbol.real)
    d = p.grid.delta
    c2_3 = p.c**2 / 3.0

    def lap(v):
        return (
            np.roll(v, 1, 0) + np.roll(v, -1, 0) + np.roll(v, 1, 1) + np.roll(v, -1, 1) - 4.0 * v
        ) / (d * d)

    up, uc = u_prev.values, u_curr.values
    rhs = (2.0 * uc - up) / p.dt**2 + c2_3 * (lap(up) + lap(uc))
    out = np.fft.irfft2(np.fft.rfft2(rhs) / sym, s=up.shape)
    return Field(p.grid, out)


def laplacian_4th_order(v: np.ndarray, delta: float) -> np.ndarray:
    """4th-order stencil (-f[i-2]+16f[i-1]-30f[i]+16f[i+1]-f[i+2])/(12 delta^2), both axes."""
    out = np.zeros_like(v)
    for ax in (0, 1):
        out += (
            -np.roll(v, 2, ax)
            + 16.0 * np.roll(v, 1, ax)
            - 30.0 * v
            + 16.0 * np.roll(v, -1, ax)
            - np.roll(v, -2, ax)
        )
    return out / (12.0 * delta * delta)


def wave_discrete_energy(u: np.ndarray, velocity: np.ndarray, p: WaveParams) -> float:
    """Energy of the semi-discrete system: sum(v^2) + c^2 u.(-lap4 u)."""
    return float(
        np.sum(velocity**2) - p.c**2 * np.sum(u * laplacian_4th_order(u, p.grid.delta))
    )


def wave_generate_rk4(
    u0: Field, p: WaveParams, inner_dt: float, record_every: int, steps: int, *, meta=None
) -> Trajectory:
    """Integrate u_tt = c^2 lap(u) from rest with RK4 and record every few steps.

    Spatial derivatives use the 4th-order stencil; the initial velocity is zero.
    Requires inner_dt * record_every == p.dt and a sane CFL number.
    """
    if record_every < 1:
        raise InputContractError("record_every must be >= 1")
    if abs(inner_dt * record_every - p.dt) > 1e-9 * p.dt:
        raise InputContractError(
            f"inner_dt * record_every = {inner_dt * record_every!r} must equal dt = {p.dt!r}"
        )
    if p.c * inner_dt / p.grid.delta > 1.0:
        raise InputContractError(
            f"CFL violation: c*inner_dt/delta = {p.c * inner_dt / p.grid.delta:.3f} > 1"
        )
    d = p.grid.delta
    c2 = p.c**2
    u = u0.values.copy()
    vel = np.zeros_like(u)
    recorded = [u.copy()]

    def accel(x):
        return c2 * laplacian_4th_order(x, d)

    h = inner_dt
    for _ in range(steps):
        for _ in range(record_every):
            k1u, k1v = vel, accel(u)
            k2u, k2v = vel + 0.5 * h * k1v, accel(u + 0.5 * h * k1u)
            k3u, k3v = vel + 0.5 * h * k2v, accel(u + 0.5 * h * k2u)
            k4u, k4v = vel + h * k3v, accel(u + h * k3u)
            u = u + (h / 6.0) * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
            vel = vel + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        recorded.append(u.copy())
    info = {"solver_id": SOLVER_IDS["wave-rk4"], "inner_dt": inner_dt, "seed": 0}
    if meta:
        info.update(meta)
    return Trajectory(p.grid, p.dt, WAVE, np.stack(recorded), info)


# ---------------------------------------------------------------------------
# 1D KS
# ---------------------------------------------------------------------------


def ks_implicit_step(v_t: Field, p: KsParams, tol: float | None = None) -> Field:
    """Newton-converged solve of the fully implicit KS residual.

    Initial guess v_t; at most 50 iterations; raises ConvergenceError with the
    final residual norm when the tolerance is not met.
    """
    if tol is None:
        tol = 1e-10 / p.dt
    ctx = StateContext.for_ks(v_t)
    v_hat = Field(p.grid, v_t.values)
    res_norm = np.inf
    for _ in range(50):
        res = ks_residual(ctx, v_hat, p).values
        res_norm = float(np.abs(res).max())
        if res_norm <= tol:
            return v_hat
        jac = ks_jacobian_implicit(ctx, v_hat, p)
        delta = np.linalg.solve(jac, -res)
        v_hat = Field(p.grid, v_hat.values + delta)
    raise ConvergenceError(
        f"implicit KS step did not converge in 50 iterations (residual {res_norm:.3e})"
    )


class KsExponentialIntegrator:
    """Exponential time integrator for KS in rfft space.

    ``order`` 4 selects the standard 4-stage exponential Runge-Kutta scheme with
    contour-integral coefficients; ``order`` 1 the exponential Euler step. An
    optional mode cutoff (fraction of the Nyquist index) zeroes high modes of
    the nonlinear term, which is how the degraded surrogate is built.
    """

    def __init__(self, p: KsParams, substeps: int, order: int = 4, cutoff_frac: float | None = None):
        if substeps < 1:
            raise InputContractError("substeps must be >= 1")
        if order not in (1, 4):
            raise InputContractError("order must be 1 or 4")
        n, L = p.grid.n, p.grid.length
        self.n = n
        self.substeps = substeps
        self.order = order
        h = p.dt / substeps
        self.h = h
        k = 2.0 * np.pi * np.arange(n // 2 + 1) / L
        self.lin = k**2 - k**4
        self.ik = 1j * k
        if n % 2 == 0:
            self.ik[-1] = 0.0
        self.mask = np.ones(n // 2 + 1)
        if cutoff_frac is not None:
            self.mask[np.arange(n // 2 + 1) > cutoff_frac * (n // 2)] = 0.0
        self.exp_full = np.exp(h * self.lin)
        self.exp_half = np.exp(0.5 * h * self.lin)
        # phi-function coefficients via mean over a contour of unit-circle points
        m = 32
        roots = np.exp(1j * np.pi * (np.arange(m) + 0.5) / m)
        lr = h * self.lin[:, None] + roots[None, :]
        self.phi1 = h * np.real(((np.exp(lr) - 1.0) / lr).mean(axis=1))
        self.q = h * np.real(((np.exp(lr / 2.0) - 1.0) / lr).mean(axis=1))
        exp_lr = np.exp(lr)
        lr3 = lr**3
        self.f1 = h * np.real(((-4.0 - lr + exp_lr * (4.0 - 3.0 * lr + lr**2)) / lr3).mean(axis=1))
        self.f2 = h * np.real(((2.0 + lr + exp_lr * (lr - 2.0)) / lr3).mean(axis=1))
        self.f3 = h * np.real(((-4.0 - 3.0 * lr - lr**2 + exp_lr * (4.0 - lr)) / lr3).mean(axis=1))

    def _nonlinear(self, v_hat: np.ndarray) -> np.ndarray:
        v = np.fft.irfft(v_hat, n=self.n)
        return -0.5 * self.ik * self.mask * np.fft.rfft(v * v)

    def _one(self, v_hat: np.ndarray) -> np.ndarray:
        if self.order == 1:
            return self.exp_full * v_hat + self.phi1 * self._nonlinear(v_hat)
        n0 = self._nonlinear(v_hat)
        a = self.exp_half * v_hat + self.q * n0
        na = self._nonlinear(a)
        b = self.exp_half * v_hat + self.q * na
        nb = self._nonlinear(b)
        c = self.exp_half * a + self.q * (2.0 * nb - n0)
        nc = self._nonlinear(c)
        return self.exp_full * v_hat + self.f1 * n0 + 2.0 * self.f2 * (na + nb) + self.f3 * nc

    def step_values(self, v: np.ndarray) -> np.ndarray:
        """Advance by the full recording interval (``substeps`` inner steps)."""
        v_hat = np.fft.rfft(v)
        for _ in range(self.substeps):
            v_hat = self._one(v_hat)
        return np.fft.irfft(v_hat, n=self.n)


def ks_generate_spectral(
    v0: Field,
    p: KsParams,
    steps: int,
    substeps: int = 4,
    warmup_time: float = 50.0,
    *,
    meta=None,
) -> Trajectory:
    """Generate a KS trajectory with the exponential spectral integrator.

    The warm-up interval is integrated with the same scheme before recording
    starts, so recorded states sit on the attractor. Guards against divergence
    (|v| > 1e4).
    """
    stepper = KsExponentialIntegrator(p, substeps=substeps, order=4)
    v = v0.values.copy()
    warmup_steps = int(round(warmup_time / p.dt))
    for i in range(warmup_steps):
        v = stepper.step_values(v)
        if not np.isfinite(v).all() or np.abs(v).max() > 1e4:
            raise DivergenceError(f"KS warm-up diverged at step {i}")
    recorded = [v.copy()]
    for i in range(steps):
        v = stepper.step_values(v)
        if not np.isfinite(v).all() or np.abs(v).max() > 1e4:
            raise DivergenceError(f"KS generation diverged at step {i}")
        recorded.append(v.copy())
    info = {"solver_id": SOLVER_IDS["ks-etdrk4"], "inner_dt": p.dt / substeps, "seed": 0}
    if meta:
        info.update(meta)
    return Trajectory(p.grid, p.dt, KS, np.stack(recorded), info)


# ---------------------------------------------------------------------------
# Dataset generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NsDatasetConfig:
    n: int = 64
    steps: int = 200
    dt: float = 0.01
    reynolds: float = 1000.0
    solver: str = "semi-implicit"  # or "high-order"
    substeps: int = 4
    grf_sigma2: float = 512.0
    grf_tau: float = 8.0
    grf_alpha: float = 4.0

    def grid(self) -> Grid:
        return Grid(ndim=2, n=self.n, delta=1.0 / self.n)


@dataclass(frozen=True)
class WaveDatasetConfig:
    n: int = 64
    steps: int = 100
    dt: float = 0.01
    c: float = 1.0
    record_every: int = 100
    grf_sigma2: float = 27.0
    grf_tau: float = 3.0
    grf_alpha: float = 2.5

    def grid(self) -> Grid:
        return Grid(ndim=2, n=self.n, delta=1.0 / self.n)


@dataclass(frozen=True)
class KsDatasetConfig:
    n: int = 512
    steps: int = 500
    dt: float = 0.05
    length: float = 64.0
    substeps: int = 4
    warmup_time: float = 50.0
    grf_sigma2: float = 1.0
    grf_tau: float = 1.0
    grf_alpha: float = 2.0

    def grid(self) -> Grid:
        return Grid(ndim=1, n=self.n, delta=self.length / self.n)


def default_config(kind: str):
    return {NS: NsDatasetConfig, WAVE: WaveDatasetConfig, KS: KsDatasetConfig}[kind]()


def trajectory_seed(seed: int, index: int) -> int:
    """Per-trajectory child seed, stable across runs and platforms."""
    ss = np.random.SeedSequence(entropy=(int(seed), int(index)))
    return int(ss.generate_state(1, np.uint64)[0])


def generate_trajectory(kind: str, config, seed: int, index: int) -> Trajectory:
    """Deterministically generate one trajectory for (seed, index)."""
    child = trajectory_seed(seed, index)
    grid = config.grid()
    if kind == NS:
        w0 = sample_grf(grid, config.grf_sigma2, config.grf_tau, config.grf_alpha, child)
        psi = poisson_solve_periodic(w0)
        p = NsParams.default(grid, dt=config.dt, reynolds=config.reynolds)
        states = [psi.values.copy()]
        for _ in range(config.steps):
            if config.solver == "semi-implicit":
                psi = ns_step_semi_implicit(psi, p)
            elif config.solver == "high-order":
                psi = ns_step_highorder(psi, p, substeps=config.substeps)
            else:
                raise InputContractError(f"unknown ns solver {config.solver!r}")
            states.append(psi.values.copy())
        solver_id = SOLVER_IDS[
            "ns-semi-implicit" if config.solver == "semi-implicit" else "ns-high-order"
        ]
        meta = {"seed": child, "solver_id": solver_id, "inner_dt": config.dt / config.substeps}
        return Trajectory(grid, config.dt, NS, np.stack(states), meta)
    if kind == WAVE:
        u0 = sample_grf(grid, config.grf_sigma2, config.grf_tau, config.grf_alpha, child)
        p = WaveParams(grid=grid, dt=config.dt, c=config.c)
        inner_dt = config.dt / config.record_every
        return wave_generate_rk4(
            u0, p, inner_dt, config.record_every, config.steps, meta={"seed": child}
        )
    if kind == KS:
        v0 = sample_grf(grid, config.grf_sigma2, config.grf_tau, config.grf_alpha, child)
        p = KsParams(grid=grid, dt=config.dt)
        return ks_generate_spectral(
            v0,
            p,
            config.steps,
            substeps=config.substeps,
            warmup_time=config.warmup_time,
            meta={"seed": child},
        )
    raise InputContractError(f"unknown pde kind {kind!r}")


def generate_dataset(kind: str, count: int, seed: int, config, out_dir) -> list:
    """Write ``count`` trajectory files; deterministic per (seed, index)."""
    from . import io as _io  # local import: io depends on Trajectory

    paths = []
    for i in range(count):
        traj = generate_trajectory(kind, config, seed, i)
        path = _io.trajectory_path(out_dir, kind, seed, i)
        _io.write_trajectory(path, traj)
        paths.append(path)
    return paths


def replace_config(config, **kwargs):
    return dataclasses.replace(config, **kwargs)
