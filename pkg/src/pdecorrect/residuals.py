"""Discrete residual operators for the three supported PDEs.

Each residual measures, per grid point, how far a candidate next state is from
satisfying the governing time-discretization given the current state(s):

* 2D incompressible flow in vorticity/stream-function form: explicit advection,
  Crank-Nicolson (trapezoidal) diffusion, constant forcing.
* 2D wave equation: central second time difference, Laplacian averaged over the
  three time levels.
* 1D fourth-order dissipative equation (Kuramoto-Sivashinsky): trapezoidal in
  time with spectral space derivatives; the quadratic advection makes this the
  only residual that is nonlinear in the prediction.

Alongside each residual lives a description of its Jacobian with respect to the
predicted state: a constant circulant symbol where the residual is affine in
the prediction, and a dense state-dependent assembly for the nonlinear case.
"""

from __future__ import annotations

import functools
import hashlib
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InputContractError
from .grids import (
    Field,
    Grid,
    laplacian_5pt_symbol,
    spectral_derivative_multiplier,
    spectral_wavenumbers,
)

NS = "ns"
WAVE = "wave"
KS = "ks"

CONSTANT_CIRCULANT = "constant-circulant"
STATE_DEPENDENT = "state-dependent"


@dataclass(frozen=True)
class StateContext:
    """Per-PDE state history feeding a residual evaluation.

    One level for the flow and KS models, two (previous, current) for the wave
    model, which discretizes a second time derivative.
    """

    kind: str
    fields: tuple

    @classmethod
    def for_ns(cls, psi_t: Field) -> "StateContext":
        return cls(NS, (psi_t,))

    @classmethod
    def for_wave(cls, u_prev: Field, u_curr: Field) -> "StateContext":
        if u_prev.grid != u_curr.grid:
            raise InputContractError("wave context levels must share a grid")
        return cls(WAVE, (u_prev, u_curr))

    @classmethod
    def for_ks(cls, v_t: Field) -> "StateContext":
        return cls(KS, (v_t,))

    @property
    def grid(self) -> Grid:
        return self.fields[0].grid

    @property
    def current(self) -> Field:
        return self.fields[-1]


@dataclass(frozen=True)
class JacobianSpec:
    """Structure of d(residual)/d(prediction) for one model.

    ``fourier_symbol`` holds the per-mode multiplier table (FFT ordering) when
    the Jacobian is a constant circulant operator, i.e. independent of both the
    state context and the prediction.
    """

    structure: str
    grid: Grid
    fourier_symbol: np.ndarray | None = None

    def __post_init__(self):
        if self.structure == CONSTANT_CIRCULANT:
            if self.fourier_symbol is None:
                raise InputContractError("constant-circulant spec requires a symbol table")
            sym = np.array(self.fourier_symbol, dtype=np.complex128, copy=True)
            sym.flags.writeable = False
            object.__setattr__(self, "fourier_symbol", sym)


@dataclass(frozen=True)
class NsParams:
    """Vorticity-equation parameters: Reynolds number, time step, forcing."""

    grid: Grid
    dt: float
    reynolds: float
    forcing: Field

    def __post_init__(self):
        if not (self.reynolds > 0):
            raise InputContractError("reynolds must be positive")
        if not (self.dt > 0):
            raise InputContractError("dt must be positive")
        if self.forcing.grid != self.grid:
            raise InputContractError("forcing must live on the model grid")

    @classmethod
    def default(cls, grid: Grid, dt: float = 0.01, reynolds: float = 1000.0) -> "NsParams":
        return cls(grid=grid, dt=dt, reynolds=reynolds, forcing=default_ns_forcing(grid))


def default_ns_forcing(grid: Grid) -> Field:
    """0.1 sin(2 pi (x + y)) + cos(2 pi (x + y)) on the unit torus scale."""
    x, y = grid.coords()
    s = 2.0 * np.pi * (x + y) / grid.length
    return Field(grid, 0.1 * np.sin(s) + np.cos(s))


@dataclass(frozen=True)
class WaveParams:
    grid: Grid
    dt: float
    c: float = 1.0

    def __post_init__(self):
        if not (self.c > 0):
            raise InputContractError("wave speed must be positive")
        if not (self.dt > 0):
            raise InputContractError("dt must be positive")


@dataclass(frozen=True)
class KsParams:
    grid: Grid
    dt: float = 0.05

    def __post_init__(self):
        if self.grid.ndim != 1:
            raise InputContractError("KS model is one-dimensional")
        if not (self.dt > 0):
            raise InputContractError("dt must be positive")

    @classmethod
    def default(cls, n: int = 512, length: float = 64.0, dt: float = 0.05) -> "KsParams":
        return cls(grid=Grid(ndim=1, n=n, delta=length / n), dt=dt)


def _check_field(f: Field, grid: Grid, name: str):
    if f.grid != grid:
        raise InputContractError(f"{name} grid does not match the model grid")


def vorticity_from_stream(psi: Field, delta: float | None = None) -> Field:
    """omega = -laplacian_5pt(psi)."""
    d = psi.grid.delta if delta is None else delta
    return Field(psi.grid, -_kernels.lap5(psi.values, d))


def ns_residual(ctx: StateContext, psi_hat: Field, p: NsParams) -> Field:
    """Per-point flow residual of the prediction psi_hat given context psi_t.

    Vorticities are derived internally via the 5-point stencil. The residual is
    affine in psi_hat: its Jacobian is the constant circulant operator described
    by ``ns_jacobian_symbol``.
    """
    if ctx.kind != NS:
        raise InputContractError(f"expected ns context, got {ctx.kind}")
    _check_field(ctx.current, p.grid, "psi_t")
    _check_field(psi_hat, p.grid, "psi_hat")
    psi = ctx.current.values
    d = p.grid.delta
    w = -_kernels.lap5(psi, d)
    w_hat = -_kernels.lap5(psi_hat.values, d)
    res = _kernels.ns_residual_terms(psi, w, w_hat, p.forcing.values, p.dt, p.reynolds, d)
    return Field(p.grid, res)


def ns_jacobian_symbol(p: NsParams) -> JacobianSpec:
    """Constant circulant Jacobian of the flow residual wrt the prediction.

    Per-mode value lam/dt - (0.5/Re) lam^2 with lam the 5-point stencil symbol;
    this is (-1/dt + (0.5/Re) Lap) applied to (-Lap), the composition through
    the internally derived vorticity.
    """
    lam = laplacian_5pt_symbol(p.grid.n, p.grid.delta)
    sym = lam / p.dt - (0.5 / p.reynolds) * lam**2
    return JacobianSpec(CONSTANT_CIRCULANT, p.grid, sym)


def wave_residual(ctx: StateContext, u_hat: Field, p: WaveParams) -> Field:
    """(u_hat + u_prev - 2 u_curr)/dt^2 - (c^2/3) (lap u_prev + lap u_curr + lap u_hat)."""
    if ctx.kind != WAVE:
        raise InputContractError(f"expected wave context, got {ctx.kind}")
    u_prev, u_curr = ctx.fields
    _check_field(u_prev, p.grid, "u_prev")
    _check_field(u_curr, p.grid, "u_curr")
    _check_field(u_hat, p.grid, "u_hat")
    res = _kernels.wave_residual_terms(
        u_prev.values, u_curr.values, u_hat.values, p.dt, p.c**2 / 3.0, p.grid.delta
    )
    return Field(p.grid, res)


def wave_jacobian_symbol(p: WaveParams) -> JacobianSpec:
    """1/dt^2 - (c^2/3) lam per mode; strictly positive, hence invertible."""
    lam = laplacian_5pt_symbol(p.grid.n, p.grid.delta)
    return JacobianSpec(CONSTANT_CIRCULANT, p.grid, 1.0 / p.dt**2 - (p.c**2 / 3.0) * lam)


@functools.lru_cache(maxsize=8)
def _ks_multipliers(n: int, length: float):
    """rfft-domain multiplier tables for v', and v'' + v''''."""
    k = 2.0 * np.pi * np.arange(n // 2 + 1) / length
    lin = -(k**2) + k**4
    ik = 1j * k
    if n % 2 == 0:
        ik = ik.copy()
        ik[-1] = 0.0
    lin.flags.writeable = False
    ik.flags.writeable = False
    return lin, ik


def _ks_linear_and_slope(v: np.ndarray, n: int, length: float):
    lin_mult, ik = _ks_multipliers(n, length)
    v_hat = np.fft.rfft(v)
    return np.fft.irfft(lin_mult * v_hat, n=n), np.fft.irfft(ik * v_hat, n=n)


def ks_residual(ctx: StateContext, v_hat: Field, p: KsParams) -> Field:
    """Fully implicit (trapezoidal) residual; quadratic in the prediction.

    r = (v_hat - v_t)/dt + 0.5 (v_t'' + v_t'''' + v_t v_t' + v_hat'' + v_hat''''
    + v_hat v_hat'), all space derivatives spectral.
    """
    if ctx.kind != KS:
        raise InputContractError(f"expected ks context, got {ctx.kind}")
    _check_field(ctx.current, p.grid, "v_t")
    _check_field(v_hat, p.grid, "v_hat")
    n, L = p.grid.n, p.grid.length
    v = ctx.current.values
    vh = v_hat.values
    lin_t, dv_t = _ks_linear_and_slope(v, n, L)
    lin_h, dv_h = _ks_linear_and_slope(vh, n, L)
    res = (vh - v) / p.dt + 0.5 * (lin_t + v * dv_t + lin_h + vh * dv_h)
    return Field(p.grid, res)


def ks_residual_semi_implicit(ctx: StateContext, v_hat: Field, p: KsParams) -> Field:
    """Degraded residual with the advection term frozen at v_t (fully explicit).

    Affine in the prediction with Jacobian exactly ``ks_jacobian_semi_implicit``;
    used to quantify how much residual fidelity matters compared to Jacobian
    fidelity in the correction loop.
    """
    if ctx.kind != KS:
        raise InputContractError(f"expected ks context, got {ctx.kind}")
    _check_field(ctx.current, p.grid, "v_t")
    _check_field(v_hat, p.grid, "v_hat")
    n, L = p.grid.n, p.grid.length
    v = ctx.current.values
    lin_t, dv_t = _ks_linear_and_slope(v, n, L)
    lin_h, _ = _ks_linear_and_slope(v_hat.values, n, L)
    res = (v_hat.values - v) / p.dt + 0.5 * (lin_t + lin_h) + v * dv_t
    return Field(p.grid, res)


def ks_jacobian_semi_implicit(p: KsParams) -> JacobianSpec:
    """Constant circulant approximation 1/dt + 0.5 (-k^2 + k^4) per mode.

    This is the Jacobian of the residual with the advection term frozen; it is
    what gets cached and inverted once for the rollout fast path.
    """
    k = spectral_wavenumbers(p.grid.n, p.grid.length)
    return JacobianSpec(CONSTANT_CIRCULANT, p.grid, 1.0 / p.dt + 0.5 * (-(k**2) + k**4))


@functools.lru_cache(maxsize=8)
def _ks_dense_operators(n: int, length: float):
    """Dense spectral differentiation matrices D1 and D2 + D4."""
    d1 = circulant_dense_from_symbol(spectral_derivative_multiplier(n, length, 1))
    d2 = circulant_dense_from_symbol(spectral_derivative_multiplier(n, length, 2))
    d4 = circulant_dense_from_symbol(spectral_derivative_multiplier(n, length, 4))
    d24 = d2 + d4
    d1.flags.writeable = False
    d24.flags.writeable = False
    return d1, d24


def ks_jacobian_implicit(ctx: StateContext, v_hat: Field, p: KsParams) -> np.ndarray:
    """Dense state-dependent Jacobian of the fully implicit residual.

    J = I/dt + 0.5 (D2 + D4 + diag(D1 v_hat) + diag(v_hat) D1). Only intended
    for 1D grids, where the dense matrices stay small.
    """
    _check_field(v_hat, p.grid, "v_hat")
    n = p.grid.n
    d1, d24 = _ks_dense_operators(n, p.grid.length)
    vh = v_hat.values
    jac = 0.5 * (d24 + vh[:, None] * d1)
    jac[np.diag_indices(n)] += 1.0 / p.dt + 0.5 * (d1 @ vh)
    return jac


def circulant_dense_from_symbol(symbol: np.ndarray) -> np.ndarray:
    """Materialize the dense matrix of a circulant operator from its symbol.

    Works for 1D and 2D symbol tables; the operator is assumed real (symbol
    conjugate-symmetric), and rows/columns are ordered by C-raveling the grid.
    """
    kernel = np.fft.ifftn(symbol).real
    if kernel.ndim == 1:
        n = kernel.shape[0]
        mat = np.empty((n, n))
        for j in range(n):
            mat[:, j] = np.roll(kernel, j)
        return mat
    n0, n1 = kernel.shape
    npts = n0 * n1
    mat = np.empty((npts, npts))
    for a in range(n0):
        rolled_a = np.roll(kernel, a, axis=0)
        for b in range(n1):
            mat[:, a * n1 + b] = np.roll(rolled_a, b, axis=1).ravel()
    return mat


class _ModelBase:
    """Uniform facade over (residual, Jacobian) pairs used by the corrector."""

    kind: str

    @property
    def grid(self) -> Grid:
        return self.params.grid

    @property
    def dt(self) -> float:
        return self.params.dt

    def cache_key(self) -> str:
        raise NotImplementedError

    def params_hash(self) -> int:
        digest = hashlib.sha256(self.cache_key().encode()).digest()
        return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class NsModel(_ModelBase):
    params: NsParams
    kind = NS

    def residual(self, ctx: StateContext, u_hat: Field) -> Field:
        return ns_residual(ctx, u_hat, self.params)

    def jacobian_spec(self) -> JacobianSpec:
        return ns_jacobian_symbol(self.params)

    def dense_jacobian(self, ctx=None, u_hat=None) -> np.ndarray:
        return circulant_dense_from_symbol(self.jacobian_spec().fourier_symbol)

    def cache_key(self) -> str:
        p = self.params
        fhash = hashlib.sha256(p.forcing.values.tobytes()).hexdigest()[:16]
        return (
            f"ns:n={p.grid.n}:delta={p.grid.delta!r}:dt={p.dt!r}"
            f":re={p.reynolds!r}:forcing={fhash}"
        )


@dataclass(frozen=True)
class WaveModel(_ModelBase):
    params: WaveParams
    kind = WAVE

    def residual(self, ctx: StateContext, u_hat: Field) -> Field:
        return wave_residual(ctx, u_hat, self.params)

    def jacobian_spec(self) -> JacobianSpec:
        return wave_jacobian_symbol(self.params)

    def dense_jacobian(self, ctx=None, u_hat=None) -> np.ndarray:
        return circulant_dense_from_symbol(self.jacobian_spec().fourier_symbol)

    def cache_key(self) -> str:
        p = self.params
        return f"wave:n={p.grid.n}:delta={p.grid.delta!r}:dt={p.dt!r}:c={p.c!r}"


IMPLICIT = "implicit"
SEMI_IMPLICIT = "semi-implicit"


@dataclass(frozen=True)
class KsModel(_ModelBase):
    """KS model; ``residual_form`` selects the implicit or frozen-advection residual."""

    params: KsParams
    residual_form: str = IMPLICIT
    kind = KS

    def __post_init__(self):
        if self.residual_form not in (IMPLICIT, SEMI_IMPLICIT):
            raise InputContractError(f"unknown residual form {self.residual_form!r}")

    def residual(self, ctx: StateContext, u_hat: Field) -> Field:
        if self.residual_form == IMPLICIT:
            return ks_residual(ctx, u_hat, self.params)
        return ks_residual_semi_implicit(ctx, u_hat, self.params)

    def jacobian_spec(self) -> JacobianSpec:
        return ks_jacobian_semi_implicit(self.params)

    def dense_jacobian(self, ctx: StateContext, u_hat: Field) -> np.ndarray:
        if self.residual_form == SEMI_IMPLICIT:
            return circulant_dense_from_symbol(self.jacobian_spec().fourier_symbol)
        return ks_jacobian_implicit(ctx, u_hat, self.params)

    def cache_key(self) -> str:
        p = self.params
        return (
            f"ks:n={p.grid.n}:delta={p.grid.delta!r}:dt={p.dt!r}:form={self.residual_form}"
        )
