"""Pluggable next-step prediction sources.

Three stand-ins for an expensive learned one-step operator: the reference next
state corrupted by controlled noise (for sensitivity protocols), a coarse
numerical surrogate whose structured one-step errors accumulate over rollouts,
and predictions replayed from a trajectory file. All predictors are pure
functions of (seed, step index, input state).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, InputContractError
from .grids import Field, field_l2, sample_grf
from .residuals import KS, NS, WAVE, KsParams, NsParams, StateContext, WaveParams
from .solvers import (
    KsExponentialIntegrator,
    Trajectory,
    ns_cn_solve,
    ns_explicit_terms,
    wave_implicit_step,
)

UNCORRELATED = "uncorrelated"
CORRELATED_GRF = "grf"
_PATTERN_TAGS = {UNCORRELATED: 0, CORRELATED_GRF: 1}


@dataclass(frozen=True)
class NoiseSpec:
    """Noise pattern plus the exact relative L2 error it should induce."""

    pattern: str
    level: float
    tau: float = 8.0
    alpha: float = 4.0

    def __post_init__(self):
        if self.pattern not in _PATTERN_TAGS:
            raise InputContractError(f"unknown noise pattern {self.pattern!r}")
        if self.level < 0:
            raise InputContractError("noise level must be non-negative")


def oracle_noise_predict(ref_next: Field, spec: NoiseSpec, seed: int, step: int) -> Field:
    """Corrupt the reference next state to an exact relative L2 error.

    The raw noise draw is rescaled so ||out - ref|| / ||ref|| equals
    ``spec.level`` identically; the draw is deterministic in (seed, step).
    """
    if spec.level == 0.0:
        return Field(ref_next.grid, ref_next.values)
    ref_norm = field_l2(ref_next.values)
    if ref_norm == 0.0:
        raise DegenerateInputError("cannot scale noise against an all-zero reference state")
    ss = np.random.SeedSequence(entropy=(int(seed), int(step), _PATTERN_TAGS[spec.pattern]))
    if spec.pattern == UNCORRELATED:
        noise = np.random.default_rng(ss).standard_normal(ref_next.grid.shape)
    else:
        noise = sample_grf(ref_next.grid, 1.0, spec.tau, spec.alpha, ss).values
    noise_norm = field_l2(noise)
    if noise_norm == 0.0:
        raise DegenerateInputError("degenerate zero noise draw")
    return Field(ref_next.grid, ref_next.values + noise * (spec.level * ref_norm / noise_norm))


@dataclass(frozen=True)
class SurrogateConfig:
    """Degradation knobs for the coarse numerical surrogates.

    The defaults were calibrated so one-step relative errors land well inside
    the regime where linearized correction is effective (roughly 1e-6..1e-2
    against the exact steppers on attractor states). The forced flow keeps its
    energy in the lowest few modes, so the advection cutoff has to sit deep in
    the spectrum to produce a meaningfully imperfect surrogate.
    """

    ns_advection_cutoff: float = 0.06  # fraction of the Nyquist index kept in advection
    wave_laplacian_deficit: float = 1e-3  # 5-point Laplacian scaled by (1 - deficit)
    ks_substeps: int = 1
    ks_order: int = 1  # exponential Euler; the reference uses the 4-stage scheme
    ks_mode_cutoff: float = 0.75


def _lowpass_2d(values: np.ndarray, cutoff_frac: float) -> np.ndarray:
    n = values.shape[0]
    modes = np.abs(np.fft.fftfreq(n) * n)
    keep_limit = cutoff_frac * (n // 2)
    hat = np.fft.rfft2(values)
    hat[modes > keep_limit, :] = 0.0
    cols = np.arange(hat.shape[1])
    hat[:, cols > keep_limit] = 0.0
    return np.fft.irfft2(hat, s=values.shape)


def ns_coarse_step(psi_t: Field, p: NsParams, cutoff_frac: float) -> Field:
    """Semi-implicit step with the advection term low-pass filtered."""
    psi = psi_t.values
    w, adv, lap_w = ns_explicit_terms(psi, p)
    adv = _lowpass_2d(adv, cutoff_frac)
    d = p.grid.delta
    explicit = w / p.dt - adv / (4.0 * d * d) + (0.5 / p.reynolds) * lap_w + p.forcing.values
    return Field(p.grid, ns_cn_solve(explicit, p))


def coarse_surrogate_predict(ctx: StateContext, params, config: SurrogateConfig | None = None) -> Field:
    """One step of a degraded integrator for the context's PDE kind."""
    config = config or SurrogateConfig()
    if ctx.kind == NS:
        if not isinstance(params, NsParams):
            raise InputContractError("ns context requires NsParams")
        return ns_coarse_step(ctx.current, params, config.ns_advection_cutoff)
    if ctx.kind == WAVE:
        if not isinstance(params, WaveParams):
            raise InputContractError("wave context requires WaveParams")
        degraded = WaveParams(
            grid=params.grid,
            dt=params.dt,
            c=params.c * float(np.sqrt(1.0 - config.wave_laplacian_deficit)),
        )
        return wave_implicit_step(ctx.fields[0], ctx.fields[1], degraded)
    if ctx.kind == KS:
        if not isinstance(params, KsParams):
            raise InputContractError("ks context requires KsParams")
        stepper = KsExponentialIntegrator(
            params,
            substeps=config.ks_substeps,
            order=config.ks_order,
            cutoff_frac=config.ks_mode_cutoff,
        )
        return Field(params.grid, stepper.step_values(ctx.current.values))
    raise InputContractError(f"unknown context kind {ctx.kind!r}")


def file_predict(store: Trajectory, step: int) -> Field:
    """Stored prediction for ``step``; pure read."""
    if step < 0 or step >= store.n_states:
        raise IndexError(f"prediction step {step} outside stored range [0, {store.n_states})")
    return store.state(step)


class OracleNoisePredictor:
    """Reads the reference next state and corrupts it to a target error level."""

    kind = "oracle-noise"

    def __init__(self, reference: Trajectory, spec: NoiseSpec, seed: int):
        self.reference = reference
        self.spec = spec
        self.seed = seed

    def predict(self, ctx: StateContext, target_index: int) -> Field:
        return oracle_noise_predict(self.reference.state(target_index), self.spec, self.seed, target_index)


class CoarseSurrogatePredictor:
    """Degraded numerical stepper advancing the rollout's own state."""

    kind = "coarse"

    def __init__(self, params, config: SurrogateConfig | None = None):
        self.params = params
        self.config = config or SurrogateConfig()
        # KS keeps one integrator across steps; its tables depend only on params.
        self._ks_stepper = None
        if isinstance(params, KsParams):
            self._ks_stepper = KsExponentialIntegrator(
                params,
                substeps=self.config.ks_substeps,
                order=self.config.ks_order,
                cutoff_frac=self.config.ks_mode_cutoff,
            )

    def predict(self, ctx: StateContext, target_index: int) -> Field:
        if self._ks_stepper is not None and ctx.kind == KS:
            return Field(self.params.grid, self._ks_stepper.step_values(ctx.current.values))
        return coarse_surrogate_predict(ctx, self.params, self.config)


class FilePredictor:
    """Replays predictions stored in a trajectory file."""

    kind = "file"

    def __init__(self, store: Trajectory):
        self.store = store

    def predict(self, ctx: StateContext, target_index: int) -> Field:
        if ctx.grid != self.store.grid:
            raise InputContractError("stored predictions live on a different grid")
        return file_predict(self.store, target_index)
