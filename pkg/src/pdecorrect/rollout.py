"""Autoregressive rollout loop, metrics, and experiment recipes.

The rollout alternates a prediction step with a configurable correction step
and records relative L2 errors, residual norms, and timings against a
reference trajectory. On top of it sit the study drivers: noise-sensitivity
sweeps, the reference-residual-subtraction comparison, the caching benchmark,
resolution scaling fits, and the Jacobian refresh-frequency comparison.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .correction import (
    CacheSlot,
    CorrectionStrategy,
    JacobianCache,
    build_dense_cache,
    build_spectral_cache,
    correct,
    correct_exact,
    strategy_step,
)
from .errors import DegenerateInputError, DivergenceError, InputContractError
from .grids import Field, relative_l2_values
from .predictors import CoarseSurrogatePredictor, NoiseSpec, oracle_noise_predict
from .residuals import IMPLICIT, SEMI_IMPLICIT, WAVE, KsModel, NsModel, StateContext
from .solvers import SOLVER_IDS, Trajectory, ns_step_semi_implicit

DIVERGENCE_THRESHOLD = 1e3


def relative_l2(pred: Field, ref: Field) -> float:
    """||pred - ref||_2 / ||ref||_2."""
    if pred.grid != ref.grid:
        raise InputContractError("fields live on different grids")
    return relative_l2_values(pred.values, ref.values)


def context_at(reference: Trajectory, kind: str, index: int) -> StateContext:
    """State context whose prediction target is reference state ``index + 1``."""
    if kind == WAVE:
        if index < 1:
            raise InputContractError("wave context needs two history levels (index >= 1)")
        return StateContext.for_wave(reference.state(index - 1), reference.state(index))
    return StateContext(kind, (reference.state(index),))


def advance_context(ctx: StateContext, new_state: Field) -> StateContext:
    if ctx.kind == WAVE:
        return StateContext.for_wave(ctx.fields[1], new_state)
    return StateContext(ctx.kind, (new_state,))


@dataclass(frozen=True)
class StepRecord:
    step: int
    time: float
    relative_l2: float
    residual_norm: float
    prediction_ns: int
    correction_ns: int


@dataclass
class RolloutReport:
    """Per-step metrics for one rollout arm.

    ``diverged_at`` is the first step index whose state left the finite /
    sub-threshold regime; records stop there but the rollout is still a valid
    experimental outcome.
    """

    records: list = field(default_factory=list)
    requested_steps: int = 0
    start_index: int = 1
    dt: float = 0.0
    diverged_at: int | None = None

    @property
    def relative_l2s(self):
        return [r.relative_l2 for r in self.records]

    @property
    def residual_norms(self):
        return [r.residual_norm for r in self.records]

    @property
    def final_relative_l2(self) -> float:
        if not self.records:
            return float("inf")
        return self.records[-1].relative_l2 if self.diverged_at is None else float("inf")

    @property
    def mean_relative_l2(self) -> float:
        return float(np.mean(self.relative_l2s)) if self.records else float("inf")


def rollout(
    model,
    reference: Trajectory,
    predictor,
    strategy: CorrectionStrategy,
    steps: int,
    cache: JacobianCache | None = None,
):
    """Run one predictor-corrector rollout against a reference trajectory.

    Seeds the initial context from the reference (two levels for the wave
    model), then repeatedly predicts, applies the correction policy, feeds the
    corrected state forward, and records metrics versus the reference. Future
    reference states are only read for metrics (and by the oracle-noise
    predictor, which is defined that way). Divergence is recorded, not raised.

    Returns (RolloutReport, Trajectory of the rolled-out states).
    """
    start = 2 if model.kind == WAVE else 1
    if reference.kind != model.kind:
        raise InputContractError("reference trajectory kind does not match the model")
    if reference.n_states < steps + start:
        raise InputContractError(
            f"reference has {reference.n_states} states; need {steps + start}"
        )
    if strategy.mode == "cached" and cache is None:
        cache = build_spectral_cache(model)
    slot = CacheSlot(cache)
    ctx = context_at(reference, model.kind, start - 1)
    report = RolloutReport(requested_steps=steps, start_index=start, dt=reference.dt)
    states = [reference.states[i].copy() for i in range(start)]

    for k in range(steps):
        target = start + k
        try:
            t0 = time.perf_counter()
            prediction = predictor.predict(ctx, target)
            t1 = time.perf_counter()
            ref_residual = None
            if strategy.subtract_reference:
                ref_ctx = context_at(reference, model.kind, target - 1)
                ref_residual = model.residual(ref_ctx, reference.state(target))
            correction = strategy_step(strategy, k, slot, model, ctx, prediction, ref_residual)
            corrected = Field(model.grid, prediction.values + correction.delta.values)
        except (InputContractError, DivergenceError, FloatingPointError, np.linalg.LinAlgError):
            report.diverged_at = k
            break
        rel = relative_l2(corrected, reference.state(target))
        if not np.isfinite(rel) or rel > DIVERGENCE_THRESHOLD:
            report.diverged_at = k
            break
        report.records.append(
            StepRecord(
                step=k,
                time=target * reference.dt,
                relative_l2=rel,
                residual_norm=correction.residual_after,
                prediction_ns=int((t1 - t0) * 1e9),
                correction_ns=int(correction.solve_time * 1e9),
            )
        )
        states.append(corrected.values)
        ctx = advance_context(ctx, corrected)

    meta = {"seed": 0, "solver_id": SOLVER_IDS["rollout"], "inner_dt": reference.dt}
    traj = Trajectory(model.grid, reference.dt, model.kind, np.stack(states), meta)
    return report, traj


def reference_residual_norms(model, reference: Trajectory, steps: int | None = None):
    """Mean absolute residual of the reference trajectory's own transitions."""
    start = 2 if model.kind == WAVE else 1
    limit = reference.n_states - start if steps is None else steps
    norms = []
    for k in range(limit):
        ctx = context_at(reference, model.kind, start + k - 1)
        res = model.residual(ctx, reference.state(start + k))
        norms.append(float(np.mean(np.abs(res.values))))
    return norms


# ---------------------------------------------------------------------------
# Sensitivity sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SensitivityRow:
    pattern: str
    level: float
    post_mean: float
    post_std: float
    seed_count: int


@dataclass(frozen=True)
class SensitivityTable:
    rows: tuple
    meta: dict

    def group(self, pattern: str):
        return [r for r in self.rows if r.pattern == pattern]


def sensitivity_sweep(
    model,
    reference: Trajectory,
    levels,
    patterns,
    seeds: int = 8,
    cache: JacobianCache | None = None,
    context_index: int | None = None,
    base_seed: int = 0,
    noise_tau: float = 8.0,
    noise_alpha: float = 4.0,
) -> SensitivityTable:
    """One-shot correction quality versus injected error level.

    For each (pattern, level, seed) the reference next state is corrupted to an
    exact pre-correction error, corrected once with the cached pseudoinverse,
    and the post-correction relative L2 error against the true next state is
    aggregated over seeds (mean and population std).
    """
    levels = [float(x) for x in levels]
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise InputContractError("noise levels must be strictly increasing")
    if cache is None:
        cache = build_spectral_cache(model)
    min_index = 1 if model.kind == WAVE else 0
    if context_index is None:
        context_index = max(min_index, min(10, reference.n_states - 2))
    if context_index < min_index or context_index + 1 >= reference.n_states:
        raise InputContractError(f"context index {context_index} outside the reference range")
    ctx = context_at(reference, model.kind, context_index)
    target = context_index + 1
    ref_next = reference.state(target)

    rows = []
    for pattern in patterns:
        for level in levels:
            post = []
            for s in range(seeds):
                spec = NoiseSpec(pattern, level, tau=noise_tau, alpha=noise_alpha)
                pred = oracle_noise_predict(ref_next, spec, base_seed + s, target)
                corr = correct(cache, model, ctx, pred)
                corrected = Field(model.grid, pred.values + corr.delta.values)
                post.append(relative_l2(corrected, ref_next))
            rows.append(
                SensitivityRow(
                    pattern=pattern,
                    level=level,
                    post_mean=float(np.mean(post)),
                    post_std=float(np.std(post)),
                    seed_count=seeds,
                )
            )
    meta = {
        "kind": model.kind,
        "context_index": context_index,
        "seeds": seeds,
        "aggregation": "mean and population std over seeds at a fixed context state",
    }
    return SensitivityTable(rows=tuple(rows), meta=meta)


# ---------------------------------------------------------------------------
# Reference-residual subtraction study
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SubtractionRow:
    step: int
    error_plain: float
    error_subtracted: float
    reference_residual_norm: float


def residual_subtraction_study(
    model, reference: Trajectory, predictor, cache: JacobianCache, steps: int
):
    """Paired one-step corrections with and without reference-residual subtraction.

    Contexts come from the reference trajectory (one-step protocol). When the
    reference was produced by a different (higher-order) discretization, its
    own residual is non-zero and acts as a floor on the plain correction error;
    subtracting it re-centers the solve on the reference exactly.
    """
    start = 2 if model.kind == WAVE else 1
    if reference.n_states < steps + start:
        raise InputContractError("reference too short for the requested steps")
    rows = []
    for k in range(steps):
        target = start + k
        ctx = context_at(reference, model.kind, target - 1)
        ref_next = reference.state(target)
        prediction = predictor.predict(ctx, target)
        ref_res = model.residual(ctx, ref_next)
        plain = correct(cache, model, ctx, prediction)
        subtracted = correct(cache, model, ctx, prediction, ref_residual=ref_res)
        err_plain = relative_l2(
            Field(model.grid, prediction.values + plain.delta.values), ref_next
        )
        err_sub = relative_l2(
            Field(model.grid, prediction.values + subtracted.delta.values), ref_next
        )
        rows.append(
            SubtractionRow(
                step=k,
                error_plain=err_plain,
                error_subtracted=err_sub,
                reference_residual_norm=float(np.mean(np.abs(ref_res.values))),
            )
        )
    return rows


# ---------------------------------------------------------------------------
# Caching benchmark and resolution scaling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BenchResult:
    n: int
    spectral_build_s: float
    dense_build_s: float
    prediction_step_s: float
    cached_spectral_step_s: float
    cached_dense_step_s: float
    exact_step_s: float

    @property
    def exact_over_cached_dense(self) -> float:
        return self.exact_step_s / self.cached_dense_step_s

    @property
    def correction_over_prediction(self) -> float:
        return self.cached_spectral_step_s / self.prediction_step_s


def _spin_up_ns_context(p, warmup_steps: int, seed: int):
    from .grids import poisson_solve_periodic, sample_grf

    w0 = sample_grf(p.grid, 512.0, 8.0, 4.0, seed)
    psi = poisson_solve_periodic(w0)
    for _ in range(warmup_steps):
        psi = ns_step_semi_implicit(psi, p)
    return StateContext.for_ns(psi)


def bench_caching(
    p, steps: int = 10, exact_steps: int = 2, warmup_steps: int = 50, seed: int = 0
) -> BenchResult:
    """Measure cache build cost and per-step correction cost per policy.

    Per-step correction numbers are the mean operational solve times (residual
    evaluation plus pseudoinverse application) on a spun-up flow state; the
    exact-per-step arm re-assembles and re-inverts the Jacobian every time and
    is therefore sampled over fewer iterations.
    """
    model = NsModel(p)
    ctx = _spin_up_ns_context(p, warmup_steps, seed)
    predictor = CoarseSurrogatePredictor(p)
    prediction = predictor.predict(ctx, 0)

    spectral = build_spectral_cache(model)
    dense = build_dense_cache(model)

    t0 = time.perf_counter()
    for _ in range(steps):
        predictor.predict(ctx, 0)
    prediction_step = (time.perf_counter() - t0) / steps

    cached_spectral = np.mean([correct(spectral, model, ctx, prediction).solve_time for _ in range(steps)])
    cached_dense = np.mean([correct(dense, model, ctx, prediction).solve_time for _ in range(steps)])
    exact = np.mean([correct_exact(model, ctx, prediction).solve_time for _ in range(exact_steps)])

    return BenchResult(
        n=p.grid.n,
        spectral_build_s=spectral.build_time,
        dense_build_s=dense.build_time,
        prediction_step_s=float(prediction_step),
        cached_spectral_step_s=float(cached_spectral),
        cached_dense_step_s=float(cached_dense),
        exact_step_s=float(exact),
    )


@dataclass(frozen=True)
class ScalingRow:
    n: int
    npoints: int
    apply_time_s: float
    memory_entries: int


@dataclass(frozen=True)
class ScalingResult:
    dense_rows: tuple
    dense_slope: float
    spectral_rows: tuple
    spectral_slope: float


def _fit_loglog_slope(rows) -> float:
    xs = np.log([r.npoints for r in rows])
    ys = np.log([r.apply_time_s for r in rows])
    return float(np.polyfit(xs, ys, 1)[0])


def _time_apply(cache: JacobianCache, b: np.ndarray, repeats: int) -> float:
    cache.apply(b)  # warm any lazy state
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        cache.apply(b)
        best = min(best, time.perf_counter() - t0)
    return best


def scaling_study(
    resolutions=(16, 24, 32, 48),
    spectral_resolutions=(64, 128, 256, 512),
    dt: float = 0.01,
    reynolds: float = 1000.0,
    repeats: int = 50,
) -> ScalingResult:
    """Pseudoinverse application cost and memory versus grid-point count.

    The dense arm materializes the full pseudoinverse (memory is exactly N^2
    entries) and times the matrix-vector solve; the spectral arm times the
    per-mode solve on larger grids where FFT cost dominates Python overhead.
    Slopes are least-squares fits of log(time) against log(N).
    """
    from .grids import Grid
    from .residuals import NsParams

    rng = np.random.default_rng(1234)
    dense_rows = []
    for n in resolutions:
        grid = Grid(ndim=2, n=n, delta=1.0 / n)
        model = NsModel(NsParams.default(grid, dt=dt, reynolds=reynolds))
        cache = build_dense_cache(model)
        b = rng.standard_normal(grid.shape)
        dense_rows.append(
            ScalingRow(
                n=n,
                npoints=grid.npoints,
                apply_time_s=_time_apply(cache, b, repeats),
                memory_entries=cache.memory_entries,
            )
        )
    spectral_rows = []
    for n in spectral_resolutions:
        grid = Grid(ndim=2, n=n, delta=1.0 / n)
        model = NsModel(NsParams.default(grid, dt=dt, reynolds=reynolds))
        cache = build_spectral_cache(model)
        b = rng.standard_normal(grid.shape)
        spectral_rows.append(
            ScalingRow(
                n=n,
                npoints=grid.npoints,
                apply_time_s=_time_apply(cache, b, repeats),
                memory_entries=cache.memory_entries,
            )
        )
    return ScalingResult(
        dense_rows=tuple(dense_rows),
        dense_slope=_fit_loglog_slope(dense_rows),
        spectral_rows=tuple(spectral_rows),
        spectral_slope=_fit_loglog_slope(spectral_rows),
    )


# ---------------------------------------------------------------------------
# Jacobian refresh-frequency study (KS)
# ---------------------------------------------------------------------------


def update_frequency_study(
    reference: Trajectory, predictor, p, k_values=(3, 10), steps: int | None = None
):
    """Compare cached, periodically rebuilt, and degraded-residual corrections.

    Arms: uncorrected baseline; cached (constant approximate Jacobian, full
    residual); cached with the frozen-advection residual; and every-k rebuilds
    of the state-dependent Jacobian for each k. Returns {label: RolloutReport}.
    """
    if steps is None:
        steps = reference.n_states - 1
    model = KsModel(p, residual_form=IMPLICIT)
    model_semi = KsModel(p, residual_form=SEMI_IMPLICIT)
    results = {}
    results["baseline"] = rollout(
        model, reference, predictor, CorrectionStrategy("none"), steps
    )[0]
    results["cached"] = rollout(
        model, reference, predictor, CorrectionStrategy("cached"), steps,
        cache=build_spectral_cache(model),
    )[0]
    results["cached-semi-residual"] = rollout(
        model_semi, reference, predictor, CorrectionStrategy("cached"), steps,
        cache=build_spectral_cache(model_semi),
    )[0]
    for k in k_values:
        results[f"every-{k}"] = rollout(
            model, reference, predictor, CorrectionStrategy("every-k", k=k), steps
        )[0]
    return results
