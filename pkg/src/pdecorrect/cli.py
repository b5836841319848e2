"""Command-line surface: generate, precompute, rollout, sensitivity, bench."""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import io as pio
from .correction import CorrectionStrategy, build_dense_cache, build_spectral_cache
from .errors import (
    CacheMismatchError,
    CapacityError,
    ConvergenceError,
    DegenerateInputError,
    DivergenceError,
    FormatError,
    InputContractError,
)
from .grids import Grid
from .predictors import (
    CoarseSurrogatePredictor,
    FilePredictor,
    NoiseSpec,
    OracleNoisePredictor,
)
from .residuals import KsModel, KsParams, NsModel, NsParams, WaveModel, WaveParams
from .rollout import (
    bench_caching,
    report_rows_from_reports,
    rollout,
    scaling_study,
    sensitivity_sweep,
)
from .solvers import (
    KsDatasetConfig,
    NsDatasetConfig,
    WaveDatasetConfig,
    generate_dataset,
    replace_config,
)

OPERATIONAL_ERRORS = (
    OSError,
    FormatError,
    CacheMismatchError,
    CapacityError,
    ConvergenceError,
    DegenerateInputError,
    DivergenceError,
    InputContractError,
)


def _grid_for(pde: str, n: int) -> Grid:
    if pde == "ks":
        return Grid(ndim=1, n=n, delta=pio.CANONICAL_LENGTH["ks"] / n)
    return Grid(ndim=2, n=n, delta=1.0 / n)


def _model_for(pde: str, grid: Grid, dt: float, args) -> object:
    if pde == "ns":
        return NsModel(NsParams.default(grid, dt=dt, reynolds=args.re))
    if pde == "wave":
        return WaveModel(WaveParams(grid=grid, dt=dt, c=args.wave_c))
    return KsModel(KsParams(grid=grid, dt=dt))


def _default_dt(pde: str) -> float:
    return {"ns": 0.01, "wave": 0.01, "ks": 0.05}[pde]


def _parse_float_list(text: str, flag: str, parser) -> list:
    try:
        return [float(x) for x in text.split(",") if x != ""]
    except ValueError:
        parser.error(f"{flag} expects a comma-separated list of numbers, got {text!r}")


def cmd_generate(args, parser) -> int:
    pde = args.pde
    if pde == "ns":
        config = NsDatasetConfig(
            n=args.n, steps=args.steps, dt=args.dt, reynolds=args.re,
            solver=args.solver, substeps=args.substeps,
        )
    elif pde == "wave":
        config = WaveDatasetConfig(
            n=args.n, steps=args.steps, dt=args.dt, c=args.wave_c,
            record_every=args.record_every,
        )
    else:
        config = KsDatasetConfig(
            n=args.n, steps=args.steps, dt=args.dt, substeps=args.substeps,
            warmup_time=args.warmup_time,
        )
    if args.grf_sigma2 is not None:
        config = replace_config(config, grf_sigma2=args.grf_sigma2)
    if args.grf_tau is not None:
        config = replace_config(config, grf_tau=args.grf_tau)
    if args.grf_alpha is not None:
        config = replace_config(config, grf_alpha=args.grf_alpha)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = generate_dataset(pde, args.count, args.seed, config, out_dir)
    for i, path in enumerate(paths):
        print(f"wrote {path} (pde={pde} n={args.n} steps={args.steps} seed={args.seed} index={i})")
    return 0


def cmd_precompute(args, parser) -> int:
    grid = _grid_for(args.pde, args.n)
    model = _model_for(args.pde, grid, args.dt if args.dt else _default_dt(args.pde), args)
    t0 = time.perf_counter()
    if args.method == "dense":
        cache = build_dense_cache(model, rel_tol=args.tol)
    else:
        cache = build_spectral_cache(model, rel_tol=args.tol)
    build_s = time.perf_counter() - t0
    pio.write_cache(args.out, cache)
    print(
        f"wrote {args.out} (method={args.method} n={args.n} "
        f"build_s={build_s:.3f} truncated_modes={cache.truncated_count})"
    )
    return 0


def _make_predictor(args, reference, model, parser):
    if args.predictor == "oracle-noise":
        if args.noise_level is None:
            parser.error("--noise-level is required for the oracle-noise predictor")
        spec = NoiseSpec(args.noise_pattern, args.noise_level)
        return OracleNoisePredictor(reference, spec, args.seed)
    if args.predictor == "coarse":
        return CoarseSurrogatePredictor(model.params)
    if args.pred_file is None:
        parser.error("--pred-file is required for the file predictor")
    return FilePredictor(pio.read_trajectory(args.pred_file))


def cmd_rollout(args, parser) -> int:
    if args.correct == "every-k" and args.pde != "ks":
        parser.error("--correct every-k is only supported with --pde ks")
    reference = pio.read_trajectory(args.traj)
    if reference.kind != args.pde:
        parser.error(f"--pde {args.pde} does not match the trajectory kind {reference.kind}")
    model = _model_for(args.pde, reference.grid, reference.dt, args)
    predictor = _make_predictor(args, reference, model, parser)
    start = 2 if args.pde == "wave" else 1
    steps = args.steps if args.steps else reference.n_states - start

    baseline_report, _ = rollout(
        model, reference, predictor, CorrectionStrategy("none"), steps
    )
    if args.correct == "none":
        corrected_report = baseline_report
    else:
        cache = None
        if args.correct == "cached":
            if args.cache:
                cache = pio.read_cache(args.cache, model)
            else:
                cache = build_spectral_cache(model)
        strategy = CorrectionStrategy(
            args.correct, k=args.k, subtract_reference=args.subtract_ref_residual
        )
        corrected_report, _ = rollout(model, reference, predictor, strategy, steps, cache=cache)

    rows = report_rows_from_reports(baseline_report, corrected_report, steps, reference.dt)
    pio.write_report_csv(args.report, rows)
    for label, rep in (("baseline", baseline_report), ("corrected", corrected_report)):
        if rep.diverged_at is not None:
            print(f"{label} diverged at step {rep.diverged_at}")
        else:
            print(f"{label} final relative L2: {rep.final_relative_l2:.6e}")
    print(f"wrote {args.report}")
    return 0


def cmd_sensitivity(args, parser) -> int:
    levels = _parse_float_list(args.levels, "--levels", parser)
    if any(lvl <= 0 for lvl in levels):
        parser.error("--levels must be positive")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        parser.error("--levels must be strictly increasing (no duplicates)")
    patterns = [p.strip() for p in args.patterns.split(",") if p.strip()]
    for p in patterns:
        if p not in ("uncorrelated", "grf"):
            parser.error(f"unknown noise pattern {p!r}")
    reference = pio.read_trajectory(args.traj)
    if reference.kind != args.pde:
        parser.error(f"--pde {args.pde} does not match the trajectory kind {reference.kind}")
    model = _model_for(args.pde, reference.grid, reference.dt, args)
    table = sensitivity_sweep(
        model, reference, levels, patterns, seeds=args.seeds, base_seed=args.seed
    )
    lines = ["pattern,pre_level,post_mean,post_std,seed_count"]
    for row in table.rows:
        lines.append(
            f"{row.pattern},{row.level!r},{row.post_mean!r},{row.post_std!r},{row.seed_count}"
        )
    Path(args.report).write_text("\n".join(lines) + "\n")
    print(f"wrote {args.report} ({len(table.rows)} rows)")
    return 0


def cmd_bench(args, parser) -> int:
    if args.pde != "ns":
        parser.error("bench supports only --pde ns")
    resolutions = [int(x) for x in args.resolutions.split(",") if x]
    grid = _grid_for("ns", args.n)
    params = NsParams.default(grid, dt=0.01, reynolds=args.re)
    bench = bench_caching(params, steps=args.steps)
    scaling = scaling_study(resolutions=tuple(resolutions))
    lines = ["metric,value"]
    metrics = [
        ("cache_build_dense_s", bench.dense_build_s),
        ("cache_build_spectral_s", bench.spectral_build_s),
        ("prediction_step_s", bench.prediction_step_s),
        ("cached_dense_step_s", bench.cached_dense_step_s),
        ("cached_spectral_step_s", bench.cached_spectral_step_s),
        ("exact_step_s", bench.exact_step_s),
        ("ratio_exact_over_cached_dense", bench.exact_over_cached_dense),
        ("correction_over_prediction", bench.correction_over_prediction),
        ("dense_slope", scaling.dense_slope),
        ("spectral_slope", scaling.spectral_slope),
    ]
    for row in scaling.dense_rows:
        metrics.append((f"dense_apply_s_n{row.n}", row.apply_time_s))
        metrics.append((f"dense_memory_entries_n{row.n}", row.memory_entries))
    for row in scaling.spectral_rows:
        metrics.append((f"spectral_apply_s_n{row.n}", row.apply_time_s))
    for name, value in metrics:
        lines.append(f"{name},{value!r}")
    Path(args.report).write_text("\n".join(lines) + "\n")
    print(f"wrote {args.report}")
    print(f"exact/cached-dense ratio: {bench.exact_over_cached_dense:.1f}")
    print(f"dense slope: {scaling.dense_slope:.2f}  spectral slope: {scaling.spectral_slope:.2f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pdecorrect",
        description="Generate PDE trajectories, precompute Jacobian pseudoinverse caches, "
        "and run corrected rollouts, sensitivity sweeps, and benchmarks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="generate reference trajectory files")
    gen.add_argument("--pde", required=True, choices=("ns", "wave", "ks"))
    gen.add_argument("--n", type=int, default=64)
    gen.add_argument("--steps", type=int, default=200)
    gen.add_argument("--count", type=int, default=1)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.add_argument("--dt", type=float, default=None)
    gen.add_argument("--re", type=float, default=1000.0)
    gen.add_argument("--solver", choices=("semi-implicit", "high-order"), default="semi-implicit")
    gen.add_argument("--substeps", type=int, default=4)
    gen.add_argument("--wave-c", type=float, default=1.0)
    gen.add_argument("--record-every", type=int, default=100)
    gen.add_argument("--warmup-time", type=float, default=50.0)
    gen.add_argument("--grf-sigma2", type=float, default=None)
    gen.add_argument("--grf-tau", type=float, default=None)
    gen.add_argument("--grf-alpha", type=float, default=None)

    pre = sub.add_parser("precompute", help="build and persist a Jacobian pseudoinverse cache")
    pre.add_argument("--pde", required=True, choices=("ns", "wave", "ks"))
    pre.add_argument("--n", type=int, default=64)
    pre.add_argument("--method", choices=("dense", "spectral"), default="spectral")
    pre.add_argument("--tol", type=float, default=1e-10)
    pre.add_argument("--out", required=True)
    pre.add_argument("--dt", type=float, default=None)
    pre.add_argument("--re", type=float, default=1000.0)
    pre.add_argument("--wave-c", type=float, default=1.0)

    rol = sub.add_parser("rollout", help="run baseline and corrected rollouts, write a CSV report")
    rol.add_argument("--pde", required=True, choices=("ns", "wave", "ks"))
    rol.add_argument("--traj", required=True)
    rol.add_argument("--predictor", choices=("oracle-noise", "coarse", "file"), default="coarse")
    rol.add_argument("--noise-pattern", choices=("uncorrelated", "grf"), default="uncorrelated")
    rol.add_argument("--noise-level", type=float, default=None)
    rol.add_argument("--pred-file", default=None)
    rol.add_argument("--correct", choices=("none", "cached", "exact", "every-k"), default="cached")
    rol.add_argument("--k", type=int, default=3)
    rol.add_argument("--cache", default=None)
    rol.add_argument("--subtract-ref-residual", action="store_true")
    rol.add_argument("--steps", type=int, default=None)
    rol.add_argument("--seed", type=int, default=0)
    rol.add_argument("--report", required=True)
    rol.add_argument("--re", type=float, default=1000.0)
    rol.add_argument("--wave-c", type=float, default=1.0)

    sen = sub.add_parser("sensitivity", help="noise sensitivity sweep, one-step corrections")
    sen.add_argument("--pde", required=True, choices=("ns", "wave", "ks"))
    sen.add_argument("--traj", required=True)
    sen.add_argument("--levels", default="1e-3,1e-2,1e-1,1.0")
    sen.add_argument("--patterns", default="uncorrelated,grf")
    sen.add_argument("--seeds", type=int, default=8)
    sen.add_argument("--seed", type=int, default=0)
    sen.add_argument("--report", required=True)
    sen.add_argument("--re", type=float, default=1000.0)
    sen.add_argument("--wave-c", type=float, default=1.0)

    ben = sub.add_parser("bench", help="caching benchmark and resolution scaling fits")
    ben.add_argument("--pde", required=True, choices=("ns", "wave", "ks"))
    ben.add_argument("--n", type=int, default=64)
    ben.add_argument("--steps", type=int, default=10)
    ben.add_argument("--resolutions", default="16,24,32,48")
    ben.add_argument("--report", required=True)
    ben.add_argument("--re", type=float, default=1000.0)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "generate": cmd_generate,
        "precompute": cmd_precompute,
        "rollout": cmd_rollout,
        "sensitivity": cmd_sensitivity,
        "bench": cmd_bench,
    }
    try:
        return handlers[args.command](args, parser)
    except OPERATIONAL_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
