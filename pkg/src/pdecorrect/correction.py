"""Correction of next-step predictions by inverting the linearized residual.

A prediction ``u_hat`` is improved by solving J * delta = -residual(ctx, u_hat)
in the least-squares sense, where J is the residual Jacobian with respect to
the prediction. For models whose residual is affine in the prediction the
Jacobian is a constant circulant operator, so its Moore-Penrose pseudoinverse
can be built once (dense SVD or per-Fourier-mode inversion) and reused for
every step of a rollout. Update policies cover the cached, exact-per-step, and
periodic-rebuild variants.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, InputContractError, NumericalError
from .grids import Field, Grid
from .residuals import CONSTANT_CIRCULANT, JacobianSpec

DENSE = "dense"
FOURIER = "fourier-diagonal"

DEFAULT_REL_TOL = 1e-10
DENSE_ENTRY_CAP = 8192**2  # largest dense matrix (entries) assembled by default


@dataclass(frozen=True)
class JacobianCache:
    """A prebuilt pseudoinverse of a residual Jacobian.

    ``matrix`` holds the dense pseudoinverse (rows/cols in C-ravel order) for
    the dense representation; ``inv_symbol`` the per-mode inverse table for the
    Fourier-diagonal representation. ``truncation_tol`` is the relative cutoff
    below which singular values / symbol magnitudes were zeroed.
    """

    representation: str
    grid: Grid
    truncation_tol: float
    build_time: float
    source: str
    params_hash: int
    truncated_count: int
    matrix: np.ndarray | None = field(default=None, repr=False)
    inv_symbol: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.representation not in (DENSE, FOURIER):
            raise InputContractError(f"unknown cache representation {self.representation!r}")
        if self.representation == DENSE:
            if self.matrix is None:
                raise InputContractError("dense cache requires a matrix")
            npts = self.grid.npoints
            if self.matrix.shape != (npts, npts):
                raise InputContractError("dense cache matrix shape does not match the grid")
        else:
            if self.inv_symbol is None:
                raise InputContractError("fourier cache requires an inverse symbol table")
            if self.inv_symbol.shape != self.grid.shape:
                raise InputContractError("inverse symbol shape does not match the grid")
            # Real symbol tables get a half-spectrum slice for the fast rfft path.
            sym = np.asarray(self.inv_symbol, dtype=np.complex128)
            if np.max(np.abs(sym.imag)) == 0.0:
                half = np.ascontiguousarray(sym.real[..., : self.grid.n // 2 + 1])
                object.__setattr__(self, "_rfft_inv", half)
            else:
                object.__setattr__(self, "_rfft_inv", None)

    def apply(self, b: np.ndarray) -> np.ndarray:
        """Pseudoinverse-vector product, shaped like the grid."""
        if self.representation == DENSE:
            return (self.matrix @ b.ravel()).reshape(self.grid.shape)
        rfft_inv = getattr(self, "_rfft_inv", None)
        if rfft_inv is not None:
            return np.fft.irfftn(rfft_inv * np.fft.rfftn(b), s=self.grid.shape)
        return np.fft.ifftn(self.inv_symbol * np.fft.fftn(b)).real

    @property
    def memory_entries(self) -> int:
        return int(self.matrix.size) if self.representation == DENSE else int(self.inv_symbol.size)


@dataclass(frozen=True)
class CorrectionStrategy:
    """When and how the Jacobian pseudoinverse is (re)built during a rollout."""

    mode: str  # "none" | "cached" | "exact" | "every-k"
    k: int = 1
    subtract_reference: bool = False

    def __post_init__(self):
        if self.mode not in ("none", "cached", "exact", "every-k"):
            raise InputContractError(f"unknown strategy mode {self.mode!r}")
        if self.k < 1:
            raise InputContractError("every-k requires k >= 1")


@dataclass(frozen=True)
class Correction:
    """One correction step: the additive update plus residual diagnostics.

    ``solve_time`` covers the operational cost (residual evaluation plus
    pseudoinverse application); the post-correction residual is re-evaluated
    separately for reporting and not included in that time.
    """

    delta: Field
    residual_before: float
    residual_after: float
    solve_time: float


class CacheSlot:
    """Mutable holder for the most recent cache under the every-k policy."""

    def __init__(self, cache: JacobianCache | None = None):
        self.cache = cache


def _mean_abs(values: np.ndarray) -> float:
    return float(np.mean(np.abs(values)))


def finite_difference_jacobian(model, ctx, u_hat: Field, eps: float | None = None) -> np.ndarray:
    """Column-by-column central-difference probe of the residual Jacobian.

    The generic (model-agnostic) assembly; quadratic cost in grid points, so
    only sensible on small grids.
    """
    if eps is None:
        eps = 1e-6 * max(1.0, float(np.abs(u_hat.values).max()))
    base = u_hat.values
    npts = base.size
    jac = np.empty((npts, npts))
    flat = base.ravel()
    for j in range(npts):
        bump = np.zeros(npts)
        bump[j] = eps
        plus = model.residual(ctx, Field(u_hat.grid, (flat + bump).reshape(base.shape)))
        minus = model.residual(ctx, Field(u_hat.grid, (flat - bump).reshape(base.shape)))
        jac[:, j] = (plus.values - minus.values).ravel() / (2.0 * eps)
    return jac


def assemble_dense_jacobian(
    model, ctx, u_hat: Field, memory_cap_entries: int = DENSE_ENTRY_CAP
) -> np.ndarray:
    """Dense residual Jacobian at (ctx, u_hat).

    Uses the model's analytic assembly (constant circulant symbols for the
    affine models, the state-dependent dense form for KS); refuses grids whose
    matrix would exceed the memory cap and points at the spectral path instead.
    """
    npts = model.grid.npoints
    if npts * npts > memory_cap_entries:
        raise CapacityError(
            f"dense Jacobian would need {npts}^2 entries (cap {memory_cap_entries}); "
            "use the spectral (Fourier-diagonal) path for this grid"
        )
    return model.dense_jacobian(ctx, u_hat)


def _svd_pinv(mat: np.ndarray, rel_tol: float):
    if not np.all(np.isfinite(mat)):
        raise InputContractError("matrix entries must be finite")
    try:
        u, s, vt = np.linalg.svd(mat, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        finite = np.isfinite(mat).all()
        raise NumericalError(
            f"SVD failed for a {mat.shape} matrix (finite={finite}, "
            f"max|A|={np.abs(mat).max():.3e}): {exc}"
        ) from exc
    cutoff = rel_tol * (s[0] if s.size else 0.0)
    inv_s = np.where(s > cutoff, 1.0 / np.where(s > cutoff, s, 1.0), 0.0)
    truncated = int(np.sum(s <= cutoff))
    return vt.T @ (inv_s[:, None] * u.T), truncated


def pseudoinverse_dense(mat: np.ndarray, rel_tol: float = DEFAULT_REL_TOL) -> np.ndarray:
    """SVD-based Moore-Penrose pseudoinverse with a relative singular-value cutoff."""
    pinv, _ = _svd_pinv(np.asarray(mat, dtype=np.float64), rel_tol)
    return pinv


def build_dense_cache(
    model,
    ctx=None,
    u_hat: Field | None = None,
    rel_tol: float = DEFAULT_REL_TOL,
    memory_cap_entries: int = DENSE_ENTRY_CAP,
) -> JacobianCache:
    """Assemble the dense Jacobian and cache its pseudoinverse."""
    t0 = time.perf_counter()
    jac = assemble_dense_jacobian(model, ctx, u_hat, memory_cap_entries)
    pinv, truncated = _svd_pinv(jac, rel_tol)
    return JacobianCache(
        representation=DENSE,
        grid=model.grid,
        truncation_tol=rel_tol,
        build_time=time.perf_counter() - t0,
        source=model.cache_key(),
        params_hash=model.params_hash(),
        truncated_count=truncated,
        matrix=pinv,
    )


def pseudoinverse_spectral(
    spec: JacobianSpec, rel_tol: float = DEFAULT_REL_TOL, *, source: str = "", params_hash: int = 0
) -> JacobianCache:
    """Per-mode pseudoinverse of a constant circulant Jacobian.

    For circulant operators the singular values are the symbol magnitudes, so
    the dense cutoff semantics carry over verbatim: modes with |symbol| at or
    below rel_tol * max|symbol| invert to zero.
    """
    if spec.structure != CONSTANT_CIRCULANT:
        raise InputContractError("spectral pseudoinverse requires a constant-circulant spec")
    t0 = time.perf_counter()
    sym = spec.fourier_symbol
    mag = np.abs(sym)
    cutoff = rel_tol * mag.max()
    keep = mag > cutoff
    inv = np.zeros_like(sym)
    inv[keep] = 1.0 / sym[keep]
    return JacobianCache(
        representation=FOURIER,
        grid=spec.grid,
        truncation_tol=rel_tol,
        build_time=time.perf_counter() - t0,
        source=source,
        params_hash=params_hash,
        truncated_count=int(np.sum(~keep)),
        inv_symbol=inv,
    )


def build_spectral_cache(model, rel_tol: float = DEFAULT_REL_TOL) -> JacobianCache:
    """Spectral cache for a model exposing a constant-circulant Jacobian."""
    return pseudoinverse_spectral(
        model.jacobian_spec(), rel_tol, source=model.cache_key(), params_hash=model.params_hash()
    )


def correct(
    cache: JacobianCache, model, ctx, u_hat: Field, ref_residual: Field | None = None
) -> Correction:
    """Apply a cached pseudoinverse: delta = pinv(J) @ (-residual(ctx, u_hat)).

    Residual norms (mean absolute per-point value) are reported before and
    after the update; inputs are never mutated. ``ref_residual``, when given,
    is subtracted from the residual before solving (the idealized adjustment
    that aligns the correction target with an imperfect reference).
    """
    if cache.params_hash != model.params_hash():
        raise InputContractError(
            "cache/model mismatch: the cache was built for different model parameters"
        )
    if cache.grid != model.grid or u_hat.grid != model.grid:
        raise InputContractError("cache, model and prediction must share a grid")
    t0 = time.perf_counter()
    res = model.residual(ctx, u_hat).values
    b = -res
    if ref_residual is not None:
        if ref_residual.grid != model.grid:
            raise InputContractError("reference residual grid mismatch")
        b = b + ref_residual.values
    delta = cache.apply(b)
    solve_time = time.perf_counter() - t0
    corrected = Field(u_hat.grid, u_hat.values + delta)
    after = model.residual(ctx, corrected).values
    return Correction(
        delta=Field(u_hat.grid, delta),
        residual_before=_mean_abs(res),
        residual_after=_mean_abs(after),
        solve_time=solve_time,
    )


def correct_exact(
    model,
    ctx,
    u_hat: Field,
    rel_tol: float = DEFAULT_REL_TOL,
    memory_cap_entries: int = DENSE_ENTRY_CAP,
) -> Correction:
    """Uncached baseline: assemble and invert the Jacobian at this very step."""
    t0 = time.perf_counter()
    jac = assemble_dense_jacobian(model, ctx, u_hat, memory_cap_entries)
    pinv, _ = _svd_pinv(jac, rel_tol)
    res = model.residual(ctx, u_hat).values
    delta = (pinv @ (-res).ravel()).reshape(model.grid.shape)
    solve_time = time.perf_counter() - t0
    corrected = Field(u_hat.grid, u_hat.values + delta)
    after = model.residual(ctx, corrected).values
    return Correction(
        delta=Field(u_hat.grid, delta),
        residual_before=_mean_abs(res),
        residual_after=_mean_abs(after),
        solve_time=solve_time,
    )


def subtract_reference_residual(residual: Field, ref_residual: Field) -> Field:
    """residual - ref_residual, shapes checked."""
    if residual.grid != ref_residual.grid:
        raise InputContractError("residual grids do not match")
    return Field(residual.grid, residual.values - ref_residual.values)


def strategy_step(
    strategy: CorrectionStrategy,
    step_index: int,
    cache_slot: CacheSlot,
    model,
    ctx,
    u_hat: Field,
    ref_residual: Field | None = None,
) -> Correction:
    """Dispatch one rollout step through the configured update policy.

    "none" passes the prediction through with a zero update; "cached" reuses
    the warm-up cache in the slot; "exact" rebuilds everything at this step;
    "every-k" rebuilds the dense cache at the current prediction whenever
    step_index % k == 0 (state-dependent Jacobian for KS) and reuses otherwise.
    """
    if strategy.mode == "none":
        res = model.residual(ctx, u_hat).values
        norm = _mean_abs(res)
        zero = Field(u_hat.grid, np.zeros(u_hat.grid.shape))
        return Correction(delta=zero, residual_before=norm, residual_after=norm, solve_time=0.0)
    if not strategy.subtract_reference:
        ref_residual = None
    if strategy.mode == "cached":
        if cache_slot.cache is None:
            raise InputContractError("cached strategy requires a prebuilt cache in the slot")
        return correct(cache_slot.cache, model, ctx, u_hat, ref_residual)
    if strategy.mode == "exact":
        return correct_exact(model, ctx, u_hat)
    # every-k
    if cache_slot.cache is None or step_index % strategy.k == 0:
        cache_slot.cache = build_dense_cache(model, ctx, u_hat)
    return correct(cache_slot.cache, model, ctx, u_hat, ref_residual)
