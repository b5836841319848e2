"""Bit-exact file formats: trajectories (PHCT), Jacobian caches (PHJC), CSV reports.

All binary payloads are little-endian float64, row-major, written atomically
(temp file + rename). Headers are validated magic-first so corrupted files are
rejected before any payload is interpreted.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CacheMismatchError, FormatError
from .correction import DENSE, FOURIER, JacobianCache
from .grids import Grid
from .solvers import Trajectory

TRAJECTORY_MAGIC = b"PHCT"
CACHE_MAGIC = b"PHJC"
FORMAT_VERSION = 1

PDE_TAGS = {"ns": 0, "wave": 1, "ks": 2}
PDE_FROM_TAG = {v: k for k, v in PDE_TAGS.items()}

# The headers carry grid dims but no physical extent; each PDE kind has a
# canonical domain length from which the spacing is reconstructed on load.
CANONICAL_LENGTH = {"ns": 1.0, "wave": 1.0, "ks": 64.0}

_REPRESENTATION_TAGS = {DENSE: 0, FOURIER: 1}
_REPRESENTATION_FROM_TAG = {v: k for k, v in _REPRESENTATION_TAGS.items()}


def _atomic_write(path, data: bytes):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"failed writing {path}: {exc}") from exc
    finally:
        if tmp.exists():
            tmp.unlink(missing_ok=True)


def trajectory_path(out_dir, kind: str, seed: int, index: int) -> Path:
    return Path(out_dir) / f"{kind}_s{seed}_{index:04d}.phct"


def write_trajectory(path, traj: Trajectory):
    """Serialize a trajectory to the PHCT format."""
    tag = PDE_TAGS[traj.kind]
    dims = traj.grid.shape
    header = struct.pack("<4sIBB", TRAJECTORY_MAGIC, FORMAT_VERSION, tag, traj.grid.ndim)
    header += struct.pack("<" + "I" * len(dims), *dims)
    header += struct.pack(
        "<IdHQ",
        traj.n_states,
        traj.dt,
        int(traj.meta.get("solver_id", 0)),
        int(traj.meta.get("seed", 0)),
    )
    payload = np.ascontiguousarray(traj.states, dtype="<f8").tobytes()
    _atomic_write(path, header + payload)


def _read_exact(fh, count: int, what: str) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise FormatError(f"truncated file while reading {what}")
    return data


def read_trajectory(path) -> Trajectory:
    """Parse a PHCT file; magic and version are checked before anything else."""
    with open(path, "rb") as fh:
        magic, version, tag, ndim = struct.unpack("<4sIBB", _read_exact(fh, 10, "header"))
        if magic != TRAJECTORY_MAGIC:
            raise FormatError(f"bad magic {magic!r}; expected {TRAJECTORY_MAGIC!r}")
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported trajectory format version {version}")
        if tag not in PDE_FROM_TAG:
            raise FormatError(f"unknown pde tag {tag}")
        if ndim not in (1, 2):
            raise FormatError(f"invalid ndim {ndim}")
        dims = struct.unpack("<" + "I" * ndim, _read_exact(fh, 4 * ndim, "dims"))
        if any(d != dims[0] for d in dims):
            raise FormatError(f"non-square grids are not supported, got {dims}")
        step_count, dt, solver_id, seed = struct.unpack(
            "<IdHQ", _read_exact(fh, 22, "header tail")
        )
        kind = PDE_FROM_TAG[tag]
        n = dims[0]
        expected = step_count * int(np.prod(dims)) * 8
        payload = fh.read()
        if len(payload) != expected:
            raise FormatError(
                f"payload length {len(payload)} != expected {expected} "
                f"({step_count} states of {dims})"
            )
    states = np.frombuffer(payload, dtype="<f8").reshape((step_count, *dims))
    grid = Grid(ndim=ndim, n=n, delta=CANONICAL_LENGTH[kind] / n)
    meta = {"seed": seed, "solver_id": solver_id, "inner_dt": dt}
    return Trajectory(grid, dt, kind, states, meta)


def write_cache(path, cache: JacobianCache):
    """Serialize a Jacobian cache to the PHJC format."""
    rep = _REPRESENTATION_TAGS[cache.representation]
    dims = cache.grid.shape
    header = struct.pack("<4sIBB", CACHE_MAGIC, FORMAT_VERSION, rep, cache.grid.ndim)
    header += struct.pack("<" + "I" * len(dims), *dims)
    header += struct.pack("<dQ", cache.truncation_tol, cache.params_hash)
    if cache.representation == DENSE:
        payload = np.ascontiguousarray(cache.matrix, dtype="<f8").tobytes()
    else:
        payload = np.ascontiguousarray(cache.inv_symbol, dtype="<c16").tobytes()
    _atomic_write(path, header + payload)


def read_cache(path, model=None) -> JacobianCache:
    """Parse a PHJC file; if a model is given its parameter hash must match."""
    with open(path, "rb") as fh:
        magic, version, rep_tag, ndim = struct.unpack("<4sIBB", _read_exact(fh, 10, "header"))
        if magic != CACHE_MAGIC:
            raise FormatError(f"bad magic {magic!r}; expected {CACHE_MAGIC!r}")
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported cache format version {version}")
        if rep_tag not in _REPRESENTATION_FROM_TAG:
            raise FormatError(f"unknown representation tag {rep_tag}")
        if ndim not in (1, 2):
            raise FormatError(f"invalid ndim {ndim}")
        dims = struct.unpack("<" + "I" * ndim, _read_exact(fh, 4 * ndim, "dims"))
        truncation_tol, params_hash = struct.unpack("<dQ", _read_exact(fh, 16, "header tail"))
        representation = _REPRESENTATION_FROM_TAG[rep_tag]
        npoints = int(np.prod(dims))
        payload = fh.read()
    if model is not None and model.params_hash() != params_hash:
        raise CacheMismatchError(
            "cache parameter hash does not match the model; rebuild the cache"
        )
    n = dims[0]
    # Grids are reconstructed at unit spacing times whatever the model implies;
    # the spacing itself is irrelevant to applying a stored pseudoinverse.
    if model is not None:
        grid = model.grid
        if grid.shape != tuple(dims):
            raise CacheMismatchError(f"cache dims {dims} do not match the model grid")
    else:
        grid = Grid(ndim=ndim, n=n, delta=1.0 / n if ndim == 2 else 64.0 / n)
    if representation == DENSE:
        expected = npoints * npoints * 8
        if len(payload) != expected:
            raise FormatError(f"dense payload length {len(payload)} != {expected}")
        matrix = np.frombuffer(payload, dtype="<f8").reshape((npoints, npoints)).copy()
        truncated = 0
        inv_symbol = None
    else:
        expected = npoints * 16
        if len(payload) != expected:
            raise FormatError(f"symbol payload length {len(payload)} != {expected}")
        inv_symbol = np.frombuffer(payload, dtype="<c16").reshape(dims).copy()
        truncated = int(np.sum(inv_symbol == 0.0))
        matrix = None
    return JacobianCache(
        representation=representation,
        grid=grid,
        truncation_tol=truncation_tol,
        build_time=0.0,
        source=f"file:{path}",
        params_hash=params_hash,
        truncated_count=truncated,
        matrix=matrix,
        inv_symbol=inv_symbol,
    )


# ---------------------------------------------------------------------------
# CSV reports
# ---------------------------------------------------------------------------

REPORT_COLUMNS = (
    "step",
    "time",
    "rel_l2_baseline",
    "rel_l2_corrected",
    "residual_baseline",
    "residual_corrected",
    "predict_ns",
    "correct_ns",
)

DIVERGED = "diverged"


@dataclass(frozen=True)
class ReportRow:
    step: int
    time: float
    rel_l2_baseline: object
    rel_l2_corrected: object
    residual_baseline: object
    residual_corrected: object
    predict_ns: object
    correct_ns: object


def _format_cell(value) -> str:
    if isinstance(value, str):
        if value != DIVERGED:
            raise FormatError(f"non-numeric cell must be {DIVERGED!r}, got {value!r}")
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _parse_cell(text: str, integer: bool):
    if text == DIVERGED:
        return DIVERGED
    try:
        return int(text) if integer else float(text)
    except ValueError as exc:
        raise FormatError(f"unparseable numeric cell {text!r}") from exc


def write_report_csv(path, rows):
    lines = [",".join(REPORT_COLUMNS)]
    for r in rows:
        lines.append(
            ",".join(
                (
                    str(int(r.step)),
                    repr(float(r.time)),
                    _format_cell(r.rel_l2_baseline),
                    _format_cell(r.rel_l2_corrected),
                    _format_cell(r.residual_baseline),
                    _format_cell(r.residual_corrected),
                    _format_cell(r.predict_ns),
                    _format_cell(r.correct_ns),
                )
            )
        )
    _atomic_write(path, ("\n".join(lines) + "\n").encode())


def read_report_csv(path):
    with open(path, "rb") as fh:
        text = fh.read().decode()
    lines = text.split("\n")
    if not lines or lines[0] != ",".join(REPORT_COLUMNS):
        raise FormatError("report header row does not match the schema")
    if lines[-1] != "":
        raise FormatError("report must be newline-terminated")
    rows = []
    for line in lines[1:-1]:
        cells = line.split(",")
        if len(cells) != len(REPORT_COLUMNS):
            raise FormatError(f"expected {len(REPORT_COLUMNS)} columns, got {len(cells)}")
        rows.append(
            ReportRow(
                step=int(cells[0]),
                time=float(cells[1]),
                rel_l2_baseline=_parse_cell(cells[2], integer=False),
                rel_l2_corrected=_parse_cell(cells[3], integer=False),
                residual_baseline=_parse_cell(cells[4], integer=False),
                residual_corrected=_parse_cell(cells[5], integer=False),
                predict_ns=_parse_cell(cells[6], integer=True),
                correct_ns=_parse_cell(cells[7], integer=True),
            )
        )
    return rows


def report_rows_from_reports(baseline, corrected, steps: int, dt: float):
    """Merge a baseline and a corrected rollout report into CSV rows."""
    base_records = {r.step: r for r in baseline.records}
    corr_records = {r.step: r for r in corrected.records}
    start = corrected.start_index
    rows = []
    for k in range(steps):
        b = base_records.get(k)
        c = corr_records.get(k)
        rows.append(
            ReportRow(
                step=k,
                time=(start + k) * dt,
                rel_l2_baseline=b.relative_l2 if b else DIVERGED,
                rel_l2_corrected=c.relative_l2 if c else DIVERGED,
                residual_baseline=b.residual_norm if b else DIVERGED,
                residual_corrected=c.residual_norm if c else DIVERGED,
                predict_ns=c.prediction_ns if c else DIVERGED,
                correct_ns=c.correction_ns if c else DIVERGED,
            )
        )
    return rows
