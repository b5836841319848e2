"""Shared fixtures: desk-scale reference trajectories, built once per session."""

import numpy as np
import pytest

from pdecorrect.grids import Grid
from pdecorrect.residuals import KsParams, NsParams, WaveParams
from pdecorrect.solvers import (
    KsDatasetConfig,
    NsDatasetConfig,
    WaveDatasetConfig,
    generate_trajectory,
)


@pytest.fixture(scope="session")
def ns_reference():
    """Semi-implicit flow reference: 64x64, 210 recorded states."""
    return generate_trajectory("ns", NsDatasetConfig(n=64, steps=210), seed=7, index=0)


@pytest.fixture(scope="session")
def ns_highorder_reference():
    """Pseudo-spectral RK4 flow reference (non-zero residual under the stencil scheme)."""
    cfg = NsDatasetConfig(n=64, steps=60, solver="high-order", substeps=4)
    return generate_trajectory("ns", cfg, seed=7, index=0)


@pytest.fixture(scope="session")
def wave_reference():
    """Wave RK4 reference: 64x64, 110 recorded steps, inner step 1e-3."""
    cfg = WaveDatasetConfig(n=64, steps=110, record_every=10)
    return generate_trajectory("wave", cfg, seed=3, index=0)


@pytest.fixture(scope="session")
def ks_reference():
    """KS reference: 512 points, warm start on the attractor, 510 recorded steps."""
    return generate_trajectory("ks", KsDatasetConfig(steps=510), seed=11, index=0)


@pytest.fixture(scope="session")
def ns_params(ns_reference):
    return NsParams.default(ns_reference.grid, dt=ns_reference.dt)


@pytest.fixture(scope="session")
def wave_params(wave_reference):
    return WaveParams(grid=wave_reference.grid, dt=wave_reference.dt, c=1.0)


@pytest.fixture(scope="session")
def ks_params(ks_reference):
    return KsParams(grid=ks_reference.grid, dt=ks_reference.dt)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def small_grid(ndim=2, n=16, length=1.0):
    return Grid(ndim=ndim, n=n, delta=length / n)
