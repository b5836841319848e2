"""Uniform periodic grids, field containers, and discrete differential operators.

Everything here is shape- and periodicity-aware plumbing used by the residual
models and solvers: 5-point stencils, central differences, spectral derivatives,
a periodic Poisson solve, FFT wrappers, and a Gaussian-random-field sampler.
All boundaries are periodic; grids are uniform with 1 or 2 dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, InputContractError


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid: ``n`` points per axis with spacing ``delta``.

    The physical extent per axis is ``length = n * delta``. Powers of two are
    recommended for ``n`` (FFT-heavy code paths) but not required.
    """

    ndim: int
    n: int
    delta: float

    def __post_init__(self):
        if self.ndim not in (1, 2):
            raise InputContractError(f"ndim must be 1 or 2, got {self.ndim}")
        if self.n < 4:
            raise InputContractError(f"n must be >= 4, got {self.n}")
        if not (self.delta > 0):
            raise InputContractError(f"delta must be positive, got {self.delta}")

    @property
    def length(self) -> float:
        return self.n * self.delta

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.ndim

    @property
    def npoints(self) -> int:
        return self.n**self.ndim

    def coords(self):
        """Coordinate arrays (1D: x; 2D: X, Y meshgrid with 'ij' indexing)."""
        x = np.arange(self.n) * self.delta
        if self.ndim == 1:
            return x
        return np.meshgrid(x, x, indexing="ij")


def _as_readonly(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Field:
    """A real-valued state sampled on a periodic grid.

    Values are copied on construction, validated to be finite, and frozen
    (read-only array), so fields are safe to share across threads.
    """

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "values", _as_readonly(self.values))
        if self.values.shape != self.grid.shape:
            raise InputContractError(
                f"field shape {self.values.shape} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise InputContractError("field values must be finite")

    def with_values(self, values) -> "Field":
        return Field(self.grid, values)

    def __eq__(self, other):
        return (
            isinstance(other, Field)
            and self.grid == other.grid
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True)
class SpectralField:
    """Unnormalized forward-transform coefficients of a field.

    Convention: ``coefficients = fftn(values)``; the inverse transform divides
    by the total point count (numpy's default).
    """

    grid: Grid
    coefficients: np.ndarray = field(repr=False)

    def __post_init__(self):
        coeffs = np.array(self.coefficients, dtype=np.complex128, copy=True)
        coeffs.flags.writeable = False
        object.__setattr__(self, "coefficients", coeffs)
        if coeffs.shape != self.grid.shape:
            raise InputContractError(
                f"coefficient shape {coeffs.shape} does not match grid {self.grid.shape}"
            )


def fft_forward(f: Field) -> SpectralField:
    """Unnormalized forward transform of a field."""
    return SpectralField(f.grid, np.fft.fftn(f.values))


def fft_inverse(sf: SpectralField) -> Field:
    """Inverse transform back to a real field (imaginary part discarded)."""
    return Field(sf.grid, np.fft.ifftn(sf.coefficients).real)


def _require_2d(f: Field, op: str):
    if f.grid.ndim != 2:
        raise InputContractError(f"{op} requires a 2D field, got ndim={f.grid.ndim}")


def laplacian_5pt(f: Field, delta: float | None = None) -> Field:
    """5-point periodic Laplacian (f[i+1,j]+f[i-1,j]+f[i,j+1]+f[i,j-1]-4f[i,j])/delta^2."""
    _require_2d(f, "laplacian_5pt")
    d = f.grid.delta if delta is None else delta
    return Field(f.grid, laplacian_5pt_values(f.values, d))


def laplacian_5pt_values(v: np.ndarray, delta: float) -> np.ndarray:
    return (
        np.roll(v, 1, axis=0)
        + np.roll(v, -1, axis=0)
        + np.roll(v, 1, axis=1)
        + np.roll(v, -1, axis=1)
        - 4.0 * v
    ) / (delta * delta)


def laplacian_5pt_symbol(n: int, delta: float) -> np.ndarray:
    """Fourier symbol of the 5-point stencil: (2cos(2pi p/n)+2cos(2pi q/n)-4)/delta^2.

    Entry [p, q] is the (real, non-positive) eigenvalue for the mode with
    integer frequencies (p, q) in FFT ordering.
    """
    c = 2.0 * np.cos(2.0 * np.pi * np.arange(n) / n)
    return (c[:, None] + c[None, :] - 4.0) / (delta * delta)


def central_diff(f: Field, axis: int, delta: float | None = None) -> Field:
    """Periodic central difference (f[.+1]-f[.-1])/(2 delta) along ``axis``."""
    _require_2d(f, "central_diff")
    if axis not in (0, 1):
        raise InputContractError(f"axis must be 0 or 1, got {axis}")
    d = f.grid.delta if delta is None else delta
    v = f.values
    return Field(f.grid, (np.roll(v, -1, axis=axis) - np.roll(v, 1, axis=axis)) / (2.0 * d))


def spectral_wavenumbers(n: int, length: float) -> np.ndarray:
    """Signed continuum wavenumbers k = 2*pi*m/length in FFT ordering."""
    return 2.0 * np.pi * np.fft.fftfreq(n, d=1.0) * n / length


def spectral_derivative_multiplier(n: int, length: float, order: int) -> np.ndarray:
    """(ik)^order table for 1D spectral derivatives; Nyquist zeroed for odd orders."""
    if order not in (1, 2, 4):
        raise InputContractError(f"derivative order must be 1, 2 or 4, got {order}")
    k = spectral_wavenumbers(n, length)
    mult = (1j * k) ** order
    if order % 2 == 1 and n % 2 == 0:
        mult[n // 2] = 0.0  # real-output convention for the unpaired Nyquist mode
    return mult


def spectral_derivative(f: Field, order: int, length: float | None = None) -> Field:
    """Spectral derivative of a 1D periodic field for order in {1, 2, 4}."""
    if f.grid.ndim != 1:
        raise InputContractError("spectral_derivative requires a 1D field")
    L = f.grid.length if length is None else length
    mult = spectral_derivative_multiplier(f.grid.n, L, order)
    return Field(f.grid, np.fft.ifft(mult * np.fft.fft(f.values)).real)


def poisson_solve_periodic(omega: Field, delta: float | None = None) -> Field:
    """Solve laplacian_5pt(psi) = -(omega - mean(omega)) with zero-mean psi.

    The mean of omega is projected out (periodic solvability) and the constant
    mode of psi is gauged to zero, which is the minimum-norm solution of the
    singular periodic problem.
    """
    _require_2d(omega, "poisson_solve_periodic")
    d = omega.grid.delta if delta is None else delta
    lam = laplacian_5pt_symbol(omega.grid.n, d)
    rhs_hat = np.fft.fft2(omega.values)
    psi_hat = np.zeros_like(rhs_hat)
    nonzero = lam != 0.0
    psi_hat[nonzero] = -rhs_hat[nonzero] / lam[nonzero]
    return Field(omega.grid, np.fft.ifft2(psi_hat).real)


def grf_spectral_density(grid: Grid, sigma2: float, tau: float, alpha: float) -> np.ndarray:
    """Per-mode variance sigma2 * (4 pi^2 |m|^2 / L^2 + tau^2)^(-alpha).

    Uses the continuum Laplacian symbol on the torus of extent ``grid.length``;
    the mean mode is excluded from sampling so its entry is only nominal.
    """
    m = np.fft.fftfreq(grid.n) * grid.n
    if grid.ndim == 1:
        msq = m**2
    else:
        msq = m[:, None] ** 2 + m[None, :] ** 2
    eig = 4.0 * np.pi**2 * msq / grid.length**2 + tau**2
    return sigma2 * eig ** (-alpha)


def sample_grf(grid: Grid, sigma2: float, tau: float, alpha: float, seed) -> Field:
    """Draw a zero-mean Gaussian random field with an inverse-power spectrum.

    The covariance operator is sigma2 * (-Laplacian + tau^2 I)^(-alpha) with the
    continuum Laplacian on the periodic domain. Requires alpha > ndim/2 so that
    samples are square integrable. Deterministic for a given ``seed`` (an int or
    ``numpy.random.SeedSequence``).
    """
    if not (alpha > grid.ndim / 2):
        raise InputContractError(
            f"alpha must exceed ndim/2 = {grid.ndim / 2} for square-integrable samples"
        )
    rng = np.random.default_rng(seed)
    white = rng.standard_normal(grid.shape)
    noise_hat = np.fft.fftn(white)  # E|W_m|^2 = n^ndim, conjugate symmetry built in
    density = grf_spectral_density(grid, sigma2, tau, alpha)
    scale = np.sqrt(density) * grid.n ** (grid.ndim / 2) / grid.length ** (grid.ndim / 2)
    coeff = noise_hat * scale
    coeff[(0,) * grid.ndim] = 0.0
    return Field(grid, np.fft.ifftn(coeff).real)


def field_l2(values: np.ndarray) -> float:
    return float(np.linalg.norm(values.ravel()))


def relative_l2_values(pred: np.ndarray, ref: np.ndarray) -> float:
    ref_norm = field_l2(ref)
    if ref_norm == 0.0:
        raise DegenerateInputError("relative L2 error is undefined for a zero reference")
    return field_l2(pred - ref) / ref_norm
