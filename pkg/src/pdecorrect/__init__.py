"""Predictor-corrector toolkit for stabilizing approximate PDE rollouts.

Corrects imperfect next-step predictions by solving the linearized residual
equation of the target time discretization, with the Jacobian pseudoinverse
precomputed once and cached (dense SVD or per-Fourier-mode) wherever the
residual is affine in the prediction.
"""

from .correction import (
    CacheSlot,
    Correction,
    CorrectionStrategy,
    JacobianCache,
    assemble_dense_jacobian,
    build_dense_cache,
    build_spectral_cache,
    correct,
    correct_exact,
    finite_difference_jacobian,
    pseudoinverse_dense,
    pseudoinverse_spectral,
    strategy_step,
    subtract_reference_residual,
)
from .grids import (
    Field,
    Grid,
    SpectralField,
    central_diff,
    fft_forward,
    fft_inverse,
    laplacian_5pt,
    poisson_solve_periodic,
    sample_grf,
    spectral_derivative,
)
from .predictors import (
    CoarseSurrogatePredictor,
    FilePredictor,
    NoiseSpec,
    OracleNoisePredictor,
    SurrogateConfig,
    coarse_surrogate_predict,
    file_predict,
    oracle_noise_predict,
)
from .residuals import (
    JacobianSpec,
    KsModel,
    KsParams,
    NsModel,
    NsParams,
    StateContext,
    WaveModel,
    WaveParams,
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
from .rollout import (
    RolloutReport,
    bench_caching,
    relative_l2,
    residual_subtraction_study,
    rollout,
    scaling_study,
    sensitivity_sweep,
    update_frequency_study,
)
from .solvers import (
    Trajectory,
    generate_dataset,
    ks_generate_spectral,
    ks_implicit_step,
    ns_step_highorder,
    ns_step_semi_implicit,
    wave_generate_rk4,
    wave_implicit_step,
)

__version__ = "0.1.0"
