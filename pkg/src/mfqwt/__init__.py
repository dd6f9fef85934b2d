"""Multifractal exponents of quantum states via discrete wavelet partition functions."""

__version__ = "0.1.0"

from .numerics import EigenSystem, QuantumState, apply_diagonal_phase, qft, unitary_eig
from .wavelet import DAUB4, HAAR, WaveletCoeffs, WaveletFilter, band_values, fwt_forward, fwt_inverse
from .states import (
    CascadeParams,
    IsrmParams,
    apply_isrm,
    build_isrm,
    cascade_state,
    cascade_tau_analytic,
    isrm_eigenvector_ensemble,
)
from .multifractal import (
    PartitionTable,
    ScalingSeries,
    dq_from_tau,
    ensemble_log_average,
    fit_tau,
    moments_tau,
    partition_amplitude,
    partition_density,
    partition_unnormalized,
)
from .emulation import (
    CostReport,
    GroverRun,
    PhaseEstimationResult,
    TwoRegisterState,
    alpha_beta_exponents,
    build_product_state,
    cost_model,
    grover_iteration_count,
    grover_select_diagonal,
    grover_step,
    phase_estimation,
    sample_scale_register,
)
