"""Quadratic discriminant analysis for high-dimensional data whose class
covariances are isotropic plus a few strong directions (spiked), with
random-matrix de-biasing, classical baselines, and a reproducible Monte
Carlo experiment harness."""

from .classifiers import (
    EvalResult,
    ImpQdaRule,
    ImprovedQDA,
    KNNClassifier,
    OracleQDA,
    RidgeQDA,
    evaluate,
    gamma_grid,
    knn_classify,
    select_gamma,
)
from .exceptions import (
    ConfigError,
    DataError,
    DegenerateObjectiveError,
    DegenerateSeparationError,
    SpikedQdaError,
    SpikeUndetectableError,
    VarianceDegeneracyError,
)
from .fisher import (
    EquivalentCoefficients,
    assemble_coefficients,
    m_bar,
    optimal_eta,
    optimal_w,
    rho_bar,
    v_bar,
)
from .population import (
    ClassModel,
    LabeledDataset,
    SpikedCovariance,
    axis_aligned_models,
    synth_protocol_models,
)
from .spectral import EigenPairs, PooledPCA, pca_fit_transform, sign_align, sym_eig_desc
from .spikes import (
    ClassSummary,
    SpikeEstimates,
    alignment_factor,
    estimate_noise_rank,
    estimate_spikes,
    forward_spike_map,
    invert_spike_map,
    summarize_class,
)

__version__ = "0.1.0"

__all__ = [
    "ClassModel",
    "ClassSummary",
    "ConfigError",
    "DataError",
    "DegenerateObjectiveError",
    "DegenerateSeparationError",
    "EigenPairs",
    "EquivalentCoefficients",
    "EvalResult",
    "ImpQdaRule",
    "ImprovedQDA",
    "KNNClassifier",
    "LabeledDataset",
    "OracleQDA",
    "PooledPCA",
    "RidgeQDA",
    "SpikeEstimates",
    "SpikedCovariance",
    "SpikedQdaError",
    "SpikeUndetectableError",
    "VarianceDegeneracyError",
    "alignment_factor",
    "assemble_coefficients",
    "axis_aligned_models",
    "estimate_noise_rank",
    "estimate_spikes",
    "evaluate",
    "forward_spike_map",
    "gamma_grid",
    "invert_spike_map",
    "knn_classify",
    "m_bar",
    "optimal_eta",
    "optimal_w",
    "pca_fit_transform",
    "rho_bar",
    "select_gamma",
    "sign_align",
    "sym_eig_desc",
    "summarize_class",
    "synth_protocol_models",
    "v_bar",
]
