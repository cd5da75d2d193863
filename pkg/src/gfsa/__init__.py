"""Gradient-free stochastic approximation toolkit.

Three two-sided gradient estimators (simultaneous perturbation, random
direction, per-axis finite difference) driven by decaying gain schedules;
an analytic engine predicting estimate bias and asymptotic mean-square
error per perturbation distribution; and a seeded Monte Carlo harness for
comparing the estimators at scale. A compiled trajectory kernel is used
when built, with a pure-numpy fallback selected at import time
(``backend_name()`` reports which).
"""

__version__ = "0.1.0"

from ._backend import backend_name
from .core import ConfigError, GainSequence, GfsaError, NoiseModel, RngStream, as_theta
from .estimators import (
    DivergenceError,
    GradEstimate,
    Trajectory,
    fdsa_gradient,
    rdsa_gradient,
    run_sa,
    spsa_gradient,
)
from .experiments import (
    MethodDist,
    MseReport,
    TrialBattery,
    grid_search,
    run_battery,
    welch_t_test,
)
from .losses import (
    CustomLoss,
    DerivativeBundle,
    ExpNorm,
    Loss,
    Quadratic,
    ShiftedAckley,
    SkewedQuartic,
    parse_loss,
)
from .perturb import (
    MomentSet,
    PerturbationDist,
    PerturbationError,
    bernoulli,
    gaussian,
    moments,
    parse_dist,
    sample,
    sample_batch,
    spherical,
    ushape,
)
from .theory import (
    AsymptoticParams,
    MseDecomposition,
    RegimeError,
    ZStudyResult,
    asymptotic_distribution,
    mse_decomposition,
    mse_ratio,
    predict_bias,
    predict_mse,
    prop3_predicate,
    sigma_eff2_from_noise,
    z_study,
)

__all__ = [
    "AsymptoticParams",
    "ConfigError",
    "CustomLoss",
    "DerivativeBundle",
    "DivergenceError",
    "ExpNorm",
    "GainSequence",
    "GfsaError",
    "GradEstimate",
    "Loss",
    "MethodDist",
    "MomentSet",
    "MseDecomposition",
    "MseReport",
    "NoiseModel",
    "PerturbationDist",
    "PerturbationError",
    "Quadratic",
    "RegimeError",
    "RngStream",
    "ShiftedAckley",
    "SkewedQuartic",
    "Trajectory",
    "TrialBattery",
    "ZStudyResult",
    "as_theta",
    "asymptotic_distribution",
    "backend_name",
    "bernoulli",
    "fdsa_gradient",
    "gaussian",
    "grid_search",
    "moments",
    "mse_decomposition",
    "mse_ratio",
    "parse_dist",
    "parse_loss",
    "predict_bias",
    "predict_mse",
    "prop3_predicate",
    "rdsa_gradient",
    "run_battery",
    "run_sa",
    "sample",
    "sample_batch",
    "sigma_eff2_from_noise",
    "spherical",
    "spsa_gradient",
    "ushape",
    "welch_t_test",
    "z_study",
]
