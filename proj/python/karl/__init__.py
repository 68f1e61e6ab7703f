"""Koopman-assisted reinforcement learning: tensors, SKVI, actor-critic and LQR baselines."""

from ._core import (
    ConfigError,
    DimensionMismatch,
    Environment,
    InsufficientData,
    KoopmanTensor,
    ModelFormat,
    MonomialBasis,
    NoConvergence,
    NonFiniteState,
    Rng,
    SingularSystem,
    evaluate_lqr,
    evaluate_model,
    fit_tensor,
    interpret,
    skvi,
    soft_backup,
    softmax_policy,
    solve_lqr,
)

__all__ = [
    "ConfigError",
    "DimensionMismatch",
    "Environment",
    "InsufficientData",
    "KoopmanTensor",
    "ModelFormat",
    "MonomialBasis",
    "NoConvergence",
    "NonFiniteState",
    "Rng",
    "SingularSystem",
    "evaluate_lqr",
    "evaluate_model",
    "fit_tensor",
    "interpret",
    "skvi",
    "soft_backup",
    "softmax_policy",
    "solve_lqr",
]
