"""Quantile-based risk-sensitive policy gradient experiments."""

from ._core import (
    audit,
    brute_force_var,
    dp_solve,
    empirical_cvar,
    empirical_var,
    environment_names,
    grid_levels,
    monotone_head,
    path_returns,
    project_level,
    quantile_loss,
    soft_loss_grad,
    soft_quantile_loss,
    train,
)

__all__ = [
    "audit",
    "brute_force_var",
    "dp_solve",
    "empirical_cvar",
    "empirical_var",
    "environment_names",
    "grid_levels",
    "monotone_head",
    "path_returns",
    "project_level",
    "quantile_loss",
    "soft_loss_grad",
    "soft_quantile_loss",
    "train",
]
