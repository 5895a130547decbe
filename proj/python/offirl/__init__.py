"""Python bindings for the offirl C++ library."""

from ._core import (
    ConfigError,
    EmptyDataset,
    Error,
    InvalidParameter,
    algorithm_names,
    default_config,
    env_cost,
    env_names,
    median_ci95,
    mmd_unbiased,
    mu,
    normalized_return,
    occupancy,
    report,
    resolve_config,
    train,
    value_iteration,
)

__all__ = [
    "ConfigError",
    "EmptyDataset",
    "Error",
    "InvalidParameter",
    "algorithm_names",
    "default_config",
    "env_cost",
    "env_names",
    "median_ci95",
    "mmd_unbiased",
    "mu",
    "normalized_return",
    "occupancy",
    "report",
    "resolve_config",
    "train",
    "value_iteration",
]
