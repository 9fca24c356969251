"""Latent-action nMDP toolkit: curve task, tabular oracle and the command-line entry point."""

from ._lanmdp import (
    CubicFit,
    EnergyModel,
    NumericalError,
    TabularInstance,
    ValidationError,
    cubic_fit,
    evaluate_rollouts,
    generate_demos,
    hermite_cubic,
    run_cli,
)

__all__ = [
    "CubicFit",
    "EnergyModel",
    "NumericalError",
    "TabularInstance",
    "ValidationError",
    "cubic_fit",
    "evaluate_rollouts",
    "generate_demos",
    "hermite_cubic",
    "run_cli",
]
