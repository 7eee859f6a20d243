"""Adaptive time-stepping Monte Carlo for SDEs with superlinear coefficients."""

from ._core import (
    BrownianPath,
    ConfigurationError,
    NumericError,
    adaptive_step,
    convergence,
    derive_seed,
    divergence_probe,
    parse_ladder,
    problem_names,
    rmse,
    run_cli,
    scheme_names,
    selftest,
    simulate,
)

__all__ = [
    "BrownianPath",
    "ConfigurationError",
    "NumericError",
    "adaptive_step",
    "convergence",
    "derive_seed",
    "divergence_probe",
    "parse_ladder",
    "problem_names",
    "rmse",
    "run_cli",
    "scheme_names",
    "selftest",
    "simulate",
]
