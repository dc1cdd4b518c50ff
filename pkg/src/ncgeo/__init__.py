"""Spectral geometry experiments on the noncommutative two-torus and the Moyal plane."""

from .experiments import ExperimentConfig, RunReport, emit_report, run_experiment
from .torus import DerivationSpec, TorusElement, adjoint, mul, parse_element, trace_tau

__version__ = "0.1.0"

__all__ = [
    "DerivationSpec",
    "ExperimentConfig",
    "RunReport",
    "TorusElement",
    "adjoint",
    "emit_report",
    "mul",
    "parse_element",
    "run_experiment",
    "trace_tau",
]
