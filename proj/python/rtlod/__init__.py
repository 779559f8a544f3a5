"""Stable localized orthogonal decomposition in Raviart-Thomas spaces."""

import json

from ._rtlod import (
    IDEAL,
    CompatibilityError,
    CoefficientField,
    CorrectorSet,
    DataMissingError,
    Discretization,
    InvalidArgument,
    Mesh,
    SolverError,
    checkerboard,
    coefficient_from_values,
    compute_correctors,
    constant_coefficient,
    discretize,
    divergence_distance,
    divergence_error,
    eoc,
    fine_load,
    fit_order,
    relative_energy_error,
    relative_pressure_error,
    solve_lod,
    solve_reference,
    source_correction,
    structured_mesh,
)
from ._rtlod import run_experiment as _run_experiment

__all__ = [
    "IDEAL",
    "CompatibilityError",
    "CoefficientField",
    "CorrectorSet",
    "DataMissingError",
    "Discretization",
    "InvalidArgument",
    "Mesh",
    "SolverError",
    "checkerboard",
    "coefficient_from_values",
    "compute_correctors",
    "constant_coefficient",
    "discretize",
    "divergence_distance",
    "divergence_error",
    "eoc",
    "fine_load",
    "fit_order",
    "relative_energy_error",
    "relative_pressure_error",
    "run_experiment",
    "solve_lod",
    "solve_reference",
    "source_correction",
    "structured_mesh",
]


def run_experiment(config, out_dir=None):
    """Run an experiment from a config dict (same schema as the CLI JSON)."""
    return _run_experiment(json.dumps(config), None if out_dir is None else str(out_dir))
