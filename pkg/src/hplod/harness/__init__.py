"""Experiment harness: models, sweeps, CSV output and the CLI."""

from .models import ModelSpec, generate_coefficient, make_rhs, parse_expression
from .results import Row, StudyResult, from_csv, read_csv, to_csv, write_csv
from .studies import (
    StudyConfig,
    fit_decay,
    fit_eoc,
    run_decay_study,
    run_ell_sweep,
    run_h_sweep,
    run_single,
    run_study,
)

__all__ = [
    "ModelSpec",
    "Row",
    "StudyConfig",
    "StudyResult",
    "fit_decay",
    "fit_eoc",
    "from_csv",
    "generate_coefficient",
    "make_rhs",
    "parse_expression",
    "read_csv",
    "run_decay_study",
    "run_ell_sweep",
    "run_h_sweep",
    "run_single",
    "run_study",
    "to_csv",
    "write_csv",
]
