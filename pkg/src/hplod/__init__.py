"""High-order localized orthogonal decomposition for rough elliptic problems."""

__version__ = "0.1.0"

from .assembly import Coefficient, assemble_problem  # noqa: E402
from .correctors import CorrectorConfig, CorrectorContext, compute_basis, compute_ideal_basis  # noqa: E402
from .mesh import build_mesh, nesting, patch  # noqa: E402
from .multiscale import error_report, solve_multiscale, solve_reference  # noqa: E402
from .spaces import CoarseSpace, FineSpace, assemble_projection  # noqa: E402

__all__ = [
    "Coefficient",
    "CoarseSpace",
    "CorrectorConfig",
    "CorrectorContext",
    "FineSpace",
    "assemble_problem",
    "assemble_projection",
    "build_mesh",
    "compute_basis",
    "compute_ideal_basis",
    "error_report",
    "nesting",
    "patch",
    "solve_multiscale",
    "solve_reference",
]
