"""Galerkin solve in the corrector basis and the fine reference solve."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .assembly import AssembledProblem, energy_norm, l2_norm
from .correctors import CorrectorBasis
from .errors import ConfigError, SingularCoarseSystem
from .linalg import factorize_spd

# basis matrices denser than this are multiplied as dense arrays
_DENSE_FRACTION = 0.05


class ResolutionWarning(UserWarning):
    """The fine mesh is coarse relative to ``H / p**2``."""


@dataclass(frozen=True, eq=False)
class ReferenceSolution:
    u: np.ndarray
    residual: float


@dataclass(frozen=True, eq=False)
class MultiscaleSolution:
    coarse: np.ndarray
    u: np.ndarray
    provenance: dict = field(default_factory=dict)


def solve_reference(problem: AssembledProblem) -> ReferenceSolution:
    A, f = problem.stiffness, problem.load
    u = factorize_spd(A).solve(f)
    nf = np.linalg.norm(f)
    res = np.linalg.norm(A @ u - f) / nf if nf > 0 else float(np.linalg.norm(A @ u))
    return ReferenceSolution(u, float(res))


def coarse_system(basis: CorrectorBasis, A_h) -> np.ndarray:
    """``C^T A_h C`` as a dense symmetric matrix."""
    C = basis.matrix
    n, N = C.shape
    if C.nnz > _DENSE_FRACTION * n * N:
        Cd = C.toarray()
        K = Cd.T @ np.asarray(A_h @ Cd)
    else:
        K = (C.T @ (A_h @ C)).toarray()
    return 0.5 * (K + K.T)


def check_resolution(basis: CorrectorBasis) -> float:
    """Warn when ``h p^2 / H > 1``; returns the ratio."""
    p = max(basis.coarse.degree, 1)
    ratio = basis.fine.mesh.size * p**2 / basis.coarse.mesh.size
    if ratio > 1.0:
        warnings.warn(
            f"fine mesh may not resolve degree {basis.coarse.degree}: h p^2 / H = {ratio:.3g} > 1 "
            "(the discrete inf-sup condition asks for h well below H / p^2)",
            ResolutionWarning,
            stacklevel=2,
        )
    return ratio


def solve_multiscale(basis: CorrectorBasis, problem: AssembledProblem) -> MultiscaleSolution:
    if basis.fine.mesh != problem.fine.mesh:
        raise ConfigError("basis and problem live on different fine meshes")
    check_resolution(basis)
    K = coarse_system(basis, problem.stiffness)
    rhs = basis.matrix.T @ problem.load
    try:
        L = sla.cholesky(K, lower=True, check_finite=False)
    except sla.LinAlgError as exc:
        raise SingularCoarseSystem(f"coarse stiffness is not positive definite: {exc}") from exc
    x = sla.cho_solve((L, True), rhs, check_finite=False)
    prov = {
        "H": basis.coarse.mesh.size,
        "h": problem.fine.mesh.size,
        "eps": problem.coefficient.eps_mesh.size,
        "p": basis.coarse.degree,
        "ell": basis.ell,
        "load_order": problem.load_order,
    }
    return MultiscaleSolution(x, basis.matrix @ x, prov)


def error_report(ref: ReferenceSolution, ms: MultiscaleSolution, problem: AssembledProblem) -> dict:
    e = ref.u - ms.u
    na = energy_norm(problem.stiffness, ref.u)
    nm = l2_norm(problem.mass, ref.u)
    if na == 0.0 or nm == 0.0:
        raise ZeroDivisionError("reference solution has zero norm")
    return {
        "rel_energy_err": energy_norm(problem.stiffness, e) / na,
        "rel_l2_err": l2_norm(problem.mass, e) / nm,
    }


def phi(p: int, k: int) -> float:
    """Degree factor ``sqrt((p+1-k)! / (p+1+k)!)`` of the L2 projection estimate."""
    if not 0 <= k <= p + 1:
        raise ValueError(f"need 0 <= k <= p + 1, got p={p}, k={k}")
    return math.sqrt(math.factorial(p + 1 - k) / math.factorial(p + 1 + k))
