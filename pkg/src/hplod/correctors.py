"""Multiscale basis by constrained energy minimization on element patches.

For a coarse element ``K`` and a local Legendre function ``Lambda_{K,j}`` the
basis function is the fine function of minimal energy, supported in the
order-``ell`` patch around ``K``, whose L2 moments against every coarse
polynomial of the patch equal those of ``Lambda_{K,j}``. With ``ell=None``
the patch is the whole domain (the ideal basis).
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .assembly import AssembledProblem, Coefficient, patch_interior_dofs
from .errors import ConfigError, DofCapExceeded
from .linalg import SchurKkt
from .mesh import block_elements, patch
from .spaces import CoarseSpace, FineSpace, ProjectionOperator, assemble_projection

DEFAULT_DOF_CAP = 200_000


@dataclass(frozen=True)
class CorrectorConfig:
    ell: int | None = None  # None: ideal (global) correctors
    threads: int = 1
    dof_cap: int = DEFAULT_DOF_CAP
    refine: int = 1

    def __post_init__(self):
        if self.ell is not None and self.ell < 1:
            raise ConfigError(f"ell must be >= 1 or None (ideal), got {self.ell}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")


@dataclass(frozen=True, eq=False)
class CorrectorContext:
    """Read-only inputs shared by all patch problems."""

    fine: FineSpace
    coarse: CoarseSpace
    stiffness: sp.csr_matrix
    projection: ProjectionOperator
    coefficient: Coefficient | None = None

    @classmethod
    def build(cls, problem: AssembledProblem, coarse: CoarseSpace) -> "CorrectorContext":
        return cls(
            fine=problem.fine,
            coarse=coarse,
            stiffness=problem.stiffness,
            projection=assemble_projection(problem.fine, coarse),
            coefficient=problem.coefficient,
        )

    def patch_bounds(self, element: int, ell: int | None) -> tuple[tuple[int, ...], tuple[int, ...]]:
        mesh = self.coarse.mesh
        if ell is None:
            return (0,) * mesh.dim, (mesh.n,) * mesh.dim
        lo, hi = mesh.locate(element, ell)
        return tuple(int(v) for v in lo), tuple(int(v) for v in hi)

    def is_saturating(self, ell: int | None) -> bool:
        return ell is None or ell >= self.coarse.mesh.n - 1


@dataclass(frozen=True, eq=False)
class PatchProblem:
    elements: np.ndarray
    dofs: np.ndarray
    solver: SchurKkt


@dataclass(frozen=True, eq=False)
class ElementBasis:
    element: int
    patch: np.ndarray
    dofs: np.ndarray
    vectors: np.ndarray  # (len(dofs), n_local)
    multipliers: np.ndarray  # (len(patch) * n_local, n_local)

    def to_global(self, n: int) -> np.ndarray:
        out = np.zeros((n, self.vectors.shape[1]))
        out[self.dofs] = self.vectors
        return out


@dataclass(eq=False)
class CorrectorBasis:
    coarse: CoarseSpace
    fine: FineSpace
    ell: int | None
    matrix: sp.csc_matrix  # (fine dofs, coarse dofs); column K*n_local+j
    multipliers: dict[int, np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def is_ideal(self) -> bool:
        return self.ell is None

    def column(self, element: int, local: int) -> np.ndarray:
        return self.matrix[:, self.coarse.dof(element, local)].toarray().ravel()

    def apply(self, coeffs) -> np.ndarray:
        return apply_R(self, coeffs)


def build_patch_problem(ctx: CorrectorContext, lo, hi, config: CorrectorConfig) -> PatchProblem:
    elems = block_elements(ctx.coarse.mesh, lo, hi)
    dofs = patch_interior_dofs(ctx.fine, ctx.coarse, elems)
    if dofs.size > config.dof_cap:
        raise DofCapExceeded(
            f"patch problem has {dofs.size} fine DOFs, cap is {config.dof_cap}; "
            "use a coarser fine mesh, a smaller ell, or raise --dof-cap"
        )
    A = ctx.stiffness[dofs][:, dofs]
    B = ctx.projection.B[ctx.coarse.element_dofs(elems)][:, dofs]
    return PatchProblem(elems, dofs, SchurKkt(A, B, refine=config.refine))


def _solve_element(ctx: CorrectorContext, pp: PatchProblem, element: int) -> ElementBasis:
    nl = ctx.coarse.n_local
    pos = int(np.searchsorted(pp.elements, element))
    G = np.zeros((pp.elements.size * nl, nl))
    G[pos * nl + np.arange(nl), np.arange(nl)] = ctx.coarse.local_mass
    X, lam = pp.solver.solve(G)
    return ElementBasis(element, pp.elements, pp.dofs, X, lam)


def compute_element_basis(ctx: CorrectorContext, element: int, config: CorrectorConfig) -> ElementBasis:
    """All ``(p+1)^d`` basis functions of one coarse element (one factorization)."""
    if not 0 <= element < ctx.coarse.mesh.num_elements:
        raise ConfigError(f"element {element} out of range")
    lo, hi = ctx.patch_bounds(element, config.ell)
    return _solve_element(ctx, build_patch_problem(ctx, lo, hi, config), element)


def _assemble_matrix(ctx: CorrectorContext, parts: list[ElementBasis]) -> sp.csc_matrix:
    nl = ctx.coarse.n_local
    indptr = [0]
    indices = []
    data = []
    for eb in parts:
        for j in range(nl):
            indices.append(eb.dofs)
            data.append(eb.vectors[:, j])
            indptr.append(indptr[-1] + eb.dofs.size)
    return sp.csc_matrix(
        (np.concatenate(data), np.concatenate(indices), np.array(indptr)),
        shape=(ctx.fine.num_dofs, ctx.coarse.num_dofs),
    )


def compute_basis(
    ctx: CorrectorContext, config: CorrectorConfig, cache: "BasisCache | None" = None
) -> CorrectorBasis:
    """Basis for every coarse element.

    Elements whose patches coincide (e.g. once the patch covers the whole
    domain) share one factorization and one Schur complement.
    """
    if cache is not None:
        hit = cache.load(ctx, config.ell)
        if hit is not None:
            return hit
    groups: dict[tuple, list[int]] = {}
    for K in range(ctx.coarse.mesh.num_elements):
        groups.setdefault(ctx.patch_bounds(K, config.ell), []).append(K)

    def run(item):
        (lo, hi), elements = item
        pp = build_patch_problem(ctx, lo, hi, config)
        return [_solve_element(ctx, pp, K) for K in elements]

    items = list(groups.items())
    if config.threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(run, items))
    else:
        results = [run(it) for it in items]
    parts = sorted((eb for res in results for eb in res), key=lambda eb: eb.element)
    basis = CorrectorBasis(
        coarse=ctx.coarse,
        fine=ctx.fine,
        ell=config.ell,
        matrix=_assemble_matrix(ctx, parts),
        multipliers={eb.element: eb.multipliers for eb in parts},
    )
    if cache is not None:
        cache.store(ctx, basis)
    return basis


def compute_ideal_basis(ctx: CorrectorContext, config: CorrectorConfig | None = None) -> CorrectorBasis:
    """Globally supported correctors (validation tool, guarded by ``dof_cap``)."""
    config = CorrectorConfig() if config is None else config
    if ctx.fine.num_dofs > config.dof_cap:
        raise DofCapExceeded(
            f"ideal correctors need a global solve on {ctx.fine.num_dofs} fine DOFs, cap is {config.dof_cap}"
        )
    return compute_basis(ctx, CorrectorConfig(ell=None, threads=config.threads, dof_cap=config.dof_cap))


def compute_ideal_element_basis(ctx: CorrectorContext, element: int, config: CorrectorConfig | None = None):
    config = CorrectorConfig() if config is None else config
    if ctx.fine.num_dofs > config.dof_cap:
        raise DofCapExceeded(
            f"ideal correctors need a global solve on {ctx.fine.num_dofs} fine DOFs, cap is {config.dof_cap}"
        )
    return compute_element_basis(ctx, element, CorrectorConfig(ell=None, dof_cap=config.dof_cap))


def apply_R(basis: CorrectorBasis, coeffs) -> np.ndarray:
    c = np.asarray(coeffs, dtype=float)
    if c.shape[0] != basis.coarse.num_dofs:
        raise ValueError(f"coefficient vector has length {c.shape[0]}, expected {basis.coarse.num_dofs}")
    return basis.matrix @ c


def patch_of(ctx: CorrectorContext, element: int, ell: int | None) -> np.ndarray:
    if ell is None:
        return np.arange(ctx.coarse.mesh.num_elements)
    return patch(ctx.coarse.mesh, element, ell)


class BasisCache:
    """On-disk basis store keyed by coefficient hash, H, h, p and ell.

    Each entry is an ``.npz`` file holding the CSC arrays of the basis matrix
    and a JSON header with the key fields.
    """

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key_fields(ctx: CorrectorContext, ell) -> dict:
        coef = ctx.coefficient.fingerprint() if ctx.coefficient is not None else "none"
        return {
            "coefficient": coef,
            "dim": ctx.fine.mesh.dim,
            "H": ctx.coarse.mesh.n,
            "h": ctx.fine.mesh.n,
            "p": ctx.coarse.degree,
            "ell": "ideal" if ell is None else int(ell),
        }

    def path(self, ctx, ell) -> Path:
        blob = json.dumps(self.key_fields(ctx, ell), sort_keys=True).encode()
        return self.directory / f"basis-{hashlib.sha256(blob).hexdigest()[:24]}.npz"

    def load(self, ctx, ell) -> CorrectorBasis | None:
        p = self.path(ctx, ell)
        if not p.exists():
            return None
        with np.load(p) as z:
            header = json.loads(str(z["header"]))
            if header != self.key_fields(ctx, ell):
                return None
            M = sp.csc_matrix((z["data"], z["indices"], z["indptr"]), shape=tuple(z["shape"]))
        return CorrectorBasis(ctx.coarse, ctx.fine, ell, M)

    def store(self, ctx, basis: CorrectorBasis) -> Path:
        p = self.path(ctx, basis.ell)
        M = basis.matrix
        np.savez(
            p,
            header=json.dumps(self.key_fields(ctx, basis.ell), sort_keys=True),
            data=M.data,
            indices=M.indices,
            indptr=M.indptr,
            shape=np.array(M.shape),
        )
        return p
