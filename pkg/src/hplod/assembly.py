"""Fine-scale Q1 assembly with piecewise constant coefficients."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .errors import ConfigError, EmptyPatch, NonNestedMeshes, NonPositiveCoefficient
from .mesh import TensorMesh, build_mesh, nesting
from .spaces import (
    CoarseSpace,
    FineSpace,
    ProjectionOperator,
    assemble_projection,
    tensor_gauss,
)


@dataclass(frozen=True, eq=False)
class Coefficient:
    """Scalar diffusion field, one positive value per cell of ``eps_mesh``.

    Values follow the mesh's lexicographic element order (axis 0 fastest).
    """

    eps_mesh: TensorMesh
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).reshape(-1)
        if vals.size != self.eps_mesh.num_elements:
            raise ConfigError(f"coefficient has {vals.size} values, mesh has {self.eps_mesh.num_elements} cells")
        if not np.all(np.isfinite(vals)) or vals.min() <= 0.0:
            raise NonPositiveCoefficient(f"coefficient values must be positive and finite (min {vals.min()})")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def alpha(self) -> float:
        return float(self.values.min())

    @property
    def beta(self) -> float:
        return float(self.values.max())

    @classmethod
    def constant(cls, dim: int, value: float = 1.0, n_eps: int = 1) -> "Coefficient":
        mesh = build_mesh(dim, n_eps)
        return cls(mesh, np.full(mesh.num_elements, float(value)))

    def on_mesh(self, fine: TensorMesh) -> np.ndarray:
        """Value seen by every cell of a mesh that refines ``eps_mesh``."""
        try:
            nest = nesting(self.eps_mesh, fine)
        except NonNestedMeshes as exc:
            raise NonNestedMeshes(f"fine mesh must resolve the coefficient scale: {exc}") from exc
        return self.values[nest.parent]

    def scaled(self, factor: float) -> "Coefficient":
        return Coefficient(self.eps_mesh, self.values * factor)

    def fingerprint(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(f"{self.eps_mesh.dim},{self.eps_mesh.n};".encode())
        h.update(np.ascontiguousarray(self.values, dtype="<f8").tobytes())
        return h.hexdigest()


def save_coefficient(coef: Coefficient, path) -> None:
    """Write ``dim,n_eps`` header then one row per line of cells (axis 1 rows).

    ``path`` may also be an open text stream.
    """
    d, n = coef.eps_mesh.dim, coef.eps_mesh.n
    rows = coef.values.reshape(-1, n) if d == 2 else coef.values.reshape(1, n)

    def dump(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dim", "n_eps"])
        w.writerow([d, n])
        for row in rows:
            w.writerow([repr(float(v)) for v in row])

    if hasattr(path, "write"):
        dump(path)
    else:
        with open(path, "w", newline="") as fh:
            dump(fh)


def load_coefficient(path) -> Coefficient:
    with open(Path(path), newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if [h.strip() for h in header] != ["dim", "n_eps"]:
            raise ConfigError(f"{path}: expected header 'dim,n_eps', got {header}")
        d, n = (int(v) for v in next(r))
        vals = [float(v) for row in r if row for v in row]
    return Coefficient(build_mesh(d, n), np.array(vals))


# --------------------------------------------------------------------------
# reference Q1 element matrices


def q1_local_matrices(dim: int, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Stiffness and mass of one Q1 cell of side ``h`` (local order axis 0 fastest)."""
    k1 = np.array([[1.0, -1.0], [-1.0, 1.0]]) / h
    m1 = np.array([[2.0, 1.0], [1.0, 2.0]]) * h / 6.0
    if dim == 1:
        return k1, m1
    return np.kron(m1, k1) + np.kron(k1, m1), np.kron(m1, m1)


def _assemble_q1(fine: FineSpace, scale: np.ndarray, local: np.ndarray) -> sp.csr_matrix:
    rows, cols, vals = _kernels.q1_triplets(fine.cell_dofs, scale, local)
    n = fine.num_dofs
    A = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    A.sum_duplicates()
    A.sort_indices()
    return A


def assemble_stiffness(fine: FineSpace, coef: Coefficient) -> sp.csr_matrix:
    if coef.eps_mesh.dim != fine.mesh.dim:
        raise NonNestedMeshes("coefficient and fine mesh have different dimensions")
    k, _ = q1_local_matrices(fine.mesh.dim, fine.mesh.size)
    return _assemble_q1(fine, coef.on_mesh(fine.mesh), k)


def assemble_mass(fine: FineSpace) -> sp.csr_matrix:
    _, m = q1_local_matrices(fine.mesh.dim, fine.mesh.size)
    return _assemble_q1(fine, np.ones(fine.mesh.num_elements), m)


# --------------------------------------------------------------------------
# quadrature on fine cells


def _q1_shapes(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Q1 shape values ``(k, 2^d)`` and reference gradients ``(k, 2^d, d)``."""
    k, d = pts.shape
    corners = _kernels._local_corners(d)
    fac = np.where(corners[None, :, :] == 1, pts[:, None, :], 1.0 - pts[:, None, :])
    vals = np.prod(fac, axis=-1)
    grads = np.empty((k, corners.shape[0], d))
    for ax in range(d):
        g = np.where(corners[:, ax] == 1, 1.0, -1.0)[None, :]
        others = np.prod(np.delete(fac, ax, axis=-1), axis=-1) if d > 1 else 1.0
        grads[:, :, ax] = g * others
    return vals, grads


@dataclass(frozen=True)
class CellQuadrature:
    points: np.ndarray  # (cells, k, d) physical points
    weights: np.ndarray  # (k,) physical weights
    shapes: np.ndarray  # (k, 2^d)
    grads: np.ndarray  # (k, 2^d, d) physical gradients


def cell_quadrature(fine: FineSpace, order: int) -> CellQuadrature:
    mesh = fine.mesh
    ref, w = tensor_gauss(order, mesh.dim)
    lower = mesh.element_multi_index(np.arange(mesh.num_elements)) * mesh.size
    pts = lower[:, None, :] + mesh.size * ref[None, :, :]
    vals, grads = _q1_shapes(ref)
    return CellQuadrature(pts, w * mesh.element_volume, vals, grads / mesh.size)


def _eval_rhs(f, pts: np.ndarray) -> np.ndarray:
    flat = pts.reshape(-1, pts.shape[-1])
    vals = np.broadcast_to(np.asarray(f(flat), dtype=float), (flat.shape[0],))
    return vals.reshape(pts.shape[:-1])


def assemble_load(fine: FineSpace, f, order: int = 4) -> np.ndarray:
    """Load vector ``(f, phi_i)`` on interior DOFs.

    ``f`` is a callable taking an ``(k, d)`` point array, or a scalar.
    """
    if np.isscalar(f):
        value = float(f)
        f = lambda x: np.full(x.shape[0], value)  # noqa: E731
    q = cell_quadrature(fine, order)
    fv = _eval_rhs(f, q.points)  # (cells, k)
    local = np.einsum("ck,k,ka->ca", fv, q.weights, q.shapes)
    dofs = fine.cell_dofs
    keep = dofs >= 0
    return np.bincount(dofs[keep], weights=local[keep], minlength=fine.num_dofs)


def _cell_values(fine: FineSpace, x) -> np.ndarray:
    xv = fine.to_vertices(x)
    return xv[fine.mesh.element_vertices]  # (cells, 2^d)


def l2_error_exact(fine: FineSpace, x, u_exact, order: int = 4) -> float:
    """``||u_exact - u_h||_L2`` with ``u_h`` the Q1 function of ``x``."""
    q = cell_quadrature(fine, order)
    uh = _cell_values(fine, x) @ q.shapes.T  # (cells, k)
    diff = _eval_rhs(u_exact, q.points) - uh
    return float(np.sqrt(np.sum(diff**2 * q.weights[None, :])))


def h1_error_exact(fine: FineSpace, x, grad_exact, order: int = 4) -> float:
    """``||grad(u_exact - u_h)||_L2``; ``grad_exact`` maps ``(k, d)`` to ``(k, d)``."""
    q = cell_quadrature(fine, order)
    cv = _cell_values(fine, x)
    gh = np.einsum("ca,kad->ckd", cv, q.grads)
    flat = q.points.reshape(-1, fine.mesh.dim)
    ge = np.asarray(grad_exact(flat), dtype=float).reshape(gh.shape)
    return float(np.sqrt(np.sum((ge - gh) ** 2 * q.weights[None, :, None])))


# --------------------------------------------------------------------------
# patches and norms


def patch_interior_dofs(fine: FineSpace, coarse: CoarseSpace, patch_elements) -> np.ndarray:
    """Fine DOFs whose hat function is supported inside the union of ``patch_elements``."""
    elems = np.asarray(patch_elements).reshape(-1)
    if elems.size == 0:
        raise EmptyPatch("patch contains no elements")
    nest = nesting(coarse.mesh, fine.mesh)
    inside = np.zeros(coarse.mesh.num_elements, dtype=bool)
    inside[elems] = True
    cells = np.flatnonzero(inside[nest.parent])
    counts = np.bincount(fine.mesh.element_vertices[cells].ravel(), minlength=fine.mesh.num_vertices)
    full = counts == 2**fine.mesh.dim
    dofs = fine.vertex_dof[full]
    return np.sort(dofs[dofs >= 0])


def assemble_coupling(
    fine: FineSpace,
    coarse: CoarseSpace,
    patch_elements,
    projection: ProjectionOperator | None = None,
) -> tuple[sp.csr_matrix, np.ndarray]:
    """Constraint block of a patch problem.

    Rows are ``(patch element, local index)`` in patch order, columns the
    patch-interior fine DOFs (returned as the second value). Entries are the
    moments ``(Lambda_{K,j}, phi_i)``.
    """
    elems = np.sort(np.asarray(patch_elements).reshape(-1))
    dofs = patch_interior_dofs(fine, coarse, elems)
    if projection is None:
        projection = assemble_projection(fine, coarse)
    rows = coarse.element_dofs(elems)
    return projection.B[rows][:, dofs].tocsr(), dofs


def energy_norm(A_h, x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sqrt(max(float(x @ (A_h @ x)), 0.0)))


def l2_norm(M_h, x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sqrt(max(float(x @ (M_h @ x)), 0.0)))


@dataclass(frozen=True, eq=False)
class AssembledProblem:
    fine: FineSpace
    coefficient: Coefficient
    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    load: np.ndarray
    load_order: int = 4

    @cached_property
    def laplacian(self) -> sp.csr_matrix:
        """Stiffness of the unit coefficient (discrete H1 seminorm)."""
        return assemble_stiffness(self.fine, Coefficient.constant(self.fine.mesh.dim))


def assemble_problem(fine: FineSpace, coef: Coefficient, f, load_order: int = 4) -> AssembledProblem:
    return AssembledProblem(
        fine=fine,
        coefficient=coef,
        stiffness=assemble_stiffness(fine, coef),
        mass=assemble_mass(fine),
        load=assemble_load(fine, f, load_order),
        load_order=load_order,
    )
