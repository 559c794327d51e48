"""Discontinuous Legendre coarse space, conforming Q1 fine space, L2 projection.

Coarse degrees of freedom are numbered ``K * n_local + j``; the local index
``j`` enumerates coordinate degrees ``(q_0, q_1)`` with ``q_0`` fastest. The
element basis is the tensor product of shifted Legendre polynomials
normalized by ``L_q(1) = 1``, which makes the element mass matrix diagonal
with entries ``|K| * prod(1 / (2 q_a + 1))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .errors import NonNestedMeshes
from .mesh import TensorMesh, nesting


def eval_legendre(p: int, t) -> np.ndarray:
    """Shifted Legendre values ``L_0(t) .. L_p(t)`` on ``[0, 1]``.

    Returns an array of shape ``(p + 1,) + shape(t)``.
    """
    s = 2.0 * np.asarray(t, dtype=float) - 1.0
    out = np.empty((p + 1,) + s.shape)
    out[0] = 1.0
    if p >= 1:
        out[1] = s
    for n in range(1, p):
        out[n + 1] = ((2 * n + 1) * s * out[n] - n * out[n - 1]) / (n + 1)
    return out


def eval_legendre_derivative(p: int, t) -> np.ndarray:
    """Derivatives ``d/dt L_q(t)`` for ``q = 0 .. p``."""
    P = eval_legendre(p, t)
    dP = np.zeros_like(P)
    # P'_{n+1} = P'_{n-1} + (2n + 1) P_n  in the variable s = 2t - 1
    for n in range(p):
        dP[n + 1] = (dP[n - 1] if n >= 1 else 0.0) + (2 * n + 1) * P[n]
    return 2.0 * dP


def gauss_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on ``[0, 1]``.

    Exact for polynomials of degree ``2 * order - 1``; weights sum to one.
    """
    if order < 1:
        raise ValueError(f"quadrature order must be >= 1, got {order}")
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def tensor_gauss(order: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss rule on the unit cube, points ``(k, d)`` with axis 0 fastest."""
    x, w = gauss_rule(order)
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    wgrids = np.meshgrid(*([w] * dim), indexing="ij")
    pts = np.stack([g.ravel(order="F") for g in grids], axis=-1)
    wts = np.prod(np.stack([g.ravel(order="F") for g in wgrids], axis=-1), axis=-1)
    return pts, wts


def projection_quadrature_order(degree: int) -> int:
    # integrand (Legendre x hat) has degree p + 1 per axis
    return math.ceil((degree + 2) / 2)


def load_quadrature_order(degree: int) -> int:
    return max(4, projection_quadrature_order(degree) + 2)


@dataclass(frozen=True)
class CoarseSpace:
    mesh: TensorMesh
    degree: int

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError(f"degree must be >= 0, got {self.degree}")

    @property
    def n_local(self) -> int:
        return (self.degree + 1) ** self.mesh.dim

    @property
    def num_dofs(self) -> int:
        return self.n_local * self.mesh.num_elements

    @cached_property
    def local_degrees(self) -> np.ndarray:
        """``(n_local, d)`` coordinate degrees of the local basis functions."""
        return _kernels._local_degrees(self.degree, self.mesh.dim)

    @cached_property
    def local_mass(self) -> np.ndarray:
        q = self.local_degrees
        return self.mesh.element_volume * np.prod(1.0 / (2 * q + 1), axis=1)

    @cached_property
    def mass_diagonal(self) -> np.ndarray:
        return np.tile(self.local_mass, self.mesh.num_elements)

    def dof(self, element: int, local: int) -> int:
        return element * self.n_local + local

    def element_dofs(self, elements) -> np.ndarray:
        e = np.asarray(elements).reshape(-1)
        return (e[:, None] * self.n_local + np.arange(self.n_local)[None, :]).ravel()

    @property
    def lowest_local(self) -> int:
        return 0

    @property
    def highest_local(self) -> int:
        return self.n_local - 1

    def l2_norm(self, coeffs) -> float:
        c = np.asarray(coeffs, dtype=float)
        return float(np.sqrt(np.sum(self.mass_diagonal * c**2)))

    def evaluate(self, coeffs, points) -> np.ndarray:
        """Evaluate a coarse function at points ``(k, d)`` (element interiors)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n = self.mesh.n
        idx = np.minimum((pts * n).astype(int), n - 1)
        elem = self.mesh.element_index(idx)
        local = pts * n - idx
        vals = np.ones((pts.shape[0], self.n_local))
        for ax in range(self.mesh.dim):
            Lq = eval_legendre(self.degree, local[:, ax])  # (p+1, k)
            vals *= Lq[self.local_degrees[:, ax]].T
        c = np.asarray(coeffs, dtype=float).reshape(self.mesh.num_elements, self.n_local)
        return np.einsum("kj,kj->k", vals, c[elem])

    def broken_h1_seminorm(self, coeffs) -> float:
        """Element-wise gradient L2 norm of a coarse function (exact quadrature)."""
        d = self.mesh.dim
        H = self.mesh.size
        pts, wts = tensor_gauss(self.degree + 1, d)
        L = [eval_legendre(self.degree, pts[:, ax]) for ax in range(d)]
        dL = [eval_legendre_derivative(self.degree, pts[:, ax]) for ax in range(d)]
        q = self.local_degrees
        c = np.asarray(coeffs, dtype=float).reshape(self.mesh.num_elements, self.n_local)
        total = 0.0
        for ax in range(d):
            phi = np.ones((pts.shape[0], self.n_local))
            for b in range(d):
                tab = dL[b] if b == ax else L[b]
                phi *= tab[q[:, b]].T
            grad = c @ phi.T / H  # (elements, k)
            total += np.sum(wts[None, :] * grad**2) * self.mesh.element_volume
        return float(np.sqrt(total))


@dataclass(frozen=True)
class FineSpace:
    mesh: TensorMesh

    @cached_property
    def interior_vertices(self) -> np.ndarray:
        return np.flatnonzero(~self.mesh.boundary_vertex_mask)

    @cached_property
    def vertex_dof(self) -> np.ndarray:
        """Interior DOF number of each vertex, ``-1`` on the boundary."""
        out = np.full(self.mesh.num_vertices, -1, dtype=np.int64)
        out[self.interior_vertices] = np.arange(self.interior_vertices.size)
        return out

    @property
    def num_dofs(self) -> int:
        return int(self.interior_vertices.size)

    @cached_property
    def cell_dofs(self) -> np.ndarray:
        return self.vertex_dof[self.mesh.element_vertices]

    @cached_property
    def dof_coords(self) -> np.ndarray:
        return self.mesh.vertex_coords[self.interior_vertices]

    def interpolate(self, func) -> np.ndarray:
        """Nodal interpolant on interior vertices; ``func`` takes ``(k, d)`` points."""
        return np.asarray(func(self.dof_coords), dtype=float).reshape(-1)

    def to_vertices(self, x) -> np.ndarray:
        """Extend an interior vector by zero boundary values."""
        out = np.zeros(self.mesh.num_vertices)
        out[self.interior_vertices] = x
        return out

    def box_interior_dofs(self, lo, hi) -> np.ndarray:
        """DOFs of vertices strictly inside the box ``[lo, hi]`` of coarse-cell bounds.

        ``lo``/``hi`` are given in fine-vertex multi-indices.
        """
        ranges = [np.arange(lo[a] + 1, hi[a]) for a in range(self.mesh.dim)]
        grids = np.meshgrid(*ranges, indexing="ij")
        multi = np.stack([g.ravel() for g in grids], axis=-1)
        vid = sum(multi[:, a] * (self.mesh.n + 1) ** a for a in range(self.mesh.dim))
        dofs = self.vertex_dof[vid]
        return np.sort(dofs[dofs >= 0])


@dataclass(frozen=True)
class ProjectionOperator:
    """L2 projection onto the coarse space, stored as ``P = D^-1 B``."""

    fine: FineSpace
    coarse: CoarseSpace
    B: sp.csr_matrix
    D: np.ndarray

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        return sp.diags(1.0 / self.D) @ self.B

    def apply(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.B.shape[1]:
            raise ValueError(f"fine vector has length {v.shape[0]}, expected {self.B.shape[1]}")
        out = self.B @ v
        return out / (self.D if out.ndim == 1 else self.D[:, None])


def coupling_table(degree: int, ratio: int, order: int | None = None) -> np.ndarray:
    """1D moments of Legendre polynomials against hats on each sub-interval."""
    if order is None:
        order = projection_quadrature_order(degree)
    xi, w = gauss_rule(order)
    r = np.arange(ratio)
    L = eval_legendre(degree, (r[:, None] + xi[None, :]) / ratio)  # (p+1, ratio, nq)
    N = np.stack([1.0 - xi, xi])  # (2, nq)
    return np.einsum("qrk,ak,k->rqa", L, N, w)


def assemble_projection(fine: FineSpace, coarse: CoarseSpace, order: int | None = None) -> ProjectionOperator:
    if fine.mesh.dim != coarse.mesh.dim or fine.mesh.n % coarse.mesh.n:
        raise NonNestedMeshes(f"fine mesh n={fine.mesh.n} is not nested in coarse mesh n={coarse.mesh.n}")
    nest = nesting(coarse.mesh, fine.mesh)
    table = coupling_table(coarse.degree, nest.ratio, order)
    rows, cols, vals = _kernels.coupling_triplets(
        fine.cell_dofs, nest.parent, nest.offset, table, fine.mesh.element_volume, coarse.degree
    )
    B = sp.csr_matrix((vals, (rows, cols)), shape=(coarse.num_dofs, fine.num_dofs))
    B.sum_duplicates()
    B.sort_indices()
    return ProjectionOperator(fine, coarse, B, coarse.mass_diagonal)


def project(P: ProjectionOperator, v_fine) -> np.ndarray:
    return P.apply(v_fine)
