"""Uniform dyadic tensor-product meshes on the unit interval/square.

Elements and vertices are numbered lexicographically with axis 0 running
fastest, so in 2D element ``(e0, e1)`` has index ``e0 + n * e1`` and vertex
``(i0, i1)`` has index ``i0 + (n + 1) * i1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigError, NonNestedMeshes


def is_power_of_two(n: int) -> bool:
    return isinstance(n, (int, np.integer)) and n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class TensorMesh:
    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigError(f"dimension must be 1 or 2, got {self.dim}")
        if not is_power_of_two(self.n):
            raise ConfigError(f"cells_per_axis must be a power of two, got {self.n}")

    @property
    def cells_per_axis(self) -> int:
        return self.n

    @property
    def size(self) -> float:
        return 1.0 / self.n

    @property
    def num_elements(self) -> int:
        return self.n**self.dim

    @property
    def num_vertices(self) -> int:
        return (self.n + 1) ** self.dim

    @property
    def element_volume(self) -> float:
        return self.size**self.dim

    def element_multi_index(self, element) -> np.ndarray:
        """Multi-index of one element (shape ``(d,)``) or many (``(k, d)``)."""
        e = np.asarray(element)
        out = np.stack([(e // self.n**a) % self.n for a in range(self.dim)], axis=-1)
        return out

    def element_index(self, multi) -> np.ndarray | int:
        m = np.asarray(multi)
        idx = sum(m[..., a] * self.n**a for a in range(self.dim))
        return int(idx) if np.ndim(idx) == 0 else idx

    def element_box(self, element: int) -> tuple[np.ndarray, np.ndarray]:
        lo = self.element_multi_index(element) / self.n
        return lo, lo + self.size

    @cached_property
    def vertex_coords(self) -> np.ndarray:
        """``(num_vertices, d)`` array of vertex coordinates."""
        t = np.linspace(0.0, 1.0, self.n + 1)
        grids = np.meshgrid(*([t] * self.dim), indexing="ij")
        # axis 0 fastest -> Fortran order flattening
        return np.stack([g.ravel(order="F") for g in grids], axis=-1)

    @cached_property
    def element_vertices(self) -> np.ndarray:
        """``(num_elements, 2**d)`` vertex indices, local order axis 0 fastest."""
        e = np.arange(self.num_elements)
        multi = self.element_multi_index(e)
        corners = np.array(
            [[(c >> a) & 1 for a in range(self.dim)] for c in range(2**self.dim)]
        )
        vm = multi[:, None, :] + corners[None, :, :]
        return sum(vm[..., a] * (self.n + 1) ** a for a in range(self.dim))

    @cached_property
    def boundary_vertex_mask(self) -> np.ndarray:
        x = self.vertex_coords
        return np.any((x == 0.0) | (x == 1.0), axis=1)

    def locate(self, element: int, ell: int) -> tuple[np.ndarray, np.ndarray]:
        """Index bounds ``[lo, hi)`` per axis of the order-``ell`` patch block."""
        m = self.element_multi_index(element)
        lo = np.maximum(m - ell, 0)
        hi = np.minimum(m + ell + 1, self.n)
        return lo, hi


def build_mesh(dimension: int, cells_per_axis: int) -> TensorMesh:
    return TensorMesh(int(dimension), int(cells_per_axis))


def block_elements(mesh: TensorMesh, lo, hi) -> np.ndarray:
    """Sorted element indices of the multi-index box ``[lo, hi)``."""
    ranges = [np.arange(lo[a], hi[a]) for a in range(mesh.dim)]
    grids = np.meshgrid(*ranges, indexing="ij")
    multi = np.stack([g.ravel() for g in grids], axis=-1)
    return np.sort(mesh.element_index(multi).reshape(-1))


def patch(mesh: TensorMesh, element: int, ell: int) -> np.ndarray:
    """Element patch of order ``ell``: ``ell`` rings of closure neighbours.

    On a uniform tensor grid this is the ``(2 ell + 1)**d`` block around the
    element, clipped to the domain.
    """
    if ell < 1:
        raise ConfigError(f"patch order must be >= 1, got {ell}")
    if not 0 <= element < mesh.num_elements:
        raise ConfigError(f"element {element} out of range")
    lo, hi = mesh.locate(element, ell)
    return block_elements(mesh, lo, hi)


@dataclass(frozen=True)
class NestingMap:
    coarse: TensorMesh
    fine: TensorMesh

    def __post_init__(self):
        if self.coarse.dim != self.fine.dim:
            raise NonNestedMeshes("meshes have different dimensions")
        if self.fine.n % self.coarse.n:
            raise NonNestedMeshes(
                f"fine mesh (n={self.fine.n}) is not a refinement of coarse mesh (n={self.coarse.n})"
            )

    @property
    def ratio(self) -> int:
        return self.fine.n // self.coarse.n

    @cached_property
    def parent(self) -> np.ndarray:
        """Coarse parent of every fine element."""
        multi = self.fine.element_multi_index(np.arange(self.fine.num_elements))
        return np.asarray(self.coarse.element_index(multi // self.ratio)).reshape(-1)

    @cached_property
    def offset(self) -> np.ndarray:
        """Position of each fine element inside its parent, in fine cells."""
        multi = self.fine.element_multi_index(np.arange(self.fine.num_elements))
        return (multi % self.ratio).reshape(-1, self.fine.dim)

    @cached_property
    def children(self) -> np.ndarray:
        """``(coarse elements, ratio**d)`` fine element indices, sorted per row."""
        order = np.argsort(self.parent, kind="stable")
        return order.reshape(self.coarse.num_elements, -1)


def nesting(coarse: TensorMesh, fine: TensorMesh) -> NestingMap:
    return NestingMap(coarse, fine)
