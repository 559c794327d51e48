"""Triplet-generation kernels for fine-scale assembly.

Each kernel exists twice: a numba ``@njit`` loop version and a vectorized
numpy version. Both return identical triplet arrays (same order, same
values). The numba path is used when numba is importable and the
environment variable ``HPLOD_NUMBA`` is not ``"0"``.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

USE_NUMBA = numba is not None and os.environ.get("HPLOD_NUMBA", "1") != "0"


def _njit(fn):
    if numba is None:  # pragma: no cover
        return fn
    return numba.njit(cache=True)(fn)


# --------------------------------------------------------------------------
# Q1 element matrices scaled per cell


def q1_triplets_numpy(cell_dofs, scale, local):
    nc, nv = cell_dofs.shape
    rows = np.repeat(cell_dofs, nv, axis=1).ravel()
    cols = np.tile(cell_dofs, (1, nv)).ravel()
    vals = (scale[:, None, None] * local[None, :, :]).ravel()
    keep = (rows >= 0) & (cols >= 0)
    return rows[keep], cols[keep], vals[keep]


@_njit
def _q1_triplets_loop(cell_dofs, scale, local):
    nc, nv = cell_dofs.shape
    count = 0
    for c in range(nc):
        inside = 0
        for a in range(nv):
            if cell_dofs[c, a] >= 0:
                inside += 1
        count += inside * inside
    rows = np.empty(count, dtype=np.int64)
    cols = np.empty(count, dtype=np.int64)
    vals = np.empty(count, dtype=np.float64)
    k = 0
    for c in range(nc):
        s = scale[c]
        for a in range(nv):
            ra = cell_dofs[c, a]
            if ra < 0:
                continue
            for b in range(nv):
                cb = cell_dofs[c, b]
                if cb < 0:
                    continue
                rows[k] = ra
                cols[k] = cb
                vals[k] = s * local[a, b]
                k += 1
    return rows, cols, vals


def q1_triplets_numba(cell_dofs, scale, local):
    return _q1_triplets_loop(
        np.ascontiguousarray(cell_dofs, dtype=np.int64),
        np.ascontiguousarray(scale, dtype=np.float64),
        np.ascontiguousarray(local, dtype=np.float64),
    )


# --------------------------------------------------------------------------
# coarse Legendre x fine hat couplings
#
# table[r, q, a] = integral over the reference fine interval of
# L_q((r + t) / ratio) * N_a(t), N_0 = 1 - t, N_1 = t.


def _local_degrees(degree, dim):
    nq = degree + 1
    j = np.arange(nq**dim)
    return np.stack([(j // nq**ax) % nq for ax in range(dim)], axis=-1)


def _local_corners(dim):
    a = np.arange(2**dim)
    return np.stack([(a >> ax) & 1 for ax in range(dim)], axis=-1)


def coupling_triplets_numpy(cell_dofs, parent, offset, table, weight, degree):
    nc, nv = cell_dofs.shape
    dim = offset.shape[1]
    q = _local_degrees(degree, dim)  # (nl, d)
    corner = _local_corners(dim)  # (nv, d)
    nl = q.shape[0]
    vals = np.full((nc, nl, nv), float(weight))
    for ax in range(dim):
        vals *= table[offset[:, ax][:, None, None], q[None, :, ax, None], corner[None, None, :, ax]]
    rows = np.broadcast_to((parent * nl)[:, None, None] + np.arange(nl)[None, :, None], vals.shape).ravel()
    cols = np.broadcast_to(cell_dofs[:, None, :], vals.shape).ravel()
    vals = vals.ravel()
    keep = cols >= 0
    return rows[keep], cols[keep], vals[keep]


@_njit
def _coupling_triplets_loop(cell_dofs, parent, offset, table, weight, degree):
    nc, nv = cell_dofs.shape
    dim = offset.shape[1]
    nq = degree + 1
    nl = nq**dim
    count = 0
    for c in range(nc):
        for a in range(nv):
            if cell_dofs[c, a] >= 0:
                count += nl
    rows = np.empty(count, dtype=np.int64)
    cols = np.empty(count, dtype=np.int64)
    vals = np.empty(count, dtype=np.float64)
    k = 0
    for c in range(nc):
        base = parent[c] * nl
        for j in range(nl):
            for a in range(nv):
                dof = cell_dofs[c, a]
                if dof < 0:
                    continue
                v = weight
                stride = 1
                for ax in range(dim):
                    qa = (j // stride) % nq
                    ca = (a >> ax) & 1
                    v *= table[offset[c, ax], qa, ca]
                    stride *= nq
                rows[k] = base + j
                cols[k] = dof
                vals[k] = v
                k += 1
    return rows, cols, vals


def coupling_triplets_numba(cell_dofs, parent, offset, table, weight, degree):
    return _coupling_triplets_loop(
        np.ascontiguousarray(cell_dofs, dtype=np.int64),
        np.ascontiguousarray(parent, dtype=np.int64),
        np.ascontiguousarray(offset, dtype=np.int64),
        np.ascontiguousarray(table, dtype=np.float64),
        float(weight),
        int(degree),
    )


def q1_triplets(cell_dofs, scale, local):
    if USE_NUMBA:
        return q1_triplets_numba(cell_dofs, scale, local)
    return q1_triplets_numpy(cell_dofs, scale, local)


def coupling_triplets(cell_dofs, parent, offset, table, weight, degree):
    if USE_NUMBA:
        return coupling_triplets_numba(cell_dofs, parent, offset, table, weight, degree)
    return coupling_triplets_numpy(cell_dofs, parent, offset, table, weight, degree)
