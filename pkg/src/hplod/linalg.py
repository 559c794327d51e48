"""Sparse SPD factorization and a Schur-complement solver for KKT systems.

The saddle-point systems solved here have the form::

    [ A  B^T ] [ x ]   [ c ]
    [ B   0  ] [ l ] = [ g ]

with ``A`` sparse SPD (a patch stiffness matrix) and ``B`` a short, wide
constraint block (L2 moments against coarse polynomials).
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NotPositiveDefinite, RankDeficientConstraints

RANK_TOL = 1e-12

# number of right-hand sides per sparse triangular solve call
_CHUNK = 512


def as_sparse(A) -> sp.csr_matrix:
    """Canonical CSR form: sorted indices, duplicates summed."""
    A = sp.csr_matrix(A)
    A.sum_duplicates()
    A.sort_indices()
    return A


class SpdFactorization:
    """Sparse LDL-type factorization of an SPD matrix.

    Backed by SuperLU in symmetric mode: a symmetric fill-reducing column
    ordering, diagonal pivots only. For an SPD matrix every pivot is then
    strictly positive; a non-positive pivot or an off-diagonal pivot choice
    means the input was not SPD.
    """

    def __init__(self, A):
        A = sp.csc_matrix(A, dtype=float)
        n, m = A.shape
        if n != m:
            raise NotPositiveDefinite(f"matrix is not square: {A.shape}")
        scale = abs(A).max() if A.nnz else 0.0
        if n and scale == 0.0:
            raise NotPositiveDefinite("zero matrix")
        asym = abs(A - A.T).max() if A.nnz else 0.0
        if asym > 1e-12 * scale:
            raise NotPositiveDefinite(f"matrix is not symmetric (|A - A^T| = {asym:.3e})")
        self.shape = A.shape
        try:
            self._lu = spla.splu(
                A,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
        except RuntimeError as exc:  # exactly singular
            raise NotPositiveDefinite(str(exc)) from exc
        if not np.array_equal(self._lu.perm_r, self._lu.perm_c):
            raise NotPositiveDefinite("factorization needed off-diagonal pivoting")
        pivots = self._lu.U.diagonal()
        if pivots.size and pivots.min() <= 0.0:
            raise NotPositiveDefinite(f"non-positive pivot {pivots.min():.3e}")

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.shape[0]:
            raise ValueError(f"right-hand side has {b.shape[0]} rows, expected {self.shape[0]}")
        return self._lu.solve(b)


def factorize_spd(A) -> SpdFactorization:
    return SpdFactorization(A)


def _dense_cholesky(S: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of ``S`` with a relative pivot floor."""
    norm = np.abs(S).sum(axis=0).max() if S.size else 0.0
    try:
        L = sla.cholesky(S, lower=True, check_finite=False)
    except sla.LinAlgError as exc:
        raise RankDeficientConstraints(f"Schur complement is not positive definite: {exc}") from exc
    pivots = np.diag(L) ** 2
    if pivots.size and pivots.min() < RANK_TOL * norm:
        raise RankDeficientConstraints(
            f"Schur complement pivot {pivots.min():.3e} below {RANK_TOL:g} * |S| = {RANK_TOL * norm:.3e}"
        )
    return L


class SchurKkt:
    """Reusable KKT solver for fixed ``(A, B)``.

    Factorizes ``A`` once, forms the dense Schur complement ``S = B A^-1 B^T``
    and keeps ``A^-1 B^T`` so that additional right-hand sides cost one dense
    solve with ``S`` plus a matrix product.

    Instances are read-only after construction; ``solve`` does not mutate
    state and may be called from several threads.
    """

    def __init__(self, A, B, factor: SpdFactorization | None = None, refine: int = 1):
        self.A = sp.csr_matrix(A, dtype=float)
        self.B = sp.csr_matrix(B, dtype=float)
        n = self.A.shape[0]
        m = self.B.shape[0]
        if self.B.shape[1] != n:
            raise ValueError(f"B has {self.B.shape[1]} columns, A has {n} rows")
        if m > n:
            raise RankDeficientConstraints(f"{m} constraints exceed {n} unknowns")
        self.factor = factor if factor is not None else factorize_spd(self.A)
        self.refine = refine
        BT = self.B.T.tocsc()
        Y = np.empty((n, m))
        for start in range(0, m, _CHUNK):
            stop = min(start + _CHUNK, m)
            Y[:, start:stop] = self.factor.solve(BT[:, start:stop].toarray())
        self.Y = Y
        S = np.asarray(self.B @ Y)
        S = 0.5 * (S + S.T)
        self.S = S
        self._L = _dense_cholesky(S)

    @property
    def shape(self) -> tuple[int, int]:
        return self.B.shape

    def _schur_solve(self, r: np.ndarray) -> np.ndarray:
        return sla.cho_solve((self._L, True), r, check_finite=False)

    def _solve_once(self, g, c):
        if c is None:
            lam = -self._schur_solve(g)
            x = -(self.Y @ lam)
        else:
            Ainv_c = self.factor.solve(c)
            lam = self._schur_solve(self.B @ Ainv_c - g)
            x = Ainv_c - self.Y @ lam
        return x, lam

    def solve(self, g, c=None) -> tuple[np.ndarray, np.ndarray]:
        """Solve for one or several right-hand sides (columns of ``g``/``c``).

        ``c=None`` means a zero primal right-hand side.
        """
        g = np.asarray(g, dtype=float)
        if g.shape[0] != self.B.shape[0]:
            raise ValueError(f"g has {g.shape[0]} rows, expected {self.B.shape[0]}")
        if c is not None:
            c = np.asarray(c, dtype=float)
            if c.shape[0] != self.A.shape[0]:
                raise ValueError(f"c has {c.shape[0]} rows, expected {self.A.shape[0]}")
        x, lam = self._solve_once(g, c)
        for _ in range(self.refine):
            cc = 0.0 if c is None else c
            r1 = cc - self.A @ x - self.B.T @ lam
            r2 = g - self.B @ x
            dx, dlam = self._solve_once(r2, r1)
            x = x + dx
            lam = lam + dlam
        return x, lam


def kkt_solve(A, B, g, c=None) -> tuple[np.ndarray, np.ndarray]:
    """One-shot solve of the equality-constrained quadratic minimization."""
    return SchurKkt(A, B).solve(g, c)

