"""Sparse direct solves with transpose support.

A thin wrapper around SuperLU. One factorization serves both ``A x = b`` and
``A^T x = b``; the latter is what the adjoint solver needs.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

RTOL = 1e-12
ATOL = 1e-14
#: relative residual accepted by the post-solve check
CHECK_RTOL = 1e-10
CHECK_RESIDUALS = __debug__


class SingularMatrixError(np.linalg.LinAlgError):
    pass


class ResidualCheckError(RuntimeError):
    pass


class Factorization:
    """Reusable LU factorization of a square sparse matrix."""

    supports_transpose = True

    def __init__(self, matrix):
        A = sp.csc_matrix(matrix, dtype=float)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"matrix must be square, got {A.shape}")
        self.matrix = A
        self.shape = A.shape
        self.scale = float(abs(A).max()) if A.nnz else 0.0
        if A.shape[0] == 0:
            self._lu = None
            return
        if A.nnz == 0:
            raise SingularMatrixError("matrix is structurally singular (no nonzeros)")
        try:
            self._lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as exc:  # SuperLU reports "Factor is exactly singular"
            raise SingularMatrixError(f"factorization failed: {exc}") from exc
        diag = np.abs(self._lu.U.diagonal())
        scale = max(self.scale, 1.0)
        if diag.min() <= 1e-14 * scale:
            k = int(np.argmin(diag))
            raise SingularMatrixError(
                f"numerically singular: pivot {k} has |u_kk| = {diag[k]:.3e} (matrix scale {scale:.3e})"
            )

    def solve(self, rhs, transpose: bool = False) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.shape[0]:
            raise ValueError(f"dimension mismatch: rhs has {rhs.shape[0]} rows, matrix {self.shape[0]}")
        if self._lu is None:
            return np.zeros_like(rhs)
        x = self._lu.solve(rhs, trans="T" if transpose else "N")
        if CHECK_RESIDUALS:
            A = self.matrix.T if transpose else self.matrix
            r = np.abs(A @ x - rhs).max()
            b = np.abs(rhs).max()
            if r > CHECK_RTOL * b + ATOL * max(1.0, self.scale):
                raise ResidualCheckError(f"linear solve residual {r:.3e} too large for |b| = {b:.3e}")
        return x


def factorize(system) -> Factorization:
    return Factorization(system)


def solve(f: Factorization, rhs, transpose: bool = False) -> np.ndarray:
    return f.solve(rhs, transpose=transpose)
