"""Sparse symmetric positive-definite factorisation.

SuperLU run in symmetric mode with diagonal pivoting and a minimum-degree
ordering on A + A' yields ``P A P' = L D L'``, which is all a GMRF needs:
log-determinants, solves and square-root solves for sampling.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class NotPositiveDefinite(np.linalg.LinAlgError):
    pass


class SparseCholesky:
    """``Q = P' L D L' P`` for a sparse symmetric positive-definite ``Q``."""

    def __init__(self, Q):
        Q = sp.csc_matrix(Q)
        self.n = Q.shape[0]
        try:
            lu = spla.splu(Q, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                           options={"SymmetricMode": True})
        except RuntimeError as exc:
            raise NotPositiveDefinite(str(exc)) from exc
        if not np.array_equal(lu.perm_r, lu.perm_c):
            raise NotPositiveDefinite("factorisation needed off-diagonal pivots")
        d = lu.U.diagonal()
        if not np.all(d > 0) or not np.all(np.isfinite(d)):
            raise NotPositiveDefinite("non-positive pivot in factorisation")
        self._lu = lu
        self.d = d
        self.perm = lu.perm_r
        self._L = None

    def logdet(self) -> float:
        return float(np.sum(np.log(self.d)))

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        return self._lu.solve(b)

    def _lower(self):
        if self._L is None:
            self._L = sp.csr_matrix(self._lu.L)
        return self._L

    def sqrt_solve(self, z):
        """Return x with Cov(x) = Q^{-1} when z is standard normal (n or n x k)."""
        z = np.asarray(z, dtype=float)
        w = z / np.sqrt(self.d)[:, None] if z.ndim == 2 else z / np.sqrt(self.d)
        y = spla.spsolve_triangular(self._lower().T.tocsr(), w, lower=False,
                                    unit_diagonal=True)
        return y[self.perm]

    def inverse_diagonal(self, chunk: int = 512) -> np.ndarray:
        """Diagonal of Q^{-1} by blocked solves against identity columns."""
        out = np.empty(self.n)
        for start in range(0, self.n, chunk):
            stop = min(start + chunk, self.n)
            e = np.zeros((self.n, stop - start))
            e[np.arange(start, stop), np.arange(stop - start)] = 1.0
            out[start:stop] = self.solve(e)[np.arange(start, stop), np.arange(stop - start)]
        return out


def log_pdet_dense(Q, tol: float = 1e-10) -> tuple[float, int]:
    """Log pseudo-determinant and rank of a small dense symmetric matrix."""
    w = np.linalg.eigvalsh(np.asarray(Q.toarray() if sp.issparse(Q) else Q))
    keep = w > tol * max(w.max(), 1.0)
    return float(np.sum(np.log(w[keep]))), int(keep.sum())
