"""Sparse kernels in CSR layout and a Jacobi-preconditioned conjugate gradient.

Every subdomain solve and every monolithic reference solve goes through
:func:`pcg`.  The kernels are written against plain numpy arrays; a
``DenseVector`` is just a 1-D float64 array.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

__all__ = [
    "CsrMatrix",
    "PcgConfig",
    "SolveStats",
    "PreconditionerError",
    "csr_from_triplets",
    "csr_from_coo",
    "spmv",
    "daxpy",
    "dot",
    "pcg",
    "write_matrix_market",
    "read_matrix_market",
]


class PreconditionerError(ValueError):
    """Raised when the Jacobi preconditioner cannot be formed."""


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    nrows: int
    ncols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ro = self.row_offsets
        if len(ro) != self.nrows + 1 or ro[0] != 0 or ro[-1] != len(self.values):
            raise ValueError("row_offsets inconsistent with nrows/values")
        if len(self.col_indices) != len(self.values):
            raise ValueError("col_indices and values differ in length")
        if np.any(np.diff(ro) < 0):
            raise ValueError("row_offsets must be nondecreasing")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nrows, self.ncols)

    @property
    def nnz(self) -> int:
        return len(self.values)

    def row_ids(self) -> np.ndarray:
        """Row index of every stored entry."""
        return np.repeat(np.arange(self.nrows), np.diff(self.row_offsets))

    def diagonal(self) -> np.ndarray:
        rows = self.row_ids()
        on_diag = rows == self.col_indices
        d = np.zeros(min(self.nrows, self.ncols))
        np.add.at(d, rows[on_diag], self.values[on_diag])
        return d

    def to_dense(self) -> np.ndarray:
        a = np.zeros(self.shape)
        np.add.at(a, (self.row_ids(), self.col_indices), self.values)
        return a

    def transpose(self) -> "CsrMatrix":
        return csr_from_coo(self.ncols, self.nrows, self.col_indices, self.row_ids(), self.values)

    def submatrix(self, rows: np.ndarray, cols: np.ndarray) -> "CsrMatrix":
        """Extract A[rows][:, cols] for index arrays ``rows`` and ``cols``."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        col_map = np.full(self.ncols, -1, dtype=np.int64)
        col_map[cols] = np.arange(len(cols))
        row_map = np.full(self.nrows, -1, dtype=np.int64)
        row_map[rows] = np.arange(len(rows))
        r = row_map[self.row_ids()]
        c = col_map[self.col_indices]
        keep = (r >= 0) & (c >= 0)
        return csr_from_coo(len(rows), len(cols), r[keep], c[keep], self.values[keep])

    def __matmul__(self, x):
        return spmv(self, x)


def csr_from_coo(nrows: int, ncols: int, rows, cols, vals) -> CsrMatrix:
    """Build a canonical CSR matrix from coordinate arrays.

    Duplicate ``(row, col)`` pairs are summed; explicit zeros are kept.
    """
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    vals = np.asarray(vals, dtype=np.float64).ravel()
    if not (len(rows) == len(cols) == len(vals)):
        raise ValueError("coordinate arrays differ in length")
    bad = (rows < 0) | (rows >= nrows) | (cols < 0) | (cols >= ncols)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise IndexError(
            f"entry ({rows[i]}, {cols[i]}, {vals[i]}) out of range for {nrows}x{ncols} matrix"
        )
    key = rows * ncols + cols
    uniq, inverse = np.unique(key, return_inverse=True)
    summed = np.bincount(inverse, weights=vals, minlength=len(uniq))
    urows = uniq // ncols if ncols else uniq
    ucols = uniq % ncols if ncols else uniq
    counts = np.bincount(urows, minlength=nrows) if len(uniq) else np.zeros(nrows, dtype=np.int64)
    offsets = np.zeros(nrows + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return CsrMatrix(nrows, ncols, offsets, ucols.astype(np.int64), summed.astype(np.float64))


def csr_from_triplets(nrows: int, ncols: int, entries: Iterable[tuple[int, int, float]]) -> CsrMatrix:
    entries = list(entries)
    if not entries:
        return csr_from_coo(nrows, ncols, [], [], [])
    for i, j, x in entries:
        if not (0 <= i < nrows and 0 <= j < ncols):
            raise IndexError(f"entry ({i}, {j}, {x}) out of range for {nrows}x{ncols} matrix")
    # fsum per slot so the stored values do not depend on triplet order
    acc: dict[tuple[int, int], list[float]] = {}
    for i, j, x in entries:
        acc.setdefault((int(i), int(j)), []).append(float(x))
    keys = list(acc)
    return csr_from_coo(
        nrows, ncols, [k[0] for k in keys], [k[1] for k in keys], [math.fsum(acc[k]) for k in keys]
    )


def _check_len(n: int, v: np.ndarray, what: str):
    if v.ndim != 1 or len(v) != n:
        raise ValueError(f"dimension mismatch: {what} has shape {v.shape}, expected ({n},)")


def spmv(A: CsrMatrix, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    _check_len(A.ncols, x, "x")
    prod = A.values * x[A.col_indices]
    # reduceat on nonempty rows only; empty rows stay zero
    y = np.zeros(A.nrows)
    if A.nnz:
        starts = A.row_offsets[:-1]
        nonempty = np.diff(A.row_offsets) > 0
        y[nonempty] = np.add.reduceat(prod, starts[nonempty])
    return y


def daxpy(alpha: float, x, y) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_len(len(y), x, "x")
    return alpha * x + y


def dot(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_len(len(y), x, "x")
    return float(np.dot(x, y))


@dataclass
class PcgConfig:
    tolerance: float = 1e-10
    max_iterations: int = 10_000

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class SolveStats:
    iterations: int
    final_residual: float
    residual_history: list[float] = field(default_factory=list)
    converged: bool = False


def pcg(A: CsrMatrix, b, cfg: PcgConfig | None = None, x0=None,
        callback=None) -> tuple[np.ndarray, SolveStats]:
    """Solve ``A x = b`` for SPD ``A`` with diagonal preconditioning.

    Convergence is declared when ``||b - A x||_2 <= tol * ||b||_2``.  The
    residual history holds the absolute 2-norm residual, entry 0 being the
    initial one.  If ``max_iterations`` is hit the last iterate is returned
    with ``converged=False``; CG iterates decrease the A-norm error
    monotonically, so the last iterate is also the best one in that norm.
    ``callback(x)`` is called with every new iterate.
    """
    cfg = cfg or PcgConfig()
    b = np.asarray(b, dtype=np.float64)
    if A.nrows != A.ncols:
        raise ValueError("pcg needs a square matrix")
    _check_len(A.nrows, b, "b")
    diag = A.diagonal()
    if np.any(diag <= 0):
        i = int(np.flatnonzero(diag <= 0)[0])
        raise PreconditionerError(f"nonpositive diagonal entry A[{i},{i}] = {diag[i]}")
    inv_diag = 1.0 / diag

    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), SolveStats(0, 0.0, [0.0], True)
    target = cfg.tolerance * bnorm

    if x0 is None:
        x = np.zeros_like(b)
        r = b.copy()
    else:
        x = np.array(x0, dtype=np.float64)
        r = b - spmv(A, x)
    rnorm = np.linalg.norm(r)
    history = [float(rnorm)]
    if rnorm <= target:
        return x, SolveStats(0, float(rnorm), history, True)

    z = inv_diag * r
    p = z.copy()
    rz = dot(r, z)
    it = 0
    while it < cfg.max_iterations:
        q = spmv(A, p)
        alpha = rz / dot(p, q)
        x += alpha * p
        r -= alpha * q
        it += 1
        if callback is not None:
            callback(x)
        rnorm = np.linalg.norm(r)
        history.append(float(rnorm))
        if rnorm <= target:
            return x, SolveStats(it, float(rnorm), history, True)
        z = inv_diag * r
        rz_new = dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, SolveStats(it, float(rnorm), history, False)


def write_matrix_market(path, A: CsrMatrix) -> None:
    import scipy.io
    import scipy.sparse as sp

    m = sp.csr_matrix((A.values, A.col_indices, A.row_offsets), shape=A.shape)
    scipy.io.mmwrite(str(path), m, precision=17)


def read_matrix_market(path) -> CsrMatrix:
    import scipy.io

    m = scipy.io.mmread(str(path)).tocoo()
    return csr_from_coo(m.shape[0], m.shape[1], m.row, m.col, m.data)
