"""Symmetric positive definite solvers: dense Cholesky and block-tridiagonal Cholesky.

The block-tridiagonal backend is the production path for the stacked normal
equations, whose matrix has nonzero ``m x m`` blocks only on the main diagonal
and the first off-diagonals.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack, solve_triangular

JITTER_SCALE = 1e-10


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Cholesky factorization failed; ``pivot`` is the 0-based failing row."""

    def __init__(self, pivot: int, context: str = ""):
        self.pivot = int(pivot)
        self.context = context
        msg = f"matrix is not positive definite (pivot {self.pivot})"
        if context:
            msg = f"{context}: {msg}"
        super().__init__(msg)


def cholesky(a: np.ndarray, context: str = "") -> np.ndarray:
    """Lower Cholesky factor of a dense SPD matrix."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] == 0:
        return a.copy()
    c, info = lapack.dpotrf(a, lower=1, clean=1)
    if info > 0:
        raise NotPositiveDefiniteError(info - 1, context)
    if info < 0:
        raise ValueError(f"illegal value in argument {-info} of dpotrf")
    return c


def cholesky_with_jitter(a: np.ndarray, context: str = "") -> tuple[np.ndarray, bool]:
    """Cholesky with a single retry after adding ``1e-10 * trace/dim * I``.

    Returns the factor and whether the jitter was needed.
    """
    a = np.asarray(a, dtype=float)
    try:
        return cholesky(a, context), False
    except NotPositiveDefiniteError:
        dim = a.shape[0]
        bump = JITTER_SCALE * np.trace(a) / dim
        return cholesky(a + bump * np.eye(dim), context), True


def jitter(a: np.ndarray) -> tuple[np.ndarray, bool]:
    """Apply the jitter policy to an estimated covariance matrix.

    ``1e-10 * trace/dim * I`` is added once when the Cholesky factorization
    fails or the smallest eigenvalue does not exceed that amount (numerically
    singular).  Returns the matrix and whether the jitter fired.
    """
    a = np.asarray(a, dtype=float)
    a = 0.5 * (a + a.T)
    dim = a.shape[0]
    bump = JITTER_SCALE * np.trace(a) / dim
    try:
        cholesky(a)
        singular = np.linalg.eigvalsh(a)[0] <= bump
    except NotPositiveDefiniteError:
        singular = True
    if not singular:
        return a, False
    bumped = a + bump * np.eye(dim)
    cholesky(bumped, "covariance after jitter")
    return bumped, True


def spd_inverse(a: np.ndarray, context: str = "") -> np.ndarray:
    low = cholesky(a, context)
    inv_low = solve_triangular(low, np.eye(a.shape[0]), lower=True)
    return inv_low.T @ inv_low


def spd_inverse_stack(blocks: np.ndarray, context: str = "") -> np.ndarray:
    """Inverse of each SPD block in an ``(n, d, d)`` stack."""
    blocks = np.asarray(blocks, dtype=float)
    try:
        np.linalg.cholesky(blocks)
    except np.linalg.LinAlgError:
        for t, blk in enumerate(blocks):
            try:
                cholesky(blk)
            except NotPositiveDefiniteError as err:
                d = blocks.shape[1]
                raise NotPositiveDefiniteError(t * d + err.pivot, f"{context} block {t}") from None
        raise
    inv = np.linalg.inv(blocks)
    return 0.5 * (inv + np.swapaxes(inv, 1, 2))


def logdet_spd_stack(blocks: np.ndarray) -> float:
    low = np.linalg.cholesky(np.asarray(blocks, dtype=float))
    return float(2.0 * np.log(np.diagonal(low, axis1=-2, axis2=-1)).sum())


@dataclass(frozen=True)
class BlockTridiagonal:
    """Symmetric block-tridiagonal matrix.

    ``diag[i]`` is block ``(i, i)``; ``upper[i]`` is block ``(i, i + 1)`` and
    block ``(i + 1, i)`` is its transpose.
    """

    diag: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        n, m, m2 = self.diag.shape
        if m != m2:
            raise ValueError("diagonal blocks must be square")
        if self.upper.shape != (max(n - 1, 0), m, m):
            raise ValueError(f"upper blocks must have shape {(n - 1, m, m)}, got {self.upper.shape}")

    @property
    def n_blocks(self) -> int:
        return self.diag.shape[0]

    @property
    def block_size(self) -> int:
        return self.diag.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        d = self.n_blocks * self.block_size
        return (d, d)

    def to_dense(self) -> np.ndarray:
        n, m = self.n_blocks, self.block_size
        out = np.zeros((n * m, n * m))
        for i in range(n):
            out[i * m:(i + 1) * m, i * m:(i + 1) * m] = self.diag[i]
        for i in range(n - 1):
            out[i * m:(i + 1) * m, (i + 1) * m:(i + 2) * m] = self.upper[i]
            out[(i + 1) * m:(i + 2) * m, i * m:(i + 1) * m] = self.upper[i].T
        return out

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        n, m = self.n_blocks, self.block_size
        xb = x.reshape(n, m, -1)
        out = np.einsum("nij,njr->nir", self.diag, xb)
        out[:-1] += np.einsum("nij,njr->nir", self.upper, xb[1:])
        out[1:] += np.einsum("nji,njr->nir", self.upper, xb[:-1])
        return out.reshape(x.shape)


@dataclass(frozen=True)
class BlockCholesky:
    """Factor ``A = L L'`` of a block-tridiagonal SPD matrix.

    ``chol[i]`` is the lower-triangular diagonal block of ``L``; block ``(i + 1, i)``
    of ``L`` equals ``coupling[i].T`` where ``coupling[i] = chol[i]^{-1} upper[i]``.
    """

    chol: np.ndarray
    coupling: np.ndarray

    @property
    def n_blocks(self) -> int:
        return self.chol.shape[0]

    @property
    def block_size(self) -> int:
        return self.chol.shape[1]

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        n, m = self.n_blocks, self.block_size
        if b.shape[0] != n * m:
            raise ValueError(f"right-hand side has {b.shape[0]} rows, expected {n * m}")
        rhs = b.reshape(n, m, -1)
        z = np.empty_like(rhs)
        prev = None
        for i in range(n):
            r = rhs[i] if prev is None else rhs[i] - self.coupling[i - 1].T @ prev
            z[i] = solve_triangular(self.chol[i], r, lower=True, check_finite=False)
            prev = z[i]
        x = np.empty_like(rhs)
        nxt = None
        for i in range(n - 1, -1, -1):
            r = z[i] if nxt is None else z[i] - self.coupling[i] @ nxt
            x[i] = solve_triangular(self.chol[i], r, lower=True, trans="T", check_finite=False)
            nxt = x[i]
        return x.reshape(b.shape)

    def logdet(self) -> float:
        return float(2.0 * np.log(np.diagonal(self.chol, axis1=1, axis2=2)).sum())

    def inverse_diagonal_blocks(self) -> np.ndarray:
        """Diagonal ``m x m`` blocks of ``A^{-1}`` by backward selected inversion."""
        n, m = self.n_blocks, self.block_size
        eye = np.eye(m)
        out = np.empty((n, m, m))
        inv_l = solve_triangular(self.chol[-1], eye, lower=True, check_finite=False)
        out[-1] = inv_l.T @ inv_l
        for i in range(n - 2, -1, -1):
            inv_l = solve_triangular(self.chol[i], eye, lower=True, check_finite=False)
            mid = eye + self.coupling[i] @ out[i + 1] @ self.coupling[i].T
            blk = inv_l.T @ mid @ inv_l
            out[i] = 0.5 * (blk + blk.T)
        return out


def block_cholesky(a: BlockTridiagonal) -> BlockCholesky:
    """Factor a block-tridiagonal SPD matrix.

    The matrix is first scaled symmetrically to unit diagonal, which keeps
    the factorization stable when regressors differ by orders of magnitude;
    the scaling is folded back into the returned factor.
    """
    n, m = a.n_blocks, a.block_size
    d = np.diagonal(a.diag, axis1=1, axis2=2)
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        bad = int(np.argwhere(~(d > 0) | ~np.isfinite(d))[0, 0] * m + np.argwhere(~(d > 0) | ~np.isfinite(d))[0, 1])
        raise NotPositiveDefiniteError(bad, "block-tridiagonal factorization")
    s = 1.0 / np.sqrt(d)                                        # (n, m)
    diag = a.diag * s[:, :, None] * s[:, None, :]
    upper = a.upper * s[:-1, :, None] * s[1:, None, :]
    chol = np.empty((n, m, m))
    coupling = np.empty((max(n - 1, 0), m, m))
    for i in range(n):
        blk = diag[i] if i == 0 else diag[i] - coupling[i - 1].T @ coupling[i - 1]
        try:
            chol[i] = cholesky(blk)
        except NotPositiveDefiniteError as err:
            raise NotPositiveDefiniteError(i * m + err.pivot, "block-tridiagonal factorization") from None
        if i < n - 1:
            coupling[i] = solve_triangular(chol[i], upper[i], lower=True, check_finite=False)
    # undo the scaling: L = D^{1/2} L~
    root = np.sqrt(d)
    chol = chol * root[:, :, None]
    coupling = coupling * root[1:, None, :]
    return BlockCholesky(chol, coupling)


def block_cholesky_with_jitter(a: BlockTridiagonal) -> tuple[BlockCholesky, bool]:
    """Block factorization with one retry after adding ``1e-10 * trace/dim * I``."""
    try:
        return block_cholesky(a), False
    except NotPositiveDefiniteError:
        dim = a.n_blocks * a.block_size
        bump = JITTER_SCALE * np.trace(a.diag, axis1=1, axis2=2).sum() / dim
        bumped = BlockTridiagonal(a.diag + bump * np.eye(a.block_size), a.upper)
        return block_cholesky(bumped), True


def solve_spd(a, b: np.ndarray) -> np.ndarray:
    """Solve ``A X = B`` for SPD ``A`` given densely or as a :class:`BlockTridiagonal`."""
    if isinstance(a, BlockTridiagonal):
        return block_cholesky(a).solve(b)
    a = np.asarray(a, dtype=float)
    low = cholesky(a, "dense solve")
    b = np.asarray(b, dtype=float)
    y = solve_triangular(low, b, lower=True, check_finite=False)
    return solve_triangular(low, y, lower=True, trans="T", check_finite=False)


def relative_deviation(a: np.ndarray, b: np.ndarray) -> float:
    """Max-norm relative deviation ``max|a - b| / max|b|``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = np.max(np.abs(b)) if b.size else 0.0
    diff = np.max(np.abs(a - b)) if a.size else 0.0
    if scale == 0.0:
        return float(diff)
    return float(diff / scale)


def woodbury_sides(s, t, u, v) -> tuple[np.ndarray, np.ndarray]:
    """Both sides of ``(S - T U^-1 V)^-1 = S^-1 + S^-1 T (U - V S^-1 T)^-1 V S^-1``."""
    left = np.linalg.inv(s - t @ np.linalg.solve(u, v))
    s_inv = np.linalg.inv(s)
    right = s_inv + s_inv @ t @ np.linalg.inv(u - v @ s_inv @ t) @ v @ s_inv
    return left, right
