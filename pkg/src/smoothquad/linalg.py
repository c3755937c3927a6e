"""Dense symmetric linear algebra for the smoothing decomposition.

The pricing code needs three things from this module: a Cholesky factor
for solves against a covariance matrix, a symmetric eigensolver, and the
rank-one reduction that splits a covariance into the smoothing direction
``v`` and a positive semidefinite remainder.  Matrices here are small
(dimension is capped at 35), so everything favours clarity and exact
reproducibility over asymptotic speed.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionTooLarge,
    NoConvergence,
    NotPositiveDefinite,
    ZeroVector,
)

MAX_DIM = 35
MAX_ENUM_DIM = 25

_SWEEP_CAP = 100
_OFF_DIAG_TOL = 1e-13


@dataclass(frozen=True)
class SmoothingDecomposition:
    """Result of the rank-one covariance splitting.

    Attributes
    ----------
    V : ndarray, shape (d, d)
        Change-of-basis matrix.  The first column is the smoothing
        direction ``v``; the remaining columns are orthonormal
        eigenvectors of the reduced matrix.
    lambda_sq : ndarray, shape (d,)
        Factor variances.  ``lambda_sq[0]`` belongs to the smoothing
        direction, the rest are sorted in decreasing order and are
        nonnegative (tiny negative round-off is clamped to zero).
    v : ndarray, shape (d,)
        The smoothing direction that was supplied.
    """

    V: np.ndarray
    lambda_sq: np.ndarray
    v: np.ndarray

    @property
    def dim(self) -> int:
        return self.v.shape[0]


def _as_sym_matrix(a, max_dim=None) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[0]
    if max_dim is not None and n > max_dim:
        raise DimensionTooLarge(f"dimension {n} exceeds the cap of {max_dim}")
    scale = max(1.0, float(np.max(np.abs(a)))) if n else 1.0
    if np.max(np.abs(a - a.T), initial=0.0) > 1e-12 * scale:
        raise ValueError("matrix is not symmetric")
    return a


def _off_diag_norm(a: np.ndarray) -> float:
    off = a.copy()
    np.fill_diagonal(off, 0.0)
    return float(np.linalg.norm(off))


def cholesky(a) -> np.ndarray:
    """Lower-triangular Cholesky factor of a symmetric positive definite matrix.

    Parameters
    ----------
    a : array_like, shape (d, d)
        Symmetric positive definite matrix.

    Returns
    -------
    ndarray
        Lower-triangular ``L`` with ``L @ L.T == a`` up to round-off.

    Raises
    ------
    NotPositiveDefinite
        If a pivot is not strictly positive.
    """
    a = _as_sym_matrix(a)
    n = a.shape[0]
    L = np.zeros_like(a)
    for j in range(n):
        d = a[j, j] - L[j, :j] @ L[j, :j]
        if d <= 0.0:
            raise NotPositiveDefinite(f"pivot {j} is {d:.3e}, expected > 0")
        L[j, j] = np.sqrt(d)
        if j + 1 < n:
            L[j + 1:, j] = (a[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def solve_spd(L: np.ndarray, b) -> np.ndarray:
    """Solve ``A x = b`` given the Cholesky factor ``L`` of ``A``."""
    b = np.asarray(b, dtype=float)
    n = L.shape[0]
    y = np.empty(n)
    for i in range(n):
        y[i] = (b[i] - L[i, :i] @ y[:i]) / L[i, i]
    x = np.empty(n)
    for i in range(n - 1, -1, -1):
        x[i] = (y[i] - L[i + 1:, i] @ x[i + 1:]) / L[i, i]
    return x


def sym_eigen(a) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi sweeps.

    Rotations are applied pairwise in row-cyclic order until the
    off-diagonal Frobenius norm falls below ``1e-13`` times the Frobenius
    norm of the input; at most 100 sweeps are attempted.

    Parameters
    ----------
    a : array_like, shape (d, d)
        Symmetric matrix.

    Returns
    -------
    (eigenvalues, Q) : (ndarray, ndarray)
        Eigenvalues sorted in decreasing order and the matrix whose
        columns are the matching orthonormal eigenvectors.

    Raises
    ------
    NoConvergence
        If the sweep cap is reached before the threshold is met.
    """
    A = _as_sym_matrix(a).copy()
    A = 0.5 * (A + A.T)
    n = A.shape[0]
    Q = np.eye(n)
    if n == 1:
        return A[0, :1].copy(), Q

    fro = float(np.linalg.norm(A))
    if fro == 0.0:
        return np.zeros(n), Q
    target = _OFF_DIAG_TOL * fro
    # rotations below this size cannot push the off-diagonal norm back
    # over the target, so later sweeps skip them
    skip = target / (2.0 * n)

    converged = False
    for _ in range(_SWEEP_CAP):
        if _off_diag_norm(A) <= target:
            converged = True
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= skip:
                    continue
                app = A[p, p]
                aqq = A[q, q]
                theta = 0.5 * (aqq - app) / apq
                if abs(theta) > 1e154:
                    t = 0.5 / theta
                else:
                    t = np.sign(theta) if theta != 0.0 else 1.0
                    t /= abs(theta) + np.hypot(theta, 1.0)
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                cp = A[:, p].copy()
                cq = A[:, q].copy()
                new_p = c * cp - s * cq
                new_q = s * cp + c * cq
                A[:, p] = new_p
                A[:, q] = new_q
                A[p, :] = new_p
                A[q, :] = new_q
                A[p, p] = app - t * apq
                A[q, q] = aqq + t * apq
                A[p, q] = 0.0
                A[q, p] = 0.0
                vp = Q[:, p].copy()
                vq = Q[:, q].copy()
                Q[:, p] = c * vp - s * vq
                Q[:, q] = s * vp + c * vq
    if not converged:
        off = _off_diag_norm(A)
        if off > target:
            raise NoConvergence(
                f"Jacobi sweeps did not converge in {_SWEEP_CAP} sweeps "
                f"(off-diagonal {off:.3e}, target {target:.3e})"
            )

    eigvals = np.diag(A).copy()
    order = np.argsort(-eigvals, kind="stable")
    return eigvals[order], Q[:, order]


def _check_direction(v, n: int) -> np.ndarray:
    if v is None:
        return np.ones(n)
    v = np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise ValueError(f"direction has shape {v.shape}, expected ({n},)")
    if not np.any(v != 0.0):
        raise ZeroVector("smoothing direction is identically zero")
    return v


def lambda1_sq(sigma, v=None) -> float:
    """Variance captured by direction ``v``: ``1 / <v, sigma^-1 v>``.

    ``v`` defaults to the all-ones vector.
    """
    sigma = _as_sym_matrix(sigma, max_dim=MAX_DIM)
    v = _check_direction(v, sigma.shape[0])
    L = cholesky(sigma)
    w = solve_spd(L, v)
    ip = float(v @ w)
    if ip <= 0.0:
        raise NotPositiveDefinite(f"<v, sigma^-1 v> = {ip:.3e}, expected > 0")
    return 1.0 / ip


def rank_one_reduce(sigma, v=None) -> SmoothingDecomposition:
    """Split a covariance into a rank-one part along ``v`` plus a remainder.

    Writes ``sigma = V diag(lambda_sq) V.T`` where the first column of
    ``V`` is ``v`` itself and the remaining columns are orthonormal
    eigenvectors of ``sigma - v v.T / <v, sigma^-1 v>``.  That reduced
    matrix is positive semidefinite with a one-dimensional null space, so
    its smallest eigenvalue is discarded as the structural zero.

    Parameters
    ----------
    sigma : array_like, shape (d, d)
        Symmetric positive definite covariance.
    v : array_like, shape (d,), optional
        Nonzero direction; defaults to all ones.

    Returns
    -------
    SmoothingDecomposition

    Raises
    ------
    NotPositiveDefinite
        If ``sigma`` fails the Cholesky test, or the reduced matrix has an
        eigenvalue more negative than round-off allows.
    ZeroVector
        If ``v`` is identically zero.
    """
    sigma = _as_sym_matrix(sigma, max_dim=MAX_DIM)
    n = sigma.shape[0]
    v = _check_direction(v, n)

    L = cholesky(sigma)
    w = solve_spd(L, v)
    ip = float(v @ w)
    if ip <= 0.0:
        raise NotPositiveDefinite(f"<v, sigma^-1 v> = {ip:.3e}, expected > 0")
    lam1 = 1.0 / ip

    reduced = sigma - np.outer(v, v) / ip
    reduced = 0.5 * (reduced + reduced.T)
    eigvals, Q = sym_eigen(reduced)

    scale = float(np.linalg.norm(reduced))
    tail = eigvals[: n - 1].copy()
    floor = -1e-12 * max(scale, 1e-300)
    if np.any(tail < floor):
        worst = float(tail.min())
        raise NotPositiveDefinite(
            f"reduced matrix has eigenvalue {worst:.3e} below round-off"
        )
    tail[tail < 0.0] = 0.0

    V = np.empty((n, n))
    V[:, 0] = v
    V[:, 1:] = Q[:, : n - 1]
    lambda_sq = np.concatenate(([lam1], tail))
    return SmoothingDecomposition(V=V, lambda_sq=lambda_sq, v=v)


def best_binary_v(sigma) -> tuple[np.ndarray, float]:
    """Binary direction with the largest captured variance.

    Enumerates every nonzero ``v`` in ``{0,1}^d`` and maximizes
    ``lambda1_sq(sigma, v)``.  Ties are broken towards the smallest
    integer whose bit ``i`` equals ``v_i``.

    Raises
    ------
    DimensionTooLarge
        If ``d > 25`` (the enumeration is exponential in ``d``).
    """
    sigma = _as_sym_matrix(sigma, max_dim=MAX_DIM)
    n = sigma.shape[0]
    if n > MAX_ENUM_DIM:
        raise DimensionTooLarge(
            f"binary search enumerates 2^d vectors; d = {n} exceeds {MAX_ENUM_DIM}"
        )

    L = cholesky(sigma)
    # quadratic form v' P v with P = sigma^-1, assembled column by column
    P = np.empty((n, n))
    eye = np.eye(n)
    for j in range(n):
        P[:, j] = solve_spd(L, eye[:, j])
    P = 0.5 * (P + P.T)

    bits = np.arange(n, dtype=np.uint32)
    best_q = np.inf
    best_m = -1
    chunk = 1 << 16
    for start in range(1, 1 << n, chunk):
        stop = min(start + chunk, 1 << n)
        ms = np.arange(start, stop, dtype=np.uint32)
        B = ((ms[:, None] >> bits[None, :]) & 1).astype(float)
        quad = np.einsum("ij,ij->i", B @ P, B)
        k = int(np.argmin(quad))
        # strict comparison keeps the smallest integer on exact ties
        if quad[k] < best_q:
            best_q = float(quad[k])
            best_m = int(ms[k])
    v = ((best_m >> bits) & 1).astype(float)
    return v, 1.0 / best_q
