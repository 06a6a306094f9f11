"""Dense symmetric eigensolvers, metric-aware bases and eigenvalue clusters."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack, solve_triangular

__all__ = [
    "EigensolverError",
    "NotPositiveDefiniteError",
    "EigenSystem",
    "EigenCluster",
    "as_symmetric",
    "eig_sym",
    "eig_gen",
    "jacobi_eigh",
    "gram_schmidt",
    "detect_clusters",
]

SYMMETRY_TOL = 1e-12
DEFAULT_CLUSTER_TOL = 1e-6


class EigensolverError(RuntimeError):
    """Raised when an iterative eigensolver fails to converge."""


class NotPositiveDefiniteError(ValueError):
    """Raised when a metric matrix fails its Cholesky factorization."""

    def __init__(self, pivot: int):
        super().__init__(f"metric is not positive definite: Cholesky fails at pivot {pivot}")
        self.pivot = pivot


def as_symmetric(K, tol: float = SYMMETRY_TOL) -> np.ndarray:
    """Validate near-symmetry of ``K`` and return its symmetric part.

    The check is ``max|K - K^T| <= tol * max(1, max|K|)`` so that matrices
    scaled by h^{-2s} are not rejected for rounding in their last bits.
    """
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {K.shape}")
    asym = np.max(np.abs(K - K.T)) if K.size else 0.0
    scale = max(1.0, float(np.max(np.abs(K)))) if K.size else 1.0
    if asym > tol * scale:
        raise ValueError(f"matrix is not symmetric: max|K - K^T| = {asym:.3e}")
    return 0.5 * (K + K.T)


def _fix_signs(V: np.ndarray) -> np.ndarray:
    # largest-magnitude component of every column made positive
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


@dataclass
class EigenSystem:
    """Ascending eigenpairs of ``K v = lambda M v`` (M = identity when absent)."""

    values: np.ndarray
    vectors: np.ndarray
    metric: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.values.size

    @property
    def inverse_values(self) -> np.ndarray:
        """Eigenvalues mu_k = 1/lambda_k of the inverse (compact) operator."""
        return 1.0 / self.values

    def metric_matrix(self) -> np.ndarray:
        return np.eye(self.dim) if self.metric is None else self.metric

    def orthonormality_error(self) -> float:
        V = self.vectors
        G = V.T @ self.metric_matrix() @ V
        return float(np.max(np.abs(G - np.eye(G.shape[0])))) if G.size else 0.0

    def residuals(self, K) -> np.ndarray:
        """||K v_k - lambda_k M v_k|| / ((1 + |lambda_k|) ||v_k||) per pair."""
        V = self.vectors
        R = K @ V - (self.metric_matrix() @ V) * self.values
        return np.linalg.norm(R, axis=0) / ((1.0 + np.abs(self.values)) * np.linalg.norm(V, axis=0))


@dataclass
class EigenCluster:
    """Numerically coincident eigenvalues and an orthonormal basis of their span."""

    center: float
    indices: list[int]
    basis: np.ndarray
    metric: np.ndarray | None = field(default=None, repr=False)

    @property
    def multiplicity(self) -> int:
        return len(self.indices)

    nu = multiplicity

    def spread(self, values) -> float:
        v = np.asarray(values)[self.indices]
        return float(v.max() - v.min())

    def orthonormality_error(self) -> float:
        M = np.eye(self.basis.shape[0]) if self.metric is None else self.metric
        G = self.basis.T @ M @ self.basis
        return float(np.max(np.abs(G - np.eye(self.multiplicity))))


def _off_norm(A: np.ndarray) -> float:
    return float(np.linalg.norm(A - np.diag(np.diag(A))))


def jacobi_eigh(A, tol: float = 1e-14, max_sweeps: int = 60):
    """Cyclic Jacobi eigensolver for a dense symmetric matrix.

    Rotations sweep the strict upper triangle row by row; the order is fixed,
    so the output is deterministic.  Returns ``(values, vectors)`` sorted
    ascending.
    """
    A = np.array(A, dtype=float)
    n = A.shape[0]
    V = np.eye(n)
    scale = np.linalg.norm(A)
    if n <= 1 or scale == 0.0:
        return np.diag(A).copy(), V
    off = _off_norm(A)
    for _ in range(max_sweeps):
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.hypot(1.0, theta)) if theta != 0 else 1.0
                c = 1.0 / np.hypot(1.0, t)
                sn = t * c
                ap, aq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * ap - sn * aq
                A[:, q] = sn * ap + c * aq
                ap, aq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * ap - sn * aq
                A[q, :] = sn * ap + c * aq
                A[p, q] = A[q, p] = 0.0
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - sn * vq
                V[:, q] = sn * vp + c * vq
        off = _off_norm(A)
    else:
        if off > tol * scale:
            raise EigensolverError(
                f"Jacobi did not converge for dimension {n}: off-diagonal norm {off:.3e} "
                f"after {max_sweeps} sweeps"
            )
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def eig_sym(K, method: str = "lapack") -> EigenSystem:
    """Full ascending spectrum of a symmetric matrix.

    ``method`` is ``"lapack"`` (``numpy.linalg.eigh``) or ``"jacobi"``.
    Eigenvector signs are fixed so that the largest component is positive.
    """
    K = as_symmetric(K)
    if method == "lapack":
        w, V = np.linalg.eigh(K)
    elif method == "jacobi":
        w, V = jacobi_eigh(K)
    else:
        raise ValueError(f"unknown eigensolver method {method!r}")
    return EigenSystem(values=w, vectors=_fix_signs(V))


def _cholesky(M: np.ndarray) -> tuple[np.ndarray, bool]:
    d = np.diag(M)
    if np.count_nonzero(M - np.diag(d)) == 0:
        bad = np.nonzero(d <= 0)[0]
        if bad.size:
            raise NotPositiveDefiniteError(int(bad[0]))
        return np.sqrt(d), True
    L, info = lapack.dpotrf(M, lower=1, clean=1)
    if info > 0:
        raise NotPositiveDefiniteError(int(info - 1))
    if info < 0:
        raise ValueError(f"dpotrf: illegal argument {-info}")
    return L, False


def eig_gen(K, M, method: str = "lapack") -> EigenSystem:
    """Solve ``K v = lambda M v`` for symmetric K and symmetric positive definite M.

    Reduces through ``M = L L^T`` to the standard problem for
    ``L^{-1} K L^{-T}`` and returns M-orthonormal vectors.
    """
    K = as_symmetric(K)
    M = as_symmetric(M)
    if M.shape != K.shape:
        raise ValueError(f"shape mismatch: K {K.shape}, M {M.shape}")
    L, diagonal = _cholesky(M)
    if diagonal:
        A = K / L[:, None] / L[None, :]
    else:
        A = solve_triangular(L, solve_triangular(L, K, lower=True).T, lower=True).T
    es = eig_sym(A, method=method)
    if diagonal:
        V = es.vectors / L[:, None]
    else:
        V = solve_triangular(L.T, es.vectors, lower=False)
    V = V / np.sqrt(np.einsum("ik,ij,jk->k", V, M, V))
    return EigenSystem(values=es.values, vectors=_fix_signs(V), metric=M)


def gram_schmidt(V, M=None) -> np.ndarray:
    """Modified Gram-Schmidt (two passes) of the columns of V in the M inner product."""
    V = np.array(V, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    Mv = (lambda x: x) if M is None else (lambda x: M @ x)
    orig = np.sqrt(np.einsum("ik,ik->k", V, np.column_stack([Mv(V[:, j]) for j in range(V.shape[1])])))
    for _ in range(2):
        for j in range(V.shape[1]):
            for i in range(j):
                V[:, j] -= (V[:, i] @ Mv(V[:, j])) * V[:, i]
            nrm = np.sqrt(V[:, j] @ Mv(V[:, j]))
            # after the first pass the columns already have unit norm
            if nrm <= 1e-12 * (orig[j] if _ == 0 else 1.0):
                raise ValueError(f"column {j} is linearly dependent on earlier columns")
            V[:, j] /= nrm
    return V


def detect_clusters(es: EigenSystem, cluster_tol: float = DEFAULT_CLUSTER_TOL, window=None) -> list[EigenCluster]:
    """Partition the eigenvalues in ``window`` into clusters of coincident values.

    A cluster grows greedily over consecutive eigenvalues while its spread
    stays within ``cluster_tol * (1 + |mean|)``.  ``window`` is a
    ``(start, stop)`` pair or a ``range``; default is the whole spectrum.
    """
    if cluster_tol <= 0:
        raise ValueError("cluster_tol must be positive")
    if window is None:
        start, stop = 0, es.dim
    elif isinstance(window, range):
        start, stop = window.start, window.stop
    else:
        start, stop = int(window[0]), int(window[1])
    if not 0 <= start <= stop <= es.dim:
        raise ValueError(f"window ({start}, {stop}) outside spectrum of size {es.dim}")

    vals = es.values
    groups: list[list[int]] = []
    for k in range(start, stop):
        if groups:
            cand = groups[-1] + [k]
            v = vals[cand]
            if v.max() - v.min() <= cluster_tol * (1.0 + abs(v.mean())):
                groups[-1] = cand
                continue
        groups.append([k])

    M = es.metric
    clusters = []
    for g in groups:
        basis = gram_schmidt(es.vectors[:, g], M)
        clusters.append(EigenCluster(center=float(vals[g].mean()), indices=g, basis=basis, metric=M))
    return clusters


def cluster_containing(clusters, index: int) -> EigenCluster:
    for c in clusters:
        if index in c.indices:
            return c
    raise KeyError(f"no cluster contains eigenvalue index {index}")
