"""First-order perturbation of a degenerate eigenvalue.

The central object is the nu x nu matrix ``G`` of a perturbation restricted
to a degenerate eigenspace.  Its spectrum is the first-order splitting, it
is a multiple of the identity exactly when the perturbation can keep the
multiplicity, and the span of a family of such matrices together with the
identity decides the codimension of the multiplicity-preserving set.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .spectral import EigenCluster, eig_sym

__all__ = [
    "GammaMatrix",
    "HMembership",
    "TransversalityReport",
    "SingularGramError",
    "basis_id",
    "gamma_abstract",
    "predict_splitting",
    "h_membership",
    "default_h_tol",
    "product_functions",
    "project_to_H",
    "sym_vectorize",
    "transversality_check",
    "cluster_width",
    "splitting_gap",
    "perturbed_cluster",
]

FLAVORS = ("abstract", "coefficient", "domain")
ABSTRACT_H_TOL = 1e-8
DISCRETE_H_RTOL = 1e-6
DEFAULT_RANK_TOL = 1e-8
GAMMA_SYMMETRY_TOL = 1e-10


class SingularGramError(ValueError):
    """The products of the cluster basis are numerically dependent."""

    def __init__(self, min_eigenvalue: float):
        super().__init__(f"Gram matrix of eigenfunction products is singular (min eigenvalue {min_eigenvalue:.3e})")
        self.min_eigenvalue = min_eigenvalue


def basis_id(basis: np.ndarray) -> str:
    """Short content hash identifying a cluster basis."""
    return hashlib.sha1(np.ascontiguousarray(basis, dtype=float).tobytes()).hexdigest()[:12]


@dataclass
class GammaMatrix:
    entries: np.ndarray
    flavor: str = "abstract"
    basis_id: str = ""

    def __post_init__(self):
        E = np.asarray(self.entries, dtype=float)
        if E.ndim != 2 or E.shape[0] != E.shape[1]:
            raise ValueError(f"gamma matrix must be square, got {E.shape}")
        if self.flavor not in FLAVORS:
            raise ValueError(f"unknown flavor {self.flavor!r}")
        asym = float(np.max(np.abs(E - E.T))) if E.size else 0.0
        if asym > GAMMA_SYMMETRY_TOL * max(1.0, float(np.max(np.abs(E)))):
            raise ValueError(f"gamma matrix is not symmetric: max|G - G^T| = {asym:.3e}")
        self.entries = 0.5 * (E + E.T)

    @property
    def nu(self) -> int:
        return self.entries.shape[0]

    def spectrum(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.entries)

    def rotated(self, R) -> "GammaMatrix":
        """Matrix of the same functional in the basis ``basis @ R``."""
        R = np.asarray(R, dtype=float)
        return GammaMatrix(R.T @ self.entries @ R, self.flavor, self.basis_id)

    def norm(self) -> float:
        return float(np.max(np.abs(self.entries))) if self.entries.size else 0.0


@dataclass
class HMembership:
    is_member: bool
    rho: float
    off_diag_norm: float
    diag_spread: float
    tol: float


@dataclass
class TransversalityReport:
    nu: int
    sample_count: int
    span_dim: int
    full: bool
    codimension: int
    singular_values: list


def gamma_abstract(dT, cluster: EigenCluster) -> GammaMatrix:
    """G_ij = <dT x_j, x_i> over the cluster basis."""
    dT = np.asarray(dT, dtype=float)
    B = cluster.basis
    if dT.shape != (B.shape[0], B.shape[0]):
        raise ValueError(f"dimension mismatch: perturbation {dT.shape}, basis rows {B.shape[0]}")
    return GammaMatrix(B.T @ dT @ B, "abstract", basis_id(B))


def predict_splitting(lam0: float, gamma: GammaMatrix, eps: float, direction: str = "value") -> np.ndarray:
    """First-order eigenvalues of the cluster under a perturbation of size eps.

    ``value``: lam0 + eps * spec(G).  ``inverse``: G perturbs the inverse
    operator, whose eigenvalue is mu0 = 1/lam0, so mu = mu0 + eps * spec(G)
    and the result is 1/mu.
    """
    g = gamma.spectrum()
    if direction == "value":
        out = lam0 + eps * g
    elif direction == "inverse":
        if lam0 == 0:
            raise ValueError("inverse direction needs lam0 != 0")
        out = 1.0 / (1.0 / lam0 + eps * g)
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return np.sort(out)


def h_membership(gamma: GammaMatrix, tol: float) -> HMembership:
    """Is G a multiple of the identity, within tol?"""
    if tol <= 0:
        raise ValueError("tol must be positive")
    E = gamma.entries
    nu = gamma.nu
    off = E - np.diag(np.diag(E))
    off_norm = float(np.max(np.abs(off))) if nu > 1 else 0.0
    d = np.diag(E)
    spread = float(d.max() - d.min())
    member = off_norm <= tol and spread <= tol
    rho = float(d.mean()) if member else float("nan")
    return HMembership(member, rho, off_norm, spread, tol)


def default_h_tol(gamma: GammaMatrix) -> float:
    if gamma.flavor == "abstract":
        return ABSTRACT_H_TOL
    return DISCRETE_H_RTOL * max(gamma.norm(), np.finfo(float).tiny)


def _pairs(nu: int):
    return [(i, j) for i in range(nu) for j in range(i, nu)]


def product_functions(basis: np.ndarray) -> np.ndarray:
    """Columns phi_i * phi_j for i <= j, in row-major upper-triangle order."""
    return np.stack([basis[:, i] * basis[:, j] for i, j in _pairs(basis.shape[1])], axis=1)


def _mass_diag(mass, size: int) -> np.ndarray:
    if mass is None:
        return np.ones(size)
    mass = np.asarray(mass, dtype=float)
    return np.diag(mass) if mass.ndim == 2 else mass


def project_to_H(b, cluster: EigenCluster, mass=None) -> np.ndarray:
    """Remove from b the combination of eigenfunction products that splits the cluster.

    Returns ``b - sum c_ij phi_i phi_j`` whose matrix is ``rho * I`` with rho
    the mean diagonal of the matrix of ``b``.  ``mass`` is the (lumped,
    diagonal) quadrature matrix; identity when omitted.
    """
    b = np.asarray(b, dtype=float)
    B = cluster.basis
    m = _mass_diag(mass, B.shape[0])
    if b.shape != (B.shape[0],):
        raise ValueError(f"field has shape {b.shape}, expected ({B.shape[0]},)")
    P = product_functions(B)
    gram = P.T @ (m[:, None] * P)
    ev = np.linalg.eigvalsh(gram)
    if ev[0] <= 1e-12 * max(ev[-1], np.finfo(float).tiny):
        raise SingularGramError(float(ev[0]))
    G = (B.T * (m * b)) @ B
    nu = B.shape[1]
    rho = np.trace(G) / nu
    rhs = np.array([G[i, j] - (rho if i == j else 0.0) for i, j in _pairs(nu)])
    c = np.linalg.solve(gram, rhs)
    return b - P @ c


_SQRT2 = math.sqrt(2.0)


def sym_vectorize(E) -> np.ndarray:
    """Isometric map Sym(nu) -> R^{nu(nu+1)/2}; off-diagonals scaled by sqrt(2)."""
    E = np.asarray(E, dtype=float)
    return np.array([E[i, j] * (1.0 if i == j else _SQRT2) for i, j in _pairs(E.shape[0])])


def transversality_check(gammas, rank_tol: float = DEFAULT_RANK_TOL) -> TransversalityReport:
    """Dimension of span{G_1, ..., G_m, I} inside the symmetric nu x nu matrices."""
    gammas = list(gammas)
    if not gammas:
        raise ValueError("transversality_check needs at least one gamma matrix")
    if rank_tol <= 0:
        raise ValueError("rank_tol must be positive")
    nu = gammas[0].nu
    if any(g.nu != nu for g in gammas):
        raise ValueError("all gamma matrices must share nu")
    rows = [sym_vectorize(np.eye(nu))] + [sym_vectorize(g.entries) for g in gammas]
    sv = np.linalg.svd(np.array(rows), compute_uv=False)
    rank = int(np.sum(sv >= rank_tol * sv[0])) if sv[0] > 0 else 0
    full_dim = nu * (nu + 1) // 2
    return TransversalityReport(
        nu=nu,
        sample_count=len(gammas),
        span_dim=rank,
        full=rank == full_dim,
        codimension=rank - 1,
        singular_values=[float(x) for x in sv],
    )


def cluster_width(values) -> float:
    v = np.asarray(values, dtype=float)
    return float(v.max() - v.min()) if v.size else 0.0


def splitting_gap(gamma: GammaMatrix) -> float:
    """Spread of spec(G): the first-order rate at which the cluster widens."""
    return cluster_width(gamma.spectrum())


def perturbed_cluster(T, dT, eps: float, indices) -> np.ndarray:
    """Brute-force eigenvalues of T + eps*dT at the given (ascending) indices."""
    return eig_sym(np.asarray(T) + eps * np.asarray(dT)).values[list(indices)]
