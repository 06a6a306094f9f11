"""Dimensionless quadrature weights for the collocation scheme.

Everything here works in lattice units (node spacing 1).  The physical
operator is ``C_{n,s} * h**(-2s)`` times these quantities, which is what
makes the assembled matrices exactly homogeneous and translation invariant.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.special import beta, betainc, binom, hyp2f1

_QUAD = dict(epsabs=1e-15, epsrel=1e-13, limit=400)


def normalization_constant(d: int, s: float) -> float:
    """C_{d,s} for the Fourier-symbol convention |xi|^{2s}."""
    return s * 4.0**s * math.gamma(0.5 * d + s) / (math.pi ** (0.5 * d) * math.gamma(1.0 - s))


def cos_power_integral(phi, s: float):
    """int_0^phi cos(t)**(2s) dt for phi in [0, pi/2]."""
    phi = np.asarray(phi, dtype=float)
    a, b = 0.5, s + 0.5
    return 0.5 * beta(a, b) * betainc(a, b, np.sin(phi) ** 2)


def _gauss(ng: int):
    x, w = np.polynomial.legendre.leggauss(ng)
    return 0.5 * (x + 1.0), 0.5 * w


# ---------------------------------------------------------------- 1D weights

def _ramp_integrals(a: float, b: float, s: float) -> tuple[float, float]:
    """(int_a^b t^{-1-2s} dt, int_a^b t^{-2s} dt) for 0 < a < b."""
    f = (a ** (-2 * s) - b ** (-2 * s)) / (2 * s)
    eps = 1.0 - 2.0 * s
    logr = math.log(b / a)
    g = logr if eps == 0.0 else a**eps * math.expm1(eps * logr) / eps
    return f, g


def far_weights_1d(s: float, n: int) -> np.ndarray:
    """Weights w[k], k = 0..n-1, of nodal values at lattice offset k.

    w[k] integrates the hat function centred at offset k against
    |t|^{-1-2s} over the far field |t| >= 1 (one side).  w[0] is unused.
    """
    w = np.zeros(n)
    gx, gw = _gauss(16)
    for k in range(1, n):
        if k <= 2:
            f, g = _ramp_integrals(k, k + 1, s)
            val = (k + 1) * f - g
            if k >= 2:
                f, g = _ramp_integrals(k - 1, k, s)
                val += g - (k - 1) * f
        else:
            t_up = k - 1 + gx
            t_dn = k + gx
            val = np.dot(gw, gx * t_up ** (-1 - 2 * s)) + np.dot(gw, (1 - gx) * t_dn ** (-1 - 2 * s))
        w[k] = val
    return w


def near_constant_1d(s: float) -> float:
    """Weight of the second difference in the near field [-1, 1]."""
    return 1.0 / (2.0 - 2.0 * s)


def exterior_tail_1d(s: float, n: int) -> np.ndarray:
    """int over the complement of [0, n+1] of |k - y|^{-1-2s}, nodes k = 1..n."""
    k = np.arange(1, n + 1, dtype=float)
    return (k ** (-2 * s) + (n + 1 - k) ** (-2 * s)) / (2 * s)


def inner_far_1d(s: float, n: int) -> np.ndarray:
    """int over [0, n+1] minus [k-1, k+1] of |k - y|^{-1-2s}."""
    k = np.arange(1, n + 1, dtype=float)
    return (2.0 - (k ** (-2 * s) + (n + 1 - k) ** (-2 * s))) / (2 * s)


# ---------------------------------------------------------------- 2D weights

def near_constant_2d(s: float) -> float:
    """(1/4) int_{[-1,1]^2} |y|^{-2s} dy, radially exact."""
    # int_0^{pi/4} sec(t)^{2-2s} dt = int_0^1 (1+u^2)^{-s} du
    ang = float(hyp2f1(s, 0.5, 1.5, -1.0))
    return 2.0 / (2.0 - 2.0 * s) * ang


def far_diagonal_2d(s: float) -> float:
    """int over R^2 minus [-1,1]^2 of |y|^{-2-2s} dy."""
    return 4.0 / s * float(cos_power_integral(math.pi / 4, s))


@lru_cache(maxsize=32)
def _cell_tables_2d(s: float, n: int, ng: int = 16):
    """Per-cell kernel integrals for cells with lower-left offsets in [-n, n-1]^2.

    Returns (corner, total) where corner[c, d, q] integrates the bilinear
    basis function of corner q (00, 10, 01, 11) and total integrates the
    kernel itself.  Cells of the near field are zero.
    """
    p = 2.0 + 2.0 * s
    gx, gw = _gauss(ng)
    offs = np.arange(-n, n, dtype=float)
    X = offs[:, None] + gx[None, :]                  # (nc, ng)
    b0, b1 = 1.0 - gx, gx
    nc = offs.size
    corner = np.zeros((nc, nc, 4))
    total = np.zeros((nc, nc))
    for ci in range(nc):
        r2 = X[ci][:, None, None] ** 2 + X[None, :, :] ** 2   # (ng, nc, ng)
        kv = r2 ** (-0.5 * p) * gw[:, None, None] * gw[None, None, :]
        # contract over the two quadrature axes
        corner[ci, :, 0] = np.einsum("i,idj,j->d", b0, kv, b0)
        corner[ci, :, 1] = np.einsum("i,idj,j->d", b1, kv, b0)
        corner[ci, :, 2] = np.einsum("i,idj,j->d", b0, kv, b1)
        corner[ci, :, 3] = np.einsum("i,idj,j->d", b1, kv, b1)
        total[ci] = kv.sum(axis=(0, 2))
    near = [n - 1, n]                                # offsets -1 and 0
    for a in near:
        for b in near:
            corner[a, b] = 0.0
            total[a, b] = 0.0
    return corner, total


def far_weights_2d(s: float, n: int) -> np.ndarray:
    """D4-symmetric table W[|a|, |b|] of far-field weights for node offsets."""
    corner, _ = _cell_tables_2d(s, n)
    W = np.zeros((2 * n + 1, 2 * n + 1))             # node offsets -n..n
    W[:-1, :-1] += corner[:, :, 0]
    W[1:, :-1] += corner[:, :, 1]
    W[:-1, 1:] += corner[:, :, 2]
    W[1:, 1:] += corner[:, :, 3]
    # fold onto nonnegative offsets, averaging the eight images
    Q = W[n:, n:] + W[n::-1, n:] + W[n:, n::-1] + W[n::-1, n::-1]
    Q = 0.125 * (Q + Q.T)
    return Q[:n, :n]


def inner_far_2d(s: float, n: int) -> np.ndarray:
    """int over the square minus the node's near field, per node (n, n)."""
    _, total = _cell_tables_2d(s, n)
    sat = np.zeros((2 * n + 1, 2 * n + 1))
    sat[1:, 1:] = total.cumsum(0).cumsum(1)
    out = np.empty((n, n))
    for i in range(n):
        lo_a, hi_a = n - (i + 1), 2 * n - i        # cell offsets -(i+1)..n-(i+1)
        for j in range(n):
            lo_b, hi_b = n - (j + 1), 2 * n - j
            out[i, j] = sat[hi_a, hi_b] - sat[lo_a, hi_b] - sat[hi_a, lo_b] + sat[lo_a, lo_b]
    return out


def exterior_tail_2d(s: float, n: int) -> np.ndarray:
    """int over R^2 minus [0, n+1]^2 of |x - y|^{-2-2s} dy for every node.

    Polar coordinates about the node reduce each edge to a closed-form
    angular integral of cos^{2s}.
    """
    k = np.arange(1, n + 1, dtype=float)
    I, J = np.meshgrid(k, k, indexing="ij")
    L = float(n + 1)
    total = np.zeros_like(I)
    for d, t1, t2 in ((I, J, L - J), (L - I, J, L - J), (J, I, L - I), (L - J, I, L - I)):
        total += d ** (-2 * s) * (cos_power_integral(np.arctan(t1 / d), s)
                                  + cos_power_integral(np.arctan(t2 / d), s))
    return total / (2 * s)


def d4_canonical(values: np.ndarray) -> np.ndarray:
    """Copy each node value from its canonical D4 representative."""
    n = values.shape[0]
    idx = np.arange(n)
    fold = np.minimum(idx, n - 1 - idx)
    A, B = np.meshgrid(fold, fold, indexing="ij")
    lo, hi = np.minimum(A, B), np.maximum(A, B)
    return values[lo, hi]


# ---------------------------------------------- boundary-layer correction

def _kappa_near(a, s: float, dim: int):
    a = np.abs(np.asarray(a, dtype=float))
    if dim == 1:
        return a ** (-1 - 2 * s)
    return 2.0 * a ** (-1 - 2 * s) * cos_power_integral(np.arctan(1.0 / a), s)


def _strip_integral(a, s: float):
    """int_{atan(1/a)}^{pi/2} cos^{2s}, written to stay accurate as a -> 0."""
    a = np.asarray(a, dtype=float)
    return 0.5 * beta(0.5, s + 0.5) * betainc(s + 0.5, 0.5, a * a / (1.0 + a * a))


def _kappa_far(a, s: float, dim: int):
    a = np.abs(np.asarray(a, dtype=float))
    if dim == 1:
        return np.where(a >= 1.0, a ** (-1 - 2 * s), 0.0)
    full = 2.0 * cos_power_integral(math.pi / 2, s) * a ** (-1 - 2 * s)
    with np.errstate(divide="ignore", invalid="ignore"):
        strip = 2.0 * a ** (-1 - 2 * s) * _strip_integral(a, s)
    return np.where(a > 1.0, full, strip)


def _near_moment(j: int, s: float, dim: int, upper: float) -> float:
    """int_0^upper a^{2j-1-2s} g(a) da with g the regular part of the near kernel."""
    if dim == 1:
        return upper ** (2 * j - 2 * s) / (2 * j - 2 * s)
    g = lambda a: 2.0 * float(cos_power_integral(math.atan2(1.0, a), s)) * a ** (2 * j - 2)
    return quad(g, 0.0, upper, weight="alg", wvar=(1 - 2 * s, 0.0), **_QUAD)[0]


def _kappa_strip(a: float, s: float) -> float:
    """2D far kernel inside |a| <= 1 (the strips above and below the near square)."""
    a = abs(a)
    if a < 1e-4:
        # leading terms of 2 a^{-1-2s} int_0^{atan a} sin^{2s}
        return 2.0 / (1.0 + 2.0 * s) * (1.0 - (1.0 + 2.0 * s) * (1.0 + s) / (3.0 + 2.0 * s) * a * a)
    return float(2.0 * a ** (-1 - 2 * s) * _strip_integral(a, s))


@lru_cache(maxsize=64)
def boundary_layer_residual(s: float, dim: int, kmax: int) -> np.ndarray:
    """Relative residual q[k-1] of the uncorrected scheme on the profile y_+^s.

    The profile y -> max(y, 0)^s is s-harmonic on the half line (and, as a
    function of one coordinate, on the half plane).  The lattice scheme does
    not annihilate it; q_k is the residual at the node k lattice steps from
    the boundary divided by the profile value k^s.  Subtracting q from the
    diagonal makes the scheme exact on the profile, which removes the
    lattice boundary layer that otherwise biases the delta^s traces.
    """
    if dim not in (1, 2):
        raise ValueError("dim must be 1 or 2")
    c_near = near_constant_1d(s) if dim == 1 else near_constant_2d(s)
    u = lambda y: np.maximum(y, 0.0) ** s

    jmax = 40
    js = np.arange(1, jmax + 1)
    coef = 2.0 * binom(s, 2 * js)
    mom_full = np.array([_near_moment(j, s, dim, 1.0) for j in js])
    mom_half = np.array([_near_moment(j, s, dim, 0.5) for j in js])

    # far-field cells m >= 1 on a fixed Gauss rule
    M = max(8192, 16 * kmax)
    gx, gw = _gauss(16)
    m = np.arange(1, M, dtype=float)
    Y = m[:, None] + gx[None, :]
    E = Y**s - ((1.0 - gx) * m[:, None] ** s + gx * (m[:, None] + 1.0) ** s)
    WE = (E * gw).ravel()
    Yf = Y.ravel()
    cell_of = np.repeat(np.arange(1, M), gx.size)
    full_far = 2.0 * float(cos_power_integral(math.pi / 2, s)) if dim == 2 else 1.0

    out = np.empty(kmax)
    for k in range(1, kmax + 1):
        d2 = float(u(k + 1.0) - 2.0 * u(float(k)) + u(k - 1.0))
        if k >= 2:
            near = float(np.dot(coef * float(k) ** (s - 2.0 * js), mom_full))
        else:
            near = float(np.dot(coef, mom_half))
            kn = lambda a: float(_kappa_near(a, s, dim))
            smooth = lambda a: ((1.0 + a) ** s - 2.0) * kn(a)
            near += quad(smooth, 0.5, 1.0, **_QUAD)[0]
            near += quad(kn, 0.5, 1.0, weight="alg", wvar=(0.0, s), **_QUAD)[0]

        # vectorized far cells, skipping the two cells adjacent to the node
        keep = (cell_of != k - 1) & (cell_of != k)
        a = np.abs(k - Yf[keep])
        far = float(np.dot(WE[keep], full_far * a ** (-1 - 2 * s)))
        # cell [0, 1]: e(y) = y^s - y with an endpoint singularity
        if dim == 1:
            if k >= 2:
                kf = lambda y: float(_kappa_far(k - y, s, 1))
                far += quad(kf, 0.0, 1.0, weight="alg", wvar=(s, 0.0), **_QUAD)[0]
                far -= quad(lambda y: y * kf(y), 0.0, 1.0, **_QUAD)[0]
        else:
            if k == 1:
                kf = lambda y: _kappa_strip(1.0 - y, s)
            else:
                kf = lambda y: full_far * (k - y) ** (-1 - 2 * s)
            far += quad(kf, 0.0, 1.0, weight="alg", wvar=(s, 0.0), **_QUAD)[0]
            far -= quad(lambda y: y * kf(y), 0.0, 1.0, **_QUAD)[0]
            # strips of the two node-adjacent cells (cell [0,1] handled above when k == 1)
            for mc in (k - 1, k):
                if mc < 1:
                    continue
                e = lambda y, mc=mc: y**s - ((mc + 1.0 - y) * mc**s + (y - mc) * (mc + 1.0) ** s)
                far += quad(lambda y: e(y) * _kappa_strip(k - y, s), mc, mc + 1.0, **_QUAD)[0]
        out[k - 1] = (-c_near * d2 + near + far) / float(k) ** s
    return out
