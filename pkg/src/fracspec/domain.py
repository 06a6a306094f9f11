"""Domain perturbations: dist^s traces and the boundary derivative of eigenvalues.

Near a flat piece of boundary an eigenfunction behaves like
``t * dist**s + O(dist**(s+1))``.  The coefficient ``t`` plays the part of a
normal derivative: moving the boundary by ``eps * psi`` changes a simple
eigenvalue at the rate ``-Gamma(1+s)**2 * int t**2 psi.N``.  For a cluster
the same integral, taken over pairs of basis functions, gives a matrix
whose spectrum is the set of rates.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .coefficient import CoefficientProblem, solve_problem
from .discretization import Grid, assemble
from .perturbation import GammaMatrix, basis_id
from .report import Criterion, ExperimentReport
from .spectral import EigenCluster

__all__ = [
    "TraceSample",
    "BoundaryTrace",
    "DomainPerturbation",
    "UnsupportedPerturbationError",
    "extract_trace",
    "cluster_traces",
    "gamma_domain",
    "hadamard_derivative",
    "pohozaev_discrepancy",
    "verify_domain_splitting",
]

FIT_NODES = 6
MIN_FIT_NODES = 3
FIT_RTOL = 0.05
CORNER_EXCLUSION = 4          # in units of h
FD_EPS = 1e-4
FD_RTOL = 1e-6
EXACT_LAW_RTOL = 1e-10
ROUNDOFF_FACTOR = 4.0
SUPPORTED = {
    1: ("constant", "linear", "tabulated"),
    2: ("constant", "linear"),
}


class UnsupportedPerturbationError(ValueError):
    pass


@dataclass
class TraceSample:
    point: tuple
    normal: tuple
    value: float
    residual: float
    weight: float
    excluded: bool = False


@dataclass
class BoundaryTrace:
    cluster_index: int
    samples: list
    s: float
    notes: list = field(default_factory=list)

    @property
    def fit_diagnostics(self) -> list:
        return [smp.residual for smp in self.samples]

    def active(self) -> list:
        return [smp for smp in self.samples if not smp.excluded]

    def values(self) -> np.ndarray:
        return np.array([smp.value for smp in self.samples])

    def scaled(self, t: float) -> "BoundaryTrace":
        return BoundaryTrace(self.cluster_index,
                             [TraceSample(p.point, p.normal, t * p.value, p.residual, p.weight, p.excluded)
                              for p in self.samples], self.s, list(self.notes))


def _fit(depth: np.ndarray, vals: np.ndarray, s: float) -> tuple[float, float]:
    """Least-squares c0 d^s + c1 d^(s+1); returns (c0, residual norm)."""
    A = np.column_stack([depth**s, depth ** (s + 1)])
    coef, *_ = np.linalg.lstsq(A, vals, rcond=None)
    return float(coef[0]), float(np.linalg.norm(A @ coef - vals))


def extract_trace(phi, cluster_index: int, grid: Grid, s: float) -> BoundaryTrace:
    """Fit phi ~ c0 d^s + c1 d^(s+1) on the nodes along the inward normal.

    Uses the FIT_NODES nodes nearest each boundary sample, with d the
    distance to the sampled face.  1D: two samples (the endpoints).  2D:
    one sample per node row or column meeting each edge, skipping those
    within CORNER_EXCLUSION*h of a corner.  A sample is flagged and
    excluded when its fit residual exceeds FIT_RTOL times the largest
    normal-line norm of the field over all samples (the trace scale), so
    that samples near a nodal line are not rejected for being small.
    """
    if not 0.0 < s < 1.0:
        raise ValueError(f"s must lie in (0, 1), got {s}")
    v = np.asarray(getattr(phi, "values", phi), dtype=float).ravel()
    if v.size != grid.size:
        raise ValueError(f"field has {v.size} values, grid has {grid.size} nodes")
    n, h = grid.n, grid.h
    m = min(FIT_NODES, n)
    if m < MIN_FIT_NODES:
        raise ValueError(f"only {m} interior nodes on the normal line; need {MIN_FIT_NODES}")
    depth = h * np.arange(1, m + 1)
    lines = []                                  # (point, normal, weight, values)
    if grid.dim == 1:
        (lo, hi), = grid.bounds
        lines = [((lo,), (-1.0,), 1.0, v[:m]), ((hi,), (1.0,), 1.0, v[::-1][:m])]
    else:
        V = v.reshape(n, n)
        (ax, bx), (ay, by) = grid.bounds
        xs, ys = grid.axis(0), grid.axis(1)
        keep = [j for j in range(n) if min(j + 1, n - j) >= CORNER_EXCLUSION]
        if not keep:
            raise ValueError("every boundary sample lies in a corner neighborhood; refine the grid")
        w = np.full(len(keep), h)
        if len(keep) > 1:
            w[0] = w[-1] = 0.5 * h
        edges = (
            (lambda j: (ax, ys[j]), (-1.0, 0.0), lambda j: V[:m, j]),
            (lambda j: (bx, ys[j]), (1.0, 0.0), lambda j: V[::-1, j][:m]),
            (lambda j: (xs[j], ay), (0.0, -1.0), lambda j: V[j, :m]),
            (lambda j: (xs[j], by), (0.0, 1.0), lambda j: V[j, ::-1][:m]),
        )
        for point, nrm, line in edges:
            for j, wj in zip(keep, w):
                lines.append((tuple(map(float, point(j))), nrm, float(wj), line(j)))
    scale = max(float(np.linalg.norm(vals)) for *_, vals in lines)
    samples = []
    for pt, nrm, wj, vals in lines:
        c0, res = _fit(depth, vals, s)
        rel = res / scale if scale > 0 else 0.0
        samples.append(TraceSample(tuple(float(x) for x in pt), tuple(nrm), c0, rel, wj, rel > FIT_RTOL))
    tr = BoundaryTrace(cluster_index, samples, float(s))
    if grid.dim == 2:
        tr.notes.append(f"corner neighborhoods of radius {CORNER_EXCLUSION}h excluded from the boundary integral")
    bad = sum(smp.excluded for smp in samples)
    if bad:
        tr.notes.append(f"{bad} samples flagged: fit residual above {FIT_RTOL}")
    return tr


def cluster_traces(cluster: EigenCluster, grid: Grid, s: float) -> list:
    return [extract_trace(cluster.basis[:, k], cluster.indices[k], grid, s) for k in range(cluster.multiplicity)]


@dataclass
class DomainPerturbation:
    """Boundary velocity field psi, scaled by ``magnitude``.

    kind ``constant``: psi = c (translation; c a vector or scalar in 1D).
    kind ``linear``: psi(x) = c x (dilation about the origin, c scalar).
    kind ``tabulated``: psi given at boundary points by a callable or a
    mapping from point tuples to vectors.
    """

    kind: str
    c: object = 1.0
    table: object = None
    magnitude: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "linear", "tabulated"):
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if self.kind == "tabulated" and self.table is None:
            raise ValueError("tabulated perturbation needs a table")

    def __call__(self, point) -> np.ndarray:
        x = np.atleast_1d(np.asarray(point, dtype=float))
        if self.kind == "constant":
            val = np.broadcast_to(np.asarray(self.c, dtype=float), x.shape)
        elif self.kind == "linear":
            val = float(self.c) * x
        elif callable(self.table):
            val = np.atleast_1d(np.asarray(self.table(*x), dtype=float))
        else:
            key = tuple(float(t) for t in x)
            if key not in self.table:
                raise KeyError(f"no tabulated value at boundary point {key}")
            val = np.atleast_1d(np.asarray(self.table[key], dtype=float))
        return self.magnitude * val

    def normal_component(self, sample: TraceSample) -> float:
        return float(np.dot(self(sample.point), sample.normal))

    def size(self, grid: Grid) -> float:
        """|c| for translations and dilations, else sup |psi| at the 1D endpoints."""
        if self.kind == "linear":
            return abs(self.magnitude * float(self.c))
        if self.kind == "constant":
            return float(np.linalg.norm(np.atleast_1d(self.magnitude * np.asarray(self.c, dtype=float))))
        pts = [(lo,) for lo in grid.bounds[0]] if grid.dim == 1 else []
        return max((float(np.linalg.norm(self(p))) for p in pts), default=0.0)

    def describe(self) -> dict:
        c = self.c if self.kind != "tabulated" else None
        return {"kind": self.kind, "c": np.asarray(c, dtype=float).tolist() if c is not None else None,
                "magnitude": self.magnitude}


def gamma_domain(psi: DomainPerturbation, traces: list, cluster: EigenCluster | None = None) -> GammaMatrix:
    """G_ij = sum over boundary samples of w t_i t_j (psi . N)."""
    if not traces:
        raise ValueError("no traces given")
    if cluster is not None and len(traces) != cluster.multiplicity:
        raise ValueError(f"{len(traces)} traces for a cluster of multiplicity {cluster.multiplicity}")
    ref = [smp.point for smp in traces[0].samples]
    for tr in traces[1:]:
        if [smp.point for smp in tr.samples] != ref:
            raise ValueError("traces do not share the same boundary samples")
    nu = len(traces)
    use = [k for k in range(len(ref)) if not any(tr.samples[k].excluded for tr in traces)]
    T = np.array([[tr.samples[k].value for k in use] for tr in traces]).reshape(nu, len(use))
    wpn = np.array([traces[0].samples[k].weight * psi.normal_component(traces[0].samples[k]) for k in use])
    G = (T * wpn) @ T.T
    bid = basis_id(cluster.basis) if cluster is not None else ""
    return GammaMatrix(G, "domain", bid)


def hadamard_derivative(lam0: float, gamma_dom: GammaMatrix, s: float) -> np.ndarray:
    """Ascending first-order eigenvalue rates: spec(-Gamma(1+s)^2 G)."""
    if not lam0 > 0:
        raise ValueError(f"lam0 must be positive, got {lam0}")
    return np.sort(np.linalg.eigvalsh(-math.gamma(1.0 + s) ** 2 * gamma_dom.entries))


def pohozaev_discrepancy(problem: CoefficientProblem, index: int = 0) -> dict:
    """Compare Gamma(1+s)^2 * int t^2 x.N with 2 s lam for one eigenfunction.

    On [-1, 1] the integral is the sum of the two squared endpoint traces.
    """
    grid, s = problem.grid, problem.operator.s
    lam = float(problem.spectrum.values[index])
    tr = extract_trace(problem.spectrum.vectors[:, index], index, grid, s)
    g = gamma_domain(DomainPerturbation("linear", 1.0), [tr]).entries[0, 0]
    lhs = math.gamma(1.0 + s) ** 2 * g
    return {"lhs": lhs, "rhs": 2 * s * lam, "relative": lhs / (2 * s * lam) - 1.0,
            "traces": tr.values().tolist()}


def _mapped_grid(grid: Grid, psi: DomainPerturbation, eps: float) -> Grid:
    if psi.kind not in SUPPORTED[grid.dim]:
        raise UnsupportedPerturbationError(
            f"cannot rebuild the domain for a {psi.kind!r} perturbation in {grid.dim}D; "
            f"supported: {', '.join(SUPPORTED[grid.dim])}")
    if psi.kind == "linear":
        r = 1.0 + eps * psi.magnitude * float(psi.c)
        return Grid(tuple((r * lo, r * hi) for lo, hi in grid.bounds), grid.n)
    if psi.kind == "constant":
        return grid.translated(eps * psi.magnitude * np.asarray(psi.c, dtype=float))
    (lo, hi), = grid.bounds
    return Grid.interval(lo + eps * float(psi((lo,))[0]), hi + eps * float(psi((hi,))[0]), grid.n)


def _exact_quotient(psi: DomainPerturbation, s: float, lam: np.ndarray, eps: float) -> np.ndarray:
    if psi.kind == "constant":
        return np.zeros(lam.size)
    c = psi.magnitude * float(psi.c)
    return np.sort(lam * ((1.0 + eps * c) ** (-2 * s) - (1.0 - eps * c) ** (-2 * s)) / (2.0 * eps))


def _cluster_values(problem: CoefficientProblem, grid: Grid, idx: list) -> np.ndarray:
    op = assemble(problem.operator.s, grid, problem.operator.provenance.get("boundary_correction", True))
    return solve_problem(op, "additive", window=(0, 0)).spectrum.values[idx]


def verify_domain_splitting(base: CoefficientProblem, psi: DomainPerturbation, cluster: EigenCluster,
                            epsilons=(FD_EPS,), rtol: float = 0.05) -> ExperimentReport:
    """Central-difference eigenvalue rates on the mapped domain vs. the boundary formula.

    For each eps the rates (lam(eps) - lam(-eps)) / (2 eps) are computed at
    eps and eps/2 (Richardson check).  For dilations the exact rate
    -2 s c lam is a second oracle; for translations the exact rate is 0.
    """
    t0 = time.perf_counter()
    if base.base_a is not None or base.flavor != "additive":
        raise ValueError("domain perturbations are defined for the bare operator (additive flavor, no potential)")
    grid, s = base.grid, base.operator.s
    idx = list(cluster.indices)
    lam0 = float(np.mean(base.spectrum.values[idx]))
    traces = cluster_traces(cluster, grid, s)
    G = gamma_domain(psi, traces, cluster)
    predicted = hadamard_derivative(lam0, G, s)
    size = psi.size(grid)

    rep = ExperimentReport(kind="domain-split")
    rep.clusters = [{"center": lam0, "indices": idx, "nu": len(idx)}]
    rep.gammas = {"psi": G.entries}
    exact = None
    if psi.kind == "linear":
        exact = -2.0 * s * psi.magnitude * float(psi.c) * base.spectrum.values[idx]
    elif psi.kind == "constant":
        exact = np.zeros(len(idx))
    scale = 2.0 * s * lam0 * max(size, np.finfo(float).tiny)
    lam_max = float(np.max(np.abs(base.spectrum.values)))
    rates = []
    for eps in (float(e) for e in epsilons):
        if abs(eps) * size >= 1.0:
            raise ValueError(f"eps={eps:g} too large: eps*|psi| = {abs(eps) * size:.3g} must be < 1")
        d = {}
        for e in (eps, 0.5 * eps):
            up = _cluster_values(base, _mapped_grid(grid, psi, e), idx)
            dn = _cluster_values(base, _mapped_grid(grid, psi, -e), idx)
            d[e] = np.sort((up - dn) / (2.0 * e))
        richardson = (4.0 * d[0.5 * eps] - d[eps]) / 3.0
        step_change = float(np.max(np.abs(d[eps] - d[0.5 * eps])))
        for k, pr, me in zip(idx, predicted, d[eps]):
            rep.add_row(eps, k, pr, me)
        rates.append({"eps": eps, "rate": d[eps], "rate_half": d[0.5 * eps],
                      "richardson": richardson, "step_change": step_change})
        if exact is not None:
            # the same difference quotient applied to the exact law, then the derivative itself;
            # the first is limited only by eigensolver roundoff, about u * lam_max / eps
            floor = ROUNDOFF_FACTOR * np.finfo(float).eps * lam_max / (abs(eps) * scale)
            err = float(np.max(np.abs(d[eps] - _exact_quotient(psi, s, base.spectrum.values[idx], eps)))) / scale
            rep.add(Criterion(f"fd_vs_exact_law[{eps:g}]", err, max(EXACT_LAW_RTOL, floor), "<=",
                              note="matrix-level invariance: dilation scales lam by r^(-2s), translation leaves it; "
                                   f"roundoff floor {floor:.2e}"))
            err = float(np.max(np.abs(d[eps] - np.sort(exact)))) / scale
            rep.add(Criterion(f"fd_vs_derivative[{eps:g}]", err, FD_RTOL, "<=",
                              note="central difference vs -2s*c*lam (0 for translations)"))
        hd = float(np.max(np.abs(predicted - d[eps]))) / scale
        if grid.dim == 1:
            rep.add(Criterion(f"boundary_formula_vs_fd[{eps:g}]", hd, rtol, "<="))
        else:
            rep.results.setdefault("boundary_formula_vs_fd", []).append([eps, hd])
    rep.results.update({
        "lambda0": lam0,
        "predicted_rates": predicted,
        "exact_rates": exact,
        "finite_differences": rates,
        "traces": [[smp.value for smp in tr.samples] for tr in traces],
        "excluded_samples": sum(smp.excluded for tr in traces for smp in tr.samples),
    })
    for tr in traces[:1]:
        rep.notes.extend(tr.notes)
    if grid.dim == 2:
        rep.notes.append("square: the boundary formula omits corner neighborhoods; compared as a diagnostic only")
    rep.timings["verify_domain_splitting"] = time.perf_counter() - t0
    return rep
