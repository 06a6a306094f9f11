"""Run one experiment configuration and produce an ExperimentReport."""
from __future__ import annotations

import time

import numpy as np

from .coefficient import (
    ClusterCollisionError,
    independence_test,
    solve_problem,
    transversality_experiment,
    verify_splitting,
)
from .config import ConfigError, field_values
from .discretization import Grid, ScalarField, assemble
from .domain import (
    DomainPerturbation,
    UnsupportedPerturbationError,
    cluster_traces,
    gamma_domain,
    hadamard_derivative,
    pohozaev_discrepancy,
    verify_domain_splitting,
)
from .perturbation import SingularGramError, project_to_H
from .report import Criterion, ExperimentReport
from .spectral import EigensolverError, NotPositiveDefiniteError

__all__ = ["NumericalFailure", "run", "EXIT_PASS", "EXIT_FAIL", "EXIT_CONFIG", "EXIT_NUMERIC"]

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
SPECTRUM_WINDOW = 10
RESIDUAL_TOL = 1e-8
NULL_TEST_RTOL = 0.05
POHOZAEV_RTOL = 0.05

NUMERICAL_ERRORS = (EigensolverError, NotPositiveDefiniteError, ClusterCollisionError, SingularGramError,
                    UnsupportedPerturbationError, np.linalg.LinAlgError, FloatingPointError)


class NumericalFailure(RuntimeError):
    def __init__(self, stage: str, err: Exception):
        super().__init__(f"stage '{stage}': {type(err).__name__}: {err}")
        self.stage = stage


class _Stages:
    def __init__(self, timings: dict):
        self.timings = timings
        self.name = None

    def __call__(self, name):
        self.name = name
        return self

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, et, ev, tb):
        self.timings[self.name] = self.timings.get(self.name, 0.0) + time.perf_counter() - self.t0
        if ev is not None and not isinstance(ev, (ConfigError, NumericalFailure)):
            if isinstance(ev, NUMERICAL_ERRORS) or isinstance(ev, (ValueError, ArithmeticError)):
                raise NumericalFailure(self.name, ev) from ev
        return False


def _grid(cfg) -> Grid:
    lo, hi = cfg["geometry"]["bounds"]
    if cfg["geometry"]["type"] == "interval":
        return Grid.interval(lo, hi, cfg["n"])
    return Grid.square(lo, hi, cfg["n"])


def _field(cfg, spec, grid, basis=None, salt=0):
    return ScalarField(grid, field_values(spec, grid.points, cfg["seed"], basis, salt))


def _psi(spec) -> DomainPerturbation:
    mag = float(spec.get("magnitude", 1.0))
    if spec["kind"] == "tabulated":
        table = {(float(k),): float(v) for k, v in spec["values"].items()}
        return DomainPerturbation("tabulated", table=table, magnitude=mag)
    return DomainPerturbation(spec["kind"], spec.get("c", 1.0), magnitude=mag)


def _spectrum_block(problem, window) -> tuple[list, list]:
    vals = problem.spectrum.values
    lo, hi = window
    clusters = [{"center": c.center, "indices": c.indices, "nu": c.multiplicity} for c in problem.clusters]
    return vals[lo:hi].tolist(), clusters


def run(cfg: dict) -> ExperimentReport:
    """Execute a validated configuration.

    Raises ConfigError for problems that only show up once data is loaded
    and NumericalFailure (with the stage name) for solver or quadrature
    failures.
    """
    rep = ExperimentReport(kind=cfg["kind"], config=cfg)
    stage = _Stages(rep.timings)
    tol = cfg["tolerances"]
    grid = _grid(cfg)
    s = cfg["s"]

    with stage("assemble"):
        op = assemble(s, grid, cfg["boundary_correction"])
    with stage("solve"):
        a = _field(cfg, cfg["a"], grid, salt=1) if cfg.get("a") is not None else None
        window = cfg["window"] or [0, min(SPECTRUM_WINDOW, grid.size)]
        window = [min(window[0], grid.size), min(window[1], grid.size)]
        ci = cfg["cluster_index"]
        cw = (min(window[0], ci), max(window[1], ci + 1))
        problem = solve_problem(op, cfg["flavor"], a, cw, tol["cluster_tol"])
        rep.spectrum, rep.clusters = _spectrum_block(problem, window)
        cluster = problem.cluster(ci)
        rep.results["tracked_cluster"] = {"center": cluster.center, "indices": cluster.indices,
                                          "nu": cluster.multiplicity}

    kind = cfg["kind"]
    if kind == "solve":
        es = problem.spectrum
        K = problem.operator.stiffness()
        if a is not None and cfg["flavor"] == "additive":
            K = K + np.diag(np.diag(problem.mass()) * a.values)
        rep.add(Criterion("lambda1_positive", float(es.values[0]), 0.0, ">="))
        rep.add(Criterion("orthonormality", es.orthonormality_error(), RESIDUAL_TOL, "<="))
        rep.add(Criterion("residual", float(np.max(es.residuals(K))), RESIDUAL_TOL, "<="))
        rep.results["lambda1"] = float(es.values[0])

    elif kind == "coeff-split":
        with stage("perturb"):
            b = _field(cfg, cfg["b"], grid, cluster.basis, salt=2)
            if cfg["project_to_H"]:
                b = ScalarField(grid, project_to_H(b.values, cluster, problem.mass()))
            sub = verify_splitting(problem, b, cluster, cfg["epsilons"], tol["h_tol"])
        _merge(rep, sub)

    elif kind == "coeff-transversality":
        with stage("gamma"):
            specs = cfg.get("fields") or [{"type": "eigenproduct", "i": i, "j": j}
                                          for i in range(cluster.multiplicity)
                                          for j in range(i, cluster.multiplicity)]
            fields = [_field(cfg, f, grid, cluster.basis, salt=10 + k) for k, f in enumerate(specs)]
            gammas, tr = transversality_experiment(problem, cluster, fields, tol["rank_tol"])
        nu = cluster.multiplicity
        rep.gammas = {f"field[{k}]": g.entries for k, g in enumerate(gammas)}
        rep.results["transversality"] = {"nu": tr.nu, "sample_count": tr.sample_count, "span_dim": tr.span_dim,
                                         "full": tr.full, "codimension": tr.codimension,
                                         "singular_values": tr.singular_values}
        rep.add(Criterion("span_dim", tr.span_dim, nu * (nu + 1) // 2, ">=",
                          note=f"codimension {tr.codimension}"))

    elif kind == "independence":
        with stage("gram"):
            ir = independence_test(cluster, problem.mass(), tol["independence"])
        rep.results["independence"] = {"nu": ir.nu, "gram": ir.gram, "min_eigenvalue": ir.min_eigenvalue,
                                       "independent": ir.independent, "threshold": ir.threshold}
        rep.add(Criterion("min_gram_eigenvalue", ir.min_eigenvalue, ir.threshold, ">="))

    elif kind == "domain-hadamard":
        if cfg["flavor"] != "additive" or a is not None:
            raise ConfigError("field 'flavor': domain experiments use the bare operator (additive, no a)")
        with stage("traces"):
            traces = cluster_traces(cluster, grid, s)
        psi_spec = cfg.get("psi", {"kind": "linear", "c": 1.0})
        psi = _psi(psi_spec)
        g = gamma_domain(psi, traces, cluster)
        rates = hadamard_derivative(cluster.center, g, s)
        dil = gamma_domain(DomainPerturbation("linear", 1.0), traces, cluster)
        null = [gamma_domain(DomainPerturbation("constant", np.eye(grid.dim)[k]), traces, cluster)
                for k in range(grid.dim)]
        rep.gammas = {"psi": g.entries, "dilation": dil.entries}
        rep.results.update({"predicted_rates": rates, "exact_dilation_rate": -2 * s * cluster.center,
                            "traces": [t.values() for t in traces],
                            "excluded_samples": sum(x.excluded for t in traces for x in t.samples)})
        d11 = abs(float(dil.entries[0, 0]))
        for k, gn in enumerate(null):
            rep.add(Criterion(f"translation_null[e{k}]", abs(float(gn.entries[0, 0])) / d11, NULL_TEST_RTOL, "<="))
        if grid.dim == 1 and cluster.multiplicity == 1:
            pz = pohozaev_discrepancy(problem, cluster.indices[0])
            rep.results["pohozaev"] = pz
            rep.add(Criterion("pohozaev", abs(pz["relative"]), POHOZAEV_RTOL, "<="))
        for t in traces[:1]:
            rep.notes.extend(t.notes)

    elif kind == "domain-split":
        if cfg["flavor"] != "additive" or a is not None:
            raise ConfigError("field 'flavor': domain experiments use the bare operator (additive, no a)")
        with stage("perturb"):
            sub = verify_domain_splitting(problem, _psi(cfg["psi"]), cluster, cfg.get("epsilons", [1e-4]))
        _merge(rep, sub)
    return rep


def _merge(rep: ExperimentReport, sub: ExperimentReport):
    rep.clusters = rep.clusters or sub.clusters
    rep.gammas.update(sub.gammas)
    rep.rows.extend(sub.rows)
    rep.results.update(sub.results)
    rep.criteria.extend(sub.criteria)
    rep.notes.extend(sub.notes)
    for k, v in sub.timings.items():
        rep.timings[k] = v
