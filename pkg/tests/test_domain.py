import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracspec.coefficient import solve_problem
from fracspec.discretization import Grid, assemble_1d, assemble_2d_square
from fracspec.domain import (
    CORNER_EXCLUSION,
    BoundaryTrace,
    DomainPerturbation,
    TraceSample,
    UnsupportedPerturbationError,
    cluster_traces,
    extract_trace,
    gamma_domain,
    hadamard_derivative,
    pohozaev_discrepancy,
    verify_domain_splitting,
)
from fracspec.perturbation import GammaMatrix
from fracspec.spectral import EigenCluster

DIL = DomainPerturbation("linear", 1.0)


def first(p):
    return p.cluster(0)


# extract_trace

def test_trace_is_linear_in_phi(interval_problems):
    p = interval_problems[128]
    phi = p.spectrum.vectors[:, 0]
    a = extract_trace(phi, 0, p.grid, 0.5).values()
    b = extract_trace(-2.5 * phi, 0, p.grid, 0.5).values()
    assert np.allclose(b, -2.5 * a, rtol=1e-13)
    assert np.allclose(extract_trace(phi, 0, p.grid, 0.5).scaled(3.0).values(), 3 * a)


@pytest.mark.parametrize("s", (0.2, 0.5, 0.9))
def test_trace_of_model_profile(s):
    g = Grid.interval(-1, 1, 64)
    tr = extract_trace(g.boundary_distance**s, 0, g, s)
    assert len(tr.samples) == 2
    assert [smp.normal for smp in tr.samples] == [(-1.0,), (1.0,)]
    assert np.allclose(tr.values(), 1.0, atol=1e-6)
    assert max(tr.fit_diagnostics) <= 1e-10
    # the second term of the model is also fitted exactly
    d = g.boundary_distance
    assert np.allclose(extract_trace(2 * d**s - 0.7 * d ** (s + 1), 0, g, s).values(), 2.0, atol=1e-10)


def test_trace_symmetry_of_ground_state(interval_problems):
    t = extract_trace(interval_problems[512].spectrum.vectors[:, 0], 0, interval_problems[512].grid, 0.5).values()
    assert abs(t[0] - t[1]) <= 1e-4 * abs(t[0])


def test_trace_errors():
    g = Grid.interval(-1, 1, 16)
    with pytest.raises(ValueError):
        extract_trace(np.ones(16), 0, g, 1.0)
    with pytest.raises(ValueError):
        extract_trace(np.ones(10), 0, g, 0.5)


def test_square_trace_samples(square_pair):
    p, cl = square_pair
    tr = extract_trace(cl.basis[:, 0], 1, p.grid, 0.5)
    n, h = p.grid.n, p.grid.h
    # corner exclusion: one sample per row/column meeting an edge, minus those near the corners
    per_edge = sum(1 for j in range(n) if min(j + 1, n - j) >= CORNER_EXCLUSION)
    assert len(tr.samples) == 4 * per_edge
    for smp in tr.samples:
        x, y = smp.point
        assert min(abs(x + 1), abs(x - 1)) == 0.0 or min(abs(y + 1), abs(y - 1)) == 0.0
        along = y if smp.normal[0] != 0 else x
        assert 1 - abs(along) >= CORNER_EXCLUSION * h - 1e-12
        assert smp.weight == pytest.approx(h) or smp.weight == pytest.approx(h / 2)
    assert any("corner" in note for note in tr.notes)


# gamma_domain

def test_gamma_domain_examples(interval_problems):
    p = interval_problems[256]
    cl = first(p)
    tr = cluster_traces(cl, p.grid, 0.5)
    t = tr[0].values()
    assert np.array_equal(gamma_domain(DomainPerturbation("constant", 0.0), tr, cl).entries, np.zeros((1, 1)))
    assert gamma_domain(DIL, tr, cl).entries[0, 0] == pytest.approx(t[0] ** 2 + t[1] ** 2, rel=1e-14)
    g_t = gamma_domain(DomainPerturbation("constant", 1.0), tr, cl).entries[0, 0]
    assert g_t == pytest.approx(t[1] ** 2 - t[0] ** 2, abs=1e-14)
    assert abs(g_t) <= 0.02 * t[1] ** 2


def test_gamma_domain_mismatched_samples(interval_problems, square_pair):
    p = interval_problems[128]
    t1 = extract_trace(p.spectrum.vectors[:, 0], 0, p.grid, 0.5)
    q = interval_problems[256]
    t2 = BoundaryTrace(1, [TraceSample((-2.0,), (-1.0,), 1.0, 0.0, 1.0), t1.samples[1]], 0.5)
    with pytest.raises(ValueError, match="same boundary samples"):
        gamma_domain(DIL, [t1, t2])
    with pytest.raises(ValueError):
        gamma_domain(DIL, [])
    with pytest.raises(ValueError):
        gamma_domain(DIL, [t1], square_pair[1])


def test_excluded_samples_are_dropped():
    a = BoundaryTrace(0, [TraceSample((-1.0,), (-1.0,), 2.0, 0.0, 1.0),
                          TraceSample((1.0,), (1.0,), 5.0, 0.9, 1.0, excluded=True)], 0.5)
    assert gamma_domain(DIL, [a]).entries[0, 0] == 4.0


def test_tabulated_psi_matches_dilation(interval_problems):
    p = interval_problems[128]
    cl = first(p)
    tr = cluster_traces(cl, p.grid, 0.5)
    tab = DomainPerturbation("tabulated", table={(-1.0,): -1.0, (1.0,): 1.0})
    assert np.allclose(gamma_domain(tab, tr, cl).entries, gamma_domain(DIL, tr, cl).entries)
    f = DomainPerturbation("tabulated", table=lambda x: 3 * x)
    assert np.allclose(gamma_domain(f, tr, cl).entries, 3 * gamma_domain(DIL, tr, cl).entries)
    with pytest.raises(KeyError):
        DomainPerturbation("tabulated", table={(0.0,): 1.0})((1.0,))
    with pytest.raises(ValueError):
        DomainPerturbation("tabulated")
    with pytest.raises(ValueError):
        DomainPerturbation("rotation")


@settings(max_examples=20, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0, 2 * np.pi))
def test_gamma_domain_linearity_and_covariance(square_pair, a, c, theta):
    p, cl = square_pair
    tr = cluster_traces(cl, p.grid, 0.5)
    psi1, psi2 = DIL, DomainPerturbation("constant", (0.3, -1.0))
    comb = DomainPerturbation("tabulated", table=lambda x, y: a * psi1((x, y)) + c * psi2((x, y)))
    lhs = gamma_domain(comb, tr, cl).entries
    rhs = a * gamma_domain(psi1, tr, cl).entries + c * gamma_domain(psi2, tr, cl).entries
    assert np.allclose(lhs, rhs, atol=1e-10)
    R = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    rot = EigenCluster(cl.center, cl.indices, cl.basis @ R, cl.metric)
    g_rot = gamma_domain(DIL, cluster_traces(rot, p.grid, 0.5), rot).entries
    assert np.allclose(g_rot, gamma_domain(DIL, tr, cl).rotated(R).entries, atol=1e-10)


# hadamard_derivative

def test_hadamard_examples():
    assert np.array_equal(hadamard_derivative(2.0, GammaMatrix(np.zeros((2, 2)), "domain"), 0.5), [0.0, 0.0])
    g = GammaMatrix(np.diag([1.0, 3.0]), "domain")
    c = math.gamma(1.5) ** 2
    assert np.allclose(hadamard_derivative(2.0, g, 0.5), [-3 * c, -c])
    with pytest.raises(ValueError):
        hadamard_derivative(0.0, g, 0.5)


def test_pohozaev_converges(interval_problems):
    disc = [pohozaev_discrepancy(interval_problems[n], 0) for n in (128, 256, 512)]
    rel = [abs(d["relative"]) for d in disc]
    assert rel[0] > rel[1] > rel[2] and rel[2] <= 0.05
    assert disc[2]["rhs"] == pytest.approx(interval_problems[512].spectrum.values[0])


def test_translation_null(interval_problems, square_pair):
    for p, e in ((interval_problems[512], (1.0,)), (square_pair[0], (0.0, 1.0))):
        cl = first(p)
        tr = cluster_traces(cl, p.grid, 0.5)
        g_t = gamma_domain(DomainPerturbation("constant", e), tr, cl).entries[0, 0]
        assert abs(g_t) <= 0.05 * gamma_domain(DIL, tr, cl).entries[0, 0]


# verify_domain_splitting

def test_interval_dilation(interval_problems):
    p = interval_problems[512]
    rep = verify_domain_splitting(p, DIL, first(p))
    assert rep.criterion("fd_vs_derivative[0.0001]").value <= 1e-6
    # at n = 512 the eigensolver roundoff floor sits just above 1e-10
    law = rep.criterion("fd_vs_exact_law[0.0001]")
    assert law.passed and law.threshold <= 5e-9
    assert rep.criterion("boundary_formula_vs_fd[0.0001]").passed


def test_mapped_interval(interval_problems):
    # psi moves only the right endpoint; the domain stays an interval
    p = interval_problems[256]
    psi = DomainPerturbation("tabulated", table={(-1.0,): 0.0, (1.0,): 1.0})
    rep = verify_domain_splitting(p, psi, first(p))
    c = rep.criterion("boundary_formula_vs_fd[0.0001]")
    assert c.passed, c.line()
    assert rep.results["exact_rates"] is None


def test_square_dilation_and_translation(square_pair):
    p, cl = square_pair
    for psi in (DIL, DomainPerturbation("linear", -0.5)):
        rep = verify_domain_splitting(p, psi, cl)
        law = rep.criterion("fd_vs_exact_law[0.0001]")
        assert law.passed and law.value <= 1e-10
        assert rep.criterion("fd_vs_derivative[0.0001]").value <= 1e-6
        assert "boundary_formula_vs_fd" in rep.results
        assert any("corner" in note for note in rep.notes)
    rep = verify_domain_splitting(p, DomainPerturbation("constant", (1.0, 0.0)), cl)
    rate = rep.results["finite_differences"][0]["rate"]
    assert np.max(np.abs(rate)) <= 1e-10 * cl.center


def test_unsupported_family_lists_supported(square_pair):
    p, cl = square_pair
    psi = DomainPerturbation("tabulated", table=lambda x, y: (x, 0.0))
    with pytest.raises(UnsupportedPerturbationError, match="supported: constant, linear"):
        verify_domain_splitting(p, psi, cl)


def test_domain_preconditions(interval_problems):
    p = interval_problems[128]
    with pytest.raises(ValueError, match="too large"):
        verify_domain_splitting(p, DomainPerturbation("linear", 1.0), first(p), epsilons=[1.5])
    pa = solve_problem(p.operator, a=np.ones(p.grid.size), window=(0, 2))
    with pytest.raises(ValueError, match="bare operator"):
        verify_domain_splitting(pa, DIL, first(pa))
