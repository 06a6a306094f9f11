"""Eigenvalue rates under boundary motion on the interval.

The boundary trace of the first eigenfunction predicts the dilation rate
-2 s lambda_1.  The relative Pohozaev discrepancy shrinks as the grid is
refined, and a finite difference on the dilated interval matches the
exact scaling law.

    python3 demos/domain_dilation.py
"""
from fracspec.coefficient import solve_problem
from fracspec.discretization import assemble_1d
from fracspec.domain import DomainPerturbation, pohozaev_discrepancy, verify_domain_splitting

s = 0.5
for n in (128, 256, 512):
    p = solve_problem(assemble_1d(s, (-1.0, 1.0), n), window=(0, 2))
    d = pohozaev_discrepancy(p, 0)
    print(f"n = {n:4d}   relative discrepancy {d['relative']:+.4f}")

rep = verify_domain_splitting(p, DomainPerturbation("linear", 1.0), p.cluster(0))
print(f"\nexact dilation rate {-2 * s * p.cluster(0).center:.6f}")
for c in rep.criteria:
    print("  " + c.line())
