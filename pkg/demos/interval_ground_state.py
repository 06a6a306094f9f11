"""Ground state of the half Laplacian on (-1, 1) under grid refinement.

Prints lambda_1 for three grids, the extrapolated value and the observed
convergence order, then the low spectrum on the finest grid.

    python3 demos/interval_ground_state.py
"""
import numpy as np

from fracspec.coefficient import solve_problem
from fracspec.discretization import assemble_1d, richardson_lambda1

r = richardson_lambda1(0.5, (-1.0, 1.0), (128, 256, 512))
for n, lam in zip(r["n"], r["lambda1"]):
    print(f"n = {n:4d}   lambda_1 = {lam:.10f}")
print(f"extrapolated   lambda_1 = {r['reference']:.10f}")
print(f"observed order {r['observed_order']:.2f}")

p = solve_problem(assemble_1d(0.5, (-1.0, 1.0), 256), window=(0, 6))
print("first six eigenvalues (n = 256):", np.round(p.spectrum.values[:6], 5))
print("clusters:", [c.indices for c in p.clusters])
