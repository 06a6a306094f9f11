"""The double eigenvalue lambda_2 = lambda_3 of the square under a + eps*b.

A generic b splits the pair at first order, its projection onto the
symmetric subspace only at second order, and a D4-invariant b not at all.
The last block checks that the three products of the pair basis give G
matrices spanning all symmetric 2x2 matrices.

    python3 demos/square_pair_splitting.py
"""
from fracspec.coefficient import solve_problem, transversality_experiment, verify_splitting
from fracspec.discretization import assemble_2d_square
from fracspec.perturbation import project_to_H

p = solve_problem(assemble_2d_square(0.5, (-1.0, 1.0), 24), window=(0, 4))
pair = p.cluster(1)
x, y = p.grid.points.T
print(f"pair center {pair.center:.6f}, indices {pair.indices}")

fields = {
    "generic": x + y**2 + 0.5 * x * y,
    "projected": project_to_H(x + y**2 + 0.5 * x * y, pair, p.mass()),
    "symmetric": x**2 + y**2,
}
for name, b in fields.items():
    rep = verify_splitting(p, b, pair, [1e-2, 1e-3])
    widths = rep.results["widths"]
    print(f"\n{name} b: widths {', '.join(f'eps={e:g}: {w:.3e}' for e, w in widths)}")
    for c in rep.criteria:
        print("  " + c.line())

B = pair.basis
_, tr = transversality_experiment(p, pair, [B[:, 0] ** 2, B[:, 1] ** 2, B[:, 0] * B[:, 1]])
print(f"\nspan of G(phi_i phi_j): {tr.span_dim} of 3, codimension of the preserving set {tr.codimension}")
