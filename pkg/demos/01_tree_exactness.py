"""Belief propagation is exact on trees.

Builds a small random tree with random fields and couplings, runs the
message-passing engine, and compares marginals and the free energy
against brute-force enumeration. The agreement is at machine precision.
"""

import numpy as np

from rfbp import exact
from rfbp.graphs import random_tree
from rfbp.lbp import run_lbp
from rfbp.models import MrfModel, PairPotential, StateSpace, UnaryPotential

rng = np.random.default_rng(0)
graph = random_tree(9, seed=4)
model = MrfModel(
    graph,
    StateSpace.spin(3),
    UnaryPotential.linear_field(),
    PairPotential.product(),
    beta=1.0,
)
h = rng.normal(0.0, 1.0, graph.n_vertices)
J = rng.normal(0.0, 0.5, graph.n_edges)

reference = exact.enumerate(model, h, J)
_, beliefs, report = run_lbp(model, h, J, tol=1e-12)

print(f"tree with {graph.n_vertices} vertices, {graph.n_edges} edges, q = 3")
print(f"converged in {report.iterations} sweeps")
print(f"free energy (message passing): {report.bethe_free_energy:+.12f}")
print(f"free energy (enumeration):     {reference.free_energy:+.12f}")
print(f"max marginal deviation:        {np.abs(beliefs.unary - reference.unary_marginals).max():.2e}")
print()
print("vertex   belief          exact marginal")
for i in range(graph.n_vertices):
    b = " ".join(f"{v:.6f}" for v in beliefs.unary[i])
    e = " ".join(f"{v:.6f}" for v in reference.unary_marginals[i])
    print(f"{i:4d}   [{b}]   [{e}]")
