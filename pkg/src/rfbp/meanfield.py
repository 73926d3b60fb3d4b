"""Exactly solvable ferromagnetic mean-field model in random fields.

The model couples every pair of vertices with strength g(S_i)g(S_j)/n.
In the thermodynamic limit its quenched free energy per variable is

    f(m) = m**2 / 2 - (1/beta) * integral dh p(h) ln sum_S exp(beta*(phi(S,h) + m*g(S)))

evaluated at solutions of the saddle-point equation

    m = integral dh p(h) <g(S)>_{beta*(phi + m*g)}.

f is stationary in m exactly at those solutions. The same value is
reached by the replica-symmetric engine on a large complete graph,
which makes this model a validation target for it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .graphs import complete_graph
from .models import FieldDistribution, MrfModel, PairPotential, StateSpace, UnaryPotential
from .rlbp import build_quadrature, run_rlbp_best


@dataclass(frozen=True)
class MeanFieldModel:
    states: StateSpace
    g: np.ndarray  # coupling function g(S), one value per state
    unary: UnaryPotential
    beta: float
    field_dist: FieldDistribution  # i.i.d. across vertices (scalar parameters)

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float)
        if g.shape != (self.states.q,):
            raise ValueError("g must have one value per state")
        if not np.all(np.isfinite(g)):
            raise ValueError("g must be finite")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        object.__setattr__(self, "g", g)


@dataclass
class SaddleSolution:
    m: float
    f: float  # free energy per variable
    residual: float  # |m - RHS(m)|


def _scores(model: MeanFieldModel, m: float, nodes: np.ndarray) -> np.ndarray:
    phi = model.unary.table(model.states.values, nodes)  # (K, q)
    return model.beta * (phi + m * model.g)


def saddle_rhs(model: MeanFieldModel, m: float, n_nodes: int = 64) -> float:
    """Field-averaged expectation of g under the tilted single-site law."""
    rule = build_quadrature(model.field_dist, n_nodes)
    nodes, weights = np.atleast_1d(rule.nodes), np.atleast_1d(rule.weights)
    s = _scores(model, m, nodes)
    s = s - s.max(axis=-1, keepdims=True)
    p = np.exp(s)
    p /= p.sum(axis=-1, keepdims=True)
    return float(weights @ (p @ model.g))


def free_energy(model: MeanFieldModel, m: float, n_nodes: int = 64) -> float:
    rule = build_quadrature(model.field_dist, n_nodes)
    nodes, weights = np.atleast_1d(rule.nodes), np.atleast_1d(rule.weights)
    lse = logsumexp(_scores(model, m, nodes), axis=-1)
    return 0.5 * m * m - float(weights @ lse) / model.beta


def solve_saddle(
    model: MeanFieldModel,
    *,
    tol: float = 1e-12,
    max_iter: int = 10_000,
    initial_points=(-1.0, -0.5, 0.0, 0.5, 1.0),
    damping: float = 0.5,
    n_nodes: int = 64,
    scan_points: int = 201,
) -> list[SaddleSolution]:
    """All located fixed points of m = RHS(m), sorted by free energy.

    Damped iteration from each initial point catches the attracting
    branches; a sign-change scan of m - RHS(m) over the reachable range
    with bisection refinement catches the repelling ones.
    """
    g_lo, g_hi = float(model.g.min()), float(model.g.max())
    roots: list[float] = []

    def push(m):
        if not any(abs(m - r) < 1e-7 for r in roots):
            roots.append(m)

    for m0 in initial_points:
        m = float(np.clip(m0, g_lo, g_hi))
        for _ in range(max_iter):
            m_new = (1.0 - damping) * saddle_rhs(model, m, n_nodes) + damping * m
            if abs(m_new - m) < tol:
                m = m_new
                break
            m = m_new
        if abs(m - saddle_rhs(model, m, n_nodes)) < 100 * tol + 1e-10:
            push(m)

    def defect(m):
        return m - saddle_rhs(model, m, n_nodes)

    grid = np.linspace(g_lo, g_hi, scan_points)
    vals = np.array([defect(m) for m in grid])
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if fa == 0.0:
            push(float(a))
        elif fa * fb < 0:
            push(float(brentq(defect, a, b, xtol=1e-13)))
    if vals[-1] == 0.0:
        push(float(grid[-1]))
    if not roots:
        raise RuntimeError("no saddle-point solution located")

    sols = [
        SaddleSolution(m=r, f=free_energy(model, r, n_nodes), residual=abs(defect(r)))
        for r in roots
    ]
    sols.sort(key=lambda s: s.f)
    return sols


def complete_graph_model(n: int, model: MeanFieldModel) -> MrfModel:
    """Pairwise MRF whose RLBP limit is the mean-field model: psi = g g'/n."""
    table = np.outer(model.g, model.g) / n
    return MrfModel(
        graph=complete_graph(n),
        states=model.states,
        unary=model.unary,
        pair=PairPotential.custom(table),
        beta=model.beta,
        fields=model.field_dist,
    )


def verify_rlbp_on_complete_graph(n: int, model: MeanFieldModel, rlbp_options: dict | None = None) -> dict:
    """Gap between the saddle-point free energy and RLBP at finite n.

    Runs both the unbiased and the polarized start and keeps the branch
    with the lower free energy, mirroring the choice of the lowest
    saddle solution on the exact side.
    """
    opts = dict(rlbp_options or {})
    mrf = complete_graph_model(n, model)
    _, report = run_rlbp_best(mrf, None, **opts)
    f_rlbp = report.quenched_free_energy / n
    f_exact = solve_saddle(model)[0].f
    return {
        "f_exact": f_exact,
        "f_rlbp": f_rlbp,
        "gap": abs(f_exact - f_rlbp),
        "converged": report.converged,
    }
