"""Pairwise Markov random field definition.

The distribution is P(S | h, beta) = exp(-beta*H(S; h)) / Z with

    H(S; h) = -sum_i phi_i(S_i, h_i) - sum_{ij in E} psi_ij(S_i, S_j),

so larger potentials mean more probable states. Unary potentials are
functions of the local state and a real field h_i; pair potentials are
q x q tables per edge. Field values can be fixed numbers or quenched
random variables with a per-vertex distribution.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .graphs import Graph, as_rng


@dataclass(frozen=True)
class StateSpace:
    """q discrete states with strictly increasing numeric values."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or len(v) < 2:
            raise ValueError("state space needs at least two values")
        if not np.all(np.diff(v) > 0):
            raise ValueError("state values must be strictly increasing")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def q(self) -> int:
        return len(self.values)

    @classmethod
    def spin(cls, q: int) -> "StateSpace":
        """Values 2*S/(q-1) - 1 for S = 0..q-1, i.e. q levels in [-1, 1]."""
        s = np.arange(q, dtype=float)
        return cls(2.0 * s / (q - 1) - 1.0)

    @classmethod
    def intensity(cls, q: int) -> "StateSpace":
        """Values 0, 1, ..., q-1 (image intensity levels)."""
        return cls(np.arange(q, dtype=float))


@dataclass(frozen=True)
class UnaryPotential:
    """phi(S, h), evaluated on a whole state space for batches of h.

    kinds
    -----
    linear-field        phi = h * value(S)
    gaussian-likelihood phi = -(value(S) - h)^2 / (2 sigma^2)
    custom              phi = func(values, h), func vectorized over h
    """

    kind: str
    variance: float = 1.0
    func: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None

    @classmethod
    def linear_field(cls) -> "UnaryPotential":
        return cls("linear-field")

    @classmethod
    def gaussian_likelihood(cls, variance: float) -> "UnaryPotential":
        if variance <= 0:
            raise ValueError("variance must be positive")
        return cls("gaussian-likelihood", variance=float(variance))

    @classmethod
    def custom(cls, func) -> "UnaryPotential":
        return cls("custom", func=func)

    def table(self, values: np.ndarray, h) -> np.ndarray:
        """phi for every state; h of shape (...) gives result (..., q)."""
        h = np.asarray(h, dtype=float)[..., None]
        if self.kind == "linear-field":
            return h * values
        if self.kind == "gaussian-likelihood":
            return -((values - h) ** 2) / (2.0 * self.variance)
        if self.kind == "custom":
            out = np.asarray(self.func(values, h[..., 0]), dtype=float)
            if out.shape != h.shape[:-1] + (len(values),):
                raise ValueError("custom unary returned wrong shape")
            return out
        raise ValueError(f"unknown unary kind {self.kind!r}")


@dataclass(frozen=True)
class PairPotential:
    """psi(S, S') per edge, materialized as (n_edges, q, q) tables.

    kinds
    -----
    product    psi = J_k * value(S) * value(S'), J_k from the couplings
    quadratic  psi = -strength * (value(S) - value(S'))^2 / 2
    absolute   psi = -strength * |value(S) - value(S')|
    custom     explicit table, shape (q, q) shared or (n_edges, q, q)

    Tables are oriented as (state of edges[k,0], state of edges[k,1]).
    """

    kind: str
    strength: float = 1.0
    table_data: np.ndarray | None = None

    @classmethod
    def product(cls) -> "PairPotential":
        return cls("product")

    @classmethod
    def quadratic(cls, strength: float) -> "PairPotential":
        return cls("quadratic", strength=float(strength))

    @classmethod
    def absolute(cls, strength: float) -> "PairPotential":
        return cls("absolute", strength=float(strength))

    @classmethod
    def custom(cls, table) -> "PairPotential":
        return cls("custom", table_data=np.asarray(table, dtype=float))

    def needs_couplings(self) -> bool:
        return self.kind == "product"

    def tables(self, values: np.ndarray, n_edges: int, couplings=None) -> np.ndarray:
        diff = values[:, None] - values[None, :]
        if self.kind == "product":
            if couplings is None:
                raise ValueError("product pair potential needs per-edge couplings")
            couplings = np.asarray(couplings, dtype=float)
            if couplings.shape != (n_edges,):
                raise ValueError("couplings must have one entry per edge")
            base = np.outer(values, values)
            return couplings[:, None, None] * base
        if self.kind == "quadratic":
            t = -self.strength * diff**2 / 2.0
        elif self.kind == "absolute":
            t = -self.strength * np.abs(diff)
        elif self.kind == "custom":
            t = self.table_data
            if t.shape == (len(values), len(values)):
                pass
            elif t.shape == (n_edges, len(values), len(values)):
                return np.array(t)
            else:
                raise ValueError("custom pair table has wrong shape")
        else:
            raise ValueError(f"unknown pair kind {self.kind!r}")
        return np.broadcast_to(t, (n_edges,) + t.shape).copy()


@dataclass(frozen=True)
class FieldDistribution:
    """Per-vertex distribution of the random field h.

    ``loc``/``variance`` may be scalars (shared by all vertices) or
    per-vertex arrays; the family is the same for every vertex. A delta
    distribution stands for a fixed, non-random field.
    """

    kind: str  # "delta" or "gaussian"
    loc: np.ndarray
    variance: np.ndarray

    @classmethod
    def delta(cls, h0) -> "FieldDistribution":
        return cls("delta", np.asarray(h0, dtype=float), np.asarray(0.0))

    @classmethod
    def gaussian(cls, mean, variance) -> "FieldDistribution":
        variance = np.asarray(variance, dtype=float)
        if np.any(variance <= 0):
            raise ValueError("gaussian field variance must be positive")
        return cls("gaussian", np.asarray(mean, dtype=float), variance)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        loc = np.broadcast_to(self.loc, (n,))
        if self.kind == "delta":
            return loc.copy()
        if self.kind == "gaussian":
            sd = np.sqrt(np.broadcast_to(self.variance, (n,)))
            return loc + sd * rng.standard_normal(n)
        raise ValueError(f"unknown field kind {self.kind!r}")


@dataclass(frozen=True)
class InteractionEnsemble:
    """Distribution of the couplings J_ij used with product potentials."""

    kind: str  # "fixed" or "gaussian"
    mean: float
    variance: float = 0.0

    @classmethod
    def fixed(cls, value: float) -> "InteractionEnsemble":
        return cls("fixed", float(value))

    @classmethod
    def gaussian(cls, mean: float, variance: float) -> "InteractionEnsemble":
        if variance <= 0:
            raise ValueError("ensemble variance must be positive")
        return cls("gaussian", float(mean), float(variance))

    def sample(self, n_edges: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "fixed":
            return np.full(n_edges, self.mean)
        if self.kind == "gaussian":
            return self.mean + np.sqrt(self.variance) * rng.standard_normal(n_edges)
        raise ValueError(f"unknown ensemble kind {self.kind!r}")


@dataclass(frozen=True)
class MrfModel:
    """Graph + potentials + inverse temperature + field distributions.

    ``bias`` is an optional additive state-only unary term (q,) or
    (n, q); it participates everywhere phi does.
    """

    graph: Graph
    states: StateSpace
    unary: UnaryPotential
    pair: PairPotential
    beta: float = 1.0
    fields: FieldDistribution | None = None
    bias: np.ndarray | None = None

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.bias is not None:
            b = np.asarray(self.bias, dtype=float)
            n, q = self.graph.n_vertices, self.states.q
            if b.shape not in ((q,), (n, q)):
                raise ValueError("bias must have shape (q,) or (n_vertices, q)")
            object.__setattr__(self, "bias", b)

    def unary_tables(self, h) -> np.ndarray:
        """phi_i(S, h_i) (+ bias) for a field vector; shape (n, q) or (n, K, q)."""
        t = self.unary.table(self.states.values, h)
        if self.bias is not None:
            bias = self.bias if self.bias.ndim == 2 else self.bias[None, :]
            if t.ndim == 3:  # quadrature axis present
                bias = bias[:, None, :]
            t = t + bias
        return t

    def pair_tables(self, couplings=None) -> np.ndarray:
        return self.pair.tables(self.states.values, self.graph.n_edges, couplings)


def sample_fields(model: MrfModel, seed=None) -> np.ndarray:
    """Draw one realization of the random fields, one value per vertex."""
    if model.fields is None:
        raise ValueError("model has no field distribution")
    rng = as_rng(seed)
    return model.fields.sample(model.graph.n_vertices, rng)


def sample_interactions(ensemble: InteractionEnsemble, graph: Graph, seed=None) -> np.ndarray:
    """Draw one realization of the couplings, one value per edge."""
    rng = as_rng(seed)
    return ensemble.sample(graph.n_edges, rng)
