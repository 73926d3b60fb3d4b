"""Undirected graphs: generators, adjacency queries, and edge-list I/O.

Graphs are immutable after construction. Vertices are integers 0..n-1,
edges are unordered pairs stored as rows of an (m, 2) array. Lattice
generators use row-major vertex indexing, i = y*width + x, so a grid
graph maps one-to-one onto an image of the same shape.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class GridInfo:
    """Lattice metadata attached by :func:`square_lattice`."""

    width: int
    height: int
    boundary: str  # "free" or "periodic"


class Graph:
    """Simple undirected graph with precomputed adjacency.

    Parameters
    ----------
    n_vertices : int
        Number of vertices.
    edges : array-like of shape (m, 2)
        Unordered vertex pairs. Self-loops and duplicates are rejected.
        Row orientation is preserved: anything keyed per edge (coupling,
        potential table) refers to ``(edges[k, 0], edges[k, 1])`` in that
        order.
    grid : GridInfo, optional
        Set by the lattice generator; enables grid-specialized kernels.
    """

    def __init__(self, n_vertices: int, edges, grid: GridInfo | None = None):
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if n_vertices < 1:
            raise ValueError("graph needs at least one vertex")
        if edges.size:
            if edges.min() < 0 or edges.max() >= n_vertices:
                raise ValueError("edge endpoint out of range")
            if np.any(edges[:, 0] == edges[:, 1]):
                raise ValueError("self-loops are not allowed")
            key = np.sort(edges, axis=1)
            uniq = np.unique(key, axis=0)
            if len(uniq) != len(edges):
                raise ValueError("duplicate edges are not allowed")
        self.n_vertices = int(n_vertices)
        self.edges = edges
        self.edges.setflags(write=False)
        self.grid = grid

        neighbors: list[list[int]] = [[] for _ in range(n_vertices)]
        for i, j in edges:
            neighbors[i].append(int(j))
            neighbors[j].append(int(i))
        self.adjacency = [np.array(sorted(nb), dtype=np.int64) for nb in neighbors]
        self.degrees = np.array([len(nb) for nb in self.adjacency], dtype=np.int64)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def neighbors(self, i: int) -> np.ndarray:
        return self.adjacency[i]

    def is_forest(self) -> bool:
        """True when the graph has no cycle (union-find)."""
        parent = list(range(self.n_vertices))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for i, j in self.edges:
            ri, rj = find(int(i)), find(int(j))
            if ri == rj:
                return False
            parent[ri] = rj
        return True

    @cached_property
    def directed(self) -> "DirectedLayout":
        return DirectedLayout(self)

    def __repr__(self) -> str:  # pragma: no cover
        return f"Graph(n_vertices={self.n_vertices}, n_edges={self.n_edges})"


class DirectedLayout:
    """Directed-edge indexing shared by the message-passing engines.

    Undirected edge k owns directed slots 2k (edges[k,0] -> edges[k,1])
    and 2k+1 (reverse); ``rev(e) == e ^ 1``. ``in_perm``/``in_starts``
    sort directed edges by destination so per-vertex reductions can use
    ``np.add.reduceat``.
    """

    def __init__(self, graph: Graph):
        m = graph.n_edges
        src = np.empty(2 * m, dtype=np.int64)
        dst = np.empty(2 * m, dtype=np.int64)
        src[0::2] = graph.edges[:, 0]
        dst[0::2] = graph.edges[:, 1]
        src[1::2] = graph.edges[:, 1]
        dst[1::2] = graph.edges[:, 0]
        self.src = src
        self.dst = dst
        self.n_directed = 2 * m
        self.in_perm = np.argsort(dst, kind="stable")
        counts = np.bincount(dst, minlength=graph.n_vertices)
        self.in_starts = np.concatenate(([0], np.cumsum(counts)))[:-1]
        self.in_counts = counts

    def reduce_to_vertices(self, per_edge: np.ndarray, n_vertices: int) -> np.ndarray:
        """Sum per-directed-edge rows into their destination vertex."""
        out_shape = (n_vertices,) + per_edge.shape[1:]
        if self.n_directed == 0:
            return np.zeros(out_shape)
        ordered = per_edge[self.in_perm]
        # reduceat segments for vertices with no incoming edges need masking
        if np.all(self.in_counts > 0):
            return np.add.reduceat(ordered, self.in_starts, axis=0)
        out = np.zeros(out_shape)
        have = self.in_counts > 0
        starts = self.in_starts[have]
        out[have] = np.add.reduceat(ordered, starts, axis=0)
        return out


def square_lattice(width: int, height: int, boundary: str = "free") -> Graph:
    """4-neighbor grid graph, row-major indexing i = y*width + x.

    Free boundary yields width*(height-1) + height*(width-1) edges;
    periodic yields 2*width*height and requires width, height >= 3 so
    that wrap edges do not duplicate interior ones.
    """
    if boundary not in ("free", "periodic"):
        raise ValueError(f"unknown boundary {boundary!r}")
    if width < 1 or height < 1:
        raise ValueError("lattice dimensions must be positive")
    if boundary == "periodic" and (width < 3 or height < 3):
        raise ValueError("periodic boundary requires width >= 3 and height >= 3")
    edges = []
    for y in range(height):
        for x in range(width):
            i = y * width + x
            if x + 1 < width:
                edges.append((i, i + 1))
            if y + 1 < height:
                edges.append((i, i + width))
    if boundary == "periodic":
        for y in range(height):
            edges.append((y * width, y * width + width - 1))
        for x in range(width):
            edges.append((x, (height - 1) * width + x))
    n = width * height
    return Graph(n, np.array(edges), grid=GridInfo(width, height, boundary))


def random_regular(n: int, d: int, seed=None) -> Graph:
    """Random d-regular simple graph via the pairing model.

    Stubs are shuffled and matched consecutively; any self-loop or
    duplicate edge restarts the whole attempt. Not exactly uniform over
    d-regular graphs, which is fine at the sizes used here.
    """
    if (n * d) % 2 != 0:
        raise ValueError("n * d must be even")
    if not 0 <= d < n:
        raise ValueError("need 0 <= d < n")
    rng = as_rng(seed)
    stubs = np.repeat(np.arange(n), d)
    while True:
        perm = rng.permutation(stubs)
        a, b = perm[0::2], perm[1::2]
        if np.any(a == b):
            continue
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        pairs = np.stack([lo, hi], axis=1)
        if len(np.unique(pairs, axis=0)) != len(pairs):
            continue
        order = np.lexsort((pairs[:, 1], pairs[:, 0]))
        return Graph(n, pairs[order])


def path_graph(n: int) -> Graph:
    """Chain 0-1-...-(n-1)."""
    if n < 1:
        raise ValueError("path needs at least one vertex")
    edges = np.stack([np.arange(n - 1), np.arange(1, n)], axis=1)
    return Graph(n, edges)


def complete_graph(n: int) -> Graph:
    """All n*(n-1)/2 edges; used for mean-field comparisons."""
    iu = np.triu_indices(n, k=1)
    return Graph(n, np.stack(iu, axis=1))


def random_tree(n: int, seed=None) -> Graph:
    """Uniform random attachment tree (each vertex joins an earlier one)."""
    if n < 1:
        raise ValueError("tree needs at least one vertex")
    rng = as_rng(seed)
    edges = [(int(rng.integers(0, k)), k) for k in range(1, n)]
    return Graph(n, np.array(edges).reshape(-1, 2))


def write_edgelist(graph: Graph, path) -> None:
    """Text format: header ``n <count>`` then one ``i j`` pair per line."""
    lines = [f"n {graph.n_vertices}"]
    lines += [f"{i} {j}" for i, j in graph.edges]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edgelist(path) -> Graph:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines or not lines[0].startswith("n "):
        raise ValueError("edge list must start with a 'n <count>' header")
    n = int(lines[0].split()[1])
    edges = [tuple(int(t) for t in ln.split()) for ln in lines[1:]]
    return Graph(n, np.array(edges, dtype=np.int64).reshape(-1, 2))


def as_rng(seed) -> np.random.Generator:
    """Accept an int seed, a Generator, or None (fresh entropy)."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
