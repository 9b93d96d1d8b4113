"""Weighted graphs, incidence operators and lattice / layered constructors.

A :class:`Graph` stores one fixed orientation per undirected edge.  Column
``k`` of the incidence matrix ``D`` has ``+1`` at ``src[k]`` and ``-1`` at
``dst[k]``; ``D1`` keeps the ``+1`` entries (sources) and ``D2 = D1 - D`` the
sinks.  The weighted gradient is ``grad x = W^{1/2} D^T x`` and ``div`` is its
adjoint ``D W^{1/2} y``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .exceptions import (
    ChannelCountMismatch,
    DimensionMismatch,
    DisconnectedGraph,
    DuplicateEdge,
    EmptyShape,
    InputError,
    NonpositiveWeight,
    SelfLoop,
    StepTooLarge,
)

__all__ = [
    "Graph",
    "LayeredGraph",
    "build_graph",
    "complete_graph",
    "path_graph",
    "grid_graph",
    "layered_product",
    "grad",
    "div",
    "laplacian",
    "heat_step",
]


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True).reshape(-1)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    """Connected, positively weighted graph with one stored orientation per edge.

    Use :func:`build_graph` to get the canonical orientation (``src < dst``,
    edges sorted).  Constructing directly keeps the orientation as given, which
    is what the orientation-invariance checks rely on.
    """

    n: int
    src: np.ndarray
    dst: np.ndarray
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "src", _frozen(self.src, np.int64))
        object.__setattr__(self, "dst", _frozen(self.dst, np.int64))
        object.__setattr__(self, "weights", _frozen(self.weights, np.float64))
        if self.n < 1:
            raise EmptyShape("graph needs at least one node")
        m = self.src.size
        if self.dst.size != m or self.weights.size != m:
            raise DimensionMismatch("src, dst and weights must have equal length")
        if m and (min(self.src.min(), self.dst.min()) < 0
                  or max(self.src.max(), self.dst.max()) >= self.n):
            raise InputError("edge endpoint out of range")
        if np.any(self.src == self.dst):
            k = int(np.flatnonzero(self.src == self.dst)[0])
            raise SelfLoop(f"edge {k} is a self-loop at node {self.src[k]}")
        if np.any(~(self.weights > 0)) or not np.all(np.isfinite(self.weights)):
            raise NonpositiveWeight("all edge weights must be finite and > 0")
        lo = np.minimum(self.src, self.dst)
        hi = np.maximum(self.src, self.dst)
        keys = lo * self.n + hi
        if np.unique(keys).size != m:
            raise DuplicateEdge("duplicate undirected edge")
        if self.n > 1:
            adj = sp.coo_matrix((np.ones(m), (self.src, self.dst)), shape=(self.n, self.n))
            ncomp, _ = connected_components(adj, directed=False)
            if ncomp != 1:
                raise DisconnectedGraph(f"graph has {ncomp} connected components")

    @property
    def m(self) -> int:
        return int(self.src.size)

    @property
    def edges(self) -> list[tuple[int, int]]:
        return list(zip(self.src.tolist(), self.dst.tolist()))

    @cached_property
    def D(self) -> sp.csr_matrix:
        """Signed incidence matrix, shape ``(n, m)``."""
        cols = np.arange(self.m)
        data = np.concatenate([np.ones(self.m), -np.ones(self.m)])
        return sp.csr_matrix(
            (data, (np.concatenate([self.src, self.dst]), np.concatenate([cols, cols]))),
            shape=(self.n, self.m),
        )

    @cached_property
    def D1(self) -> sp.csr_matrix:
        """Source part of the incidence matrix."""
        return sp.csr_matrix(
            (np.ones(self.m), (self.src, np.arange(self.m))), shape=(self.n, self.m)
        )

    @cached_property
    def D2(self) -> sp.csr_matrix:
        """Sink part, ``D1 - D``."""
        return sp.csr_matrix(
            (np.ones(self.m), (self.dst, np.arange(self.m))), shape=(self.n, self.m)
        )

    @cached_property
    def W(self) -> sp.dia_matrix:
        return sp.diags(self.weights)

    @cached_property
    def grad_matrix(self) -> sp.csr_matrix:
        """``W^{1/2} D^T`` as a sparse matrix, shape ``(m, n)``."""
        return sp.csr_matrix(sp.diags(np.sqrt(self.weights)) @ self.D.T)

    @cached_property
    def div_matrix(self) -> sp.csr_matrix:
        """``D W^{1/2}``, the adjoint of :attr:`grad_matrix`."""
        return sp.csr_matrix(self.grad_matrix.T)

    @cached_property
    def weighted_degree(self) -> np.ndarray:
        return np.bincount(self.src, self.weights, self.n) + np.bincount(
            self.dst, self.weights, self.n
        )

    def flipped(self, edges: Iterable[int]) -> "Graph":
        """Copy of the graph with the stored orientation of ``edges`` reversed."""
        src, dst = self.src.copy(), self.dst.copy()
        idx = np.asarray(list(edges), dtype=np.int64)
        src[idx], dst[idx] = self.dst[idx], self.src[idx]
        return Graph(self.n, src, dst, self.weights)

    def composite(self):
        """Flat edge arrays ``(n_nodes, src, dst, weights, block)``; block 0 everywhere."""
        return self.n, self.src, self.dst, self.weights, np.zeros(self.m, dtype=np.int64)

    def to_edge_list(self) -> list[tuple[int, int, float]]:
        return [(int(i), int(j), float(w)) for i, j, w in zip(self.src, self.dst, self.weights)]

    def __repr__(self):
        return f"Graph(n={self.n}, m={self.m})"


def build_graph(edge_list: Iterable[Sequence[float]], n: int | None = None) -> Graph:
    """Build a canonical graph from ``(i, j, w)`` triples.

    Orientation is ``src = min(i, j)``, ``dst = max(i, j)`` and the edges are
    sorted lexicographically.  ``n`` defaults to one past the largest index.

    Raises
    ------
    SelfLoop, DuplicateEdge, NonpositiveWeight, DisconnectedGraph
    """
    triples = [tuple(e) for e in edge_list]
    for e in triples:
        if len(e) != 3:
            raise InputError(f"expected (i, j, w) triples, got {e!r}")
    ij = [(int(i), int(j)) for i, j, _ in triples]
    for (i, j), (a, b, _) in zip(ij, triples):
        if i != a or j != b:
            raise InputError(f"node ids must be integers, got {(a, b)!r}")
    if n is None:
        if not triples:
            raise EmptyShape("empty edge list and no node count")
        n = 1 + max(max(i, j) for i, j in ij)
    for (i, j), (_, _, w) in zip(ij, triples):
        if i == j:
            raise SelfLoop(f"self-loop at node {i}")
        if not float(w) > 0:
            raise NonpositiveWeight(f"edge ({i}, {j}) has weight {w}")
    order = sorted(range(len(ij)), key=lambda k: (min(ij[k]), max(ij[k])))
    src = [min(ij[k]) for k in order]
    dst = [max(ij[k]) for k in order]
    w = [float(triples[k][2]) for k in order]
    return Graph(n, src, dst, w)


def path_graph(n: int, weight: float = 1.0) -> Graph:
    return build_graph([(i, i + 1, weight) for i in range(n - 1)], n=n)


def complete_graph(n: int, weight: float = 1.0) -> Graph:
    return build_graph(
        [(i, j, weight) for i, j in itertools.combinations(range(n), 2)], n=n
    )


def grid_graph(shape: Sequence[int], h: float = 1.0) -> Graph:
    """Nearest-neighbour lattice on a rectangular grid with spacing ``h``.

    Nodes are numbered in C order.  Every edge gets weight ``1/h**2`` so that
    ``grad`` returns forward difference quotients.
    """
    shape = tuple(int(s) for s in shape)
    if not shape or any(s < 1 for s in shape):
        raise EmptyShape(f"invalid grid shape {shape!r}")
    if not h > 0:
        raise InputError("grid spacing must be positive")
    ids = np.arange(int(np.prod(shape))).reshape(shape)
    src, dst = [], []
    for ax in range(len(shape)):
        if shape[ax] < 2:
            continue
        lo = np.take(ids, np.arange(shape[ax] - 1), axis=ax).ravel()
        hi = np.take(ids, np.arange(1, shape[ax]), axis=ax).ravel()
        src.append(lo)
        dst.append(hi)
    if not src:
        return Graph(ids.size, [], [], [])
    src = np.concatenate(src)
    dst = np.concatenate(dst)
    order = np.lexsort((dst, src))
    return Graph(ids.size, src[order], dst[order], np.full(src.size, 1.0 / h**2))


@dataclass(frozen=True, eq=False)
class LayeredGraph:
    """``M`` copies of a spatial graph, coupled node-wise by a mutation graph.

    Composite node ``channel * n + node``.  Composite edges list the spatial
    block first (layer by layer), then the mutation block ordered by mutation
    edge and, within it, by spatial node.
    """

    spatial: Graph
    mutation: Graph
    M: int

    def __post_init__(self):
        object.__setattr__(self, "M", int(self.M))
        if self.mutation.n != self.M:
            raise ChannelCountMismatch(
                f"mutation graph has {self.mutation.n} nodes, expected M={self.M}"
            )

    @property
    def n(self) -> int:
        return self.M * self.spatial.n

    @property
    def m_spatial(self) -> int:
        return self.M * self.spatial.m

    @property
    def m_mutation(self) -> int:
        return self.spatial.n * self.mutation.m

    def index(self, channel, node):
        return channel * self.spatial.n + node

    def composite(self):
        """Flat edge arrays ``(n_nodes, src, dst, weights, block)``.

        ``block`` is 0 for spatial edges and 1 for mutation edges.
        """
        g, f, n = self.spatial, self.mutation, self.spatial.n
        layer = np.repeat(np.arange(self.M), g.m) * n
        s_src = np.tile(g.src, self.M) + layer
        s_dst = np.tile(g.dst, self.M) + layer
        s_w = np.tile(g.weights, self.M)
        node = np.tile(np.arange(n), f.m)
        m_src = np.repeat(f.src, n) * n + node
        m_dst = np.repeat(f.dst, n) * n + node
        m_w = np.repeat(f.weights, n)
        block = np.concatenate([np.zeros(s_src.size, np.int64), np.ones(m_src.size, np.int64)])
        return (
            self.n,
            np.concatenate([s_src, m_src]),
            np.concatenate([s_dst, m_dst]),
            np.concatenate([s_w, m_w]),
            block,
        )

    @cached_property
    def spatial_grad_matrix(self) -> sp.csr_matrix:
        """Per-layer gradient, shape ``(M*m, M*n)``."""
        return sp.csr_matrix(sp.kron(sp.identity(self.M), self.spatial.grad_matrix))

    @cached_property
    def mutation_grad_matrix(self) -> sp.csr_matrix:
        """Per-node gradient across channels, shape ``(n*m_F, M*n)``."""
        return sp.csr_matrix(sp.kron(self.mutation.grad_matrix, sp.identity(self.spatial.n)))

    def as_graph(self) -> Graph:
        """The layered structure as one flat :class:`Graph` (blocks forgotten)."""
        n, src, dst, w, _ = self.composite()
        return Graph(n, src, dst, w)

    def __repr__(self):
        return f"LayeredGraph(n={self.spatial.n}, m={self.spatial.m}, M={self.M}, mutation_m={self.mutation.m})"


def layered_product(spatial: Graph, mutation: Graph | None = None, M: int | None = None) -> LayeredGraph:
    """Stack ``M`` layers of ``spatial``, joined node-wise through ``mutation``.

    ``mutation`` defaults to the complete graph on ``M`` nodes with unit weights.
    """
    if mutation is None:
        if M is None:
            raise ChannelCountMismatch("give either a mutation graph or M")
        mutation = complete_graph(M) if M > 1 else Graph(1, [], [], [])
    if M is None:
        M = mutation.n
    return LayeredGraph(spatial, mutation, M)


def _check_len(x, size, what):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size != size:
        raise DimensionMismatch(f"{what} must have length {size}, got shape {x.shape}")
    return x


def grad(g: Graph, x) -> np.ndarray:
    """Edge function ``sqrt(w_k) * (x[src] - x[dst])``."""
    x = _check_len(x, g.n, "node function")
    return np.sqrt(g.weights) * (x[g.src] - x[g.dst])


def div(g: Graph, y) -> np.ndarray:
    """Node function ``D W^{1/2} y``; adjoint of :func:`grad`."""
    y = _check_len(y, g.m, "edge function")
    sy = np.sqrt(g.weights) * y
    return np.bincount(g.src, sy, g.n) - np.bincount(g.dst, sy, g.n)


def laplacian(g: Graph) -> sp.csr_matrix:
    """``D W D^T`` (positive semidefinite sign convention)."""
    return sp.csr_matrix(g.D @ g.W @ g.D.T)


def heat_step(g: Graph, rho, h: float) -> np.ndarray:
    """One explicit Euler step of the graph heat equation ``rho' = -D W D^T rho``.

    Raises :class:`StepTooLarge` when ``h`` exceeds ``1 / (2 max weighted degree)``.
    """
    rho = _check_len(rho, g.n, "density")
    if not h > 0:
        raise StepTooLarge("step must be positive")
    if g.m:
        bound = 1.0 / (2.0 * g.weighted_degree.max())
        if h > bound * (1 + 1e-12):
            raise StepTooLarge(f"h={h} exceeds stability bound {bound}")
    return rho - h * div(g, grad(g, rho))
