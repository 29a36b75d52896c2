"""Graphs, Laplacians and expected Laplacians under Bernoulli link loss.

Edges are pairs ``(i, j)`` with 1-based vertex indices. The pair ``(i, j)``
denotes an edge pointing *from* ``v_j`` *to* ``v_i``, so ``v_j`` is an
in-neighbour of ``v_i`` and row ``i`` of the Laplacian carries the entry.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "DirectedGraph",
    "GraphError",
    "ExpectedLaplacians",
    "LaplacianSpectrum",
    "GraphProperties",
    "ENUMERATION_CAP",
    "build_graph",
    "laplacian",
    "edge_laplacian",
    "graph_properties",
    "transpose_graph",
    "expected_laplacians",
    "expected_laplacians_oracle",
    "spectrum",
    "make_family",
    "parse_graph",
    "load_graph",
    "graph_to_json",
    "random_digraph",
]

ENUMERATION_CAP = 20
SYMMETRY_TOL = 1e-12
ZERO_EIG_RTOL = 1e-9
NORMALITY_TOL = 1e-12


class GraphError(ValueError):
    """Invalid graph description."""


@dataclass(frozen=True)
class DirectedGraph:
    """Vertex count plus a canonical (sorted, duplicate-free) edge tuple."""

    n: int
    edges: tuple[tuple[int, int], ...]
    name: str = field(default="", compare=False)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def in_neighbours(self, i: int) -> frozenset[int]:
        return frozenset(j for (a, j) in self.edges if a == i)

    def out_neighbours(self, i: int) -> frozenset[int]:
        return frozenset(a for (a, j) in self.edges if j == i)

    def in_degrees(self) -> np.ndarray:
        d = np.zeros(self.n, dtype=int)
        for i, _ in self.edges:
            d[i - 1] += 1
        return d

    def out_degrees(self) -> np.ndarray:
        d = np.zeros(self.n, dtype=int)
        for _, j in self.edges:
            d[j - 1] += 1
        return d

    def label(self) -> str:
        return self.name or f"graph(n={self.n},m={self.edge_count})"


def build_graph(vertex_count: int, edges: Iterable[Sequence[int]], name: str = "") -> DirectedGraph:
    """Validate an edge list and return a :class:`DirectedGraph`.

    Raises :class:`GraphError` naming the offending edge for self-loops,
    out-of-range indices and duplicates.
    """
    if int(vertex_count) != vertex_count or vertex_count < 1:
        raise GraphError(f"vertex_count must be a positive integer, got {vertex_count!r}")
    n = int(vertex_count)
    seen: set[tuple[int, int]] = set()
    for e in edges:
        if len(e) != 2:
            raise GraphError(f"edge {tuple(e)!r} is not a pair")
        i, j = int(e[0]), int(e[1])
        if (i, j) != (e[0], e[1]):
            raise GraphError(f"edge {tuple(e)!r} has non-integer indices")
        if not (1 <= i <= n and 1 <= j <= n):
            raise GraphError(f"edge ({i}, {j}) has an index outside [1, {n}]")
        if i == j:
            raise GraphError(f"edge ({i}, {j}) is a self-loop")
        if (i, j) in seen:
            raise GraphError(f"edge ({i}, {j}) is duplicated")
        seen.add((i, j))
    return DirectedGraph(n, tuple(sorted(seen)), name)


def edge_laplacian(n: int, edge: tuple[int, int]) -> np.ndarray:
    """Laplacian of the graph on ``n`` vertices holding only ``edge``."""
    i, j = edge
    L = np.zeros((n, n))
    L[i - 1, i - 1] = 1.0
    L[i - 1, j - 1] = -1.0
    return L


def laplacian(g: DirectedGraph) -> np.ndarray:
    L = np.zeros((g.n, g.n))
    for i, j in g.edges:
        L[i - 1, j - 1] = -1.0
        L[i - 1, i - 1] += 1.0
    return L


@dataclass(frozen=True)
class GraphProperties:
    undirected: bool
    balanced: bool
    normal_laplacian: bool


def graph_properties(g: DirectedGraph, tol: float = NORMALITY_TOL) -> GraphProperties:
    es = set(g.edges)
    undirected = all((j, i) in es for (i, j) in es)
    balanced = bool(np.array_equal(g.in_degrees(), g.out_degrees()))
    L = laplacian(g)
    comm = L @ L.T - L.T @ L
    normal = bool(np.max(np.abs(comm), initial=0.0) <= tol)
    return GraphProperties(undirected, balanced, normal)


def transpose_graph(g: DirectedGraph) -> DirectedGraph:
    name = f"{g.name}^T" if g.name else ""
    return DirectedGraph(g.n, tuple(sorted((j, i) for (i, j) in g.edges)), name)


@dataclass(frozen=True)
class ExpectedLaplacians:
    """``mean`` is E[L], ``gram`` is E[L^T L] for link probability ``p``."""

    mean: np.ndarray
    gram: np.ndarray
    p: float


def _check_probability(p: float) -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0 or math.isnan(p):
        raise ValueError(f"probability p must lie in [0, 1], got {p}")
    return p


def expected_laplacians(g0: DirectedGraph, p: float) -> ExpectedLaplacians:
    """Closed-form expectations of the randomly thinned Laplacian.

    The cross term uses the Laplacian of the transposed *graph*, which
    differs from the transposed matrix whenever ``g0`` is unbalanced.
    """
    p = _check_probability(p)
    L0 = laplacian(g0)
    LT = laplacian(transpose_graph(g0))
    gram = p * p * (L0.T @ L0) + p * (1.0 - p) * (L0 + LT)
    return ExpectedLaplacians(p * L0, gram, p)


def _mode_bits(start: int, stop: int, m: int) -> np.ndarray:
    idx = np.arange(start, stop, dtype=np.int64)
    return ((idx[:, None] >> np.arange(m, dtype=np.int64)[None, :]) & 1).astype(float)


def expected_laplacians_oracle(
    g0: DirectedGraph, p: float, cap: int = ENUMERATION_CAP, batch: int = 4096
) -> ExpectedLaplacians:
    """Expectations by summing over all ``2**|E|`` active-edge subsets.

    Every edge, including each of a pair of opposing edges, is treated as
    an independent Bernoulli(p) variable.
    """
    p = _check_probability(p)
    m = g0.edge_count
    if m > cap:
        raise ValueError(
            f"enumeration over 2^{m} modes refused: edge count {m} exceeds cap {cap}"
        )
    n = g0.n
    singles = np.stack([edge_laplacian(n, e) for e in g0.edges]) if m else np.zeros((0, n, n))
    mean = np.zeros((n, n))
    gram = np.zeros((n, n))
    total = 1 << m
    for start in range(0, total, batch):
        bits = _mode_bits(start, min(total, start + batch), m)
        k = bits.sum(axis=1)
        w = p**k * (1.0 - p) ** (m - k)
        Ls = np.einsum("ce,eij->cij", bits, singles)
        mean += np.einsum("c,cij->ij", w, Ls)
        gram += np.einsum("c,cki,ckj->ij", w, Ls, Ls)
    return ExpectedLaplacians(mean, gram, p)


@dataclass(frozen=True)
class LaplacianSpectrum:
    """Ascending eigenvalues of a symmetric Laplacian.

    ``basis`` holds orthonormal eigenvectors as columns; it is ``None``
    when only eigenvalues were requested.
    """

    eigenvalues: np.ndarray
    basis: np.ndarray | None
    zero_multiplicity: int

    @property
    def size(self) -> int:
        return len(self.eigenvalues)

    def distinct(self, rtol: float = ZERO_EIG_RTOL) -> list[tuple[float, int]]:
        """Cluster eigenvalues closer than ``rtol * max(1, lambda_max)``."""
        lam = self.eigenvalues
        if lam.size == 0:
            return []
        tol = rtol * max(1.0, float(np.max(np.abs(lam))))
        groups: list[list[float]] = [[float(lam[0])]]
        for v in lam[1:]:
            if v - groups[-1][-1] <= tol:
                groups[-1].append(float(v))
            else:
                groups.append([float(v)])
        return [(float(np.mean(grp)), len(grp)) for grp in groups]


def spectrum(l0: np.ndarray, vectors: bool = True) -> LaplacianSpectrum:
    """Eigendecomposition of an undirected graph's Laplacian.

    For a single zero eigenvalue the first basis column is set to
    ``1/sqrt(N)``; zero-classified eigenvalues are reported as exactly 0.
    """
    l0 = np.asarray(l0, dtype=float)
    if l0.ndim != 2 or l0.shape[0] != l0.shape[1]:
        raise GraphError("Laplacian must be a square matrix")
    asym = np.max(np.abs(l0 - l0.T), initial=0.0)
    if asym > SYMMETRY_TOL:
        raise GraphError(
            f"Laplacian is not symmetric (max asymmetry {asym:.3g}); decomposed "
            "analysis requires an undirected nominal graph"
        )
    n = l0.shape[0]
    sym = 0.5 * (l0 + l0.T)
    if vectors:
        lam, U = np.linalg.eigh(sym)
        order = np.argsort(lam, kind="stable")
        lam, U = lam[order], U[:, order]
        # deterministic sign: largest-magnitude entry of each column positive
        piv = np.argmax(np.abs(U), axis=0)
        signs = np.sign(U[piv, np.arange(n)])
        signs[signs == 0] = 1.0
        U = U * signs
    else:
        lam = np.sort(np.linalg.eigvalsh(sym), kind="stable")
        U = None
    tol = ZERO_EIG_RTOL * max(1.0, float(lam[-1]))
    zero = np.abs(lam) <= tol
    lam = np.where(zero, 0.0, lam)
    nz = int(zero.sum())
    if U is not None and nz == 1:
        U[:, 0] = 1.0 / math.sqrt(n)
    return LaplacianSpectrum(lam, U, nz)


def make_family(kind: str, size: int) -> DirectedGraph:
    """Circular graph on ``size`` vertices or triangular lattice with ``size`` bottom vertices."""
    if kind == "circular":
        n = int(size)
        if n < 2:
            raise GraphError("circular graphs need N >= 2")
        edges = set()
        for k in range(1, n + 1):
            nxt = k % n + 1
            edges.add((k, nxt))
            edges.add((nxt, k))
        return build_graph(n, edges, name=f"circular:{n}")
    if kind == "triangular":
        h = int(size)
        if h < 2:
            raise GraphError("triangular graphs need h >= 2")

        def vid(r: int, c: int) -> int:
            # rows r = 1..h hold r vertices each, numbered row by row from the apex
            return r * (r - 1) // 2 + c

        edges = set()
        for r in range(1, h + 1):
            for c in range(1, r + 1):
                nbrs = []
                if c < r:
                    nbrs.append((r, c + 1))
                if r < h:
                    nbrs += [(r + 1, c), (r + 1, c + 1)]
                for rr, cc in nbrs:
                    a, b = vid(r, c), vid(rr, cc)
                    edges.add((a, b))
                    edges.add((b, a))
        return build_graph(h * (h + 1) // 2, edges, name=f"triangular:{h}")
    raise GraphError(f"unknown graph family {kind!r}")


def parse_graph(spec) -> DirectedGraph:
    """Accept ``{"n": .., "edges": [[i, j], ..]}`` or a ``"family:size"`` string."""
    if isinstance(spec, DirectedGraph):
        return spec
    if isinstance(spec, str):
        kind, sep, size = spec.partition(":")
        if not sep:
            raise GraphError(f"graph shorthand must look like 'circular:N', got {spec!r}")
        try:
            k = int(size)
        except ValueError:
            raise GraphError(f"bad size in graph shorthand {spec!r}") from None
        return make_family(kind.strip(), k)
    if isinstance(spec, dict):
        if "n" not in spec or "edges" not in spec:
            raise GraphError("graph object needs keys 'n' and 'edges'")
        return build_graph(spec["n"], [tuple(e) for e in spec["edges"]], name=spec.get("name", ""))
    raise GraphError(f"cannot interpret graph description of type {type(spec).__name__}")


def load_graph(path_or_spec: str) -> DirectedGraph:
    p = Path(path_or_spec)
    if p.exists():
        return parse_graph(json.loads(p.read_text()))
    return parse_graph(path_or_spec)


def graph_to_json(g: DirectedGraph) -> dict:
    return {"n": g.n, "edges": [list(e) for e in g.edges]}


def random_digraph(rng: np.random.Generator, max_n: int = 5, max_edges: int = 10) -> DirectedGraph:
    """Random simple digraph with at most ``max_n`` vertices and ``max_edges`` edges."""
    n = int(rng.integers(2, max_n + 1))
    pairs = [(i, j) for i in range(1, n + 1) for j in range(1, n + 1) if i != j]
    m = int(rng.integers(0, min(max_edges, len(pairs)) + 1))
    pick = rng.choice(len(pairs), size=m, replace=False)
    return build_graph(n, [pairs[k] for k in pick])
