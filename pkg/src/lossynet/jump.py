"""Decomposable jump linear systems driven by Bernoulli link loss."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .graph import (
    ENUMERATION_CAP,
    DirectedGraph,
    LaplacianSpectrum,
    _mode_bits,
    edge_laplacian,
    graph_to_json,
    laplacian,
    parse_graph,
)

__all__ = [
    "DecomposableJumpSystem",
    "JumpMode",
    "MeanSystem",
    "ModeCountError",
    "mode_count",
    "enumerate_modes",
    "iter_mode_batches",
    "realize_mode",
    "mean_system",
    "deflate",
    "system_from_dict",
    "system_to_dict",
    "load_system",
]

MATRIX_NAMES = ("Ad", "Ac", "Bd", "Bc", "Cd", "Cc", "Dd", "Dc")


class ModeCountError(ValueError):
    """Raised when a mode set is too large to count or enumerate."""

    def __init__(self, message: str, symbolic: str):
        super().__init__(message)
        self.symbolic = symbolic


def _matrix(name: str, value) -> np.ndarray:
    a = np.array(value, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got {a.ndim} dimensions")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


@dataclass(frozen=True, eq=False)
class DecomposableJumpSystem:
    """Agent matrices ``X = I (x) Xd + L_sigma (x) Xc`` for X in A, B, C, D."""

    Ad: np.ndarray
    Ac: np.ndarray
    Bd: np.ndarray
    Bc: np.ndarray
    Cd: np.ndarray
    Cc: np.ndarray
    Dd: np.ndarray
    Dc: np.ndarray
    graph: DirectedGraph
    p: float

    def __post_init__(self):
        for name in MATRIX_NAMES:
            m = _matrix(name, getattr(self, name))
            m.setflags(write=False)
            object.__setattr__(self, name, m)
        nx = self.Ad.shape[0]
        nw = self.Bd.shape[1]
        nz = self.Cd.shape[0]
        shapes = {
            "Ad": (nx, nx), "Ac": (nx, nx),
            "Bd": (nx, nw), "Bc": (nx, nw),
            "Cd": (nz, nx), "Cc": (nz, nx),
            "Dd": (nz, nw), "Dc": (nz, nw),
        }
        for name, shape in shapes.items():
            got = getattr(self, name).shape
            if got != shape:
                raise ValueError(f"{name} has shape {got}, expected {shape}")
        p = float(self.p)
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {p}")
        object.__setattr__(self, "p", p)

    @property
    def nx(self) -> int:
        return self.Ad.shape[0]

    @property
    def nw(self) -> int:
        return self.Bd.shape[1]

    @property
    def nz(self) -> int:
        return self.Cd.shape[0]

    def with_p(self, p: float) -> "DecomposableJumpSystem":
        kw = {name: getattr(self, name) for name in MATRIX_NAMES}
        return DecomposableJumpSystem(graph=self.graph, p=p, **kw)

    def coupled_zero(self, names=("Ac", "Bc", "Cc", "Dc")) -> bool:
        return all(not np.any(getattr(self, k)) for k in names)


@dataclass(frozen=True)
class JumpMode:
    index: int
    active_edges: tuple[tuple[int, int], ...]
    probability: float


def mode_count(sys: DecomposableJumpSystem) -> int:
    m = sys.graph.edge_count
    if m >= 63:
        raise ModeCountError(
            f"mode count 2^{m} is too large to represent (edge count {m} >= 63)",
            symbolic=f"2^{m}",
        )
    return 1 << m


def _check_cap(m: int, cap: int) -> None:
    if m > cap:
        raise ModeCountError(
            f"refusing to enumerate 2^{m} modes: edge count {m} exceeds cap {cap}",
            symbolic=f"2^{m}",
        )


def enumerate_modes(sys: DecomposableJumpSystem, cap: int = ENUMERATION_CAP) -> Iterator[JumpMode]:
    """Yield every mode lazily in index order.

    Edge ``k`` of the sorted edge list (0-based) toggles bit ``k`` of
    ``index - 1``.
    """
    edges = sys.graph.edges
    m = len(edges)
    _check_cap(m, cap)
    p = sys.p
    for s in range(1 << m):
        active = tuple(e for k, e in enumerate(edges) if (s >> k) & 1)
        a = len(active)
        yield JumpMode(s + 1, active, p**a * (1.0 - p) ** (m - a))


def iter_mode_batches(
    sys: DecomposableJumpSystem,
    cap: int = ENUMERATION_CAP,
    batch: int = 4096,
    skip_null: bool = True,
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Stream ``(probabilities, laplacians)`` for consecutive blocks of modes.

    Modes of probability exactly zero are dropped when ``skip_null``.
    """
    g = sys.graph
    m = g.edge_count
    _check_cap(m, cap)
    n, p = g.n, sys.p
    singles = np.stack([edge_laplacian(n, e) for e in g.edges]) if m else np.zeros((0, n, n))
    total = 1 << m
    for start in range(0, total, batch):
        bits = _mode_bits(start, min(total, start + batch), m)
        k = bits.sum(axis=1)
        w = p**k * (1.0 - p) ** (m - k)
        if skip_null:
            keep = w > 0
            bits, w = bits[keep], w[keep]
            if not len(w):
                continue
        yield w, np.einsum("ce,eij->cij", bits, singles)


def _mode_graph_laplacian(sys: DecomposableJumpSystem, mode: JumpMode) -> np.ndarray:
    L = np.zeros((sys.graph.n, sys.graph.n))
    for i, j in mode.active_edges:
        L[i - 1, j - 1] -= 1.0
        L[i - 1, i - 1] += 1.0
    return L


def realize_mode(sys: DecomposableJumpSystem, mode: JumpMode) -> dict[str, np.ndarray]:
    """Dense network matrices ``A, B, C, D`` of one mode."""
    eset = set(sys.graph.edges)
    if not set(mode.active_edges) <= eset:
        raise ValueError(f"mode {mode.index} has edges outside the nominal graph")
    L = _mode_graph_laplacian(sys, mode)
    I = np.eye(sys.graph.n)
    return {
        "A": np.kron(I, sys.Ad) + np.kron(L, sys.Ac),
        "B": np.kron(I, sys.Bd) + np.kron(L, sys.Bc),
        "C": np.kron(I, sys.Cd) + np.kron(L, sys.Cc),
        "D": np.kron(I, sys.Dd) + np.kron(L, sys.Dc),
    }


@dataclass(frozen=True, eq=False)
class MeanSystem:
    """LTI system of the expected mode matrices, kept in Kronecker form."""

    system: DecomposableJumpSystem
    nominal_laplacian: np.ndarray

    @property
    def p(self) -> float:
        return self.system.p

    def modal(self, lam: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Modal subsystem for Laplacian eigenvalue ``lam``."""
        s, c = self.system, self.p * lam
        return s.Ad + c * s.Ac, s.Bd + c * s.Bc, s.Cd + c * s.Cc, s.Dd + c * s.Dc

    def realize(self) -> dict[str, np.ndarray]:
        s = self.system
        I = np.eye(s.graph.n)
        pL = self.p * self.nominal_laplacian
        return {
            "A": np.kron(I, s.Ad) + np.kron(pL, s.Ac),
            "B": np.kron(I, s.Bd) + np.kron(pL, s.Bc),
            "C": np.kron(I, s.Cd) + np.kron(pL, s.Cc),
            "D": np.kron(I, s.Dd) + np.kron(pL, s.Dc),
        }


def mean_system(sys: DecomposableJumpSystem) -> MeanSystem:
    return MeanSystem(sys, laplacian(sys.graph))


def deflate(spec: LaplacianSpectrum, drop_zero: bool) -> LaplacianSpectrum:
    """Remove the single zero (average) mode from a connected graph's spectrum."""
    if not drop_zero:
        return spec
    if spec.zero_multiplicity != 1:
        raise ValueError(
            f"deflation needs exactly one zero eigenvalue (connected graph), "
            f"found {spec.zero_multiplicity}"
        )
    basis = None if spec.basis is None else spec.basis[:, 1:]
    return LaplacianSpectrum(spec.eigenvalues[1:], basis, 0)


def system_from_dict(d: dict) -> DecomposableJumpSystem:
    missing = [k for k in (*MATRIX_NAMES, "graph", "p") if k not in d]
    if missing:
        raise ValueError(f"system description lacks fields: {', '.join(missing)}")
    mats = {k: _matrix(k, d[k]) for k in MATRIX_NAMES}
    return DecomposableJumpSystem(graph=parse_graph(d["graph"]), p=d["p"], **mats)


def system_to_dict(sys: DecomposableJumpSystem) -> dict:
    d = {k: getattr(sys, k).tolist() for k in MATRIX_NAMES}
    d["graph"] = graph_to_json(sys.graph)
    d["p"] = sys.p
    return d


def load_system(path) -> DecomposableJumpSystem:
    return system_from_dict(json.loads(Path(path).read_text()))
