"""First-order consensus under link loss: system builder and sweep drivers."""

from __future__ import annotations

import csv
import io
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import analysis
from .graph import ENUMERATION_CAP, DirectedGraph, laplacian, make_family, parse_graph, spectrum
from .jump import DecomposableJumpSystem

log = logging.getLogger(__name__)

__all__ = [
    "METHODS",
    "DEFAULT_P_GRID",
    "ConsensusConfig",
    "SweepRow",
    "SweepResult",
    "build_consensus",
    "sweep_p",
    "sweep_scaling",
]

METHODS = ("decomposed", "enumerated", "mean")
DEFAULT_P_GRID = tuple(round(0.05 * k, 2) for k in range(1, 21))
CSV_COLUMNS = ("graph", "N", "p", "method", "gamma", "verdict", "solve_ms")


def build_consensus(kappa: float, graph: DirectedGraph, p: float) -> DecomposableJumpSystem:
    """Scalar agents ``x+ = x + u + w`` with protocol gain ``kappa``; output ``z = x``."""
    if not kappa > 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    one, zero = np.ones((1, 1)), np.zeros((1, 1))
    return DecomposableJumpSystem(
        Ad=one, Ac=-kappa * one,
        Bd=one, Bc=zero,
        Cd=one, Cc=zero,
        Dd=zero, Dc=zero,
        graph=graph, p=p,
    )


@dataclass
class ConsensusConfig:
    kappa: float
    graph: DirectedGraph
    p_grid: Sequence[float] = DEFAULT_P_GRID
    methods: Sequence[str] = METHODS
    deflate: bool = True
    cap: int = ENUMERATION_CAP
    epsilon: float | None = None
    jobs: int = 1

    def __post_init__(self):
        if isinstance(self.graph, (str, dict)):
            self.graph = parse_graph(self.graph)
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if not len(self.p_grid):
            raise ValueError("p grid is empty")
        if any(not 0.0 <= p <= 1.0 for p in self.p_grid):
            raise ValueError("p grid values must lie in [0, 1]")
        bad = set(self.methods) - set(METHODS)
        if bad or not len(self.methods):
            raise ValueError(f"methods must be a non-empty subset of {METHODS}, got {list(self.methods)}")


@dataclass
class SweepRow:
    graph: str
    N: int
    p: float
    method: str
    gamma: float | None
    verdict: str
    solve_ms: float
    note: str = ""
    solver_failed: bool = False


@dataclass
class SweepResult:
    rows: list[SweepRow] = field(default_factory=list)

    def sort(self) -> "SweepResult":
        self.rows.sort(key=lambda r: (r.graph, r.N, r.p, r.method))
        return self

    def gamma(self, method: str, p: float | None = None, N: int | None = None) -> float | None:
        for r in self.rows:
            if r.method == method and (p is None or r.p == p) and (N is None or r.N == N):
                return r.gamma
        raise KeyError((method, p, N))

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([
                r.graph, r.N, f"{r.p:g}", r.method,
                "" if r.gamma is None else f"{r.gamma:.9g}",
                r.verdict, f"{r.solve_ms:.3f}",
            ])
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text


def _run_point(sys, method, spec, deflate, cap, epsilon) -> SweepRow:
    g = sys.graph
    if method == "enumerated" and g.edge_count > cap:
        return SweepRow(g.label(), g.n, sys.p, method, None, "skipped", 0.0,
                        f"2^{g.edge_count} modes exceed the enumeration cap")
    t0 = time.perf_counter()
    if method == "decomposed":
        rep = analysis.h2_decomposed(sys, spec, deflate=deflate, epsilon=epsilon)
    elif method == "mean":
        rep = analysis.necessary_lti(sys, spec, deflate=deflate)
    else:
        rep = analysis.h2_enumerated(sys, deflate=deflate, spectrum=spec, cap=cap, epsilon=epsilon)
    ms = 1e3 * (time.perf_counter() - t0)
    return SweepRow(g.label(), g.n, sys.p, method, rep.gamma, rep.verdict, ms,
                    rep.diagnostics.get("message", ""), rep.solver_failed)


def _run_all(tasks, jobs: int) -> list[SweepRow]:
    if jobs <= 1:
        return [_run_point(*t) for t in tasks]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(lambda t: _run_point(*t), tasks))


def sweep_p(config: ConsensusConfig) -> SweepResult:
    """Every requested method at every grid probability, with the zero mode deflated."""
    g = config.graph
    need_vectors = "enumerated" in config.methods and config.deflate and g.edge_count <= config.cap
    spec = spectrum(laplacian(g), vectors=need_vectors)
    tasks = [
        (build_consensus(config.kappa, g, p), m, spec, config.deflate, config.cap, config.epsilon)
        for p in config.p_grid
        for m in config.methods
    ]
    return SweepResult(_run_all(tasks, config.jobs)).sort()


def sweep_scaling(
    family: str,
    sizes: Sequence[int],
    p: float = 0.5,
    methods: Sequence[str] = METHODS,
    kappa: float = 0.1,
    deflate: bool = True,
    cap: int = ENUMERATION_CAP,
    epsilon: float | None = None,
) -> SweepResult:
    """Gamma and wall time per method across graph sizes of one family.

    Runs serially so that timings are not distorted by contention. Timing
    covers the eigendecomposition plus LMI assembly and solve.
    """
    rows = []
    for size in sizes:
        g = make_family(family, size)
        for m in methods:
            sys = build_consensus(kappa, g, p)
            t0 = time.perf_counter()
            vectors = m == "enumerated" and deflate
            if m == "enumerated" and g.edge_count > cap:
                spec = None
            else:
                spec = spectrum(laplacian(g), vectors=vectors)
            row = _run_point(sys, m, spec, deflate, cap, epsilon)
            if row.verdict != "skipped":
                row.solve_ms = 1e3 * (time.perf_counter() - t0)
            rows.append(row)
            log.info("%s %s gamma=%s %.1f ms", g.label(), m, row.gamma, row.solve_ms)
    res = SweepResult(rows)
    res.rows.sort(key=lambda r: (r.N, r.p, r.method))
    return res
