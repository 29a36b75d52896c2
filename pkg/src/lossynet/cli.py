"""Command-line front end.

Exit codes: 0 success, 1 a necessary condition fails (or an oracle check
disagrees), 2 usage or configuration error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import analysis
from .consensus import METHODS, ConsensusConfig, sweep_p, sweep_scaling
from .graph import (
    ENUMERATION_CAP,
    expected_laplacians,
    expected_laplacians_oracle,
    load_graph,
    random_digraph,
)
from .jump import ModeCountError, load_system

EXIT_OK, EXIT_FAILS, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3

ANALYZE_METHODS = (
    "decomposed-mss",
    "decomposed-h2",
    "enumerated-mss",
    "enumerated-h2",
    "necessary",
    "oracle-mss",
    "oracle-h2",
    "robust-p-mss",
    "robust-p-h2",
    "robust-spectral-mss",
    "robust-spectral-h2",
)


class UsageError(Exception):
    pass


# argument parsing --------------------------------------------------------


def _probability(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"probability must lie in [0, 1], got {v}")
    return v


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {v}")
    return v


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epsilon", type=_positive, default=None,
                   help="strictness margin for every LMI (overrides the default)")
    p.add_argument("--force-enumerate", action="store_true",
                   help="allow mode enumeration beyond the %d-edge cap" % ENUMERATION_CAP)
    p.add_argument("--out", type=Path, default=None, help="write the payload here instead of stdout")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def _deflate_flags(p: argparse.ArgumentParser, default: bool) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--deflate", dest="deflate", action="store_true",
                   help="drop the zero-eigenvalue (average) mode")
    g.add_argument("--no-deflate", dest="deflate", action="store_false")
    p.set_defaults(deflate=default)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lossynet", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="run one analysis on a system JSON file")
    _common(a)
    _deflate_flags(a, False)
    a.add_argument("--system", required=True, type=Path)
    a.add_argument("--method", required=True, choices=ANALYZE_METHODS)
    pg = a.add_mutually_exclusive_group()
    pg.add_argument("--p", type=_probability, help="override the link probability")
    pg.add_argument("--p-range", type=_probability, nargs=2, metavar=("LO", "HI"),
                    help="probability interval for robust-p methods")
    a.add_argument("--lambda-range", type=float, nargs=2, metavar=("LMIN", "LMAX"),
                   help="spectral interval for robust-spectral methods")
    a.add_argument("--exclude-zero", action="store_true",
                   help="robust-spectral: do not impose the zero eigenvalue")
    a.add_argument("--agent-count", type=int, default=None)
    a.add_argument("--no-dedup", action="store_true", help="one block per eigenvalue, repeats included")

    s = sub.add_parser("sweep-p", help="consensus benchmark over a probability grid")
    _common(s)
    _deflate_flags(s, True)
    s.add_argument("--family", "--graph", dest="graph", required=True,
                   help="family shorthand such as triangular:3, or a graph JSON file")
    s.add_argument("--kappa", type=_positive, default=0.1)
    s.add_argument("--methods", default="all", help="comma list from %s, or 'all'" % ",".join(METHODS))
    pg = s.add_mutually_exclusive_group()
    pg.add_argument("--p", type=_probability, nargs="+", help="explicit probabilities")
    pg.add_argument("--p-range", type=float, nargs="+", metavar="X",
                    help="LO HI [STEP], inclusive; STEP defaults to 0.05")
    s.add_argument("--jobs", type=int, default=os.cpu_count() or 1)

    c = sub.add_parser("sweep-scaling", help="consensus benchmark over graph sizes")
    _common(c)
    _deflate_flags(c, True)
    c.add_argument("--family", required=True, choices=("circular", "triangular"))
    c.add_argument("--sizes", required=True, type=int, nargs="+")
    c.add_argument("--p", type=_probability, default=0.5)
    c.add_argument("--kappa", type=_positive, default=0.1)
    c.add_argument("--methods", default="decomposed,mean")
    c.add_argument("--jobs", type=int, default=1, help="accepted for symmetry; timing runs serially")

    e = sub.add_parser("expected-laplacian", help="expected Laplacian matrices of a lossy graph")
    _common(e)
    e.add_argument("--graph", required=True)
    e.add_argument("--p", type=_probability, required=True)
    e.add_argument("--check-oracle", action="store_true",
                   help="compare against brute-force mode enumeration")

    o = sub.add_parser("oracle-check", help="expected Laplacians vs enumeration on random digraphs")
    _common(o)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--count", type=int, default=100)
    o.add_argument("--max-n", type=int, default=5)
    o.add_argument("--max-edges", type=int, default=10)
    o.add_argument("--p", type=_probability, nargs="+", default=[0.0, 0.3, 0.7, 1.0])
    o.add_argument("--tol", type=_positive, default=1e-12)
    return ap


# helpers -----------------------------------------------------------------


@contextmanager
def _sink(path: Path | None):
    if path is None:
        yield sys.stdout
        return
    try:
        fh = open(path, "w", encoding="utf-8", newline="")
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}") from None
    with fh:
        yield fh


def _emit_json(payload, path: Path | None) -> None:
    with _sink(path) as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _cap_for(edge_count: int, force: bool) -> int:
    if edge_count <= ENUMERATION_CAP:
        return ENUMERATION_CAP
    if not force:
        raise UsageError(
            f"enumeration needs 2^{edge_count} modes, above the {ENUMERATION_CAP}-edge cap; "
            "pass --force-enumerate to proceed anyway"
        )
    print(
        f"warning: enumerating 2^{edge_count} modes; expect heavy memory use and long run time",
        file=sys.stderr,
    )
    return edge_count


def _methods(text: str) -> tuple[str, ...]:
    if text.strip() == "all":
        return METHODS
    out = tuple(m.strip() for m in text.split(",") if m.strip())
    bad = [m for m in out if m not in METHODS]
    if bad or not out:
        raise UsageError(f"unknown methods {bad}; choose from {', '.join(METHODS)} or 'all'")
    return out


def _p_grid(values, rng) -> tuple[float, ...] | None:
    if values:
        return tuple(values)
    if rng is None:
        return None
    if len(rng) not in (2, 3):
        raise UsageError("--p-range takes LO HI [STEP]")
    lo, hi = rng[0], rng[1]
    step = rng[2] if len(rng) == 3 else 0.05
    if not (0 <= lo <= hi <= 1) or step <= 0:
        raise UsageError(f"bad probability range {rng}")
    k = int(np.floor((hi - lo) / step + 1e-9))
    return tuple(round(lo + i * step, 12) for i in range(k + 1))


def _report_code(rep: analysis.AnalysisReport) -> int:
    if rep.solver_failed:
        return EXIT_SOLVER
    if rep.verdict == analysis.FAILS:
        return EXIT_FAILS
    return EXIT_OK


# subcommands -------------------------------------------------------------


def _analyze(args) -> int:
    try:
        system = load_system(args.system)
    except OSError as exc:
        raise UsageError(f"cannot read {args.system}: {exc.strerror}") from None
    if args.p is not None:
        system = system.with_p(args.p)
    m, eps, dfl = args.method, args.epsilon, args.deflate
    if m.startswith(("enumerated", "oracle")):
        cap = _cap_for(system.graph.edge_count, args.force_enumerate)
    if m == "decomposed-mss":
        rep = analysis.mss_decomposed(system, deflate=dfl, dedup=not args.no_dedup, epsilon=eps)
    elif m == "decomposed-h2":
        rep = analysis.h2_decomposed(system, deflate=dfl, dedup=not args.no_dedup, epsilon=eps)
    elif m == "enumerated-mss":
        rep = analysis.mss_enumerated(system, deflate=dfl, cap=cap, epsilon=eps)
    elif m == "enumerated-h2":
        rep = analysis.h2_enumerated(system, deflate=dfl, cap=cap, epsilon=eps)
    elif m == "necessary":
        rep = analysis.necessary_lti(system, deflate=dfl)
    elif m == "oracle-mss":
        r = analysis.mss_spectral_oracle(system, deflate=dfl, cap=cap)
        _emit_json({"method": m, "rho": r.rho, "iterations": r.iterations,
                    "converged": r.converged, "mean_square_stable": r.mean_square_stable}, args.out)
        return EXIT_OK if r.mean_square_stable else EXIT_FAILS
    elif m == "oracle-h2":
        r = analysis.h2_fixed_point_oracle(system, deflate=dfl, cap=cap)
        _emit_json({"method": m, "gamma": r.gamma, "iterations": r.iterations,
                    "converged": r.converged, "mean_square_stable": r.mean_square_stable}, args.out)
        return EXIT_OK if r.mean_square_stable else EXIT_FAILS
    elif m.startswith("robust-p"):
        if args.p_range is None:
            raise UsageError("robust-p methods need --p-range LO HI")
        interval = analysis.ProbabilityInterval(*args.p_range)
        rep = analysis.robust_p_interval(system, interval, m.rsplit("-", 1)[1], deflate=dfl, epsilon=eps)
    else:
        if args.lambda_range is None:
            raise UsageError("robust-spectral methods need --lambda-range LMIN LMAX")
        interval = analysis.SpectralInterval(*args.lambda_range, include_zero=not args.exclude_zero)
        rep = analysis.robust_spectral(system, interval, method=m.rsplit("-", 1)[1], deflate=dfl,
                                       agent_count=args.agent_count, epsilon=eps)
    _emit_json(rep.to_dict(), args.out)
    return _report_code(rep)


def _write_sweep(res, path) -> int:
    with _sink(path) as fh:
        res.to_csv(fh)
    for r in res.rows:
        if r.note:
            print(f"note: {r.graph} N={r.N} p={r.p:g} {r.method}: {r.note}", file=sys.stderr)
    return EXIT_SOLVER if any(r.solver_failed for r in res.rows) else EXIT_OK


def _sweep_p(args) -> int:
    graph = load_graph(args.graph)
    methods = _methods(args.methods)
    cap = ENUMERATION_CAP
    if "enumerated" in methods and graph.edge_count > ENUMERATION_CAP and args.force_enumerate:
        cap = _cap_for(graph.edge_count, True)
    grid = _p_grid(args.p, args.p_range)
    kw = {} if grid is None else {"p_grid": grid}
    cfg = ConsensusConfig(args.kappa, graph, methods=methods, deflate=args.deflate, cap=cap,
                          epsilon=args.epsilon, jobs=max(1, args.jobs), **kw)
    return _write_sweep(sweep_p(cfg), args.out)


def _sweep_scaling(args) -> int:
    res = sweep_scaling(args.family, args.sizes, p=args.p, methods=_methods(args.methods),
                        kappa=args.kappa, deflate=args.deflate, epsilon=args.epsilon)
    return _write_sweep(res, args.out)


def _expected_laplacian(args) -> int:
    g = load_graph(args.graph)
    ex = expected_laplacians(g, args.p)
    payload = {"n": g.n, "p": args.p, "mean": ex.mean.tolist(), "gram": ex.gram.tolist()}
    if args.check_oracle:
        orc = expected_laplacians_oracle(g, args.p, cap=_cap_for(g.edge_count, args.force_enumerate))
        dev = max(float(np.abs(ex.mean - orc.mean).max(initial=0.0)),
                  float(np.abs(ex.gram - orc.gram).max(initial=0.0)))
        payload["oracle_max_abs_deviation"] = dev
    _emit_json(payload, args.out)
    return EXIT_OK


def _oracle_check(args) -> int:
    if args.count < 1 or args.max_n < 2 or args.max_edges < 0:
        raise UsageError("need --count >= 1, --max-n >= 2, --max-edges >= 0")
    _cap_for(args.max_edges, args.force_enumerate)
    rng = np.random.default_rng(args.seed)
    worst, failures = 0.0, 0
    for _ in range(args.count):
        g = random_digraph(rng, args.max_n, args.max_edges)
        for p in args.p:
            ex = expected_laplacians(g, p)
            orc = expected_laplacians_oracle(g, p, cap=max(ENUMERATION_CAP, g.edge_count))
            dev = max(float(np.abs(ex.mean - orc.mean).max()), float(np.abs(ex.gram - orc.gram).max()))
            worst = max(worst, dev)
            failures += dev > args.tol
    payload = {"seed": args.seed, "graphs": args.count, "probabilities": list(args.p),
               "max_abs_deviation": worst, "tolerance": args.tol, "mismatches": failures}
    _emit_json(payload, args.out)
    return EXIT_FAILS if failures else EXIT_OK


_DISPATCH = {
    "analyze": _analyze,
    "sweep-p": _sweep_p,
    "sweep-scaling": _sweep_scaling,
    "expected-laplacian": _expected_laplacian,
    "oracle-check": _oracle_check,
}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return _DISPATCH[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ModeCountError as exc:
        print(f"error: {exc} (pass --force-enumerate to override)", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())
