"""Acceptance criteria, one test per criterion, each reporting a PASS/FAIL line."""

import math
import statistics
import time

import numpy as np
import pytest

from lossynet import analysis as an
from lossynet.consensus import build_consensus, sweep_scaling
from lossynet.graph import (
    expected_laplacians,
    expected_laplacians_oracle,
    graph_properties,
    make_family,
    random_digraph,
)

KAPPA = 0.1
INSTANCES = [f"circular:{n}" for n in range(2, 9)] + ["triangular:3"]
SANDWICH_P = (0.25, 0.5, 0.75)


def _graph(label):
    kind, size = label.split(":")
    return make_family(kind, int(size))


@pytest.fixture(scope="module")
def instance_results():
    """mean / exact / decomposed gammas for every instance at the sandwich probabilities and p=1."""
    t0 = time.perf_counter()
    out = {}
    for label in INSTANCES:
        g = _graph(label)
        for p in SANDWICH_P + (1.0,):
            sys = build_consensus(KAPPA, g, p)
            out[label, p] = {
                "mean": an.necessary_lti(sys, deflate=True),
                "exact": an.h2_enumerated(sys, deflate=True),
                "decomposed": an.h2_decomposed(sys, deflate=True),
            }
    return out, time.perf_counter() - t0


def test_criterion_1_expected_laplacians(verdict_line):
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    worst, asymmetric = 0.0, 0
    for _ in range(100):
        g = random_digraph(rng, max_n=5, max_edges=10)
        asymmetric += not graph_properties(g).undirected
        for p in (0.0, 0.3, 0.7, 1.0):
            a, b = expected_laplacians(g, p), expected_laplacians_oracle(g, p)
            worst = max(worst, np.abs(a.mean - b.mean).max(), np.abs(a.gram - b.gram).max())
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 10.0 and asymmetric > 0
    verdict_line(1, ok, f"max deviation {worst:.2e} (<= 1e-12), {asymmetric}/100 asymmetric, "
                        f"{elapsed:.2f} s (< 10 s)")


def test_criterion_2_k2_closed_forms(verdict_line):
    sys = build_consensus(KAPPA, make_family("circular", 2), 0.5)
    up = an.h2_decomposed(sys, deflate=True).gamma
    lo = an.necessary_lti(sys, deflate=True).gamma
    ex = an.h2_enumerated(sys, deflate=True).gamma
    oracle = an.h2_fixed_point_oracle(sys, deflate=True).gamma
    up_ref, lo_ref = math.sqrt(1 / 0.18), math.sqrt(1 / 0.19)
    ok = (
        abs(up - up_ref) <= 1e-4
        and abs(lo - lo_ref) <= 1e-6
        and lo_ref < ex < up_ref
        and lo_ref < oracle < up_ref
    )
    verdict_line(2, ok, f"decomposed {up:.6f} vs {up_ref:.6f}, mean {lo:.8f} vs {lo_ref:.8f}, "
                        f"exact {ex:.6f} (oracle {oracle:.6f}) strictly between")


def test_criterion_3_sandwich(instance_results, verdict_line):
    res, elapsed = instance_results
    bad = []
    for label in INSTANCES:
        for p in SANDWICH_P:
            r = res[label, p]
            lo, ex, up = r["mean"].gamma, r["exact"].gamma, r["decomposed"].gamma
            if None in (lo, ex, up) or not (lo <= ex + 1e-6 and ex <= up + 1e-6):
                bad.append((label, p, lo, ex, up))
    ok = not bad and elapsed < 300
    verdict_line(3, ok, f"{len(INSTANCES) * len(SANDWICH_P) - len(bad)}/{len(INSTANCES) * len(SANDWICH_P)} "
                        f"points ordered mean <= exact <= decomposed, {elapsed:.1f} s (< 300 s)"
                 + (f"; violations {bad}" if bad else ""))


def test_criterion_4_p_one_collapse(instance_results, verdict_line):
    res, _ = instance_results
    gaps = {label: abs(res[label, 1.0]["mean"].gamma - res[label, 1.0]["exact"].gamma) for label in INSTANCES}
    worst = max(gaps.values())
    verdict_line(4, worst <= 1e-6, f"max |mean - exact| at p=1 is {worst:.2e} (<= 1e-6)")


def test_criterion_5_mss_soundness(verdict_line):
    g = make_family("circular", 2)
    violations, holds = [], 0
    for kappa in np.round(np.arange(0.05, 1.5001, 0.05), 2):
        for p in np.round(np.arange(0.1, 1.0001, 0.1), 1):
            sys = build_consensus(float(kappa), g, float(p))
            if an.mss_decomposed(sys, deflate=True).verdict != an.HOLDS:
                continue
            holds += 1
            rho = an.mss_spectral_oracle(sys, deflate=True).rho
            if not rho < 1.0:
                violations.append((kappa, p, rho))
    verdict_line(5, not violations and holds > 0,
                 f"{holds} decomposed-holds points, {len(violations)} with spectral radius >= 1")


def test_criterion_6_oracle_agreement(instance_results, verdict_line):
    res, _ = instance_results
    worst, count, bad = 0.0, 0, []
    for label in INSTANCES:
        g = _graph(label)
        for p in SANDWICH_P + (1.0,):
            sys = build_consensus(KAPPA, g, p)
            exact = res[label, p]["exact"].gamma
            oracle = an.h2_fixed_point_oracle(sys, deflate=True)
            count += 1
            dev = abs(exact - oracle.gamma)
            rel = dev / (1 + exact)
            worst = max(worst, rel)
            if not (oracle.converged and dev <= 1e-5 * (1 + exact)):
                bad.append((label, p, exact, oracle.gamma))
    verdict_line(6, not bad, f"{count - len(bad)}/{count} instances agree, "
                             f"max |enumerated - oracle|/(1+gamma) = {worst:.2e} (<= 1e-5)")


def test_criterion_7_robust_p(verdict_line):
    sys = build_consensus(KAPPA, make_family("circular", 2), 0.5)
    cx = an.check_convexity_p(sys)
    interval = an.ProbabilityInterval(0.4, 0.6)
    rob_h2 = an.robust_p_interval(sys, interval, method="h2", deflate=True)
    rob_mss = an.robust_p_interval(sys, interval, method="mss", deflate=True)
    points = [0.40, 0.45, 0.50, 0.55, 0.60]
    pointwise = [
        an.h2_decomposed(sys.with_p(p), deflate=True).verdict == an.HOLDS
        and an.mss_decomposed(sys.with_p(p), deflate=True).verdict == an.HOLDS
        for p in points
    ]
    ok = cx.convex and rob_h2.verdict == an.HOLDS and rob_mss.verdict == an.HOLDS and all(pointwise)
    verdict_line(7, ok, f"convexity {cx.convex} ({cx.reason}); robust h2 {rob_h2.verdict} "
                        f"(gamma {rob_h2.gamma:.5f}), robust mss {rob_mss.verdict}; "
                        f"pointwise holds at {sum(pointwise)}/{len(points)} probabilities")


def _decomposed_seconds(h, repeats):
    times = []
    for _ in range(repeats):
        row = sweep_scaling("triangular", [h], p=0.5, methods=("decomposed",)).rows[0]
        assert row.verdict == an.HOLDS
        times.append(row.solve_ms / 1e3)
    return statistics.median(times)


def test_criterion_8_scaling(verdict_line):
    _decomposed_seconds(10, 1)  # warm-up
    t10 = _decomposed_seconds(10, 7)
    t20 = _decomposed_seconds(20, 5)
    t40 = _decomposed_seconds(40, 5)
    t100 = _decomposed_seconds(100, 1)
    ratio = t40 / t10
    ok = ratio <= 25 and t100 < 120
    verdict_line(8, ok, f"median times h=10 {t10 * 1e3:.1f} ms, h=20 {t20 * 1e3:.1f} ms, "
                        f"h=40 {t40 * 1e3:.1f} ms (ratio {ratio:.1f} <= 25), h=100 {t100:.2f} s (< 120 s)")


def test_criterion_9_dedup(verdict_line):
    worst = 0.0
    for n in range(3, 13):
        for p in (0.25, 0.5, 0.75):
            sys = build_consensus(KAPPA, make_family("circular", n), p)
            a = an.h2_decomposed(sys, deflate=True, dedup=True).gamma
            b = an.h2_decomposed(sys, deflate=True, dedup=False).gamma
            worst = max(worst, abs(a - b))
    verdict_line(9, worst <= 1e-7, f"max |dedup - full| over circular N=3..12 is {worst:.2e} (<= 1e-7)")
