"""Stability and H2 analyses of decomposable jump systems.

Three families of methods are provided:

* enumerated  -- exact LMI tests over all link-loss modes (small graphs only),
* decomposed  -- sufficient per-eigenvalue LMIs with one shared Lyapunov matrix,
* necessary   -- exact analysis of the mean (expected) LTI system, giving a
                 necessary stability condition and a lower bound on the H2 norm.

Decomposed infeasibility is reported as ``inconclusive``; only the
enumerated and necessary methods may return ``fails-necessary-condition``.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
import scipy.linalg as sla

from .graph import ENUMERATION_CAP, ZERO_EIG_RTOL, LaplacianSpectrum, laplacian, spectrum as _spectrum
from .jump import (
    DecomposableJumpSystem,
    deflate as _deflate,
    enumerate_modes,
    iter_mode_batches,
    mean_system,
    realize_mode,
)
from .lmi import LmiProgram, SolveOutcome

__all__ = [
    "AnalysisReport",
    "ModalRecord",
    "ProbabilityInterval",
    "SpectralInterval",
    "MARGINAL_TOL",
    "ConvexityResult",
    "SpectralRadiusResult",
    "H2OracleResult",
    "HOLDS",
    "INCONCLUSIVE",
    "FAILS",
    "mss_enumerated",
    "mss_spectral_oracle",
    "h2_enumerated",
    "h2_fixed_point_oracle",
    "mss_decomposed",
    "h2_decomposed",
    "necessary_lti",
    "check_convexity_p",
    "robust_p_interval",
    "robust_spectral",
]

HOLDS = "holds"
INCONCLUSIVE = "inconclusive"
FAILS = "fails-necessary-condition"


@dataclass
class ModalRecord:
    lam: float
    multiplicity: int
    feasible: bool | None


@dataclass
class AnalysisReport:
    method: str
    verdict: str
    gamma: float | None = None
    bound: str | None = None  # upper | lower | exact
    modal: list[ModalRecord] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    solve_ms: float = 0.0
    certificate: dict = field(default_factory=dict, repr=False)  # solver variable values

    @property
    def solver_failed(self) -> bool:
        return self.diagnostics.get("solver_status") == "numerical-failure"

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "verdict": self.verdict,
            "gamma": self.gamma,
            "bound": self.bound,
            "modal": [
                {"lambda": m.lam, "multiplicity": m.multiplicity, "feasible": m.feasible}
                for m in self.modal
            ],
            "solve_ms": self.solve_ms,
            "diagnostics": self.diagnostics,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


@dataclass(frozen=True)
class ProbabilityInterval:
    lower: float
    upper: float

    def __post_init__(self):
        if not 0.0 <= self.lower <= self.upper <= 1.0:
            raise ValueError(f"need 0 <= lower <= upper <= 1, got [{self.lower}, {self.upper}]")


@dataclass(frozen=True)
class SpectralInterval:
    lambda_min_nonzero: float
    lambda_max: float
    include_zero: bool = True

    def __post_init__(self):
        if self.lambda_min_nonzero < 0 or self.lambda_max < 0:
            raise ValueError("spectral bounds must be non-negative")
        if self.lambda_min_nonzero > self.lambda_max:
            raise ValueError(
                f"empty spectral interval [{self.lambda_min_nonzero}, {self.lambda_max}]"
            )


# helpers -----------------------------------------------------------------


def _prepare_spectrum(
    sys: DecomposableJumpSystem,
    spec: LaplacianSpectrum | None,
    deflate: bool,
    vectors: bool = False,
) -> LaplacianSpectrum:
    if spec is None or (vectors and spec.basis is None):
        spec = _spectrum(laplacian(sys.graph), vectors=vectors)
    return _deflate(spec, deflate)


def _modal_points(spec: LaplacianSpectrum, dedup: bool) -> list[tuple[float, int]]:
    if dedup:
        return spec.distinct(ZERO_EIG_RTOL)
    return [(float(v), 1) for v in spec.eigenvalues]


def _diag(out: SolveOutcome) -> dict:
    d = {
        "solver_status": out.status,
        "backend": out.backend,
        "backend_status": out.backend_status,
        "iterations": out.iterations,
        "solver_seconds": out.solve_time,
    }
    if out.message:
        d["message"] = out.message
    return d


MARGINAL_TOL = 1e-9
_ORACLE_WINDOW = 1000
DENSE_ORACLE_LIMIT = 1024  # operator size up to which the spectrum is computed directly

# Pure stability programs are homogeneous in Q: Q >= eps*I, F(Q) <= -eps*I is
# feasible iff Q >= I, F(Q) <= -I is, and the latter is far better conditioned.
_UNIT_MARGIN = 1.0


def _sufficient_verdict(out: SolveOutcome) -> str:
    return HOLDS if out.optimal else INCONCLUSIVE


def _gramian_modal(Q, sys: DecomposableJumpSystem, p: float, lam: float, with_output: bool):
    """Per-eigenvalue Gramian (or pure stability) left-hand side."""
    Abar = sys.Ad + p * lam * sys.Ac
    w = 2.0 * p * (1.0 - p) * lam
    expr = Q.congruence(Abar) - Q + Q.congruence(sys.Ac, coef=w)
    if with_output:
        Cbar = sys.Cd + p * lam * sys.Cc
        expr = expr + (Cbar.T @ Cbar + w * sys.Cc.T @ sys.Cc)
    return expr


def _trace_modal(Q, Z, sys: DecomposableJumpSystem, p: float, lam: float):
    Bbar = sys.Bd + p * lam * sys.Bc
    Dbar = sys.Dd + p * lam * sys.Dc
    w = 2.0 * p * (1.0 - p) * lam
    return (
        Q.congruence(Bbar)
        + Q.congruence(sys.Bc, coef=w)
        + (Dbar.T @ Dbar + w * sys.Dc.T @ sys.Dc)
        - Z
    )


def _modal_feasibility(prog: LmiProgram, out: SolveOutcome, groups: dict[int, list[int]]) -> dict[int, bool | None]:
    if not out.optimal:
        return {k: None for k in groups}
    viol = {r.constraint: r.violated for r in out.residuals}
    return {k: not any(viol[c] for c in cids) for k, cids in groups.items()}


# decomposed tests --------------------------------------------------------


def mss_decomposed(
    sys: DecomposableJumpSystem,
    spectrum: LaplacianSpectrum | None = None,
    deflate: bool = False,
    dedup: bool = True,
    epsilon: float | None = None,
) -> AnalysisReport:
    """Shared-Lyapunov-matrix sufficient test for mean-square stability."""
    t0 = time.perf_counter()
    spec = _prepare_spectrum(sys, spectrum, deflate)
    points = _modal_points(spec, dedup)
    prog = LmiProgram(epsilon)
    Q = prog.declare_symmetric("Q", sys.nx)
    prog.add_lmi(Q, "pd", margin=_UNIT_MARGIN, label="Q>0")
    groups = {}
    for k, (lam, _) in enumerate(points):
        expr = _gramian_modal(Q, sys, sys.p, lam, False)
        groups[k] = [prog.add_lmi(expr, "nd", margin=_UNIT_MARGIN, label=f"mss[{lam:.6g}]")]
    out = prog.solve()
    feas = _modal_feasibility(prog, out, groups)
    return AnalysisReport(
        "mss-decomposed",
        _sufficient_verdict(out),
        modal=[ModalRecord(lam, m, feas[k]) for k, (lam, m) in enumerate(points)],
        diagnostics=_diag(out),
        solve_ms=1e3 * (time.perf_counter() - t0),
        certificate=out.values,
    )


def h2_decomposed(
    sys: DecomposableJumpSystem,
    spectrum: LaplacianSpectrum | None = None,
    deflate: bool = False,
    dedup: bool = True,
    epsilon: float | None = None,
) -> AnalysisReport:
    """Upper bound on the H2 norm from per-eigenvalue LMIs.

    Repeated eigenvalues share one ``Z`` block whose trace is counted with
    multiplicity when ``dedup`` is set.
    """
    t0 = time.perf_counter()
    spec = _prepare_spectrum(sys, spectrum, deflate)
    points = _modal_points(spec, dedup)
    prog = LmiProgram(epsilon)
    Q = prog.declare_symmetric("Q", sys.nx)
    g = prog.declare_symmetric("gamma2", 1)
    prog.add_lmi(Q, "pd", label="Q>0")
    total = None
    groups = {}
    for k, (lam, mult) in enumerate(points):
        Z = prog.declare_symmetric(f"Z{k}", sys.nw)
        c1 = prog.add_lmi(_gramian_modal(Q, sys, sys.p, lam, True), "nd", label=f"gram[{lam:.6g}]")
        c2 = prog.add_lmi(_trace_modal(Q, Z, sys, sys.p, lam), "nd", label=f"trace[{lam:.6g}]")
        groups[k] = [c1, c2]
        tr = Z.trace() * mult
        total = tr if total is None else total + tr
    if total is not None:
        prog.add_lmi(total - g, "nd", label="trace<gamma2")
    prog.minimize(g)
    out = prog.solve()
    feas = _modal_feasibility(prog, out, groups)
    gamma = math.sqrt(max(out.objective, 0.0)) if out.optimal else None
    return AnalysisReport(
        "h2-decomposed",
        _sufficient_verdict(out),
        gamma,
        "upper" if gamma is not None else None,
        [ModalRecord(lam, m, feas[k]) for k, (lam, m) in enumerate(points)],
        _diag(out),
        1e3 * (time.perf_counter() - t0),
        certificate=out.values,
    )


# mean system -------------------------------------------------------------


def necessary_lti(
    sys: DecomposableJumpSystem,
    spectrum: LaplacianSpectrum | None = None,
    deflate: bool = False,
) -> AnalysisReport:
    """Stability and exact H2 norm of the mean system, mode by mode.

    Instability of the mean system rules out mean-square stability; its H2
    norm is a lower bound on the jump system's.
    """
    t0 = time.perf_counter()
    spec = _prepare_spectrum(sys, spectrum, deflate)
    ms = mean_system(sys)
    modal, total, unstable = [], 0.0, []
    for lam, mult in spec.distinct():
        A, B, C, D = ms.modal(lam)
        rho = float(np.max(np.abs(np.linalg.eigvals(A))))
        stable = rho < 1.0
        modal.append(ModalRecord(lam, mult, stable))
        if not stable:
            unstable.append((lam, rho))
            continue
        P = sla.solve_discrete_lyapunov(A.T, C.T @ C)
        total += mult * float(np.trace(B.T @ P @ B + D.T @ D))
    diag = {"max_modal_spectral_radius": max(
        (float(np.max(np.abs(np.linalg.eigvals(ms.modal(r.lam)[0])))) for r in modal), default=0.0
    )}
    if unstable:
        diag["unstable_modes"] = [{"lambda": l, "spectral_radius": r} for l, r in unstable]
        return AnalysisReport("necessary-lti", FAILS, None, None, modal, diag,
                              1e3 * (time.perf_counter() - t0))
    return AnalysisReport("necessary-lti", HOLDS, math.sqrt(total), "lower", modal, diag,
                          1e3 * (time.perf_counter() - t0))


# enumerated tests --------------------------------------------------------


def _kron_batch(Ls: np.ndarray, Xd: np.ndarray, Xc: np.ndarray) -> np.ndarray:
    c, r, _ = Ls.shape
    a, b = Xd.shape
    out = np.einsum("cij,ab->ciajb", Ls, Xc).reshape(c, r * a, r * b)
    out += np.kron(np.eye(r), Xd)[None]
    return out


def _reduced_batches(sys, basis, cap) -> Iterator[tuple[np.ndarray, ...]]:
    """Mode matrices in disagreement coordinates when ``basis`` is given."""
    for w, Ls in iter_mode_batches(sys, cap=cap):
        if basis is not None:
            Ls = np.einsum("ki,ckl,lj->cij", basis, Ls, basis)
        yield (
            w,
            _kron_batch(Ls, sys.Ad, sys.Ac),
            _kron_batch(Ls, sys.Bd, sys.Bc),
            _kron_batch(Ls, sys.Cd, sys.Cc),
            _kron_batch(Ls, sys.Dd, sys.Dc),
        )


def _second_moment(w: np.ndarray, X: np.ndarray) -> np.ndarray:
    """``T[i, j, k, l] = sum_c w_c X_c[k, i] X_c[l, j]``."""
    c, n, m = X.shape
    flat = X.reshape(c, n * m)
    M = (flat * w[:, None]).T @ flat
    return M.reshape(n, m, n, m).transpose(1, 3, 0, 2)


def _accumulate(sys, basis, cap, need_io: bool):
    TA = TB = CC = DD = None
    for w, A, B, C, D in _reduced_batches(sys, basis, cap):
        ta = _second_moment(w, A)
        TA = ta if TA is None else TA + ta
        if need_io:
            tb = _second_moment(w, B)
            cc = np.einsum("c,cki,ckj->ij", w, C, C)
            dd = np.einsum("c,cki,ckj->ij", w, D, D)
            if TB is None:
                TB, CC, DD = tb, cc, dd
            else:
                TB, CC, DD = TB + tb, CC + cc, DD + dd
    return TA, TB, CC, DD


def _enumeration_basis(sys, spectrum, deflate):
    if not deflate:
        return None
    return _prepare_spectrum(sys, spectrum, True, vectors=True).basis


def mss_enumerated(
    sys: DecomposableJumpSystem,
    deflate: bool = False,
    spectrum: LaplacianSpectrum | None = None,
    cap: int = ENUMERATION_CAP,
    epsilon: float | None = None,
) -> AnalysisReport:
    """Exact MSS test with one Lyapunov matrix over the full network state."""
    t0 = time.perf_counter()
    basis = _enumeration_basis(sys, spectrum, deflate)
    TA, *_ = _accumulate(sys, basis, cap, need_io=False)
    n = TA.shape[0]
    prog = LmiProgram(epsilon)
    Q = prog.declare_symmetric("Q", n)
    prog.add_lmi(Q, "pd", margin=_UNIT_MARGIN, label="Q>0")
    prog.add_lmi(Q.mapped(TA) - Q, "nd", margin=_UNIT_MARGIN, label="E[A'QA]-Q")
    out = prog.solve()
    if out.optimal:
        verdict = HOLDS
    elif out.status == "infeasible":
        verdict = FAILS
    else:
        verdict = INCONCLUSIVE
    return AnalysisReport("mss-enumerated", verdict, diagnostics=_diag(out),
                          solve_ms=1e3 * (time.perf_counter() - t0), certificate=out.values)


def h2_enumerated(
    sys: DecomposableJumpSystem,
    deflate: bool = False,
    spectrum: LaplacianSpectrum | None = None,
    cap: int = ENUMERATION_CAP,
    epsilon: float | None = None,
) -> AnalysisReport:
    """Exact H2 norm by minimising ``gamma^2`` over the enumerated LMIs.

    The Gramian LMI is feasible exactly when the system is mean-square
    stable, so infeasibility is reported as a failed necessary condition.
    """
    t0 = time.perf_counter()
    basis = _enumeration_basis(sys, spectrum, deflate)
    TA, TB, CC, DD = _accumulate(sys, basis, cap, need_io=True)
    n, m = TA.shape[0], TB.shape[0]
    prog = LmiProgram(epsilon)
    Q = prog.declare_symmetric("Q", n)
    Z = prog.declare_symmetric("Z", m)
    g = prog.declare_symmetric("gamma2", 1)
    prog.add_lmi(Q, "pd", label="Q>0")
    prog.add_lmi(Q.mapped(TA) + CC - Q, "nd", label="gramian")
    prog.add_lmi(Q.mapped(TB) + DD - Z, "nd", label="trace")
    prog.add_lmi(Z.trace() - g, "nd", label="trace<gamma2")
    prog.minimize(g)
    out = prog.solve()
    diag = _diag(out)
    if out.optimal:
        return AnalysisReport("h2-enumerated", HOLDS, math.sqrt(max(out.objective, 0.0)), "exact",
                              diagnostics=diag, solve_ms=1e3 * (time.perf_counter() - t0),
                              certificate=out.values)
    if out.status == "infeasible":
        diag["message"] = "system is not mean-square stable"
        verdict = FAILS
    else:
        verdict = INCONCLUSIVE
    return AnalysisReport("h2-enumerated", verdict, diagnostics=diag,
                          solve_ms=1e3 * (time.perf_counter() - t0))


# independent oracles -----------------------------------------------------


def _oracle_modes(sys, spectrum, deflate, cap):
    """Per-mode matrices through ``realize_mode``, projected if deflating."""
    if deflate:
        U = _prepare_spectrum(sys, spectrum, True, vectors=True).basis
        Px, Pw, Pz = (np.kron(U, np.eye(k)) for k in (sys.nx, sys.nw, sys.nz))
    for mode in enumerate_modes(sys, cap=cap):
        if mode.probability == 0.0:
            continue
        M = realize_mode(sys, mode)
        A, B, C, D = M["A"], M["B"], M["C"], M["D"]
        if deflate:
            A, B, C, D = Px.T @ A @ Px, Px.T @ B @ Pw, Pz.T @ C @ Px, Pz.T @ D @ Pw
        yield mode.probability, A, B, C, D


@dataclass
class SpectralRadiusResult:
    rho: float
    iterations: int
    converged: bool
    iterate: np.ndarray

    @property
    def mean_square_stable(self) -> bool:
        # a radius within rounding of 1 is marginal, not stable
        return self.rho < 1.0 - MARGINAL_TOL


def mss_spectral_oracle(
    sys: DecomposableJumpSystem,
    deflate: bool = False,
    spectrum: LaplacianSpectrum | None = None,
    cap: int = ENUMERATION_CAP,
    tol: float = 1e-12,
    max_iter: int = 200_000,
) -> SpectralRadiusResult:
    """Spectral radius of ``Q -> sum_i t_i A_i' Q A_i``.

    Small operators are diagonalised directly; larger ones use power
    iteration from the identity.
    """
    K = None
    for t, A, *_ in _oracle_modes(sys, spectrum, deflate, cap):
        k = t * np.kron(A.T, A.T)
        K = k if K is None else K + k
    n = int(round(math.sqrt(K.shape[0])))
    if K.shape[0] <= DENSE_ORACLE_LIMIT:
        w, V = np.linalg.eig(K)
        top = int(np.argmax(np.abs(w)))
        return SpectralRadiusResult(float(abs(w[top])), 0, True, V[:, top].real.reshape(n, n))
    v = np.eye(n).ravel()
    v /= np.linalg.norm(v)
    rho_prev, rho = math.inf, 0.0
    for it in range(1, max_iter + 1):
        u = K @ v
        rho = float(np.linalg.norm(u))
        if rho == 0.0:
            return SpectralRadiusResult(0.0, it, True, u.reshape(n, n))
        v = u / rho
        if abs(rho - rho_prev) <= tol * max(1.0, rho):
            return SpectralRadiusResult(rho, it, True, v.reshape(n, n))
        rho_prev = rho
    return SpectralRadiusResult(rho, max_iter, False, v.reshape(n, n))


@dataclass
class H2OracleResult:
    gamma: float
    iterations: int
    converged: bool
    mean_square_stable: bool


def h2_fixed_point_oracle(
    sys: DecomposableJumpSystem,
    deflate: bool = False,
    spectrum: LaplacianSpectrum | None = None,
    cap: int = ENUMERATION_CAP,
    tol: float = 1e-10,
    max_iter: int = 1_000_000,
) -> H2OracleResult:
    """H2 norm from the observability-Gramian fixed point.

    Iterates ``Q <- sum_i t_i (A_i' Q A_i + C_i' C_i)`` from zero and returns
    ``sqrt(sum_i t_i trace(B_i' Q B_i + D_i' D_i))``. Divergence is
    reported as ``mean_square_stable=False`` with infinite gamma.
    """
    K = c = BB = None
    dd = 0.0
    for t, A, B, C, D in _oracle_modes(sys, spectrum, deflate, cap):
        k, cc, bb = t * np.kron(A.T, A.T), t * (C.T @ C).ravel(), t * (B @ B.T)
        K, c, BB = (k, cc, bb) if K is None else (K + k, c + cc, BB + bb)
        dd += t * float(np.sum(D * D))
    n = int(round(math.sqrt(K.shape[0])))
    q = np.zeros(n * n)
    step_prev = math.inf
    converged = False
    checkpoint = math.inf
    for it in range(1, max_iter + 1):
        q_new = K @ q + c
        step = float(np.linalg.norm(q_new - q))
        q = q_new
        size = max(1.0, float(np.linalg.norm(q)))
        if not np.isfinite(size) or size > 1e15:
            return H2OracleResult(math.inf, it, False, False)
        # no contraction at all over a window of steps: marginal or unstable
        if it % _ORACLE_WINDOW == 0:
            if step >= (1.0 - MARGINAL_TOL) * checkpoint:
                return H2OracleResult(math.inf, it, False, False)
            checkpoint = step
        # geometric tail bound on the remaining error
        ratio = step / step_prev if step_prev > 0 else 0.0
        if ratio < 1.0 and step * ratio / (1.0 - ratio) <= tol * size and it > 2:
            converged = True
            break
        if step == 0.0:
            converged = True
            break
        step_prev = step
    if not converged:
        return H2OracleResult(math.inf, max_iter, False, False)
    Q = q.reshape(n, n)
    # trace(B' Q B) summed over modes equals <Q, sum_i t_i B B'>
    g2 = float(np.sum(0.5 * (Q + Q.T) * BB)) + dd
    return H2OracleResult(math.sqrt(max(g2, 0.0)), it, True, True)


# convexity and robust variants -------------------------------------------

_FAMILIES = {"mss": ("Ac",), "gramian": ("Ac", "Cc"), "trace": ("Bc", "Dc")}


@dataclass
class ConvexityResult:
    convex: bool
    reason: str
    families: dict[str, bool]


def check_convexity_p(
    sys: DecomposableJumpSystem,
    spectrum: LaplacianSpectrum | None = None,
    method: str = "h2",
) -> ConvexityResult:
    """Whether the decomposed LMIs are convex in the link probability.

    Each LMI family is convex iff its coupling matrices vanish or every
    non-zero Laplacian eigenvalue is at least 2.
    """
    spec = _prepare_spectrum(sys, spectrum, False)
    lam = spec.eigenvalues
    tol = ZERO_EIG_RTOL * max(1.0, float(lam.max(initial=0.0)))
    nonzero = lam[lam > tol]
    spectral_ok = bool(np.all(nonzero >= 2.0 - tol))
    fams = {}
    for fam, names in _FAMILIES.items():
        fams[fam] = spectral_ok or sys.coupled_zero(names)
    wanted = ("mss",) if method == "mss" else ("gramian", "trace")
    convex = all(fams[f] for f in wanted)
    if convex:
        reason = (
            "all non-zero eigenvalues are >= 2" if spectral_ok
            else "relevant coupling matrices are zero"
        )
    else:
        lam2 = float(nonzero.min()) if nonzero.size else 0.0
        bad = [f for f in wanted if not fams[f]]
        reason = f"smallest non-zero eigenvalue {lam2:.6g} < 2 with non-zero coupling in {', '.join(bad)}"
    return ConvexityResult(convex, reason, fams)


def robust_p_interval(
    sys: DecomposableJumpSystem,
    interval: ProbabilityInterval,
    method: str = "mss",
    spectrum: LaplacianSpectrum | None = None,
    deflate: bool = False,
    epsilon: float | None = None,
) -> AnalysisReport:
    """Decomposed test valid for every constant probability in ``interval``.

    Enforced at both endpoints with shared ``Q`` (and shared ``Z_i`` and
    ``gamma`` for H2); requires convexity in the probability.
    """
    if method not in ("mss", "h2"):
        raise ValueError(f"method must be 'mss' or 'h2', got {method!r}")
    t0 = time.perf_counter()
    full = _prepare_spectrum(sys, spectrum, False)
    cx = check_convexity_p(sys, full, method)
    if not cx.convex:
        raise ValueError(
            f"convexity in p does not hold ({cx.reason}); run pointwise sweeps over p instead"
        )
    spec = _deflate(full, deflate)
    points = spec.distinct()
    ends = sorted({interval.lower, interval.upper})
    prog = LmiProgram(epsilon)
    Q = prog.declare_symmetric("Q", sys.nx)
    unit = _UNIT_MARGIN if method == "mss" else None
    prog.add_lmi(Q, "pd", margin=unit, label="Q>0")
    groups: dict[int, list[int]] = {k: [] for k in range(len(points))}
    if method == "mss":
        for p in ends:
            for k, (lam, _) in enumerate(points):
                groups[k].append(prog.add_lmi(_gramian_modal(Q, sys, p, lam, False), "nd",
                                              margin=unit, label=f"mss[p={p:g},{lam:.6g}]"))
    else:
        g = prog.declare_symmetric("gamma2", 1)
        Zs = [prog.declare_symmetric(f"Z{k}", sys.nw) for k in range(len(points))]
        for p in ends:
            for k, (lam, _) in enumerate(points):
                groups[k].append(prog.add_lmi(_gramian_modal(Q, sys, p, lam, True), "nd",
                                              label=f"gram[p={p:g},{lam:.6g}]"))
                groups[k].append(prog.add_lmi(_trace_modal(Q, Zs[k], sys, p, lam), "nd",
                                              label=f"trace[p={p:g},{lam:.6g}]"))
        if Zs:
            total = Zs[0].trace() * points[0][1]
            for Z, (_, mult) in zip(Zs[1:], points[1:]):
                total = total + Z.trace() * mult
            prog.add_lmi(total - g, "nd", label="trace<gamma2")
        prog.minimize(g)
    out = prog.solve()
    feas = _modal_feasibility(prog, out, groups)
    gamma = None
    if method == "h2" and out.optimal:
        gamma = math.sqrt(max(out.objective, 0.0))
    diag = _diag(out)
    diag["interval"] = [interval.lower, interval.upper]
    diag["convexity"] = cx.reason
    return AnalysisReport(
        f"robust-p-{method}",
        _sufficient_verdict(out),
        gamma,
        "upper" if gamma is not None else None,
        [ModalRecord(lam, m, feas[k]) for k, (lam, m) in enumerate(points)],
        diag,
        1e3 * (time.perf_counter() - t0),
        certificate=out.values,
    )


def robust_spectral(
    sys: DecomposableJumpSystem,
    interval: SpectralInterval,
    p: float | None = None,
    method: str = "mss",
    deflate: bool = False,
    agent_count: int | None = None,
    epsilon: float | None = None,
) -> AnalysisReport:
    """Decomposed test valid for every graph whose spectrum lies in ``interval``.

    Constraints are imposed at the interval ends (and at zero when
    ``include_zero``) with one shared ``Q`` and, for H2, one shared ``Z``
    whose trace is counted once per modal subsystem.
    """
    if method not in ("mss", "h2"):
        raise ValueError(f"method must be 'mss' or 'h2', got {method!r}")
    if deflate and interval.include_zero:
        raise ValueError("deflation removes the zero mode; set include_zero=False")
    t0 = time.perf_counter()
    p = sys.p if p is None else float(p)
    lams = sorted({interval.lambda_min_nonzero, interval.lambda_max} | ({0.0} if interval.include_zero else set()))
    count = (agent_count or sys.graph.n) - (1 if deflate else 0)
    prog = LmiProgram(epsilon)
    Q = prog.declare_symmetric("Q", sys.nx)
    unit = _UNIT_MARGIN if method == "mss" else None
    prog.add_lmi(Q, "pd", margin=unit, label="Q>0")
    groups: dict[int, list[int]] = {}
    if method == "mss":
        for k, lam in enumerate(lams):
            groups[k] = [prog.add_lmi(_gramian_modal(Q, sys, p, lam, False), "nd",
                                      margin=unit, label=f"mss[{lam:.6g}]")]
    else:
        g = prog.declare_symmetric("gamma2", 1)
        Z = prog.declare_symmetric("Z", sys.nw)
        for k, lam in enumerate(lams):
            groups[k] = [
                prog.add_lmi(_gramian_modal(Q, sys, p, lam, True), "nd", label=f"gram[{lam:.6g}]"),
                prog.add_lmi(_trace_modal(Q, Z, sys, p, lam), "nd", label=f"trace[{lam:.6g}]"),
            ]
        prog.add_lmi(Z.trace() * count - g, "nd", label="N*trace(Z)<gamma2")
        prog.minimize(g)
    out = prog.solve()
    feas = _modal_feasibility(prog, out, groups)
    gamma = None
    if method == "h2" and out.optimal:
        gamma = math.sqrt(max(out.objective, 0.0))
    diag = _diag(out)
    diag["lambda_points"] = lams
    diag["modal_count"] = count
    return AnalysisReport(
        f"robust-spectral-{method}",
        _sufficient_verdict(out),
        gamma,
        "upper" if gamma is not None else None,
        [ModalRecord(lam, 1, feas[k]) for k, lam in enumerate(lams)],
        diag,
        1e3 * (time.perf_counter() - t0),
        certificate=out.values,
    )
