"""A small LMI modelling layer compiled to a sparse conic program.

Symmetric matrix variables are combined into affine matrix expressions,
constrained to be (margin-shifted) positive or negative semidefinite and
compiled to

    minimize    c^T x
    subject to  b - A x in K,    K = R_+^k x PSD_{m_1} x ... x PSD_{m_r}

with PSD blocks in scaled upper-triangular (column-major) vectorisation.
Backends receive only this compiled form.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import IO, Protocol

import numpy as np
import scipy.sparse as sp

__all__ = [
    "LmiError",
    "SymmetricVariable",
    "MatrixExpression",
    "LmiProgram",
    "ConicProgram",
    "SolveOutcome",
    "Residual",
    "ClarabelBackend",
    "DEFAULT_EPSILON",
]

DEFAULT_EPSILON = 1e-7
DEFAULT_FEAS_TOL = 1e-8
SQRT2 = math.sqrt(2.0)

_SENSES = {
    "nd": -1, "negative_definite": -1, "<": -1,
    "pd": 1, "positive_definite": 1, ">": 1,
}


class LmiError(ValueError):
    pass


def _tri_indices(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Row/column indices of the upper triangle in column-major order."""
    rows, cols = [], []
    for j in range(d):
        for i in range(j + 1):
            rows.append(i)
            cols.append(j)
    return np.array(rows, dtype=int), np.array(cols, dtype=int)


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.swapaxes(a, -1, -2))


class MatrixExpression:
    """Affine symmetric-matrix-valued function of the program variables.

    Each variable contributes ``images[k]``, the value of the linear part
    at the k-th basis element of that variable's unknowns.
    """

    __slots__ = ("dim", "constant", "terms")

    def __init__(self, dim: int, constant=None, terms=None):
        self.dim = int(dim)
        self.constant = np.zeros((dim, dim)) if constant is None else np.asarray(constant, float)
        self.terms: dict[str, tuple[SymmetricVariable, np.ndarray]] = dict(terms or {})

    @classmethod
    def const(cls, value) -> "MatrixExpression":
        a = np.atleast_2d(np.asarray(value, dtype=float))
        if a.shape[0] != a.shape[1]:
            raise LmiError(f"constant term must be square, got {a.shape}")
        return cls(a.shape[0], _sym(a))

    def _coerce(self, other) -> "MatrixExpression":
        if isinstance(other, MatrixExpression):
            return other
        if isinstance(other, SymmetricVariable):
            return other.expr()
        if np.isscalar(other):
            return MatrixExpression(self.dim, float(other) * np.eye(self.dim))
        return MatrixExpression.const(other)

    def __add__(self, other) -> "MatrixExpression":
        o = self._coerce(other)
        if o.dim != self.dim:
            raise LmiError(f"dimension mismatch: {self.dim} vs {o.dim}")
        terms = dict(self.terms)
        for name, (var, imgs) in o.terms.items():
            if name in terms:
                terms[name] = (var, terms[name][1] + imgs)
            else:
                terms[name] = (var, imgs)
        return MatrixExpression(self.dim, self.constant + o.constant, terms)

    __radd__ = __add__

    def __neg__(self) -> "MatrixExpression":
        return self * -1.0

    def __sub__(self, other) -> "MatrixExpression":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "MatrixExpression":
        return self._coerce(other) + (-self)

    def __mul__(self, c) -> "MatrixExpression":
        c = float(c)
        return MatrixExpression(
            self.dim, c * self.constant, {k: (v, c * im) for k, (v, im) in self.terms.items()}
        )

    __rmul__ = __mul__

    def evaluate(self, values: dict[str, np.ndarray]) -> np.ndarray:
        out = self.constant.copy()
        for name, (var, imgs) in self.terms.items():
            x = var.unknowns(values[name])
            out += np.tensordot(x, imgs, axes=1)
        return out

    def __repr__(self) -> str:
        return f"MatrixExpression(dim={self.dim}, vars={list(self.terms)})"


@dataclass(eq=False)
class SymmetricVariable:
    name: str
    dim: int
    offset: int

    @property
    def size(self) -> int:
        return self.dim * (self.dim + 1) // 2

    def _pairs(self):
        return _tri_indices(self.dim)

    def unknowns(self, value) -> np.ndarray:
        X = np.atleast_2d(np.asarray(value, dtype=float))
        r, c = self._pairs()
        return X[r, c]

    def matrix(self, x: np.ndarray) -> np.ndarray:
        r, c = self._pairs()
        X = np.zeros((self.dim, self.dim))
        X[r, c] = x
        X[c, r] = x
        return X

    def basis(self) -> np.ndarray:
        r, c = self._pairs()
        B = np.zeros((self.size, self.dim, self.dim))
        k = np.arange(self.size)
        B[k, r, c] = 1.0
        B[k, c, r] = 1.0
        return B

    def expr(self) -> MatrixExpression:
        return MatrixExpression(self.dim, None, {self.name: (self, self.basis())})

    def congruence(self, E, F=None, coef: float = 1.0) -> MatrixExpression:
        """``coef * sym(E^T X F)``; with ``F`` omitted, ``coef * E^T X E``."""
        E = np.atleast_2d(np.asarray(E, dtype=float))
        F = E if F is None else np.atleast_2d(np.asarray(F, dtype=float))
        if E.shape[0] != self.dim or F.shape != E.shape:
            raise LmiError(
                f"congruence factors of shape {E.shape}/{F.shape} do not fit "
                f"variable {self.name!r} of dimension {self.dim}"
            )
        r, c = self._pairs()
        imgs = E[r][:, :, None] * F[c][:, None, :]
        off = r != c
        imgs[off] += E[c[off]][:, :, None] * F[r[off]][:, None, :]
        return MatrixExpression(E.shape[1], None, {self.name: (self, coef * _sym(imgs))})

    def mapped(self, tensor) -> MatrixExpression:
        """Linear map ``X -> sum_kl T[:, :, k, l] X[k, l]``."""
        T = np.asarray(tensor, dtype=float)
        if T.ndim != 4 or T.shape[2:] != (self.dim, self.dim) or T.shape[0] != T.shape[1]:
            raise LmiError(f"tensor of shape {T.shape} does not map variable {self.name!r}")
        r, c = self._pairs()
        imgs = np.moveaxis(T[:, :, r, c], 2, 0).copy()
        off = r != c
        imgs[off] += np.moveaxis(T[:, :, c[off], r[off]], 2, 0)
        return MatrixExpression(T.shape[0], None, {self.name: (self, _sym(imgs))})

    def scaled(self, M) -> MatrixExpression:
        """``x * M`` for a scalar (1x1) variable."""
        if self.dim != 1:
            raise LmiError("scaled() needs a 1x1 variable")
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return MatrixExpression(M.shape[0], None, {self.name: (self, _sym(M)[None])})

    def trace(self) -> MatrixExpression:
        r, c = self._pairs()
        imgs = (r == c).astype(float).reshape(-1, 1, 1)
        return MatrixExpression(1, None, {self.name: (self, imgs)})

    # arithmetic forwards to the identity expression
    def __add__(self, o):
        return self.expr() + o

    __radd__ = __add__

    def __sub__(self, o):
        return self.expr() - o

    def __rsub__(self, o):
        return (-self.expr()) + o

    def __neg__(self):
        return -self.expr()

    def __mul__(self, c):
        return self.expr() * c

    __rmul__ = __mul__


@dataclass
class Constraint:
    id: int
    expr: MatrixExpression
    sign: int
    margin: float
    label: str


@dataclass
class ConicProgram:
    """``min c^T x  s.t.  b - A x in K``; ``cones`` lists ``("nonneg", k)`` / ``("psd", m)``."""

    c: np.ndarray
    A: sp.csc_matrix
    b: np.ndarray
    cones: list[tuple[str, int]]
    rows: dict[int, tuple[int, int]]

    def write(self, fh: IO[str]) -> None:
        """Plain-text dump: header, then ``c``, ``A`` and ``b`` as triplets."""
        A = self.A.tocoo()
        fh.write("# conic program: minimize c'x subject to b - A x in K\n")
        fh.write(f"nvars {len(self.c)}\n")
        fh.write(f"nrows {len(self.b)}\n")
        fh.write("cones " + " ".join(f"{k}:{m}" for k, m in self.cones) + "\n")
        fh.write("# PSD blocks: upper triangle, column-major, off-diagonals scaled by sqrt(2)\n")
        fh.write(f"c {int(np.count_nonzero(self.c))}\n")
        for i in np.flatnonzero(self.c):
            fh.write(f"{i} {self.c[i]!r}\n")
        fh.write(f"A {A.nnz}\n")
        for i, j, v in zip(A.row, A.col, A.data):
            fh.write(f"{i} {j} {v!r}\n")
        fh.write(f"b {int(np.count_nonzero(self.b))}\n")
        for i in np.flatnonzero(self.b):
            fh.write(f"{i} {self.b[i]!r}\n")


@dataclass
class BackendResult:
    status: str  # optimal | infeasible | failure
    x: np.ndarray | None
    iterations: int
    solve_time: float
    raw_status: str


class Backend(Protocol):
    name: str

    def solve(self, prog: ConicProgram) -> BackendResult: ...


class ClarabelBackend:
    """Interior-point backend via the ``clarabel`` conic solver."""

    name = "clarabel"

    def __init__(self, tol: float = 1e-10, max_iter: int = 200, verbose: bool = False):
        self.tol = tol
        self.max_iter = max_iter
        self.verbose = verbose

    def solve(self, prog: ConicProgram) -> BackendResult:
        import clarabel

        n = len(prog.c)
        settings = clarabel.DefaultSettings()
        settings.verbose = self.verbose
        settings.max_iter = self.max_iter
        settings.tol_gap_abs = self.tol
        settings.tol_gap_rel = self.tol
        settings.tol_feas = self.tol
        cones = [
            clarabel.NonnegativeConeT(m) if kind == "nonneg" else clarabel.PSDTriangleConeT(m)
            for kind, m in prog.cones
        ]
        P = sp.csc_matrix((n, n))
        solver = clarabel.DefaultSolver(P, prog.c, prog.A, prog.b, cones, settings)
        sol = solver.solve()
        raw = str(sol.status)
        if raw in ("Solved", "AlmostSolved"):
            status = "optimal"
        elif raw in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
            status = "infeasible"
        else:
            status = "failure"
        x = np.array(sol.x) if sol.x is not None else None
        return BackendResult(status, x, int(sol.iterations), float(sol.solve_time), raw)


@dataclass
class Residual:
    constraint: int
    label: str
    min_eig: float  # smallest eigenvalue of sign*F(x) - margin*I
    violated: bool


@dataclass
class SolveOutcome:
    status: str  # optimal | infeasible | numerical-failure
    values: dict[str, np.ndarray] = field(default_factory=dict)
    objective: float | None = None
    iterations: int = 0
    solve_time: float = 0.0
    backend: str = ""
    backend_status: str = ""
    residuals: list[Residual] = field(default_factory=list)
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name]


class LmiProgram:
    """Container for variables, LMI constraints and a linear objective.

    Strict inequalities are encoded as ``expr <= -margin*I`` (or
    ``>= margin*I``); by default ``margin = epsilon * max(1, |constant|_max)``.
    """

    def __init__(self, epsilon: float | None = None, feas_tol: float = DEFAULT_FEAS_TOL):
        self.epsilon = DEFAULT_EPSILON if epsilon is None else float(epsilon)
        if self.epsilon < 0:
            raise LmiError("epsilon must be non-negative")
        self.feas_tol = feas_tol
        self.variables: dict[str, SymmetricVariable] = {}
        self.constraints: list[Constraint] = []
        self.objective: MatrixExpression | None = None
        self._n = 0

    @property
    def n_unknowns(self) -> int:
        return self._n

    def declare_symmetric(self, name: str, dim: int) -> SymmetricVariable:
        if name in self.variables:
            raise LmiError(f"variable {name!r} already declared")
        if int(dim) != dim or dim < 1:
            raise LmiError(f"variable dimension must be a positive integer, got {dim!r}")
        v = SymmetricVariable(name, int(dim), self._n)
        self.variables[name] = v
        self._n += v.size
        return v

    def add_lmi(self, expr, sense: str, margin: float | None = None, label: str = "") -> int:
        if isinstance(expr, SymmetricVariable):
            expr = expr.expr()
        if not isinstance(expr, MatrixExpression):
            expr = MatrixExpression.const(expr)
        if sense not in _SENSES:
            raise LmiError(f"unknown sense {sense!r}")
        for name, (var, _) in expr.terms.items():
            if self.variables.get(name) is not var:
                raise LmiError(f"expression references undeclared variable {name!r}")
        if margin is None:
            scale = max(1.0, float(np.max(np.abs(expr.constant), initial=0.0)))
            margin = self.epsilon * scale
        if margin < 0:
            raise LmiError("margin must be non-negative")
        cid = len(self.constraints)
        self.constraints.append(Constraint(cid, expr, _SENSES[sense], float(margin), label or f"c{cid}"))
        return cid

    def minimize(self, target) -> None:
        if isinstance(target, SymmetricVariable):
            if target.dim != 1:
                raise LmiError("objective variable must be scalar")
            target = target.expr()
        if target.dim != 1:
            raise LmiError("objective must be a scalar expression")
        self.objective = target

    # compilation ---------------------------------------------------------

    def compile(self) -> ConicProgram:
        n = self._n
        c = np.zeros(n)
        if self.objective is not None:
            for var, imgs in self.objective.terms.values():
                c[var.offset : var.offset + var.size] += imgs[:, 0, 0]
        scal = [k for k in self.constraints if k.expr.dim == 1]
        mats = [k for k in self.constraints if k.expr.dim > 1]
        rows_i, cols_i, vals, b_parts, cones = [], [], [], [], []
        row_map: dict[int, tuple[int, int]] = {}
        row = 0
        for group in (scal, mats):
            for con in group:
                d = con.expr.dim
                r, cc = _tri_indices(d)
                w = np.where(r == cc, 1.0, SQRT2)
                s0 = con.sign * con.expr.constant - con.margin * np.eye(d)
                b_parts.append(w * s0[r, cc])
                for var, imgs in con.expr.terms.values():
                    blk = -con.sign * imgs[:, r, cc] * w  # (k_var, rows)
                    kk, rr = np.nonzero(blk)
                    rows_i.append(row + rr)
                    cols_i.append(var.offset + kk)
                    vals.append(blk[kk, rr])
                row_map[con.id] = (row, row + len(r))
                row += len(r)
                if d > 1:
                    cones.append(("psd", d))
        if scal:
            cones.insert(0, ("nonneg", len(scal)))
        A = sp.csc_matrix(
            (
                np.concatenate(vals) if vals else np.zeros(0),
                (
                    np.concatenate(rows_i) if rows_i else np.zeros(0, int),
                    np.concatenate(cols_i) if cols_i else np.zeros(0, int),
                ),
            ),
            shape=(row, n),
        )
        b = np.concatenate(b_parts) if b_parts else np.zeros(0)
        return ConicProgram(c, A, b, cones, row_map)

    # solving -------------------------------------------------------------

    def assignment(self, x: np.ndarray) -> dict[str, np.ndarray]:
        return {
            name: v.matrix(x[v.offset : v.offset + v.size]) for name, v in self.variables.items()
        }

    def solve(self, backend: Backend | None = None) -> SolveOutcome:
        backend = backend or ClarabelBackend()
        if not self.constraints and self.objective is None:
            return SolveOutcome("optimal", {k: np.zeros((v.dim, v.dim)) for k, v in self.variables.items()}, 0.0)
        t0 = time.perf_counter()
        conic = self.compile()
        res = backend.solve(conic)
        out = SolveOutcome(
            "numerical-failure",
            iterations=res.iterations,
            solve_time=time.perf_counter() - t0,
            backend=backend.name,
            backend_status=res.raw_status,
        )
        if res.status == "infeasible":
            out.status = "infeasible"
            return out
        if res.status != "optimal" or res.x is None:
            out.message = f"backend returned {res.raw_status}"
            return out
        out.values = self.assignment(res.x)
        out.objective = float(conic.c @ res.x) if self.objective is not None else None
        out.residuals = self.verify_solution(out)
        bad = [r for r in out.residuals if r.violated]
        if bad:
            worst = min(bad, key=lambda r: r.min_eig)
            out.message = (
                f"{len(bad)} constraint(s) violated after solve; worst {worst.label} "
                f"min eigenvalue {worst.min_eig:.3g}"
            )
        else:
            out.status = "optimal"
        return out

    def verify_solution(self, outcome: SolveOutcome | dict, tol: float | None = None) -> list[Residual]:
        """Recompute every constraint's eigenvalue margin at the given values."""
        values = outcome.values if isinstance(outcome, SolveOutcome) else outcome
        tol = self.feas_tol if tol is None else tol
        report = []
        for con in self.constraints:
            F = con.sign * con.expr.evaluate(values)
            lam = float(np.linalg.eigvalsh(_sym(F))[0]) - con.margin
            scale = max(1.0, float(np.max(np.abs(F), initial=0.0)))
            report.append(Residual(con.id, con.label, lam, lam < -tol * scale))
        return report
