"""Linear programs and a bounded-variable revised simplex solver.

Every optimization problem in the package (pricing LPs, transport LPs,
stagewise robust LPs) is assembled as a :class:`LinearProgram` and handed
to :func:`solve`.  The default engine is an in-house revised simplex
(two-phase, Dantzig pricing with Bland's rule as anti-cycling fallback).
Large programs are routed to HiGHS through ``scipy.optimize.linprog``, as
are small ones whose simplex run loses feasibility; both engines honour the
same :class:`LpSolution` contract.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

FEAS_TOL = 1e-9
OPT_TOL = 1e-8
PIVOT_TOL = 1e-11
HARRIS_TOL = 1e-9

# dense simplex is used below this many matrix entries when engine="auto"
AUTO_DENSE_LIMIT = 60_000

RELATIONS = ("<=", "==", ">=")


class MalformedProgram(ValueError):
    """Dimension mismatch, bad bounds or non-finite coefficients."""


class NumericalFailure(RuntimeError):
    """The solver could not reach its tolerances within the iteration budget."""


class Status(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """``min|max c.x  s.t.  A x (rel) b,  lower <= x <= upper``.

    ``matrix`` is stored sparse; rows are the constraints in insertion order.
    Instances are immutable (the arrays are marked read-only).
    """

    objective: np.ndarray
    matrix: sp.csr_matrix
    relations: tuple[str, ...]
    rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    sense: str = "min"
    names: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        c = np.asarray(self.objective, dtype=float).ravel()
        n = c.size
        A = sp.csr_matrix(self.matrix, dtype=float)
        if A.shape[1] != n and not (A.shape[0] == 0):
            raise MalformedProgram(
                f"constraint rows have {A.shape[1]} coefficients, objective has {n}"
            )
        if A.shape[0] == 0:
            A = sp.csr_matrix((0, n))
        b = np.asarray(self.rhs, dtype=float).ravel()
        rel = tuple(self.relations)
        if b.size != A.shape[0] or len(rel) != A.shape[0]:
            raise MalformedProgram("rhs/relations length does not match row count")
        bad = [r for r in rel if r not in RELATIONS]
        if bad:
            raise MalformedProgram(f"unknown relation {bad[0]!r}")
        lo = np.broadcast_to(np.asarray(self.lower, dtype=float), (n,)).copy()
        hi = np.broadcast_to(np.asarray(self.upper, dtype=float), (n,)).copy()
        if self.sense not in ("min", "max"):
            raise MalformedProgram(f"objective sense must be 'min' or 'max', got {self.sense!r}")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(A.data)) and np.all(np.isfinite(b))):
            raise MalformedProgram("non-finite coefficient")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)) or np.any(lo == np.inf) or np.any(hi == -np.inf):
            raise MalformedProgram("invalid variable bound")
        if np.any(lo > hi):
            j = int(np.argmax(lo > hi))
            raise MalformedProgram(f"variable {j}: lower bound {lo[j]} exceeds upper bound {hi[j]}")
        if self.names is not None and len(self.names) != n:
            raise MalformedProgram("variable_names length does not match objective")
        for arr in (c, b, lo, hi, A.data, A.indices, A.indptr):
            arr.flags.writeable = False
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "matrix", A)
        object.__setattr__(self, "rhs", b)
        object.__setattr__(self, "relations", rel)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def n_vars(self) -> int:
        return self.objective.size

    @property
    def n_constraints(self) -> int:
        return self.rhs.size

    @classmethod
    def from_rows(
        cls,
        objective: Sequence[float],
        constraints: Iterable[tuple[Sequence[float], str, float]] = (),
        sense: str = "min",
        bounds: Sequence[tuple[float | None, float | None]] | None = None,
        names: Sequence[str] | None = None,
    ) -> "LinearProgram":
        """Build from dense rows ``(coefficients, relation, rhs)``.

        Bounds default to ``(0, inf)``; ``None`` means unbounded on that side.
        """
        c = np.asarray(objective, dtype=float)
        rows, rels, rhs = [], [], []
        for coef, rel, val in constraints:
            coef = np.asarray(coef, dtype=float)
            if coef.shape != c.shape:
                raise MalformedProgram(
                    f"constraint row of length {coef.size} but {c.size} variables"
                )
            rows.append(coef)
            rels.append(rel)
            rhs.append(val)
        A = sp.csr_matrix(np.vstack(rows)) if rows else sp.csr_matrix((0, c.size))
        if bounds is None:
            lo, hi = np.zeros(c.size), np.full(c.size, np.inf)
        else:
            if len(bounds) != c.size:
                raise MalformedProgram("bounds length does not match objective")
            lo = np.array([-np.inf if l is None else l for l, _ in bounds], dtype=float)
            hi = np.array([np.inf if u is None else u for _, u in bounds], dtype=float)
        return cls(c, A, tuple(rels), np.asarray(rhs, dtype=float), lo, hi, sense,
                   tuple(names) if names is not None else None)

    def scaled(self, factor: float) -> "LinearProgram":
        """Same program with the objective multiplied by ``factor``."""
        return LinearProgram(self.objective * factor, self.matrix, self.relations, self.rhs,
                             self.lower, self.upper, self.sense, self.names)


class LpBuilder:
    """Incremental assembly of a :class:`LinearProgram` from sparse rows."""

    def __init__(self, sense: str = "min"):
        self.sense = sense
        self._cost: list[float] = []
        self._lo: list[float] = []
        self._hi: list[float] = []
        self._names: list[str] = []
        self._ri: list[int] = []
        self._ci: list[int] = []
        self._vals: list[float] = []
        self._rel: list[str] = []
        self._rhs: list[float] = []

    @property
    def n_vars(self) -> int:
        return len(self._cost)

    @property
    def n_constraints(self) -> int:
        return len(self._rhs)

    def add_var(self, cost: float = 0.0, lb: float = 0.0, ub: float = math.inf,
                name: str = "") -> int:
        self._cost.append(float(cost))
        self._lo.append(float(lb))
        self._hi.append(float(ub))
        self._names.append(name or f"x{len(self._cost) - 1}")
        return len(self._cost) - 1

    def add_vars(self, count: int, cost: float | Sequence[float] = 0.0, lb: float = 0.0,
                 ub: float = math.inf, prefix: str = "x") -> np.ndarray:
        costs = np.broadcast_to(np.asarray(cost, dtype=float), (count,))
        start = self.n_vars
        for k in range(count):
            self.add_var(costs[k], lb, ub, f"{prefix}{k}")
        return np.arange(start, start + count)

    def set_cost(self, var: int, cost: float) -> None:
        self._cost[var] = float(cost)

    def add_constraint(self, coefs: Mapping[int, float] | tuple[Sequence[int], Sequence[float]],
                       rel: str, rhs: float) -> int:
        """Add ``sum coef_j x_j (rel) rhs``; duplicate indices are summed."""
        if isinstance(coefs, Mapping):
            idx, vals = list(coefs.keys()), list(coefs.values())
        else:
            idx, vals = coefs
        row = len(self._rhs)
        for j, v in zip(idx, vals):
            self._ri.append(row)
            self._ci.append(int(j))
            self._vals.append(float(v))
        self._rel.append(rel)
        self._rhs.append(float(rhs))
        return row

    def build(self) -> LinearProgram:
        n = self.n_vars
        A = sp.coo_matrix((self._vals, (self._ri, self._ci)), shape=(len(self._rhs), n)).tocsr()
        A.sum_duplicates()
        return LinearProgram(np.array(self._cost), A, tuple(self._rel), np.array(self._rhs),
                             np.array(self._lo), np.array(self._hi), self.sense,
                             tuple(self._names))


@dataclass
class LpSolution:
    """Solver output.

    ``dual_values[i]`` is the shadow price of constraint ``i``: the rate of
    change of the optimal objective (in the program's own sense) per unit
    increase of its right-hand side.
    """

    status: Status
    objective_value: float
    primal_values: np.ndarray
    dual_values: np.ndarray
    iterations: int = 0
    engine: str = "simplex"

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


def dual_objective(lp: LinearProgram, duals: np.ndarray) -> float:
    """Lagrangian dual bound implied by shadow prices ``duals``.

    For a minimization with sign-feasible multipliers this is a lower bound on
    the optimum (a upper bound for maximization); at an optimal basis it equals
    the optimum.
    """
    sgn = 1.0 if lp.sense == "min" else -1.0
    y = sgn * np.asarray(duals, dtype=float)
    c = sgn * lp.objective
    red = c - lp.matrix.T @ y
    val = float(lp.rhs @ y)
    scale = 1.0 + float(np.max(np.abs(c), initial=0.0))
    for j in np.flatnonzero(np.abs(red) > OPT_TOL * scale):
        bound = lp.lower[j] if red[j] > 0 else lp.upper[j]
        if not np.isfinite(bound):
            return -sgn * math.inf
        val += red[j] * bound
    return sgn * val


def check_feasible(lp: LinearProgram, x: np.ndarray, tol: float = 1e-7) -> bool:
    """True when ``x`` satisfies all rows and bounds within ``tol`` (scaled)."""
    x = np.asarray(x, dtype=float)
    if np.any(x < lp.lower - tol * (1 + np.abs(lp.lower))) or np.any(x > lp.upper + tol * (1 + np.abs(lp.upper))):
        return False
    ax = lp.matrix @ x
    for val, rel, b in zip(ax, lp.relations, lp.rhs):
        t = tol * (1 + abs(b))
        if rel == "<=" and val > b + t:
            return False
        if rel == ">=" and val < b - t:
            return False
        if rel == "==" and abs(val - b) > t:
            return False
    return True


def solve(lp: LinearProgram, engine: str = "auto", max_iter: int | None = None) -> LpSolution:
    """Solve ``lp``.  ``engine`` is ``"simplex"``, ``"highs"`` or ``"auto"``.

    Raises :class:`NumericalFailure` when the engine gives up; infeasibility and
    unboundedness are reported through :attr:`LpSolution.status`.
    """
    if not isinstance(lp, LinearProgram):
        raise MalformedProgram("solve expects a LinearProgram")
    if engine == "auto":
        dense_size = (lp.n_constraints + 1) * (lp.n_vars + lp.n_constraints)
        engine = "simplex-or-highs" if dense_size <= AUTO_DENSE_LIMIT else "highs"
    if engine == "simplex":
        return _solve_simplex(lp, max_iter)
    if engine == "simplex-or-highs":
        try:
            return _solve_simplex(lp, max_iter)
        except NumericalFailure:
            return _solve_highs(lp)
    if engine == "highs":
        return _solve_highs(lp)
    raise ValueError(f"unknown engine {engine!r}")


# ---------------------------------------------------------------------------
# HiGHS backend
# ---------------------------------------------------------------------------

def _solve_highs(lp: LinearProgram) -> LpSolution:
    from scipy.optimize import linprog

    sgn = 1.0 if lp.sense == "min" else -1.0
    rel = np.array(lp.relations)
    A = lp.matrix
    ub_rows = np.flatnonzero(rel != "==")
    eq_rows = np.flatnonzero(rel == "==")
    flip = np.where(rel[ub_rows] == ">=", -1.0, 1.0)
    A_ub = sp.diags(flip) @ A[ub_rows] if ub_rows.size else None
    b_ub = flip * lp.rhs[ub_rows] if ub_rows.size else None
    A_eq = A[eq_rows] if eq_rows.size else None
    b_eq = lp.rhs[eq_rows] if eq_rows.size else None
    bounds = np.column_stack([lp.lower, lp.upper])
    bounds = [(None if not np.isfinite(l) else l, None if not np.isfinite(u) else u)
              for l, u in bounds]
    res = linprog(sgn * lp.objective, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=bounds, method="highs",
                  options={"primal_feasibility_tolerance": FEAS_TOL,
                           "dual_feasibility_tolerance": FEAS_TOL})
    n, m = lp.n_vars, lp.n_constraints
    if res.status == 2:
        return LpSolution(Status.INFEASIBLE, math.nan, np.full(n, np.nan), np.full(m, np.nan),
                          int(res.nit), "highs")
    if res.status == 3:
        return LpSolution(Status.UNBOUNDED, -sgn * math.inf, np.full(n, np.nan),
                          np.full(m, np.nan), int(res.nit), "highs")
    if res.status != 0:
        raise NumericalFailure(f"HiGHS: {res.message}")
    y = np.zeros(m)
    if ub_rows.size:
        y[ub_rows] = flip * res.ineqlin.marginals
    if eq_rows.size:
        y[eq_rows] = res.eqlin.marginals
    x = np.asarray(res.x, dtype=float)
    return LpSolution(Status.OPTIMAL, float(lp.objective @ x), x, sgn * y, int(res.nit), "highs")


# ---------------------------------------------------------------------------
# Revised simplex
# ---------------------------------------------------------------------------

@dataclass
class _Standard:
    """``min c.z s.t. A z = b, 0 <= z <= u`` plus the map back to ``x``."""

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    u: np.ndarray
    n_struct: int          # columns coming from original variables
    x_offset: np.ndarray   # x = x_offset + T z[:n_struct]
    T: np.ndarray          # (n, n_struct) dense, entries in {-1,0,1}
    row_sign: np.ndarray   # rows multiplied by -1 to make b >= 0
    slack_of_row: np.ndarray  # column index of the row's slack or -1
    const: float           # objective constant from the variable shifts


def _standardize(lp: LinearProgram) -> _Standard:
    n, m = lp.n_vars, lp.n_constraints
    sgn = 1.0 if lp.sense == "min" else -1.0
    c0 = sgn * lp.objective
    A0 = lp.matrix.toarray()
    lo, hi = lp.lower, lp.upper

    cols, costs, ubs = [], [], []
    T = np.zeros((n, 0))
    tcols = []
    offset = np.zeros(n)
    for j in range(n):
        if np.isfinite(lo[j]):
            offset[j] = lo[j]
            tcols.append((j, 1.0))
            cols.append(A0[:, j])
            costs.append(c0[j])
            ubs.append(hi[j] - lo[j])
        elif np.isfinite(hi[j]):
            offset[j] = hi[j]
            tcols.append((j, -1.0))
            cols.append(-A0[:, j])
            costs.append(-c0[j])
            ubs.append(np.inf)
        else:
            tcols.append((j, 1.0))
            cols.append(A0[:, j])
            costs.append(c0[j])
            ubs.append(np.inf)
            tcols.append((j, -1.0))
            cols.append(-A0[:, j])
            costs.append(-c0[j])
            ubs.append(np.inf)
    n_struct = len(tcols)
    T = np.zeros((n, n_struct))
    for k, (j, s) in enumerate(tcols):
        T[j, k] = s
    b = lp.rhs - A0 @ offset if m else np.zeros(0)
    const = float(c0 @ offset)

    slack_of_row = np.full(m, -1)
    for i, rel in enumerate(lp.relations):
        if rel == "==":
            continue
        col = np.zeros(m)
        col[i] = 1.0 if rel == "<=" else -1.0
        slack_of_row[i] = len(cols)
        cols.append(col)
        costs.append(0.0)
        ubs.append(np.inf)
    A = np.column_stack(cols) if cols else np.zeros((m, 0))
    if m == 0:
        A = np.zeros((0, len(cols)))
    row_sign = np.where(b < 0, -1.0, 1.0)
    A = A * row_sign[:, None]
    b = b * row_sign
    return _Standard(A, b, np.array(costs, dtype=float), np.array(ubs, dtype=float),
                     n_struct, offset, T, row_sign, slack_of_row, const)


class _Simplex:
    """Bounded-variable revised simplex on ``min c.z, A z = b, 0 <= z <= u``."""

    REFACTOR_EVERY = 64
    STALL_LIMIT = 30

    def __init__(self, A, b, u, basis, max_iter):
        self.A = A
        self.b = b
        self.u = u
        self.m, self.n = A.shape
        self.basis = np.array(basis, dtype=int)
        self.at_upper = np.zeros(self.n, dtype=bool)
        self.max_iter = max_iter
        self.iterations = 0
        self.refactor()

    def refactor(self) -> None:
        B = self.A[:, self.basis]
        try:
            self.Binv = np.linalg.inv(B) if self.m else np.zeros((0, 0))
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure("singular basis") from exc
        self.recompute_x()

    def recompute_x(self) -> None:
        rhs = self.b - self.A[:, self.at_upper] @ self.u[self.at_upper]
        self.xB = self.Binv @ rhs

    def nonbasic_values(self) -> np.ndarray:
        z = np.where(self.at_upper, self.u, 0.0)
        z[self.basis] = self.xB
        return z

    def run(self, c: np.ndarray) -> Status:
        cscale = 1.0 + float(np.max(np.abs(c), initial=0.0))
        dtol = OPT_TOL * cscale
        is_basic = np.zeros(self.n, dtype=bool)
        is_basic[self.basis] = True
        movable = self.u > 0
        stall = 0
        since_refactor = 0
        while True:
            if self.iterations >= self.max_iter:
                raise NumericalFailure(f"simplex iteration limit {self.max_iter} reached")
            y = c[self.basis] @ self.Binv
            d = c - y @ self.A
            elig = ~is_basic & movable & (((~self.at_upper) & (d < -dtol)) | (self.at_upper & (d > dtol)))
            cand = np.flatnonzero(elig)
            if cand.size == 0:
                return Status.OPTIMAL
            bland = stall >= self.STALL_LIMIT
            if bland:
                j = int(cand[0])
            else:
                j = int(cand[np.argmax(np.abs(d[cand]))])
            w = self.Binv @ self.A[:, j]
            sgn = -1.0 if self.at_upper[j] else 1.0
            delta = sgn * w
            uB = self.u[self.basis]
            theta = self.u[j]
            leave = -1
            # relative threshold: noise-level entries must not become pivots
            ptol = max(PIVOT_TOL, 1e-9 * float(np.max(np.abs(w), initial=0.0)))
            with np.errstate(divide="ignore", invalid="ignore"):
                dec = delta > ptol
                inc = (delta < -ptol) & np.isfinite(uB)
                room = np.full(self.m, np.inf)
                room[dec] = np.maximum(self.xB[dec], 0.0)
                room[inc] = np.maximum(uB[inc] - self.xB[inc], 0.0)
                step = np.where(dec | inc, np.abs(delta), 1.0)
                ratios = np.where(dec | inc, room / step, np.inf)
                # Harris pass 1: step length with bounds relaxed by HARRIS_TOL
                relaxed = np.where(dec | inc, (room + HARRIS_TOL) / step, np.inf)
            if self.m and np.isfinite(relaxed).any():
                cap = float(relaxed.min())
                if float(ratios.min()) < theta:
                    # pass 2: among rows blocking within the relaxed step, largest pivot
                    ties = np.flatnonzero(ratios <= min(cap, theta))
                    if bland:
                        leave = int(ties[np.argmin(self.basis[ties])])
                    else:
                        leave = int(ties[np.argmax(np.abs(delta[ties]))])
                    theta = float(ratios[leave])
            if not np.isfinite(theta):
                if since_refactor:
                    # confirm the ray with a fresh inverse before reporting it
                    self.refactor()
                    since_refactor = 0
                    continue
                return Status.UNBOUNDED
            self.iterations += 1
            stall = stall + 1 if theta <= FEAS_TOL else 0
            self.xB = self.xB - theta * delta
            if leave < 0:
                self.at_upper[j] = not self.at_upper[j]
                continue
            out = self.basis[leave]
            out_to_upper = delta[leave] < 0
            enter_val = self.u[j] - theta if self.at_upper[j] else theta
            self.at_upper[j] = False
            self.at_upper[out] = bool(out_to_upper) and np.isfinite(self.u[out])
            # eta update of the basis inverse
            piv = w[leave]
            if abs(piv) < PIVOT_TOL:
                raise NumericalFailure("pivot element vanished")
            row = self.Binv[leave] / piv
            self.Binv -= np.outer(w, row)
            self.Binv[leave] = row
            self.basis[leave] = j
            self.xB[leave] = enter_val
            is_basic[out] = False
            is_basic[j] = True
            since_refactor += 1
            if since_refactor >= self.REFACTOR_EVERY:
                self.refactor()
                since_refactor = 0


def _solve_simplex(lp: LinearProgram, max_iter: int | None) -> LpSolution:
    std = _standardize(lp)
    m, ncol = std.A.shape
    n, nrow = lp.n_vars, lp.n_constraints
    # rows whose slack has coefficient +1 after sign normalization can start basic
    basis = np.empty(m, dtype=int)
    art_cols = []
    for i in range(m):
        s = std.slack_of_row[i]
        if s >= 0 and std.A[i, s] > 0:
            basis[i] = s
        else:
            basis[i] = -1
            art_cols.append(i)
    n_art = len(art_cols)
    A = np.hstack([std.A, np.zeros((m, n_art))])
    for k, i in enumerate(art_cols):
        A[i, ncol + k] = 1.0
        basis[i] = ncol + k
    u = np.concatenate([std.u, np.full(n_art, np.inf)])
    limit = max_iter if max_iter is not None else 50 * (m + A.shape[1]) + 1000
    solver = _Simplex(A, std.b, u, basis, limit)

    if n_art:
        c1 = np.zeros(A.shape[1])
        c1[ncol:] = 1.0
        solver.run(c1)
        infeas = float(solver.nonbasic_values()[ncol:].sum())
        if infeas > FEAS_TOL * (1.0 + float(np.abs(std.b).max(initial=0.0))):
            return LpSolution(Status.INFEASIBLE, math.nan, np.full(n, np.nan),
                              np.full(nrow, np.nan), solver.iterations, "simplex")
        # artificials are pinned at zero for phase 2
        solver.u[ncol:] = 0.0
        solver.at_upper[ncol:] = False
        solver.recompute_x()
    c2 = np.concatenate([std.c, np.zeros(n_art)])
    status = solver.run(c2)
    sgn = 1.0 if lp.sense == "min" else -1.0
    if status is Status.UNBOUNDED:
        return LpSolution(Status.UNBOUNDED, -sgn * math.inf, np.full(n, np.nan),
                          np.full(nrow, np.nan), solver.iterations, "simplex")
    solver.refactor()
    z = solver.nonbasic_values()
    scale = 1.0 + float(np.abs(std.b).max(initial=0.0))
    drift = max(float(np.max(-z, initial=0.0)), float(np.max(z - u, initial=0.0)))
    if drift > 1e-7 * scale:
        raise NumericalFailure(f"basis lost feasibility (bound violation {drift:.2e})")
    z = np.clip(z, 0.0, u)
    x = std.x_offset + std.T @ z[: std.n_struct]
    y_std = c2[solver.basis] @ solver.Binv
    y = sgn * y_std * std.row_sign
    return LpSolution(Status.OPTIMAL, float(lp.objective @ x), x, y, solver.iterations, "simplex")
