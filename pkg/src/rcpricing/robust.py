"""Distributionally robust acceptability prices over nested-distance balls.

Models in the ball share the baseline's structure and node values and differ
only in their transition probabilities.  The sup (inf) over martingale
measures Q whose density w.r.t. some ball member P is AVaR-bounded is
approximated by block-coordinate ascent: each sweep visits stages T..1 and
solves one LP in the stage-t conditional probabilities of Q and the stage-t
transport subplans, with the earlier-stage transport masses frozen at their
values from the previous sweep.

Subplans are stored per stage as one square matrix ``C_t`` over ``N_t x N_t``
(rows: baseline nodes, columns: implied-model nodes); ``C_t[i, j]`` is the
conditional mass ``pi(i, j | parent(i), parent(j))``.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .lp import LinearProgram, NumericalFailure, Status, check_feasible, solve
from .pricing import (AcceptabilitySpec, NoAcceptablePrice, PricingResult, SolverFailure,
                      _density_bounds, martingale_measure_lp)
from .transport import nested_distance_recursive, path_distance_matrix
from .tree import Claim, ScenarioTree, require_valid

log = logging.getLogger(__name__)

CONVERGENCE_TOL = 1e-8
MAX_ITER = 200
NULL_MASS = 1e-12
ZERO_MASS = 1e-12


class Infeasible(NoAcceptablePrice):
    """No martingale measure is reachable inside the ambiguity set."""


class NonConvergence(RuntimeError):
    def __init__(self, message: str, result: PricingResult | None = None):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True, eq=False)
class AmbiguitySpec:
    """Nested-distance ball of radius ``epsilon`` around ``baseline``."""

    baseline: ScenarioTree
    epsilon: float = 0.0
    structure_fixed: bool = True

    def __post_init__(self) -> None:
        if not (self.epsilon >= 0 and math.isfinite(self.epsilon)):
            raise ValueError(f"radius must be a finite non-negative number, got {self.epsilon!r}")
        if not self.structure_fixed:
            raise ValueError("only fixed-structure ambiguity sets are supported")
        require_valid(self.baseline)


@dataclass
class RobustState:
    """Iterate of the sequential-LP method.

    ``q`` holds conditional Q-probabilities per node (root 1).  ``subplans[t]``
    is the ``|N_t| x |N_t|`` matrix of conditional transport masses
    (``subplans[0] = [[1]]``).  ``stage_tables[t]`` holds ``nd_t`` over
    ``N_t x N_t`` for the current subplans.
    """

    q: np.ndarray
    subplans: list[np.ndarray]
    stage_tables: list[np.ndarray] = field(default_factory=list)
    trace: list[float] = field(default_factory=list)

    def copy(self) -> "RobustState":
        return RobustState(self.q.copy(), [c.copy() for c in self.subplans],
                           [d.copy() for d in self.stage_tables], list(self.trace))


class _Layout:
    """Stage-wise node positions for a fixed tree."""

    def __init__(self, tree: ScenarioTree):
        self.tree = tree
        self.T = tree.T
        self.stage_nodes = [tree.nodes_at(t) for t in range(tree.T + 1)]
        self.pos = np.empty(tree.n_nodes, dtype=int)
        for nodes in self.stage_nodes:
            self.pos[nodes] = np.arange(nodes.size)
        # parent position of every stage-t node (t >= 1)
        self.ppos = [np.zeros(1, dtype=int)] + [self.pos[tree.parent[n]] for n in self.stage_nodes[1:]]
        # child groups per stage-(t-1) node, as stage-t positions
        self.groups = [None] + [
            [self.pos[tree.children[k]] for k in self.stage_nodes[t - 1]] for t in range(1, tree.T + 1)
        ]

    def aggregate(self, t: int, mat: np.ndarray) -> np.ndarray:
        """Sum a ``N_t x N_t`` matrix over parent-pair blocks."""
        n_prev = self.stage_nodes[t - 1].size
        A = sp.csr_matrix((np.ones(self.ppos[t].size), (self.ppos[t], np.arange(self.ppos[t].size))),
                          shape=(n_prev, self.ppos[t].size))
        return np.asarray((A @ sp.csr_matrix(mat) @ A.T).todense())


# ---------------------------------------------------------------------------
# state helpers
# ---------------------------------------------------------------------------

def _joints(lay: _Layout, subplans: list[np.ndarray]) -> list[np.ndarray]:
    out = [np.ones((1, 1))]
    for t in range(1, lay.T + 1):
        pp = lay.ppos[t]
        out.append(out[-1][np.ix_(pp, pp)] * subplans[t])
    return out


def _stage_tables(lay: _Layout, subplans: list[np.ndarray], leaf_cost: np.ndarray) -> list[np.ndarray]:
    tables: list[np.ndarray] = [None] * (lay.T + 1)  # type: ignore[list-item]
    tables[lay.T] = leaf_cost
    for t in range(lay.T, 0, -1):
        tables[t - 1] = lay.aggregate(t, subplans[t] * tables[t])
    return tables


def _implied_cond(lay: _Layout, subplans: list[np.ndarray]) -> np.ndarray:
    """Conditional probabilities of the implied model (column sums at the fixed baseline node)."""
    tree = lay.tree
    out = np.ones(tree.n_nodes)
    for t in range(1, lay.T + 1):
        ktilde = lay.groups[t][0]
        out[lay.stage_nodes[t]] = subplans[t][ktilde].sum(axis=0)
    return out


def _implied_tree(lay: _Layout, subplans: list[np.ndarray]) -> ScenarioTree:
    return _renormalised(lay.tree, _implied_cond(lay, subplans))


def _renormalised(tree: ScenarioTree, cond: np.ndarray) -> ScenarioTree:
    """Tree with the given conditional probabilities, sibling groups rescaled to sum 1."""
    cond = np.clip(cond, 0.0, None)
    for k in tree.inner_nodes:
        kids = tree.children[k]
        total = cond[kids].sum()
        cond[kids] = cond[kids] / total if total > 0 else tree.cond_prob[kids]
    return tree.with_cond_probs(cond)


def _uncond(tree: ScenarioTree, cond: np.ndarray) -> np.ndarray:
    p = np.ones(tree.n_nodes)
    for t in range(1, tree.T + 1):
        n = tree.nodes_at(t)
        p[n] = p[tree.parent[n]] * cond[n]
    return p


def _values(tree: ScenarioTree, q: np.ndarray, cf: np.ndarray) -> np.ndarray:
    """``V_n = C_n + sum_c q_c V_c``."""
    v = cf.astype(float).copy()
    for t in range(tree.T - 1, -1, -1):
        for k in tree.nodes_at(t):
            kids = tree.children[k]
            v[k] = cf[k] + q[kids] @ v[kids]
    return v


def _ratio_bound(tree: ScenarioTree, q: np.ndarray, p: np.ndarray, levels: np.ndarray) -> np.ndarray:
    """``M_n = max over descendants d of alpha_{stage(d)} * R^Q(n->d) / R^P(n->d)``."""
    M = np.zeros(tree.n_nodes)
    for t in range(tree.T, 0, -1):
        for n in tree.nodes_at(t):
            best = levels[t - 1]
            for c in tree.children[n]:
                if q[c] <= ZERO_MASS:  # solver noise must not force q_n = 0
                    continue
                best = max(best, math.inf if p[c] <= 0 else q[c] / p[c] * M[c])
            M[n] = best
    return M


def _price(tree: ScenarioTree, q: np.ndarray, cf: np.ndarray) -> float:
    return float(_uncond(tree, q)[1:] @ cf[1:]) if tree.n_nodes > 1 else 0.0


def _cond_from_uncond(tree: ScenarioTree, Q: np.ndarray) -> np.ndarray:
    out = np.ones(tree.n_nodes)
    for i in range(1, tree.n_nodes):
        par = tree.parent[i]
        out[i] = Q[i] / Q[par] if Q[par] > NULL_MASS else tree.cond_prob[i]
    return out


def _initial_measure(tree: ScenarioTree, cf: np.ndarray, spec: AcceptabilitySpec, side: str,
                     density: str, engine: str) -> np.ndarray:
    """Optimal measure of the non-robust dual on the baseline, as conditional q."""
    if density == "conditional" and not spec.superhedge:
        bld, qv = martingale_measure_lp(tree, cf, "max" if side == "ask" else "min",
                                        np.full(tree.n_nodes, np.inf))
        levels = spec.levels(tree.T)
        for i in range(1, tree.n_nodes):
            par = tree.parent[i]
            bld.add_constraint(([int(qv[i]), int(qv[par])],
                                [levels[tree.stage[i] - 1], -tree.cond_prob[i]]), "<=", 0.0)
    else:
        bld, qv = martingale_measure_lp(tree, cf, "max" if side == "ask" else "min",
                                        _density_bounds(tree, spec))
    sol = solve(bld.build(), engine=engine)
    if sol.status is not Status.OPTIMAL:
        raise Infeasible("the baseline model admits no martingale measure within the density "
                         "bounds, so the iteration has no feasible starting point")
    Q = np.clip(sol.primal_values[qv], 0.0, None)
    q = _cond_from_uncond(tree, Q)
    _repair_zero_mass(tree, q, Q)
    return q


def _repair_zero_mass(tree: ScenarioTree, q: np.ndarray, Q: np.ndarray) -> None:
    """Give children of Q-null nodes a martingale split (needed once they gain mass)."""
    for k in tree.inner_nodes:
        if Q[k] > NULL_MASS:
            continue
        kids = tree.children[k]
        bld, qv = martingale_measure_lp(_local_tree(tree, k), np.zeros(kids.size + 1), "min",
                                        np.full(kids.size + 1, np.inf))
        sol = solve(bld.build())
        if sol.optimal:
            q[kids] = np.clip(sol.primal_values[qv[1:]], 0.0, None)


def _local_tree(tree: ScenarioTree, k: int) -> ScenarioTree:
    kids = tree.children[k]
    return ScenarioTree(np.r_[-1, np.zeros(kids.size, dtype=int)], np.r_[0, np.ones(kids.size, dtype=int)],
                        np.vstack([tree.prices[k], tree.prices[kids]]),
                        np.r_[1.0, tree.cond_prob[kids]])


def _initial_state(lay: _Layout, q: np.ndarray) -> RobustState:
    tree = lay.tree
    subplans = [np.ones((1, 1))]
    for t in range(1, lay.T + 1):
        n_t = lay.stage_nodes[t].size
        C = np.zeros((n_t, n_t))
        p_hat = tree.cond_prob[lay.stage_nodes[t]]
        groups = lay.groups[t]
        for a, ka in enumerate(groups):
            for b, kb in enumerate(groups):
                if a == b:
                    C[ka, ka] = p_hat[ka]
                else:
                    C[np.ix_(ka, kb)] = np.outer(p_hat[ka], p_hat[kb])
        subplans.append(C)
    return RobustState(q.copy(), subplans)


def _closest_feasible_start(lay: _Layout, leaf_cost: np.ndarray, levels: np.ndarray,
                            density: str, epsilon: float, engine: str) -> RobustState:
    """Starting point when the baseline itself admits no feasible measure.

    One LP over unconditional Q (martingale) and a leaf-level coupling with
    the baseline minimises the path-space transport cost.  With unconditional
    density bounds the coupling's second marginal P only needs ``Q <= P/alpha``
    node by node (linear); in conditional mode P = Q is imposed.  The nested
    distance can exceed the path-space cost, so ball membership is checked.
    """
    tree = lay.tree
    bld, qv = martingale_measure_lp(tree, np.zeros(tree.n_nodes), "min",
                                    np.full(tree.n_nodes, np.inf))
    leaves = tree.leaves
    L = leaves.size
    pi = bld.add_vars(L * L, leaf_cost.ravel(), prefix="pi").reshape(L, L)
    p_leaf = tree.node_prob[leaves]
    for a in range(L):
        bld.add_constraint((pi[a], np.ones(L)), "==", p_leaf[a])
    if density == "conditional":
        for b in range(L):
            bld.add_constraint((list(pi[:, b]) + [int(qv[leaves[b]])], [1.0] * L + [-1.0]), "==", 0.0)
    else:
        col = {int(l): b for b, l in enumerate(leaves)}
        below: list[list[int]] = [[] for _ in range(tree.n_nodes)]
        for l in leaves:
            for n in tree.path(int(l)):
                below[n].append(col[int(l)])
        for n in range(1, tree.n_nodes):
            cols = pi[:, below[n]].ravel()
            bld.add_constraint((list(cols) + [int(qv[n])], [-1.0] * cols.size + [levels[tree.stage[n] - 1]]),
                               "<=", 0.0)
    sol = solve(bld.build(), engine=engine)
    if not sol.optimal:
        raise Infeasible("no martingale measure satisfies the density bounds for any model "
                         "with the baseline's node values")
    Q = np.clip(sol.primal_values[qv], 0.0, None)
    q = _cond_from_uncond(tree, Q)
    _repair_zero_mass(tree, q, Q)
    P_leaf = np.clip(sol.primal_values[pi].sum(axis=0), 0.0, None)
    P = np.zeros(tree.n_nodes)
    P[leaves] = P_leaf
    for t in range(tree.T - 1, -1, -1):
        for k in tree.nodes_at(t):
            P[k] = P[tree.children[k]].sum()
    implied = _renormalised(tree, _cond_from_uncond(tree, P))
    dist, _, plan = nested_distance_recursive(tree, implied, with_plan=True)
    if dist > epsilon + 1e-9:
        raise Infeasible(
            f"no feasible starting model found: the baseline admits no martingale measure within "
            f"the density bounds and the closest admissible model lies at nested distance "
            f"{dist:.6g} > {epsilon:.6g}")
    subplans = [np.ones((1, 1))]
    for t in range(1, lay.T + 1):
        n_t = lay.stage_nodes[t].size
        C = np.zeros((n_t, n_t))
        prev = lay.stage_nodes[t - 1]
        for a, k in enumerate(prev):
            for b, l in enumerate(prev):
                C[np.ix_(lay.groups[t][a], lay.groups[t][b])] = plan.subplans[(int(k), int(l))]
        subplans.append(C)
    return RobustState(q, subplans)


# ---------------------------------------------------------------------------
# stage LP
# ---------------------------------------------------------------------------

class _Rows:
    def __init__(self) -> None:
        self.ri: list[np.ndarray] = []
        self.ci: list[np.ndarray] = []
        self.v: list[np.ndarray] = []
        self.rel: list[str] = []
        self.rhs: list[float] = []

    def add(self, cols, vals, rel: str, rhs: float) -> None:
        cols = np.asarray(cols, dtype=int).ravel()
        self.ri.append(np.full(cols.size, len(self.rhs)))
        self.ci.append(cols)
        self.v.append(np.broadcast_to(np.asarray(vals, dtype=float), cols.shape).ravel())
        self.rel.append(rel)
        self.rhs.append(float(rhs))

    def matrix(self, n_vars: int) -> sp.csr_matrix:
        if not self.rhs:
            return sp.csr_matrix((0, n_vars))
        return sp.coo_matrix((np.concatenate(self.v), (np.concatenate(self.ri), np.concatenate(self.ci))),
                             shape=(len(self.rhs), n_vars)).tocsr()


def _stage_program(lay: _Layout, state: RobustState, t: int, cf: np.ndarray, levels: np.ndarray,
                   epsilon: float, side: str, density: str, leaf_cost: np.ndarray):
    tree = lay.tree
    nodes = lay.stage_nodes[t]
    n_t = nodes.size
    groups = lay.groups[t]
    n_q = n_t
    pi0 = n_q
    n_vars = n_q + n_t * n_t
    pi_idx = (pi0 + np.arange(n_t * n_t)).reshape(n_t, n_t)

    q = state.q
    Q = _uncond(tree, q)
    p_cond = _implied_cond(lay, state.subplans)
    P = _uncond(tree, p_cond)
    V = _values(tree, q, cf)
    joints = _joints(lay, state.subplans)
    tables = _stage_tables(lay, state.subplans, leaf_cost)
    parents = tree.parent[nodes]

    obj = np.zeros(n_vars)
    obj[:n_q] = Q[parents] * V[nodes]
    upper = np.ones(n_vars)
    rows = _Rows()

    # martingale and normalisation per stage-(t-1) node
    for a, ka in enumerate(groups):
        k = lay.stage_nodes[t - 1][a]
        rows.add(ka, 1.0, "==", 1.0)
        for j in range(tree.n_assets):
            rows.add(ka, tree.prices[nodes[ka], j], "==", float(tree.prices[k, j]))

    # density bound against the implied model
    ktilde = groups[0]
    if density == "conditional":
        M = np.full(tree.n_nodes, 0.0)
        M[nodes] = levels[t - 1]
        ratio = np.ones(n_t)
    else:
        M = _ratio_bound(tree, q, p_cond, levels)
        Ql, Pl = Q[parents], P[parents]
        ratio = np.divide(Ql, Pl, out=np.zeros(n_t), where=Pl > 0)
    for jpos in range(n_t):
        if ratio[jpos] <= 0:
            continue
        coef = ratio[jpos] * M[nodes[jpos]]
        if not math.isfinite(coef):
            upper[jpos] = 0.0
            continue
        rows.add(np.r_[jpos, pi_idx[ktilde, jpos]], np.r_[coef, -np.ones(ktilde.size)], "<=", 0.0)

    # transport budget
    pp = lay.ppos[t]
    weight = joints[t - 1][np.ix_(pp, pp)] * tables[t]
    rows.add(pi_idx.ravel(), weight.ravel(), "<=", epsilon)

    # baseline marginals and consistency of the implied model
    p_hat = tree.cond_prob[nodes]
    for ka in groups:
        for lb in groups:
            for i in ka:
                rows.add(pi_idx[i, lb], 1.0, "==", p_hat[i])
    for ka in groups[1:]:
        for lb in groups:
            for j in lb:
                rows.add(np.r_[pi_idx[ka, j], pi_idx[ktilde, j]],
                         np.r_[np.ones(ka.size), -np.ones(ktilde.size)], "==", 0.0)

    lp = LinearProgram(obj, rows.matrix(n_vars), tuple(rows.rel), np.array(rows.rhs),
                       np.zeros(n_vars), upper, "max" if side == "ask" else "min")
    current = np.concatenate([q[nodes], state.subplans[t].ravel()])
    block_cost = (joints[t - 1][np.ix_(pp, pp)] + 1.0 / len(groups) ** 2) * tables[t]
    return lp, pi_idx, block_cost, current


def _refine(lp: LinearProgram, value: float, side: str, pi_idx: np.ndarray,
            block_cost: np.ndarray, engine: str):
    """Among (near-)optimal stage solutions pick one with cheap transport in every block.

    Blocks with zero frozen mass do not enter the budget row, but their cost
    becomes relevant once a later sweep moves mass onto them.
    """
    cost = np.zeros(lp.n_vars)
    cost[pi_idx.ravel()] = block_cost.ravel()
    tol = 1e-9 * (1 + abs(value))
    rel, rhs = (">=", value - tol) if side == "ask" else ("<=", value + tol)
    lp2 = LinearProgram(cost, sp.vstack([lp.matrix, sp.csr_matrix(lp.objective[None, :])]).tocsr(),
                        lp.relations + (rel,), np.r_[lp.rhs, rhs], lp.lower, lp.upper, "min")
    return solve(lp2, engine=engine)


def _sweep(lay: _Layout, state: RobustState, cf: np.ndarray, levels: np.ndarray, epsilon: float,
           side: str, density: str, leaf_cost: np.ndarray, refine: bool, engine: str) -> int:
    """One pass over stages T..1, updating ``state`` in place.  Returns failed stage solves."""
    failures = 0
    for t in range(lay.T, 0, -1):
        lp, pi_idx, block_cost, current = _stage_program(lay, state, t, cf, levels, epsilon, side,
                                                         density, leaf_cost)
        try:
            sol = solve(lp, engine=engine)
        except NumericalFailure:
            failures += 1
            continue
        if not sol.optimal or not check_feasible(lp, sol.primal_values, 1e-8):
            # the current iterate is feasible in exact arithmetic; keep it
            log.debug("stage %d LP %s; keeping current values", t, sol.status.value)
            failures += 1
            continue
        x = sol.primal_values
        if refine:
            try:
                sol2 = _refine(lp, sol.objective_value, side, pi_idx, block_cost, engine)
            except NumericalFailure:
                sol2 = None
            if sol2 is not None and sol2.optimal and check_feasible(lp, sol2.primal_values, 1e-8):
                x = sol2.primal_values
        # guard against solver noise: keep a feasible current iterate that is strictly better
        if check_feasible(lp, current, 1e-9):
            cur_val, new_val = float(lp.objective @ current), float(lp.objective @ x)
            slack = 1e-12 * (1 + abs(cur_val))
            if (side == "ask" and new_val < cur_val - slack) or (side == "bid" and new_val > cur_val + slack):
                continue
        nodes = lay.stage_nodes[t]
        x = np.clip(x, 0.0, 1.0)
        x[x < ZERO_MASS] = 0.0
        state.q[nodes] = x[: nodes.size]
        state.subplans[t] = x[pi_idx]
    return failures


def _robust(spec: AmbiguitySpec, claim: Claim, acceptability: AcceptabilitySpec, side: str, *,
            max_iter: int = MAX_ITER, tol: float = CONVERGENCE_TOL, refine: bool = True,
            density: str = "unconditional", engine: str = "auto", strict: bool = False,
            init: RobustState | None = None) -> PricingResult:
    if density not in ("unconditional", "conditional"):
        raise ValueError(f"unknown density mode {density!r}")
    tree = spec.baseline
    cf = np.asarray(claim.cashflows, dtype=float)
    if cf.size != tree.n_nodes:
        raise ValueError(f"claim has {cf.size} cash flows for {tree.n_nodes} nodes")
    lay = _Layout(tree)
    if acceptability.superhedge:
        levels = np.zeros(tree.T)
    else:
        levels = acceptability.levels(tree.T)
    leaf_cost = path_distance_matrix(tree, tree)

    if init is not None:
        state = init.copy()
        state.trace = []
    else:
        try:
            state = _initial_state(lay, _initial_measure(tree, cf, acceptability, side, density, engine))
        except Infeasible:
            if spec.epsilon == 0:
                raise
            state = _closest_feasible_start(lay, leaf_cost, levels, density, spec.epsilon, engine)
    old = _price(tree, state.q, cf)
    state.trace.append(old)
    converged = False
    failures = 0
    for _ in range(max_iter):
        failures += _sweep(lay, state, cf, levels, spec.epsilon, side, density, leaf_cost, refine, engine)
        new = _price(tree, state.q, cf)
        state.trace.append(new)
        if abs(new - old) <= tol * (1 + abs(new)):
            converged = True
            break
        old = new
    state.stage_tables = _stage_tables(lay, state.subplans, leaf_cost)
    price = state.trace[-1]

    implied = _implied_tree(lay, state.subplans)
    measure = _uncond(tree, state.q)
    upper = _superhedge_bound(tree, claim, side, engine)
    certified = spec.epsilon == 0.0 or abs(price - upper) <= 1e-9 * (1 + abs(upper))
    status = "optimal" if converged else "max_iter"
    result = PricingResult(price, None, measure, status, side, {
        "route": "robust",
        "state": state,
        "implied_model": implied,
        "iterations": len(state.trace) - 1,
        "converged": converged,
        "local_optimum": not certified,
        "stage_failures": failures,
        "superhedge_bound": upper,
        "epsilon": spec.epsilon,
        "density": density,
    })
    if not converged:
        log.warning("robust %s price did not converge in %d sweeps", side, max_iter)
        if strict:
            raise NonConvergence(f"no convergence after {max_iter} sweeps", result)
    return result


def _superhedge_bound(tree: ScenarioTree, claim: Claim, side: str, engine: str) -> float:
    from .pricing import ask_price_dual, bid_price_dual
    fn = ask_price_dual if side == "ask" else bid_price_dual
    return fn(tree, claim, AcceptabilitySpec.super_hedge(), engine=engine).price


def robust_ask(spec: AmbiguitySpec, claim: Claim, acceptability: AcceptabilitySpec,
               **options) -> PricingResult:
    """Approximate sup of ``E^Q[sum C]`` over the ambiguity set (a lower bound in general).

    Options: ``max_iter``, ``tol``, ``refine``, ``density`` (``"unconditional"``
    bounds ``Q(n) <= P(n)/alpha`` at every node, ``"conditional"`` bounds the
    one-step ratio), ``engine``, ``strict`` (raise :class:`NonConvergence`),
    ``init`` (warm-start state).
    """
    return _robust(spec, claim, acceptability, "ask", **options)


def robust_bid(spec: AmbiguitySpec, claim: Claim, acceptability: AcceptabilitySpec,
               **options) -> PricingResult:
    """Mirror of :func:`robust_ask` with minimisation."""
    return _robust(spec, claim, acceptability, "bid", **options)


# ---------------------------------------------------------------------------
# audit
# ---------------------------------------------------------------------------

@dataclass
class AuditReport:
    checks: dict[str, float]
    tol: float
    nested_distance: float
    epsilon: float

    @property
    def ok(self) -> bool:
        return all(v <= self.tol for v in self.checks.values()) and \
            self.nested_distance <= self.epsilon + 1e-6

    def failures(self) -> list[str]:
        out = [k for k, v in self.checks.items() if v > self.tol]
        if self.nested_distance > self.epsilon + 1e-6:
            out.append("nested distance")
        return out


def audit(result: PricingResult, spec: AmbiguitySpec, acceptability: AcceptabilitySpec,
          tol: float = 1e-7, density: str | None = None) -> AuditReport:
    """Replay the stage constraints on a robust result; values are worst violations."""
    state: RobustState = result.extras["state"]
    density = density or result.extras.get("density", "unconditional")
    tree = spec.baseline
    lay = _Layout(tree)
    q = state.q
    levels = np.zeros(tree.T) if acceptability.superhedge else acceptability.levels(tree.T)
    checks = {"martingale": 0.0, "normalisation": 0.0, "density": 0.0, "budget": 0.0,
              "baseline marginal": 0.0, "implied consistency": 0.0, "bounds": 0.0}
    for k in tree.inner_nodes:
        kids = tree.children[k]
        checks["normalisation"] = max(checks["normalisation"], abs(q[kids].sum() - 1))
        dev = np.abs(q[kids] @ tree.prices[kids] - tree.prices[k]) / (1 + np.abs(tree.prices[k]))
        checks["martingale"] = max(checks["martingale"], float(dev.max()))
    p_cond = _implied_cond(lay, state.subplans)
    Q, P = _uncond(tree, q), _uncond(tree, p_cond)
    if not acceptability.superhedge:
        lv = np.r_[1.0, levels[tree.stage[1:] - 1]]
        if density == "conditional":
            checks["density"] = float(np.max(lv * q - p_cond))
        else:
            checks["density"] = float(np.max(lv * Q - P))
    checks["bounds"] = float(max(np.max(-q), np.max(q - 1),
                                 max(float(np.max(-C)) for C in state.subplans),
                                 max(float(np.max(C - 1)) for C in state.subplans)))
    leaf_cost = path_distance_matrix(tree, tree)
    joints = _joints(lay, state.subplans)
    checks["budget"] = float(joints[tree.T].ravel() @ leaf_cost.ravel() - spec.epsilon)
    for t in range(1, tree.T + 1):
        C = state.subplans[t]
        p_hat = tree.cond_prob[lay.stage_nodes[t]]
        groups = lay.groups[t]
        for ka in groups:
            for lb in groups:
                block = C[np.ix_(ka, lb)]
                checks["baseline marginal"] = max(checks["baseline marginal"],
                                                  float(np.max(np.abs(block.sum(axis=1) - p_hat[ka]))))
                ref = C[np.ix_(groups[0], lb)].sum(axis=0)
                checks["implied consistency"] = max(checks["implied consistency"],
                                                    float(np.max(np.abs(block.sum(axis=0) - ref))))
    nd, _ = nested_distance_recursive(tree, _implied_tree(lay, state.subplans))
    return AuditReport(checks, tol, float(nd), spec.epsilon)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def thread_cap() -> int:
    try:
        return max(1, int(os.environ.get("RCP_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class SweepCell:
    alpha: float
    epsilon: float
    bid: float
    ask: float
    status: str


def _best(fn, spec: AmbiguitySpec, claim: Claim, acc: AcceptabilitySpec, side: str,
          warm: RobustState | None, options: dict) -> PricingResult:
    """Cold start, plus a warm start from a smaller ball when available; keeps the more extreme."""
    res = fn(spec, claim, acc, **options)
    if warm is not None:
        alt = fn(spec, claim, acc, init=warm, **options)
        better = alt.price > res.price if side == "ask" else alt.price < res.price
        if better:
            res = alt
    return res


def _row(tree: ScenarioTree, claim: Claim, alpha: float, epsilons: Sequence[float],
         options: dict) -> list[SweepCell]:
    acc = AcceptabilitySpec(alpha)
    warm: dict[str, RobustState | None] = {"bid": None, "ask": None}
    out = []
    for eps in epsilons:
        spec = AmbiguitySpec(tree, eps)
        vals, flags = {}, []
        for side, fn in (("bid", robust_bid), ("ask", robust_ask)):
            try:
                res = _best(fn, spec, claim, acc, side, warm[side], options)
                vals[side] = res.price
                warm[side] = res.extras["state"]
                if not res.extras["converged"]:
                    flags.append(f"{side}:max_iter")
            except NoAcceptablePrice:
                vals[side] = math.nan
                flags.append(f"{side}:infeasible")
            except (SolverFailure, RuntimeError) as exc:
                vals[side] = math.nan
                flags.append(f"{side}:error:{type(exc).__name__}")
        out.append(SweepCell(float(alpha), float(eps), vals["bid"], vals["ask"], ";".join(flags) or "ok"))
    return out


def spread_sweep(tree: ScenarioTree, claim: Claim, alpha_grid: Sequence[float],
                 epsilon_grid: Sequence[float], threads: int | None = None,
                 **options) -> list[SweepCell]:
    """Robust bid and ask over an (alpha, epsilon) grid, alpha-major order.

    Within one alpha the radii are visited in increasing order and each solve
    is also warm-started from the previous radius's final state, so prices
    are monotone in epsilon along a row.  Rows are independent; up to
    ``threads`` (default: ``RCP_THREADS`` or 1) run concurrently.
    """
    if len(alpha_grid) == 0 or len(epsilon_grid) == 0:
        raise ValueError("grids must be non-empty")
    require_valid(tree)
    order = np.argsort(epsilon_grid, kind="stable")
    eps_sorted = [float(epsilon_grid[i]) for i in order]
    workers = min(threads or thread_cap(), len(alpha_grid))
    if workers <= 1:
        rows = [_row(tree, claim, a, eps_sorted, options) for a in alpha_grid]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda a: _row(tree, claim, a, eps_sorted, options), alpha_grid))
    out = []
    for row in rows:
        cells = [None] * len(row)
        for k, i in enumerate(order):
            cells[i] = row[k]
        out.extend(cells)
    return out


def write_sweep_csv(cells: Sequence[SweepCell], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha", "epsilon", "bid", "ask", "status"])
        for c in cells:
            w.writerow([repr(c.alpha), repr(c.epsilon), repr(c.bid), repr(c.ask), c.status])
