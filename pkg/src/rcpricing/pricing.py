"""Acceptability (AVaR) bid and ask prices on scenario trees.

Primal programs minimise (ask) or maximise (bid) the initial value of a
self-financing strategy whose per-stage surplus is AVaR-acceptable.  Dual
programs optimise the expected cash flow over martingale measures whose
node probabilities are bounded by ``P(n) / alpha_t``.

The AVaR constraint ``AVaR_a(Y) >= beta`` is encoded with one free scalar
``a_t`` and one shortfall ``s_n >= 0`` per stage-``t`` node::

    s_n >= a_t - Y_n,      a_t - (1/alpha) * sum_n P(n) s_n >= beta

New acceptability functionals plug in by providing another encoder with the
same signature as :func:`_encode_avar` (and the matching density bounds in
:func:`_density_bounds`).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .lp import LpBuilder, LpSolution, Status, solve
from .tree import Claim, ScenarioTree, require_valid


class BadLevel(ValueError):
    """Acceptability level outside (0, 1]."""


class NoAcceptablePrice(RuntimeError):
    """No martingale measure satisfies the density bounds (the primal is unbounded)."""


class SolverFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class AcceptabilitySpec:
    """AVaR levels per stage 1..T, or pointwise super-hedging.

    ``alpha`` may be a scalar (all stages) or a sequence of length T.  With
    ``superhedge=True`` the levels are ignored and every surplus must be
    non-negative node by node.
    """

    alpha: float | tuple[float, ...] = 1.0
    superhedge: bool = False

    def __post_init__(self) -> None:
        levels = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        if self.superhedge:
            return
        if levels.size == 0 or np.any(~np.isfinite(levels)) or np.any(levels <= 0) or np.any(levels > 1):
            raise BadLevel(f"acceptability levels must lie in (0, 1], got {self.alpha!r}")
        if levels.size > 1:
            object.__setattr__(self, "alpha", tuple(float(a) for a in levels))
        else:
            object.__setattr__(self, "alpha", float(levels[0]))

    def levels(self, T: int) -> np.ndarray:
        """Level for each stage 1..T (index 0 is stage 1)."""
        if self.superhedge:
            return np.zeros(T)
        a = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        if a.size == 1:
            return np.full(T, a[0])
        if a.size != T:
            raise BadLevel(f"{a.size} levels given for {T} stages")
        return a

    @classmethod
    def super_hedge(cls) -> "AcceptabilitySpec":
        return cls(1.0, superhedge=True)


@dataclass
class PricingResult:
    """Price with hedge and/or pricing measure.

    ``strategy`` has one row per node, ``[numeraire, asset_1..asset_m]``;
    rows of leaves are zero.  ``dual_measure`` holds the unconditional node
    probabilities of the pricing measure Q.  Either may be ``None`` when the
    route taken does not produce it.
    """

    price: float
    strategy: np.ndarray | None
    dual_measure: np.ndarray | None
    status: str = "optimal"
    side: str = "ask"
    extras: dict = field(default_factory=dict)

    def densities(self, tree: ScenarioTree) -> np.ndarray | None:
        """``Q(n) / P(n)`` per node (0 where ``P(n) = 0``)."""
        if self.dual_measure is None:
            return None
        p = tree.node_prob
        return np.divide(self.dual_measure, p, out=np.zeros_like(p), where=p > 0)

    def to_dict(self, tree: ScenarioTree) -> dict:
        out: dict = {"price": float(self.price), "side": self.side, "status": self.status}
        if self.strategy is not None:
            out["strategy"] = {str(int(k)): [float(v) for v in self.strategy[k]]
                               for k in tree.inner_nodes}
        if self.dual_measure is not None:
            out["dual_measure"] = {str(i): float(q) for i, q in enumerate(self.dual_measure)}
        return out

    def to_json(self, tree: ScenarioTree) -> str:
        return json.dumps(self.to_dict(tree), indent=2) + "\n"


# ---------------------------------------------------------------------------
# AVaR
# ---------------------------------------------------------------------------

def avar(values: Sequence[float], probs: Sequence[float], alpha: float) -> float:
    """Average Value-at-Risk (lower tail) of a discrete random variable.

    Computed as ``min E[Y Z]`` over densities ``0 <= Z <= 1/alpha, E Z = 1``:
    the minimiser loads the maximal density on the smallest outcomes.
    """
    if not (0.0 < alpha <= 1.0) or not math.isfinite(alpha):
        raise BadLevel(f"alpha must lie in (0, 1], got {alpha!r}")
    v = np.asarray(values, dtype=float).ravel()
    p = np.asarray(probs, dtype=float).ravel()
    if v.size != p.size:
        raise ValueError("values and probs differ in length")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("probs must be a probability vector")
    order = np.argsort(v, kind="stable")
    v, p = v[order], p[order]
    cap = np.minimum(p / alpha, np.maximum(1.0 - np.concatenate(([0.0], np.cumsum(p[:-1] / alpha))), 0.0))
    return float(cap @ v)


# ---------------------------------------------------------------------------
# primal programs
# ---------------------------------------------------------------------------

def _check_inputs(tree: ScenarioTree, claim: Claim) -> np.ndarray:
    require_valid(tree)
    cf = np.asarray(claim.cashflows, dtype=float)
    if cf.size != tree.n_nodes:
        raise ValueError(f"claim has {cf.size} cash flows for {tree.n_nodes} nodes")
    return cf


def _encode_avar(bld: LpBuilder, surplus_rows: list[tuple[list, list, float]],
                 probs: np.ndarray, alpha: float, beta: float) -> list[int]:
    """Add ``AVaR_alpha(Y) >= beta`` where ``Y_n = row_n . x - rhs_n``.

    Returns the constraint index of each node row (their shadow prices are
    the dual node probabilities).
    """
    a = bld.add_var(0.0, -math.inf, math.inf, "a")
    s = bld.add_vars(len(surplus_rows), 0.0, 0.0, math.inf, prefix="s")
    rows = []
    for n, (idx, vals, rhs) in enumerate(surplus_rows):
        # s_n - a + Y_n >= 0
        rows.append(bld.add_constraint((list(idx) + [int(s[n]), a], list(vals) + [1.0, -1.0]), ">=", rhs))
    bld.add_constraint(([a] + list(s), [1.0] + list(-probs / alpha)), ">=", beta)
    return rows


def _encode_pointwise(bld: LpBuilder, surplus_rows, beta: float) -> list[int]:
    return [bld.add_constraint((idx, vals), ">=", rhs + beta) for idx, vals, rhs in surplus_rows]


def _primal(tree: ScenarioTree, claim: Claim, spec: AcceptabilitySpec, side: str,
            beta: Sequence[float] | None, engine: str) -> PricingResult:
    cf = _check_inputs(tree, claim)
    T, m = tree.T, tree.n_assets
    levels = spec.levels(T)
    beta_arr = np.zeros(T) if beta is None else np.asarray(beta, dtype=float).ravel()
    if beta_arr.size == 1:
        beta_arr = np.full(T, beta_arr[0])
    if beta_arr.size != T:
        raise ValueError(f"beta needs {T} entries")
    sigma = 1.0 if side == "ask" else -1.0

    bld = LpBuilder("min" if side == "ask" else "max")
    inner = tree.inner_nodes
    pos = {int(k): bld.add_vars(m + 1, 0.0, -math.inf, math.inf, prefix=f"x{k}_") for k in inner}
    root = tree.root
    bld.set_cost(int(pos[root][0]), 1.0)
    for j in range(m):
        bld.set_cost(int(pos[root][j + 1]), float(tree.prices[root, j]))

    probs = tree.node_prob
    row_of = np.full(tree.n_nodes, -1)
    for t in range(1, T + 1):
        nodes = tree.nodes_at(t)
        surplus = []
        for n in nodes:
            n = int(n)
            # Y_n = sigma * (x_par . S_n - x_n . S_n - C_n)
            sn = np.concatenate(([1.0], tree.prices[n]))
            idx = list(pos[int(tree.parent[n])])
            vals = list(sigma * sn)
            if n in pos:
                idx += list(pos[n])
                vals += list(-sigma * sn)
            surplus.append((idx, vals, sigma * cf[n]))
        if spec.superhedge:
            rows = _encode_pointwise(bld, surplus, beta_arr[t - 1])
        else:
            rows = _encode_avar(bld, surplus, probs[nodes], levels[t - 1], beta_arr[t - 1])
        row_of[nodes] = rows

    sol = solve(bld.build(), engine=engine)
    if sol.status is Status.UNBOUNDED:
        raise NoAcceptablePrice(
            "no martingale measure satisfies the acceptability density bounds; "
            f"the {side} price is unbounded")
    if sol.status is Status.INFEASIBLE:
        raise SolverFailure("hedging program reported infeasible; this is an internal error")
    strategy = np.zeros((tree.n_nodes, m + 1))
    for k, idx in pos.items():
        strategy[k] = sol.primal_values[idx]
    q = np.zeros(tree.n_nodes)
    q[root] = 1.0
    rest = row_of >= 0
    q[rest] = np.clip(sigma * sol.dual_values[row_of[rest]], 0.0, None)
    return PricingResult(float(sol.objective_value), strategy, q, "optimal", side,
                         {"route": "primal", "engine": sol.engine, "iterations": sol.iterations,
                          "beta": beta_arr.tolist()})


def ask_price_primal(tree: ScenarioTree, claim: Claim, spec: AcceptabilitySpec,
                     engine: str = "auto") -> PricingResult:
    """Minimal initial capital hedging ``claim`` acceptably at every stage."""
    return _primal(tree, claim, spec, "ask", None, engine)


def bid_price_primal(tree: ScenarioTree, claim: Claim, spec: AcceptabilitySpec,
                     engine: str = "auto") -> PricingResult:
    """Maximal initial capital such that buying ``claim`` is acceptable."""
    return _primal(tree, claim, spec, "bid", None, engine)


def perturbed_ask(tree: ScenarioTree, claim: Claim, spec: AcceptabilitySpec,
                  beta: Sequence[float] | float, engine: str = "auto") -> float:
    """Ask price with acceptability thresholds ``beta_t`` instead of zero."""
    return _primal(tree, claim, spec, "ask", np.atleast_1d(beta), engine).price


# ---------------------------------------------------------------------------
# dual programs
# ---------------------------------------------------------------------------

def _density_bounds(tree: ScenarioTree, spec: AcceptabilitySpec) -> np.ndarray:
    """Upper bound on ``Q(n)`` per node (``inf`` under super-hedging)."""
    if spec.superhedge:
        return np.full(tree.n_nodes, math.inf)
    levels = spec.levels(tree.T)
    ub = np.full(tree.n_nodes, 1.0)
    rest = tree.stage >= 1
    ub[rest] = tree.node_prob[rest] / levels[tree.stage[rest] - 1]
    return ub


def martingale_measure_lp(tree: ScenarioTree, objective: np.ndarray, sense: str,
                          upper: np.ndarray) -> tuple[LpBuilder, np.ndarray]:
    """LP over unconditional node probabilities Q with martingale rows.

    Returns the builder (so callers may add rows) and the Q variable ids.
    """
    bld = LpBuilder(sense)
    q = np.empty(tree.n_nodes, dtype=int)
    root = tree.root
    for i in range(tree.n_nodes):
        if i == root:
            q[i] = bld.add_var(0.0, 1.0, 1.0, f"q{i}")
        else:
            q[i] = bld.add_var(float(objective[i]), 0.0, float(upper[i]), f"q{i}")
    for k in tree.inner_nodes:
        kids = tree.children[k]
        bld.add_constraint((list(q[kids]) + [int(q[k])], [1.0] * kids.size + [-1.0]), "==", 0.0)
        for j in range(tree.n_assets):
            vals = list(tree.prices[kids, j]) + [-float(tree.prices[k, j])]
            bld.add_constraint((list(q[kids]) + [int(q[k])], vals), "==", 0.0)
    return bld, q


def _dual(tree: ScenarioTree, claim: Claim, spec: AcceptabilitySpec, side: str,
          engine: str) -> PricingResult:
    cf = _check_inputs(tree, claim)
    bld, q = martingale_measure_lp(tree, cf, "max" if side == "ask" else "min",
                                   _density_bounds(tree, spec))
    sol: LpSolution = solve(bld.build(), engine=engine)
    if sol.status is Status.INFEASIBLE:
        raise NoAcceptablePrice("no martingale measure satisfies the acceptability density bounds")
    if sol.status is not Status.OPTIMAL:
        raise SolverFailure(f"pricing-measure program {sol.status.value}")
    measure = np.clip(sol.primal_values[q], 0.0, None)
    return PricingResult(float(sol.objective_value), None, measure, "optimal", side,
                         {"route": "dual", "engine": sol.engine, "iterations": sol.iterations})


def ask_price_dual(tree: ScenarioTree, claim: Claim, spec: AcceptabilitySpec,
                   engine: str = "auto") -> PricingResult:
    """``sup E^Q[sum C]`` over martingale measures with AVaR-bounded density."""
    return _dual(tree, claim, spec, "ask", engine)


def bid_price_dual(tree: ScenarioTree, claim: Claim, spec: AcceptabilitySpec,
                   engine: str = "auto") -> PricingResult:
    """``inf E^Q[sum C]`` over martingale measures with AVaR-bounded density."""
    return _dual(tree, claim, spec, "bid", engine)


def price(tree: ScenarioTree, claim: Claim, spec: AcceptabilitySpec, side: str = "ask",
          dual: bool = False, engine: str = "auto") -> PricingResult:
    """Dispatch helper used by the CLI."""
    if side not in ("ask", "bid"):
        raise ValueError(f"side must be 'ask' or 'bid', got {side!r}")
    if dual:
        return _dual(tree, claim, spec, side, engine)
    return _primal(tree, claim, spec, side, None, engine)


def conditional_measure(tree: ScenarioTree, measure: np.ndarray) -> np.ndarray:
    """Convert unconditional node probabilities into conditional ones.

    Children of a zero-mass node get the physical conditional probabilities.
    """
    out = np.ones(tree.n_nodes)
    for i in range(tree.n_nodes):
        par = tree.parent[i]
        if par >= 0:
            out[i] = measure[i] / measure[par] if measure[par] > 1e-15 else tree.cond_prob[i]
    return out
