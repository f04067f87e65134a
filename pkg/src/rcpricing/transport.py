"""Wasserstein and nested distances between discrete distributions and trees."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .lp import LpBuilder, solve
from .tree import ScenarioTree, require_valid


class DimensionMismatch(ValueError):
    pass


class SolverFailure(RuntimeError):
    pass


Norm = Union[str, float, Callable[[np.ndarray], np.ndarray]]


def _norm_fn(ground_norm: Norm) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorized norm over the last axis."""
    if callable(ground_norm):
        return ground_norm
    order = {"l1": 1, "l2": 2, "linf": np.inf}.get(ground_norm, ground_norm)
    return lambda x: np.linalg.norm(x, ord=order, axis=-1)


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        atoms = np.asarray(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        w = np.asarray(self.weights, dtype=float).ravel()
        if atoms.shape[0] != w.size:
            raise DimensionMismatch(f"{atoms.shape[0]} atoms but {w.size} weights")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12 * max(1, w.size):
            raise ValueError(f"weights must be non-negative and sum to 1 (sum={w.sum()!r})")
        if not np.all(np.isfinite(atoms)):
            raise ValueError("atoms must be finite")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]


@dataclass
class TransportPlan:
    """Joint leaf-pair masses plus conditional subplans per parent pair.

    ``joint[a, b]`` indexes leaves in ``tree.leaves`` order.  ``subplans[(k, l)]``
    is indexed by ``(children of k, children of l)`` in child order.
    """

    joint: np.ndarray
    subplans: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    leaves_a: np.ndarray | None = None
    leaves_b: np.ndarray | None = None

    def to_csv(self, path, tol: float = 0.0) -> None:
        la = self.leaves_a if self.leaves_a is not None else np.arange(self.joint.shape[0])
        lb = self.leaves_b if self.leaves_b is not None else np.arange(self.joint.shape[1])
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "mass"])
            for a, b in zip(*np.nonzero(self.joint > tol)):
                w.writerow([int(la[a]), int(lb[b]), repr(float(self.joint[a, b]))])


def transport(cost: np.ndarray, a: np.ndarray, b: np.ndarray, engine: str = "auto") -> tuple[float, np.ndarray]:
    """Optimal transport between weight vectors ``a`` and ``b`` for ``cost``."""
    cost = np.asarray(cost, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n, m = cost.shape
    if n == 1 or m == 1:
        plan = np.outer(a, b)
        return float((plan * cost).sum()), plan
    bld = LpBuilder("min")
    x = bld.add_vars(n * m, cost.ravel(), prefix="pi").reshape(n, m)
    for i in range(n):
        bld.add_constraint((x[i], np.ones(m)), "==", a[i])
    # the last column constraint is implied by the others
    for j in range(m - 1):
        bld.add_constraint((x[:, j], np.ones(n)), "==", b[j])
    sol = solve(bld.build(), engine=engine)
    if not sol.optimal:
        raise SolverFailure(f"transport LP {sol.status.value}")
    plan = np.clip(sol.primal_values.reshape(n, m), 0.0, None)
    return float(sol.objective_value), plan


def wasserstein(p: DiscreteDistribution, q: DiscreteDistribution,
                ground_norm: Norm = "l1") -> tuple[float, np.ndarray]:
    """Kantorovich-Wasserstein distance and an optimal plan."""
    if p.dim != q.dim:
        raise DimensionMismatch(f"atom dimensions {p.dim} and {q.dim} differ")
    norm = _norm_fn(ground_norm)
    cost = norm(p.atoms[:, None, :] - q.atoms[None, :, :])
    val, plan = transport(cost, p.weights, q.weights)
    return max(val, 0.0), plan


def _check_pair(a: ScenarioTree, b: ScenarioTree) -> None:
    if a.n_assets != b.n_assets:
        raise DimensionMismatch(f"asset counts {a.n_assets} and {b.n_assets} differ")
    if a.T != b.T:
        raise DimensionMismatch(f"stage counts {a.T} and {b.T} differ")


def _leaf_path_values(tree: ScenarioTree) -> np.ndarray:
    return np.stack([tree.prices[tree.path(l)] for l in tree.leaves])  # (L, T+1, m)


def path_distance_matrix(a: ScenarioTree, b: ScenarioTree, ground_norm: Norm = "l1") -> np.ndarray:
    """``D[i, j] = sum_t ||a_t - b_t||`` over leaf paths, stage 0 included."""
    _check_pair(a, b)
    norm = _norm_fn(ground_norm)
    pa, pb = _leaf_path_values(a), _leaf_path_values(b)
    return norm(pa[:, None, :, :] - pb[None, :, :, :]).sum(axis=-1)


def _leaf_index(tree: ScenarioTree) -> tuple[dict[int, int], list[np.ndarray]]:
    """Position in ``tree.leaves`` per leaf id, and leaf positions under each node."""
    pos = {int(l): k for k, l in enumerate(tree.leaves)}
    under: list[list[int]] = [[] for _ in range(tree.n_nodes)]
    for l in tree.leaves:
        for v in tree.path(l):
            under[v].append(pos[int(l)])
    return pos, [np.array(u, dtype=int) for u in under]


def nested_distance_lp(a: ScenarioTree, b: ScenarioTree, ground_norm: Norm = "l1",
                       engine: str = "auto") -> tuple[float, TransportPlan]:
    """Nested distance as one LP over leaf-pair masses.

    The conditional-marginal constraints are multiplied through by the mass of
    the parent pair, which makes them linear in the joint plan.
    """
    require_valid(a)
    require_valid(b)
    _check_pair(a, b)
    D = path_distance_matrix(a, b, ground_norm)
    na, nb = D.shape
    _, under_a = _leaf_index(a)
    _, under_b = _leaf_index(b)
    bld = LpBuilder("min")
    x = bld.add_vars(na * nb, D.ravel(), prefix="pi").reshape(na, nb)
    bld.add_constraint((x.ravel(), np.ones(na * nb)), "==", 1.0)
    for t in range(a.T):
        for k in a.nodes_at(t):
            for l in b.nodes_at(t):
                block = x[np.ix_(under_a[k], under_b[l])]
                kids_a, kids_b = a.children[k], b.children[l]
                for i in kids_a:
                    coef = np.full(block.shape, -a.cond_prob[i])
                    rows_i = np.isin(under_a[k], under_a[i])
                    coef[rows_i, :] += 1.0
                    bld.add_constraint((block.ravel(), coef.ravel()), "==", 0.0)
                for j in kids_b:
                    coef = np.full(block.shape, -b.cond_prob[j])
                    cols_j = np.isin(under_b[l], under_b[j])
                    coef[:, cols_j] += 1.0
                    bld.add_constraint((block.ravel(), coef.ravel()), "==", 0.0)
    sol = solve(bld.build(), engine=engine)
    if not sol.optimal:
        raise SolverFailure(f"nested distance LP {sol.status.value}")
    joint = np.clip(sol.primal_values.reshape(na, nb), 0.0, None)
    plan = TransportPlan(joint, _subplans_from_joint(a, b, joint, under_a, under_b),
                         a.leaves.copy(), b.leaves.copy())
    return max(float(sol.objective_value), 0.0), plan


def _subplans_from_joint(a, b, joint, under_a, under_b) -> dict[tuple[int, int], np.ndarray]:
    subs = {}
    for t in range(a.T):
        for k in a.nodes_at(t):
            for l in b.nodes_at(t):
                ka, kb = a.children[k], b.children[l]
                m = np.array([[joint[np.ix_(under_a[i], under_b[j])].sum() for j in kb] for i in ka])
                total = m.sum()
                if total > 1e-14:
                    subs[(int(k), int(l))] = m / total
                else:
                    subs[(int(k), int(l))] = np.outer(a.cond_prob[ka], b.cond_prob[kb])
    return subs


def nested_distance_recursive(a: ScenarioTree, b: ScenarioTree, ground_norm: Norm = "l1",
                              with_plan: bool = False):
    """Nested distance by backward recursion over stages.

    ``nd_T`` is the path distance of leaf pairs; for ``t < T``,
    ``nd_t(k, l)`` is the optimal transport cost between the conditional
    successor distributions of ``k`` and ``l`` under cost ``nd_{t+1}``.
    Returns ``(distance, tables)`` with ``tables[(t, k, l)]``, plus the
    assembled :class:`TransportPlan` when ``with_plan`` is set.
    """
    require_valid(a)
    require_valid(b)
    _check_pair(a, b)
    D = path_distance_matrix(a, b, ground_norm)
    pos_a = {int(l): k for k, l in enumerate(a.leaves)}
    pos_b = {int(l): k for k, l in enumerate(b.leaves)}
    tables: dict[tuple[int, int, int], float] = {}
    value = np.zeros((a.n_nodes, b.n_nodes))
    T = a.T
    for i in a.nodes_at(T):
        for j in b.nodes_at(T):
            value[i, j] = D[pos_a[int(i)], pos_b[int(j)]]
            tables[(T, int(i), int(j))] = float(value[i, j])
    subplans: dict[tuple[int, int], np.ndarray] = {}
    for t in range(T - 1, -1, -1):
        for k in a.nodes_at(t):
            ka = a.children[k]
            for l in b.nodes_at(t):
                kb = b.children[l]
                cost = value[np.ix_(ka, kb)]
                v, plan = transport(cost, a.cond_prob[ka], b.cond_prob[kb])
                value[k, l] = v
                tables[(t, int(k), int(l))] = float(v)
                subplans[(int(k), int(l))] = plan
    dist = max(float(value[a.root, b.root]), 0.0)
    if not with_plan:
        return dist, tables
    return dist, tables, TransportPlan(compose_joint(a, b, subplans), subplans,
                                       a.leaves.copy(), b.leaves.copy())


def compose_joint(a: ScenarioTree, b: ScenarioTree,
                  subplans: dict[tuple[int, int], np.ndarray]) -> np.ndarray:
    """Leaf-pair joint plan from conditional subplans (products along paths)."""
    mass = {(a.root, b.root): 1.0}
    for t in range(a.T):
        nxt = {}
        for (k, l), w in mass.items():
            sub = subplans[(int(k), int(l))]
            for ii, i in enumerate(a.children[k]):
                for jj, j in enumerate(b.children[l]):
                    nxt[(int(i), int(j))] = w * sub[ii, jj]
        mass = nxt
    pos_a = {int(l): k for k, l in enumerate(a.leaves)}
    pos_b = {int(l): k for k, l in enumerate(b.leaves)}
    joint = np.zeros((a.leaves.size, b.leaves.size))
    for (i, j), w in mass.items():
        joint[pos_a[i], pos_b[j]] = w
    return joint


def nested_distance(a: ScenarioTree, b: ScenarioTree, method: str = "recursive",
                    ground_norm: Norm = "l1") -> float:
    if method == "recursive":
        return nested_distance_recursive(a, b, ground_norm)[0]
    if method == "lp":
        return nested_distance_lp(a, b, ground_norm)[0]
    raise ValueError(f"unknown method {method!r}")


def path_distribution(tree: ScenarioTree) -> DiscreteDistribution:
    """Leaf paths flattened to vectors (stage-major, asset-minor)."""
    vals = _leaf_path_values(tree)
    return DiscreteDistribution(vals.reshape(vals.shape[0], -1), tree.node_prob[tree.leaves])


def stage_distribution(tree: ScenarioTree, t: int) -> DiscreteDistribution:
    nodes = tree.nodes_at(t)
    w = tree.node_prob[nodes]
    return DiscreteDistribution(tree.prices[nodes], w / w.sum())
