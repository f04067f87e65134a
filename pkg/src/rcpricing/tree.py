"""Finite filtered scenario trees, claims, and their JSON form.

Nodes carry the prices of the risky assets only; the numéraire is the
implicit asset with constant price 1.  Node ids are dense integers in
breadth-first order, which the LP builders use as column indices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

PROB_TOL = 1e-12


class TreeError(ValueError):
    """Structurally unusable tree input."""


class InconsistentRoot(TreeError):
    pass


class ProbabilityMass(TreeError):
    pass


class InvalidTree(TreeError):
    """Raised by operations that require a valid tree."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        super().__init__("invalid scenario tree: " + "; ".join(str(v) for v in report.violations))


@dataclass(frozen=True)
class Node:
    id: int
    stage: int
    parent: int | None
    prices: tuple[float, ...]
    cond_prob: float


@dataclass(frozen=True)
class Violation:
    kind: str
    node: int
    message: str

    def __str__(self) -> str:
        return f"{self.kind} at node {self.node}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class ScenarioTree:
    """Scenario tree stored as parallel arrays indexed by node id.

    ``parent[root] == -1``.  ``cond_prob[i]`` is the probability of node ``i``
    given its parent (1 for the root).
    """

    parent: np.ndarray
    stage: np.ndarray
    prices: np.ndarray
    cond_prob: np.ndarray
    stages: int | None = None

    def __post_init__(self) -> None:
        parent = np.asarray(self.parent, dtype=int).ravel().copy()
        stage = np.asarray(self.stage, dtype=int).ravel().copy()
        prices = np.asarray(self.prices, dtype=float)
        if prices.ndim == 1:
            prices = prices[:, None]
        prices = prices.copy()
        cond = np.asarray(self.cond_prob, dtype=float).ravel().copy()
        n = parent.size
        if not (stage.size == n == prices.shape[0] == cond.size):
            raise TreeError("node arrays have inconsistent lengths")
        if n == 0:
            raise TreeError("a tree needs at least a root node")
        if np.any((parent < -1) | (parent >= n)):
            raise TreeError("parent id out of range")
        object.__setattr__(self, "parent", _freeze(parent))
        object.__setattr__(self, "stage", _freeze(stage))
        object.__setattr__(self, "prices", _freeze(prices))
        object.__setattr__(self, "cond_prob", _freeze(cond))
        if self.stages is None:
            object.__setattr__(self, "stages", int(stage.max()))

    # -- basic shape -------------------------------------------------------
    @property
    def n_nodes(self) -> int:
        return self.parent.size

    @property
    def n_assets(self) -> int:
        return self.prices.shape[1]

    @property
    def T(self) -> int:
        return int(self.stages)

    @property
    def root(self) -> int:
        return int(np.flatnonzero(self.parent == -1)[0])

    @cached_property
    def children(self) -> tuple[np.ndarray, ...]:
        kids: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for i, p in enumerate(self.parent):
            if p >= 0:
                kids[p].append(i)
        return tuple(_freeze(np.array(k, dtype=int)) for k in kids)

    def nodes_at(self, t: int) -> np.ndarray:
        return self._by_stage[t] if 0 <= t < len(self._by_stage) else np.array([], dtype=int)

    @cached_property
    def _by_stage(self) -> tuple[np.ndarray, ...]:
        top = int(self.stage.max())
        return tuple(_freeze(np.flatnonzero(self.stage == t)) for t in range(top + 1))

    @cached_property
    def leaves(self) -> np.ndarray:
        return _freeze(np.array([i for i, k in enumerate(self.children) if k.size == 0], dtype=int))

    @cached_property
    def inner_nodes(self) -> np.ndarray:
        return _freeze(np.array([i for i, k in enumerate(self.children) if k.size > 0], dtype=int))

    @cached_property
    def node_prob(self) -> np.ndarray:
        """Unconditional probability of every node."""
        p = np.zeros(self.n_nodes)
        for i in self._topological:
            par = self.parent[i]
            p[i] = 1.0 if par < 0 else p[par] * self.cond_prob[i]
        return _freeze(p)

    @cached_property
    def _topological(self) -> np.ndarray:
        return _freeze(np.argsort(self.stage, kind="stable"))

    def path(self, node: int) -> list[int]:
        """Node ids from the root down to ``node``."""
        out = [int(node)]
        while self.parent[out[-1]] >= 0:
            out.append(int(self.parent[out[-1]]))
        return out[::-1]

    def node(self, i: int) -> Node:
        par = int(self.parent[i])
        return Node(int(i), int(self.stage[i]), None if par < 0 else par,
                    tuple(float(v) for v in self.prices[i]), float(self.cond_prob[i]))

    @property
    def nodes(self) -> list[Node]:
        return [self.node(i) for i in range(self.n_nodes)]

    def branching(self) -> tuple[int, ...] | None:
        """Per-stage branching factors if uniform across each stage."""
        out = []
        for t in range(self.T):
            counts = {self.children[k].size for k in self.nodes_at(t)}
            if len(counts) != 1:
                return None
            out.append(counts.pop())
        return tuple(out)

    def same_structure(self, other: "ScenarioTree") -> bool:
        return (self.n_nodes == other.n_nodes and np.array_equal(self.parent, other.parent)
                and np.array_equal(self.stage, other.stage))

    def with_cond_probs(self, cond_prob: np.ndarray) -> "ScenarioTree":
        return ScenarioTree(self.parent, self.stage, self.prices, cond_prob, self.stages)

    def with_prices(self, prices: np.ndarray) -> "ScenarioTree":
        return ScenarioTree(self.parent, self.stage, prices, self.cond_prob, self.stages)

    def is_martingale(self, tol: float = 1e-9) -> bool:
        for k in self.inner_nodes:
            kids = self.children[k]
            mean = self.cond_prob[kids] @ self.prices[kids]
            if np.any(np.abs(mean - self.prices[k]) > tol * (1 + np.abs(self.prices[k]))):
                return False
        return True

    def sample_paths(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` paths; returns an ``(n, T+1, m)`` array."""
        leaves = self.leaves
        probs = self.node_prob[leaves]
        pick = rng.choice(leaves.size, size=n, p=probs / probs.sum())
        table = np.stack([self.prices[self.path(l)] for l in leaves])
        return table[pick]

    # -- persistence -------------------------------------------------------
    def to_dict(self) -> dict:
        nodes = []
        for i in range(self.n_nodes):
            par = int(self.parent[i])
            nodes.append({
                "id": i,
                "stage": int(self.stage[i]),
                "parent": None if par < 0 else par,
                "prices": [float(v) for v in self.prices[i]],
                "cond_prob": float(self.cond_prob[i]),
            })
        return {"stages": self.T, "assets": self.n_assets, "nodes": nodes}

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioTree":
        try:
            nodes = data["nodes"]
            ids = [int(nd["id"]) for nd in nodes]
            if ids != list(range(len(nodes))):
                raise TreeError("node ids must be 0..n-1 in file order")
            parent = [-1 if nd["parent"] is None else int(nd["parent"]) for nd in nodes]
            stage = [int(nd["stage"]) for nd in nodes]
            prices = [[float(v) for v in nd["prices"]] for nd in nodes]
            cond = [float(nd["cond_prob"]) for nd in nodes]
            m = int(data.get("assets", len(prices[0]) if prices else 1))
            if any(len(p) != m for p in prices):
                raise TreeError(f"every node needs {m} prices")
            return cls(np.array(parent), np.array(stage), np.array(prices).reshape(len(nodes), m),
                       np.array(cond), int(data["stages"]))
        except (KeyError, TypeError) as exc:
            raise TreeError(f"malformed tree document: {exc}") from exc

    def to_json(self) -> str:
        """Canonical form: header fields, then one node object per line."""
        d = self.to_dict()
        rows = ",\n".join("  " + json.dumps(nd, allow_nan=False) for nd in d["nodes"])
        return f'{{"stages": {d["stages"]}, "assets": {d["assets"]}, "nodes": [\n{rows}\n]}}\n'

    @classmethod
    def from_json(cls, text: str) -> "ScenarioTree":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "ScenarioTree":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def dumps_canonical(obj) -> str:
    """Deterministic JSON: insertion-ordered keys, shortest float repr."""
    return json.dumps(obj, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


@dataclass(frozen=True, eq=False)
class Claim:
    """Cash flow per node, in numéraire units; the root entry is ignored."""

    cashflows: np.ndarray

    def __post_init__(self) -> None:
        cf = np.asarray(self.cashflows, dtype=float).ravel().copy()
        if not np.all(np.isfinite(cf)):
            raise ValueError("claim cash flows must be finite")
        object.__setattr__(self, "cashflows", _freeze(cf))

    def __mul__(self, factor: float) -> "Claim":
        return Claim(self.cashflows * factor)

    __rmul__ = __mul__

    def __neg__(self) -> "Claim":
        return Claim(-self.cashflows)

    def to_dict(self, tree: ScenarioTree | None = None) -> dict:
        ids = range(1, self.cashflows.size) if tree is None else np.flatnonzero(tree.stage >= 1)
        return {"cashflows": {str(int(i)): float(self.cashflows[i]) for i in ids}}

    @classmethod
    def from_dict(cls, data: dict, tree: ScenarioTree) -> "Claim":
        cf = np.zeros(tree.n_nodes)
        seen = set()
        for key, val in data["cashflows"].items():
            i = int(key)
            if not 0 <= i < tree.n_nodes:
                raise TreeError(f"claim refers to unknown node {i}")
            cf[i] = float(val)
            seen.add(i)
        missing = [int(i) for i in np.flatnonzero(tree.stage >= 1) if int(i) not in seen]
        if missing:
            raise TreeError(f"claim has no cash flow for nodes {missing[:5]}")
        return cls(cf)

    def to_json(self, tree: ScenarioTree | None = None) -> str:
        return dumps_canonical(self.to_dict(tree))

    @classmethod
    def load(cls, path, tree: ScenarioTree) -> "Claim":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh), tree)

    def save(self, path, tree: ScenarioTree | None = None) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json(tree))


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def validate(tree: ScenarioTree) -> ValidationReport:
    """Collect every violated tree invariant; an empty report means valid."""
    out: list[Violation] = []
    n = tree.n_nodes
    roots = np.flatnonzero(tree.parent == -1)
    if roots.size != 1:
        out.append(Violation("root", int(roots[0]) if roots.size else 0,
                             f"expected exactly one root, found {roots.size}"))
    for r in roots:
        if tree.stage[r] != 0:
            out.append(Violation("root", int(r), f"root at stage {tree.stage[r]}, expected 0"))
        if abs(tree.cond_prob[r] - 1.0) > PROB_TOL:
            out.append(Violation("root", int(r), f"root probability {tree.cond_prob[r]}, expected 1"))
    for i in range(n):
        p = tree.parent[i]
        if p >= 0:
            if tree.stage[p] != tree.stage[i] - 1:
                out.append(Violation("stage continuity", i,
                                     f"stage {tree.stage[i]} below parent {p} at stage {tree.stage[p]}"))
            if p >= i:
                out.append(Violation("ordering", i, f"parent {p} does not precede node in id order"))
        if tree.stage[i] < 0:
            out.append(Violation("stage continuity", i, "negative stage"))
        if not 0.0 <= tree.cond_prob[i] <= 1.0:
            out.append(Violation("probability range", i, f"conditional probability {tree.cond_prob[i]}"))
        if not np.all(np.isfinite(tree.prices[i])):
            out.append(Violation("prices", i, "non-finite price"))
        elif np.any(tree.prices[i] < 0):
            out.append(Violation("prices", i, "negative price"))
    for k in range(n):
        kids = tree.children[k]
        if kids.size == 0:
            if tree.stage[k] != tree.T:
                out.append(Violation("leaf depth", k, f"leaf at stage {tree.stage[k]}, expected {tree.T}"))
            continue
        mass = float(tree.cond_prob[kids].sum())
        if abs(mass - 1.0) > PROB_TOL * max(1, kids.size):
            out.append(Violation("probability mass", k, f"children probabilities sum to {mass!r}"))
    if tree.stage.max() > tree.T:
        out.append(Violation("leaf depth", int(np.argmax(tree.stage)), "node beyond the declared stage count"))
    return ValidationReport(tuple(out))


def require_valid(tree: ScenarioTree) -> None:
    report = validate(tree)
    if not report.ok:
        raise InvalidTree(report)


def from_path_matrix(paths, path_probs: Sequence[float] | None = None,
                     tol: float = 0.0) -> ScenarioTree:
    """Build a tree from paths given as columns of a ``(T+1, n)`` matrix.

    Multi-asset input is a ``(T+1, n, m)`` array.  Paths sharing a value
    history up to stage ``t`` share their stage-``t`` node (values compared with
    absolute tolerance ``tol``).  Children are ordered by first appearance.
    """
    arr = np.asarray(paths, dtype=float)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise TreeError("paths must be a (T+1, n) or (T+1, n, m) array")
    T1, n, m = arr.shape
    probs = np.full(n, 1.0 / n) if path_probs is None else np.asarray(path_probs, dtype=float)
    if probs.size != n:
        raise ProbabilityMass(f"{probs.size} probabilities for {n} paths")
    if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-10:
        raise ProbabilityMass(f"path probabilities sum to {probs.sum()!r}")
    if np.any(np.abs(arr[0] - arr[0, 0]) > tol):
        raise InconsistentRoot("all paths must start from the same root value")

    parent, stage, prices, mass = [-1], [0], [arr[0, 0].copy()], [float(probs.sum())]
    node_of_path = np.zeros(n, dtype=int)
    for t in range(1, T1):
        new_node = np.empty(n, dtype=int)
        # group by parent node, then by value, in order of first appearance
        order: dict[int, list[int]] = {}
        for j in range(n):
            order.setdefault(int(node_of_path[j]), []).append(j)
        for par in sorted(order):
            reps: list[tuple[np.ndarray, int]] = []
            for j in order[par]:
                v = arr[t, j]
                hit = next((nid for rv, nid in reps if np.all(np.abs(rv - v) <= tol)), None)
                if hit is None:
                    hit = len(parent)
                    parent.append(par)
                    stage.append(t)
                    prices.append(v.copy())
                    mass.append(0.0)
                    reps.append((v, hit))
                mass[hit] += probs[j]
                new_node[j] = hit
        node_of_path = new_node
    mass_arr = np.array(mass)
    par_arr = np.array(parent)
    cond = np.ones(len(parent))
    for i in range(1, len(parent)):
        cond[i] = mass_arr[i] / mass_arr[par_arr[i]] if mass_arr[par_arr[i]] > 0 else 0.0
    return ScenarioTree(par_arr, np.array(stage), np.array(prices), cond, T1 - 1)


def leaf_paths(tree: ScenarioTree) -> list[tuple[np.ndarray, float]]:
    """``(values, probability)`` for every leaf in id order; values are ``(T+1, m)``."""
    return [(tree.prices[tree.path(l)], float(tree.node_prob[l])) for l in tree.leaves]


def path_matrix(tree: ScenarioTree) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`from_path_matrix`: ``(T+1, n_leaves, m)`` values and probabilities."""
    lp = leaf_paths(tree)
    return np.stack([v for v, _ in lp], axis=1), np.array([p for _, p in lp])


def _terminal_payoff(tree: ScenarioTree, payoff) -> Claim:
    cf = np.zeros(tree.n_nodes)
    leaves = tree.leaves
    cf[leaves] = payoff(tree.prices[leaves])
    return Claim(cf)


def european_call(tree: ScenarioTree, strike: float, asset_index: int = 0) -> Claim:
    if not 0 <= asset_index < tree.n_assets:
        raise IndexError(f"asset index {asset_index} out of range")
    return _terminal_payoff(tree, lambda s: np.maximum(s[:, asset_index] - strike, 0.0))


def european_put(tree: ScenarioTree, strike: float, asset_index: int = 0) -> Claim:
    if not 0 <= asset_index < tree.n_assets:
        raise IndexError(f"asset index {asset_index} out of range")
    return _terminal_payoff(tree, lambda s: np.maximum(strike - s[:, asset_index], 0.0))


def normalize_by_numeraire(prices: np.ndarray) -> np.ndarray:
    """Divide all assets by asset 0 and drop it: ``(..., m) -> (..., m-1)``."""
    prices = np.asarray(prices, dtype=float)
    if np.any(prices[..., 0] <= 0):
        raise ValueError("numéraire prices must be positive")
    return prices[..., 1:] / prices[..., :1]


def martingale_adjusted(tree: ScenarioTree) -> ScenarioTree:
    """Rescale children values top-down so the physical measure is a martingale.

    Each sibling group is multiplied by ``S_parent / E[S_child | parent]``
    (per asset), which keeps prices non-negative.
    """
    prices = tree.prices.copy()
    for k in tree._topological:
        kids = tree.children[k]
        if kids.size == 0:
            continue
        mean = tree.cond_prob[kids] @ prices[kids]
        factor = np.divide(prices[k], mean, out=np.ones_like(mean), where=mean != 0)
        prices[kids] *= factor
    return tree.with_prices(prices)


def chain_tree(values: Iterable[float]) -> ScenarioTree:
    vals = np.asarray(list(values), dtype=float)
    return from_path_matrix(vals[:, None])
