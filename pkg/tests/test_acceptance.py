"""Acceptance criteria.  Each test prints one ``PASS``/``FAIL`` line with its runtime.

Run directly (``python3 tests/test_acceptance.py``) or through pytest.
"""

import math
import sys
import time
from contextlib import contextmanager

import numpy as np
import pytest

from rcpricing.estimation import bound_check_wasserstein_supnorm, ld_convergence_experiment, lognormal_tree
from rcpricing.pricing import (AcceptabilitySpec, ask_price_dual, ask_price_primal, bid_price_dual,
                               bid_price_primal, NoAcceptablePrice, perturbed_ask, price)
from rcpricing.robust import AmbiguitySpec, robust_ask, robust_bid, spread_sweep
from rcpricing.synthetic import perturb_probs, perturb_values, random_tree
from rcpricing.transport import (nested_distance_lp, nested_distance_recursive, stage_distribution,
                                 wasserstein)
from rcpricing.tree import european_call, from_path_matrix, martingale_adjusted

from oracles import black_scholes, robust_one_period


class _Check:
    def __init__(self):
        self.ok = True
        self.notes = []

    def require(self, cond, note):
        if not cond:
            self.ok = False
            self.notes.append(note)


@contextmanager
def criterion(capsys, number, title, limit):
    chk = _Check()
    t0 = time.perf_counter()
    yield chk
    dt = time.perf_counter() - t0
    chk.require(dt < limit, f"runtime {dt:.1f} s over {limit} s")
    line = f"{'PASS' if chk.ok else 'FAIL'} criterion {number}: {title} ({dt:.2f} s)"
    if chk.notes:
        line += " | " + "; ".join(chk.notes[:3])
    with capsys.disabled():
        print("\n" + line, flush=True)
    assert chk.ok, line


def test_c01_example2_invariance(capsys, example2):
    with criterion(capsys, 1, "Example 2 ask = bid = 5.75 for every alpha", 1.0) as chk:
        c = european_call(example2, 95)
        for a in (0.05, 0.3, 0.7, 1.0):
            acc = AcceptabilitySpec(a)
            for side in ("ask", "bid"):
                p = price(example2, c, acc, side=side).price
                chk.require(abs(p - 5.75) <= 1e-6, f"{side}({a}) = {p}")


def test_c02_example1_spread_closure(capsys, example1):
    with criterion(capsys, 2, "Example 1 spread shrinks in alpha and closes at 60/9", 5.0) as chk:
        c = european_call(example1, 95)
        alphas = np.round(np.arange(1, 11) / 10, 10)
        asks = [price(example1, c, AcceptabilitySpec(a), side="ask").price for a in alphas]
        bids = [price(example1, c, AcceptabilitySpec(a), side="bid").price for a in alphas]
        chk.require(all(y <= x + 1e-9 for x, y in zip(asks, asks[1:])), f"ask not non-increasing {asks}")
        chk.require(all(y >= x - 1e-9 for x, y in zip(bids, bids[1:])), f"bid not non-decreasing {bids}")
        chk.require(asks[-1] - bids[-1] <= 1e-6, "spread at alpha = 1")
        chk.require(abs(asks[-1] - 60 / 9) <= 1e-6 and abs(bids[-1] - 60 / 9) <= 1e-6, "value at alpha = 1")


def test_c03_strong_duality(capsys):
    with criterion(capsys, 3, "primal = dual on 50 random trees", 60.0) as chk:
        rng = np.random.default_rng(2024)
        for i in range(50):
            tree = random_tree(rng, T=int(rng.integers(1, 4)), max_children=3, martingale=bool(i % 2))
            c = european_call(tree, float(np.median(tree.prices[tree.leaves, 0])))
            for a in (0.2, 1.0):
                acc = AcceptabilitySpec(a)
                for prim, dual in ((ask_price_primal, ask_price_dual), (bid_price_primal, bid_price_dual)):
                    try:
                        p = prim(tree, c, acc).price
                    except NoAcceptablePrice:
                        with pytest.raises(NoAcceptablePrice):
                            dual(tree, c, acc)
                        continue
                    d = dual(tree, c, acc).price
                    chk.require(abs(p - d) <= 1e-6 * (1 + abs(p)), f"tree {i} alpha {a}: {p} vs {d}")


def test_c04_perturbation_bound(capsys):
    with criterion(capsys, 4, "perturbed ask within 2 beta ||S0||_1", 30.0) as chk:
        rng = np.random.default_rng(7)
        for i in range(20):
            tree = random_tree(rng, T=int(rng.integers(1, 4)), max_children=3)
            c = european_call(tree, 100.0)
            acc = AcceptabilitySpec(float(rng.choice([0.3, 0.6, 1.0])))
            base = ask_price_primal(tree, c, acc).price
            s0 = 1 + np.abs(tree.prices[tree.root]).sum()
            for beta_bar in (0.01, 0.1):
                beta = rng.dirichlet(np.ones(tree.T)) * beta_bar * rng.choice([-1, 1], tree.T)
                slack = 2 * beta_bar * s0 - abs(perturbed_ask(tree, c, acc, beta) - base)
                chk.require(slack >= -1e-9, f"instance {i}: slack {slack}")


def test_c05_nested_distance_equivalence(capsys):
    with criterion(capsys, 5, "recursive = LP nested distance; T = 1 equals Wasserstein", 60.0) as chk:
        rng = np.random.default_rng(11)
        for i in range(30):
            T = int(rng.integers(1, 4))
            a = random_tree(rng, T=T, max_children=3, martingale=False)
            b = random_tree(rng, T=T, max_children=3, martingale=False)
            r, lp = nested_distance_recursive(a, b)[0], nested_distance_lp(a, b)[0]
            chk.require(abs(r - lp) <= 1e-6, f"pair {i}: {r} vs {lp}")
            chk.require(abs(nested_distance_recursive(a, a)[0]) <= 1e-12, f"nd(a, a) on pair {i}")
            if T == 1:
                w = wasserstein(stage_distribution(a, 1), stage_distribution(b, 1))[0]
                chk.require(abs(r - w) <= 1e-8, f"pair {i}: nd {r} vs W {w}")
        for i in range(10):
            a = random_tree(rng, T=1, max_children=4, martingale=False)
            b = random_tree(rng, T=1, max_children=4, martingale=False)
            r = nested_distance_recursive(a, b)[0]
            w = wasserstein(stage_distribution(a, 1), stage_distribution(b, 1))[0]
            chk.require(abs(r - w) <= 1e-8, f"one-stage pair {i}: nd {r} vs W {w}")


def test_c06_lipschitz_stability(capsys):
    # alpha = 1 on martingale trees: the ask is the expectation of the claim
    with criterion(capsys, 6, "|ask(a) - ask(b)| <= nd(a, b) for a call", 60.0) as chk:
        rng = np.random.default_rng(13)
        acc = AcceptabilitySpec(1.0)
        for i in range(20):
            a = random_tree(rng, T=int(rng.integers(1, 4)), max_children=3)
            b = martingale_adjusted(perturb_probs(perturb_values(a, rng, 2.0), rng, 0.5))
            strike = float(np.median(a.prices[a.leaves, 0]))
            ca, cb = european_call(a, strike), european_call(b, strike)
            gap = abs(ask_price_primal(a, ca, acc).price - ask_price_primal(b, cb, acc).price)
            nd = nested_distance_recursive(a, b)[0]
            chk.require(gap <= nd + 1e-6, f"pair {i}: gap {gap} vs nd {nd}")


def test_c07_robust_reduction_and_monotonicity(capsys, example1, example2):
    with criterion(capsys, 7, "robust price at eps = 0 and monotone in eps", 120.0) as chk:
        for tree in (example1, example2):
            c = european_call(tree, 95)
            for a in (0.3, 1.0):
                acc = AcceptabilitySpec(a)
                spec = AmbiguitySpec(tree, 0.0)
                for side, fn in (("ask", robust_ask), ("bid", robust_bid)):
                    got, ref = fn(spec, c, acc).price, price(tree, c, acc, side=side).price
                    chk.require(abs(got - ref) <= 1e-6, f"eps = 0 {side} alpha {a}: {got} vs {ref}")
        grid = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0]
        for tree, name in ((example2, "Example 2"), (example1, "Example 1")):
            cells = spread_sweep(tree, european_call(tree, 95), [0.5, 1.0], grid)
            for a in (0.5, 1.0):
                row = [cl for cl in cells if cl.alpha == a]
                asks, bids = [cl.ask for cl in row], [cl.bid for cl in row]
                chk.require(all(y >= x - 1e-7 for x, y in zip(asks, asks[1:])), f"{name} ask {asks}")
                chk.require(all(y <= x + 1e-7 for x, y in zip(bids, bids[1:])), f"{name} bid {bids}")


TRI_X = np.array([112.0, 101.0, 90.0])
TRI_P = np.array([0.3, 0.45, 0.25])


def _binary_grid_oracle(tree, claim, h=1e-3):
    """Grid search for a two-stage binary tree.

    Transition probabilities on a step-``h`` grid that make every inner node
    a martingale: each node admits at most one such grid point, so the robust
    price is the claim's value under that measure whenever the ball holds a
    model dominating it (the baseline is checked as witness).
    """
    q = np.ones(tree.n_nodes)
    grid = np.arange(0, 1 + h / 2, h)
    for k in tree.inner_nodes:
        kids = tree.children[k]
        lo, hi = tree.prices[kids, 0]
        mean = grid * lo + (1 - grid) * hi
        hit = np.flatnonzero(np.abs(mean - tree.prices[k, 0]) <= 1e-9)
        assert hit.size == 1
        q[kids] = grid[hit[0]], 1 - grid[hit[0]]
    Q = np.ones(tree.n_nodes)
    for n in range(1, tree.n_nodes):
        Q[n] = Q[tree.parent[n]] * q[n]
    return float(Q[tree.leaves] @ np.asarray(claim.cashflows)[tree.leaves]), Q


def test_c08_robust_grid_oracle(capsys, example2):
    with criterion(capsys, 8, "robust ask/bid against grid search", 600.0) as chk:
        c2 = european_call(example2, 95)
        ref, Q = _binary_grid_oracle(example2, c2)
        for a in (0.7, 0.9):
            chk.require(np.all(a * Q <= example2.node_prob + 1e-12), "baseline is not a witness")
            for eps in (0.5, 1.0, 2.0):
                spec, acc = AmbiguitySpec(example2, eps), AcceptabilitySpec(a)
                for fn in (robust_ask, robust_bid):
                    got = fn(spec, c2, acc).price
                    chk.require(abs(got - ref) <= 5e-3, f"binary alpha {a} eps {eps}: {got} vs {ref}")
        # a one-stage trinomial whose baseline is not a martingale
        tri = from_path_matrix(np.array([[100.0] * 3, TRI_X]), TRI_P)
        c3 = european_call(tri, 95)
        for a in (0.7, 0.9):
            for eps in (0.5, 1.0, 2.0):
                spec, acc = AmbiguitySpec(tri, eps), AcceptabilitySpec(a)
                for side, fn in (("ask", robust_ask), ("bid", robust_bid)):
                    got = fn(spec, c3, acc).price
                    ref = robust_one_period(TRI_X, TRI_P, 100.0, 95.0, a, eps, h=2.5e-4, side=side)
                    chk.require(abs(got - ref) <= 5e-3, f"trinomial {side} alpha {a} eps {eps}: {got} vs {ref}")
                    # the grid only visits part of the ball; slack is the LP optimality tolerance
                    tol = 1e-8 * (1 + abs(ref))
                    beyond = got >= ref - tol if side == "ask" else got <= ref + tol
                    chk.require(beyond, f"trinomial {side} alpha {a} eps {eps} less extreme than the grid")


def test_c09_black_scholes(capsys):
    with criterion(capsys, 9, "500-node lognormal tree recovers Black-Scholes", 300.0) as chk:
        tree = lognormal_tree(500)
        c = european_call(tree, 95.0 * math.exp(-0.01))  # discounted strike on discounted prices
        acc = AcceptabilitySpec(1.0)
        spec = AmbiguitySpec(tree, 0.0)
        ask, bid = robust_ask(spec, c, acc).price, robust_bid(spec, c, acc).price
        bs = black_scholes(100.0, 95.0, 0.01, 0.2, 1.0)
        chk.require(abs(ask - bid) <= 1e-6 * (1 + abs(ask)), f"bid {bid} != ask {ask}")
        rel = abs(ask - bs) / bs
        chk.require(rel <= 5e-3, f"relative error {rel:.2e}")
        digits = -math.log10(rel) if rel > 0 else math.inf
        with capsys.disabled():
            print(f"\n  tree {ask:.7f}, Black-Scholes {bs:.7f}, relative error {rel:.2e} "
                  f"(about {digits:.1f} matching digits)")


def test_c10_large_deviation_experiment(capsys, example2):
    with criterion(capsys, 10, "median nested distance decreases with sample size", 600.0) as chk:
        rows = ld_convergence_experiment(example2, [50, 200, 800], 20, seed=0)
        med = [r.median_nd for r in rows]
        chk.require(med[0] > med[1] > med[2], f"medians {med}")
        with capsys.disabled():
            print("\n  medians " + ", ".join(f"n={r.n}: {r.median_nd:.4f}" for r in rows))


def _smooth_density(rng, xs, amp):
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    f = np.ones_like(X)
    for _ in range(3):
        k, l = rng.integers(1, 4, 2)
        f += amp * rng.uniform(-1, 1) * np.cos(k * np.pi * X) * np.cos(l * np.pi * Y)
    return f / np.trapezoid(np.trapezoid(f, xs, axis=1), xs)


def test_c11_density_bounds(capsys):
    with criterion(capsys, 11, "Wasserstein and conditional-density bounds on [0,1]^2", 60.0) as chk:
        rng = np.random.default_rng(17)
        xs = np.linspace(0, 1, 41)
        for i in range(10):
            f = _smooth_density(rng, xs, 0.15)
            g = _smooth_density(rng, xs, 0.01) * 0.05 + 0.95 * f
            rep = bound_check_wasserstein_supnorm(f, g, ((0, 1), (0, 1)))
            chk.require(rep.precondition_ok, f"pair {i} misses the closeness hypothesis")
            chk.require(rep.wasserstein_ok, f"pair {i}: W {rep.wasserstein} > {rep.wasserstein_bound}")
            chk.require(rep.conditional_ok is True, f"pair {i}: conditional {rep.conditional_sup_diff} "
                                                    f"> {rep.conditional_bound}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
