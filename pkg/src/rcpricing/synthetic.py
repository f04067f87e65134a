"""Random scenario trees for experiments and property tests."""

from __future__ import annotations

import numpy as np

from .tree import ScenarioTree, martingale_adjusted


def random_tree(rng: np.random.Generator, T: int = 2, max_children: int = 3, assets: int = 1,
                root: float = 100.0, vol: float = 0.08, min_children: int = 1,
                martingale: bool = True, branching: tuple[int, ...] | None = None) -> ScenarioTree:
    """Tree with random branching, Dirichlet transition probabilities and
    multiplicative lognormal-ish moves.

    With ``martingale=True`` sibling values are rescaled so that the
    physical measure is a martingale measure.  ``branching`` fixes the
    number of children per stage.
    """
    parent, stage, prices, cond = [-1], [0], [np.full(assets, root)], [1.0]
    frontier = [0]
    for t in range(1, T + 1):
        nxt = []
        for k in frontier:
            c = branching[t - 1] if branching else int(rng.integers(min_children, max_children + 1))
            p = rng.dirichlet(np.full(c, 2.0))
            for i in range(c):
                move = np.exp(vol * rng.standard_normal(assets))
                parent.append(k)
                stage.append(t)
                prices.append(prices[k] * move)
                cond.append(float(p[i]))
                nxt.append(len(parent) - 1)
        frontier = nxt
    tree = ScenarioTree(np.array(parent), np.array(stage), np.array(prices), np.array(cond), T)
    return martingale_adjusted(tree) if martingale else tree


def perturb_probs(tree: ScenarioTree, rng: np.random.Generator, strength: float = 0.5) -> ScenarioTree:
    """Same structure and values, transition probabilities mixed with Dirichlet noise."""
    cond = tree.cond_prob.copy()
    for k in tree.inner_nodes:
        kids = tree.children[k]
        noise = rng.dirichlet(np.ones(kids.size))
        cond[kids] = (1 - strength) * cond[kids] + strength * noise
    return tree.with_cond_probs(cond)


def perturb_values(tree: ScenarioTree, rng: np.random.Generator, scale: float = 1.0) -> ScenarioTree:
    """Same structure and probabilities; every non-root value shifted by noise."""
    prices = tree.prices.copy()
    prices[1:] = np.maximum(prices[1:] + scale * rng.standard_normal(prices[1:].shape), 0.0)
    return tree.with_prices(prices)
