import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rcpricing.synthetic import perturb_probs, perturb_values, random_tree
from rcpricing.transport import (DimensionMismatch, DiscreteDistribution, nested_distance_lp,
                                 nested_distance_recursive, path_distance_matrix, path_distribution,
                                 stage_distribution, wasserstein)
from rcpricing.tree import chain_tree, from_path_matrix

from oracles import wasserstein_1d


def test_wasserstein_small_cases():
    d = lambda a, w: DiscreteDistribution(np.array(a, float), np.array(w, float))
    assert wasserstein(d([0], [1]), d([3], [1]))[0] == pytest.approx(3)
    assert wasserstein(d([0, 1], [.5, .5]), d([1, 2], [.5, .5]))[0] == pytest.approx(1)
    val, plan = wasserstein(d([0, 1, 4], [.2, .3, .5]), d([0, 1, 4], [.2, .3, .5]))
    assert val == pytest.approx(0, abs=1e-12)
    np.testing.assert_allclose(plan.sum(axis=1), [.2, .3, .5], atol=1e-8)
    with pytest.raises(DimensionMismatch):
        wasserstein(d([0], [1]), DiscreteDistribution(np.zeros((1, 2)), np.ones(1)))


@given(st.integers(0, 2**31 - 1))
def test_wasserstein_matches_cdf_formula(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=4), rng.normal(size=5)
    p, q = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(5))
    got = wasserstein(DiscreteDistribution(x, p), DiscreteDistribution(y, q))[0]
    assert got == pytest.approx(wasserstein_1d(x, p, y, q), abs=1e-9)


def test_path_distance_example2(example2):
    D = path_distance_matrix(example2, example2)
    assert D[0, 1] == pytest.approx(6)  # 108-path vs 102-path
    assert np.all(np.diag(D) == 0) and np.allclose(D, D.T)
    a, b = chain_tree([1, 2, 3]), chain_tree([1, 4, 5])
    assert path_distance_matrix(a, b)[0, 0] == pytest.approx(4)


def test_shifted_example2_against_joint_lp(example2):
    shifted = example2.with_prices(example2.prices + (example2.stage == 2)[:, None])
    # common structure, identical probabilities: diagonal coupling costs 1 per path
    assert nested_distance_lp(example2, shifted)[0] == pytest.approx(1.0, abs=1e-9)
    assert nested_distance_recursive(example2, shifted)[0] == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=30)
@given(st.integers(0, 2**31 - 1))
def test_recursive_equals_monolithic(seed):
    rng = np.random.default_rng(seed)
    a = random_tree(rng, T=int(rng.integers(1, 4)), max_children=3)
    b = perturb_values(perturb_probs(a, rng), rng, 3.0)
    r, tables, plan = nested_distance_recursive(a, b, with_plan=True)
    m, _ = nested_distance_lp(a, b)
    assert r == pytest.approx(m, abs=1e-6)
    assert plan.joint.sum() == pytest.approx(1)
    np.testing.assert_allclose(plan.joint.sum(axis=1), a.node_prob[a.leaves], atol=1e-8)
    assert nested_distance_recursive(a, a)[0] == pytest.approx(0, abs=1e-12)
    # nested >= plain Wasserstein of path laws
    assert r >= wasserstein(path_distribution(a), path_distribution(b))[0] - 1e-8


@settings(max_examples=20)
@given(st.integers(0, 2**31 - 1))
def test_symmetry_and_triangle(seed):
    rng = np.random.default_rng(seed)
    a = random_tree(rng, T=2, max_children=2, branching=(2, 2))
    b = perturb_values(perturb_probs(a, rng), rng, 2.0)
    c = perturb_values(perturb_probs(a, rng), rng, 2.0)
    ab = nested_distance_recursive(a, b)[0]
    assert nested_distance_recursive(b, a)[0] == pytest.approx(ab, abs=1e-8)
    assert nested_distance_recursive(a, c)[0] <= ab + nested_distance_recursive(b, c)[0] + 1e-6


@given(st.integers(0, 2**31 - 1))
def test_one_period_equals_wasserstein(seed):
    rng = np.random.default_rng(seed)
    a = random_tree(rng, T=1, max_children=4)
    b = random_tree(rng, T=1, max_children=4)
    w = wasserstein(stage_distribution(a, 1), stage_distribution(b, 1))[0]
    assert nested_distance_recursive(a, b)[0] == pytest.approx(w, abs=1e-8)
    assert nested_distance_lp(a, b)[0] == pytest.approx(w, abs=1e-8)


def test_differing_structures_allowed():
    a = from_path_matrix(np.array([[5, 5], [6, 4]], float))
    b = from_path_matrix(np.array([[5, 5, 5], [7, 5, 3]], float))
    assert nested_distance_recursive(a, b)[0] == pytest.approx(nested_distance_lp(a, b)[0], abs=1e-9)
