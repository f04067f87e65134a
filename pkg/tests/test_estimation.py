import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import wasserstein_distance

from rcpricing.estimation import (
    GridMismatch, InsufficientData, KernelSpec, LdBoundParams, MissingConstant, SamplePaths,
    VanishingMarginal, bound_check_wasserstein_supnorm, conditional_density, kernel_density,
    ld_convergence_experiment, ld_sample_bound, lognormal_samples, quantize_tree, write_convergence_csv,
)
from rcpricing.tree import validate

from oracles import kde_direct


def _paths(arr):
    a = np.asarray(arr, dtype=float)
    return SamplePaths(a.reshape(a.shape[0], -1, 1))


# ---------------------------------------------------------------- kernel

def test_kernel_support_and_peak():
    spec = KernelSpec(0.5, 2)
    assert spec.k_h(np.array([0.6, 0.0])) == 0.0
    assert spec.k_h(np.array([0.0, 0.0])) == pytest.approx(spec.normalizer / 0.25)
    assert spec.normalizer == pytest.approx(3 / math.pi)


@settings(max_examples=25)
@given(st.integers(0, 10_000), st.floats(0.05, 2.0), st.integers(1, 3))
def test_kde_matches_direct_sum(seed, h, dim):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(15, dim))
    q = rng.normal(size=dim) * 0.5
    paths = SamplePaths(np.concatenate([np.zeros((15, 1, dim)), X[:, None, :]], axis=1))
    spec = KernelSpec(h, dim)
    assert kernel_density(paths, spec, q) == pytest.approx(kde_direct(X, h, spec.normalizer, q), rel=1e-12, abs=1e-14)


@pytest.mark.parametrize("dim", [1, 2])
def test_kde_integrates_to_one(dim):
    rng = np.random.default_rng(dim)
    X = rng.normal(size=(40, dim))
    paths = SamplePaths(np.concatenate([np.zeros((40, 1, dim)), X[:, None, :]], axis=1))
    spec = KernelSpec(0.7, dim)
    axes = [np.linspace(X[:, d].min() - 0.8, X[:, d].max() + 0.8, 401 if dim == 1 else 301) for d in range(dim)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    vals = kernel_density(paths, spec, mesh).reshape([a.size for a in axes])
    for d in range(dim - 1, -1, -1):
        vals = np.trapezoid(vals, axes[d], axis=d)
    assert float(vals) == pytest.approx(1.0, abs=1e-3)


def test_kernel_sampler_stays_in_support():
    spec = KernelSpec((0.3, 2.0), 2)
    draws = spec.sample(5000, np.random.default_rng(0))
    assert np.all(np.linalg.norm(draws / spec.h, axis=1) <= 1 + 1e-12)
    # radius ~ Beta(2, 2) in two dimensions
    assert np.linalg.norm(draws / spec.h, axis=1).mean() == pytest.approx(0.5, abs=0.02)


def test_bandwidth_helpers():
    assert KernelSpec.from_accuracy(0.2, 5.0, 1).bandwidth == pytest.approx(0.02)
    with pytest.raises(ValueError):
        KernelSpec(-1.0, 1)
    paths = _paths(np.c_[np.zeros(100), np.arange(100.0)])
    h = KernelSpec.rule_of_thumb(paths).h[0]
    assert h == pytest.approx(np.std(np.arange(100.0), ddof=1) * 100 ** (-0.2))


# ---------------------------------------------------------------- conditional density

def test_conditional_density_integrates_to_one():
    rng = np.random.default_rng(3)
    data = np.cumsum(rng.normal(size=(80, 3)), axis=1)
    data[:, 0] = 0.0
    paths = _paths(data)
    spec = KernelSpec(1.0, 2)
    hist = [float(np.median(data[:, 1]))]
    ys = np.linspace(data[:, 2].min() - 1.1, data[:, 2].max() + 1.1, 801)
    f = [conditional_density(paths, spec, hist, [y]) for y in ys]
    assert np.trapezoid(f, ys) == pytest.approx(1.0, abs=1e-3)


def test_independent_stages_give_history_free_conditional():
    rng = np.random.default_rng(11)
    n = 20_000
    data = np.c_[np.zeros(n), rng.uniform(0, 1, n), rng.uniform(0, 1, n)]
    paths = _paths(data)
    spec = KernelSpec(0.15, 2)
    for y in (0.3, 0.5, 0.7):
        a = conditional_density(paths, spec, [0.35], [y])
        b = conditional_density(paths, spec, [0.65], [y])
        assert abs(a - b) < 0.1


def test_single_sample_conditional_is_the_kernel_slice():
    paths = _paths([[0.0, 1.0, 2.0]])
    spec = KernelSpec(0.5, 2)
    val = conditional_density(paths, spec, [1.0], [2.0])
    # the slice of a 2-D tent through its centre is a 1-D tent of the same radius
    assert val == pytest.approx(2.0, rel=1e-3)


def test_vanishing_marginal():
    paths = _paths([[0.0, 1.0, 2.0], [0.0, 1.2, 2.5]])
    with pytest.raises(VanishingMarginal):
        conditional_density(paths, KernelSpec(0.1, 2), [10.0], [2.0])


# ---------------------------------------------------------------- quantization

def test_identical_samples_give_a_chain():
    paths = _paths(np.tile([100.0, 101.0, 99.0], (10, 1)))
    tree = quantize_tree(paths, [3, 3])
    assert tree.n_nodes == 3
    assert np.allclose(tree.cond_prob, 1.0)
    assert np.allclose(tree.prices[:, 0], [100.0, 101.0, 99.0])


def test_two_paths_split_evenly():
    paths = _paths([[5.0, 6.0, 7.0], [5.0, 4.0, 3.0]])
    tree = quantize_tree(paths, [2, 1])
    assert np.allclose(tree.cond_prob[tree.nodes_at(1)], 0.5)
    assert tree.prices[tree.nodes_at(1), 0].tolist() == [6.0, 4.0]  # descending


def test_insufficient_data():
    with pytest.raises(InsufficientData):
        quantize_tree(_paths([[0.0, 1.0], [0.0, 2.0]]), [3])


@settings(max_examples=20)
@given(st.integers(0, 10_000), st.integers(1, 3), st.integers(1, 3), st.booleans())
def test_quantized_tree_is_valid(seed, b1, b2, smooth):
    rng = np.random.default_rng(seed)
    data = 10 + np.c_[np.zeros(30), rng.normal(size=(30, 2))]
    spec = KernelSpec(0.3, 2) if smooth else None
    tree = quantize_tree(_paths(data), [b1, b2], spec, seed=seed)
    assert validate(tree).ok
    assert np.all(tree.prices[tree.leaves, 0] >= data[:, 2].min() - 0.3 - 1e-9)


def test_lloyd_beats_random_codebook():
    samples = lognormal_samples(20_000)
    x = samples.data[:, 1, 0]
    tree = quantize_tree(samples, [50])
    leaves = tree.leaves
    w_tree = wasserstein_distance(x, tree.prices[leaves, 0], None, tree.cond_prob[leaves])
    rng = np.random.default_rng(0)
    codebook = rng.choice(x, 50, replace=False)
    idx = np.argmin(np.abs(x[:, None] - codebook[None, :]), axis=1)
    w_rand = wasserstein_distance(x, codebook, None, np.bincount(idx, minlength=50) / x.size)
    assert w_tree < w_rand
    # discounted, moment-matched samples give a martingale root
    assert tree.prices[leaves, 0] @ tree.cond_prob[leaves] == pytest.approx(100.0, rel=1e-10)


# ---------------------------------------------------------------- large deviations

def test_sample_bound_values():
    assert ld_sample_bound(LdBoundParams(1, 1.0, K=1.0), 1e-9) == 1
    assert ld_sample_bound(LdBoundParams(1, 1.0, K=1.0), 0.5) == 1
    assert ld_sample_bound(LdBoundParams(1, 0.5, K=0.5), 0.95) == math.ceil(math.log(20) / (0.5 * 0.5 ** 6)) == 384


@settings(max_examples=30)
@given(st.floats(0.01, 10), st.floats(0.05, 2), st.integers(1, 3), st.floats(0.01, 0.999))
def test_sample_bound_is_smallest(K, eps, ell, conf):
    p = LdBoundParams(ell, eps, K=K)
    n = ld_sample_bound(p, conf)
    tail = lambda m: math.exp(-K * m * eps ** (2 * ell + 4))
    assert tail(n) <= (1 - conf) * (1 + 1e-8)
    assert n == 1 or tail(n - 1) > (1 - conf) * (1 - 1e-8)


def test_missing_constant():
    with pytest.raises(MissingConstant):
        ld_sample_bound(LdBoundParams(1, 0.1, L=2.0), 0.9)


def test_composed_constant():
    p = LdBoundParams(1, 0.1, kappa_prime=1.0, L=1.0, c_lower=0.5, c_upper=2.0, Delta=1.0,
                      lambda_D1=1.0, lambda_D=1.0, gammas=(1.0,))
    c = p.composed()
    assert c["kappa1"] == pytest.approx(2 + 2 * 2 / 0.25)
    assert c["kappa3"] == pytest.approx(2 * c["kappa1"])
    assert c["kappa2"] == pytest.approx((2 * c["kappa3"]) ** -6)
    assert c["K_sup"] == pytest.approx(c["kappa2"])
    assert p.rate() == pytest.approx(0.999 * c["K_sup"])
    two = LdBoundParams(1, 0.1, kappa_prime=1.0, L=1.0, c_lower=0.5, c_upper=2.0, Delta=1.0,
                        lambda_D1=1.0, lambda_D=1.0, gammas=(1.0, 0.5)).composed()
    assert two["K_sup"] == pytest.approx(c["kappa2"] / (2 * 1.5) ** 6)


def test_convergence_experiment(example2, tmp_path):
    rows = ld_convergence_experiment(example2, [50, 200, 800], 10, seed=1)
    med = [r.median_nd for r in rows]
    assert med[0] > med[1] > med[2]
    assert all(r.q10 <= r.median_nd <= r.q90 for r in rows)
    again = ld_convergence_experiment(example2, [50], 10, seed=1)
    assert np.array_equal(again[0].values, rows[0].values)
    single = ld_convergence_experiment(example2, [50], 1, seed=1)
    assert math.isnan(single[0].q10) and math.isnan(single[0].q90)
    write_convergence_csv(single, tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().splitlines()[1].endswith(",,")


# ---------------------------------------------------------------- density bounds

def _grid(fn, n=41):
    xs = np.linspace(0, 1, n)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    return fn(X, Y)


def test_bound_check_identical():
    f = _grid(lambda x, y: 1 + 0.3 * np.sin(3 * x) * np.cos(2 * y))
    rep = bound_check_wasserstein_supnorm(f, f, ((0, 1), (0, 1)))
    assert rep.sup_diff == 0
    assert rep.wasserstein == pytest.approx(0, abs=1e-9)
    assert rep.ok and rep.conditional_ok


def test_bound_check_close_densities():
    f = _grid(lambda x, y: 1 + 0.2 * (x - 0.5))
    g = _grid(lambda x, y: 1 + 0.2 * (x - 0.5) + 0.01 * np.cos(np.pi * y))
    rep = bound_check_wasserstein_supnorm(f, g, ((0, 1), (0, 1)))
    assert rep.precondition_ok
    assert rep.wasserstein_ok and rep.conditional_ok


def test_bound_check_precondition_gate():
    f = _grid(lambda x, y: 0.2 + 1.6 * x)
    g = _grid(lambda x, y: 1.8 - 1.6 * x)
    rep = bound_check_wasserstein_supnorm(f, g, ((0, 1), (0, 1)))
    assert not rep.precondition_ok
    assert rep.conditional_ok is None
    assert rep.wasserstein_ok


def test_bound_check_grid_mismatch():
    with pytest.raises(GridMismatch):
        bound_check_wasserstein_supnorm(np.ones((5, 5)), np.ones((5, 6)), ((0, 1), (0, 1)))
