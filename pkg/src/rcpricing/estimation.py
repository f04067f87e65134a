"""From sampled paths to scenario trees: kernel smoothing, conditional
densities, stagewise quantization and large-deviation sample sizes."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln
from scipy.stats import norm

from .transport import DimensionMismatch, nested_distance_recursive, transport
from .tree import ScenarioTree, require_valid

DENSITY_FLOOR = 1e-12
LLOYD_ITERATIONS = 20


class VanishingMarginal(ValueError):
    """Marginal density of the conditioning history is below the floor."""


class InsufficientData(ValueError):
    pass


class MissingConstant(ValueError):
    """The large-deviation rate constant is existential and was not supplied."""


class GridMismatch(ValueError):
    pass


# ---------------------------------------------------------------------------
# samples
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SamplePaths:
    """``n`` paths of shape ``(T+1, m)``, stage 0 included."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=float)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[0] == 0:
            raise ValueError("sample paths must be an (n, T+1, m) array with n >= 1")
        if not np.all(np.isfinite(arr)):
            raise ValueError("sample paths must be finite")
        object.__setattr__(self, "data", arr)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def T(self) -> int:
        return self.data.shape[1] - 1

    @property
    def m(self) -> int:
        return self.data.shape[2]

    def flat(self, stages: int | None = None) -> np.ndarray:
        """Stages ``1..stages`` flattened stage-major: ``(n, m*stages)``."""
        s = self.T if stages is None else stages
        return self.data[:, 1:s + 1, :].reshape(self.n, -1)

    @classmethod
    def from_csv(cls, path, assets: int = 1) -> "SamplePaths":
        rows = []
        with open(path, newline="", encoding="utf-8") as fh:
            for k, row in enumerate(csv.reader(fh)):
                if not row:
                    continue
                try:
                    rows.append([float(v) for v in row])
                except ValueError:
                    if k == 0:
                        continue  # header
                    raise
        arr = np.array(rows, dtype=float)
        if arr.ndim != 2 or arr.shape[1] % assets:
            raise ValueError(f"rows must hold a multiple of {assets} values")
        return cls(arr.reshape(arr.shape[0], -1, assets))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            for p in self.data.reshape(self.n, -1):
                w.writerow([repr(float(v)) for v in p])


# ---------------------------------------------------------------------------
# kernel
# ---------------------------------------------------------------------------

def unit_ball_volume(dim: int) -> float:
    return math.exp(0.5 * dim * math.log(math.pi) - gammaln(0.5 * dim + 1))


@dataclass(frozen=True)
class KernelSpec:
    """Tent kernel ``k(x) = c * max(0, 1 - |x|)`` on the unit ball of R^dim,
    scaled by a bandwidth (scalar or one per coordinate)."""

    bandwidth: float | tuple[float, ...]
    dim: int

    def __post_init__(self) -> None:
        h = np.atleast_1d(np.asarray(self.bandwidth, dtype=float))
        if self.dim < 1:
            raise ValueError("kernel dimension must be >= 1")
        if np.any(~(h > 0)) or h.size not in (1, self.dim):
            raise ValueError(f"bandwidth must be positive (scalar or {self.dim} values)")
        object.__setattr__(self, "bandwidth", float(h[0]) if h.size == 1 else tuple(map(float, h)))

    @property
    def h(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.bandwidth, dtype=float), (self.dim,))

    @property
    def normalizer(self) -> float:
        return (self.dim + 1) / unit_ball_volume(self.dim)

    @property
    def lipschitz(self) -> float:
        """Lipschitz constant of the unscaled kernel ``k``."""
        return self.normalizer

    @property
    def scaled_lipschitz(self) -> float:
        """Lipschitz constant of ``k_h`` (smallest bandwidth governs)."""
        hmin = float(self.h.min())
        return self.normalizer / (float(np.prod(self.h)) * hmin)

    def k(self, x: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
        return self.normalizer * np.maximum(0.0, 1.0 - r)

    def k_h(self, x: np.ndarray) -> np.ndarray:
        return self.k(np.asarray(x, dtype=float) / self.h) / float(np.prod(self.h))

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        """Draws from ``k_h``: radius ~ Beta(dim, 2), uniform direction."""
        d = rng.standard_normal((size, self.dim))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        r = rng.beta(self.dim, 2.0, size)
        return d * r[:, None] * self.h

    def restricted(self, dim: int) -> "KernelSpec":
        """Same family on the first ``dim`` coordinates."""
        h = self.h[:dim]
        return KernelSpec(float(h[0]) if np.all(h == h[0]) else tuple(h), dim)

    @classmethod
    def from_accuracy(cls, eps: float, L: float, dim: int) -> "KernelSpec":
        """Bandwidth ``h = eps / (2 L)``."""
        if eps <= 0 or L <= 0:
            raise ValueError("eps and L must be positive")
        return cls(eps / (2 * L), dim)

    @classmethod
    def rule_of_thumb(cls, samples: SamplePaths) -> "KernelSpec":
        """``h_i = sd_i * n^(-1/(dim+4))``; constant coordinates get a tiny floor."""
        X = samples.flat()
        dim = X.shape[1]
        sd = X.std(axis=0, ddof=1) if samples.n > 1 else np.zeros(dim)
        scale = np.where(sd > 0, sd, 1e-6 * (1 + np.abs(X.mean(axis=0))))
        return cls(tuple(scale * samples.n ** (-1.0 / (dim + 4))), dim)


def kernel_density(samples: SamplePaths, spec: KernelSpec, query) -> np.ndarray | float:
    """``(1/n) sum_j k_h(query - xi_j)`` on flattened stages ``1..T``.

    ``query`` is one point of length ``spec.dim`` or an array of points.
    """
    X = samples.flat()
    if X.shape[1] != spec.dim:
        raise DimensionMismatch(f"samples have {X.shape[1]} coordinates, kernel expects {spec.dim}")
    return _kde(X, spec, query)


def _kde(X: np.ndarray, spec: KernelSpec, query) -> np.ndarray | float:
    Q = np.asarray(query, dtype=float)
    single = Q.ndim == 1
    Q = np.atleast_2d(Q)
    if Q.shape[1] != spec.dim:
        raise DimensionMismatch(f"query has {Q.shape[1]} coordinates, kernel expects {spec.dim}")
    out = np.empty(Q.shape[0])
    chunk = max(1, 2_000_000 // max(X.shape[0], 1))
    for s in range(0, Q.shape[0], chunk):
        diff = Q[s:s + chunk, None, :] - X[None, :, :]
        out[s:s + chunk] = spec.k_h(diff).mean(axis=1)
    return float(out[0]) if single else out


def conditional_density(samples: SamplePaths, spec: KernelSpec, history, point,
                        grid_points: int = 401, floor: float = DENSITY_FLOOR) -> float:
    """``f(point | history)`` for stage ``t = len(history)/m + 1``.

    The joint estimate uses the kernel restricted to stages ``1..t``; the
    marginal of the history integrates that joint over a bounded grid in the
    stage-``t`` coordinates (trapezoid rule).
    """
    m = samples.m
    hist = np.atleast_1d(np.asarray(history, dtype=float))
    pt = np.atleast_1d(np.asarray(point, dtype=float))
    if pt.size != m or hist.size % m:
        raise DimensionMismatch(f"point needs {m} values and history a multiple of {m}")
    t = hist.size // m + 1
    if t > samples.T:
        raise DimensionMismatch(f"history covers {t - 1} stages; samples have {samples.T}")
    kern = spec.restricted(m * t)
    X = samples.flat(t)
    marginal = conditional_marginal(samples, kern, hist, grid_points)
    if not marginal > floor:
        raise VanishingMarginal(f"marginal density {marginal:.3g} at the given history is below {floor:g}")
    return float(_kde(X, kern, np.r_[hist, pt])) / marginal


def conditional_marginal(samples: SamplePaths, kern: KernelSpec, hist: np.ndarray,
                         grid_points: int = 401) -> float:
    """``int f(hist, x) dx`` over a box covering all stage-t kernel supports."""
    m = samples.m
    t = hist.size // m + 1
    X = samples.flat(t)
    h_last = kern.h[-m:]
    lo = X[:, -m:].min(axis=0) - h_last
    hi = X[:, -m:].max(axis=0) + h_last
    per_dim = max(3, int(round(grid_points ** (1.0 / m))))
    axes = [np.linspace(lo[d], hi[d], per_dim) for d in range(m)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, m)
    pts = np.hstack([np.broadcast_to(hist, (mesh.shape[0], hist.size)), mesh])
    vals = np.asarray(_kde(X, kern, pts)).reshape([per_dim] * m)
    for d in range(m - 1, -1, -1):
        vals = np.trapezoid(vals, axes[d], axis=d)
    return float(vals)


# ---------------------------------------------------------------------------
# quantization
# ---------------------------------------------------------------------------

def _lloyd(X: np.ndarray, k: int, iterations: int = LLOYD_ITERATIONS) -> tuple[np.ndarray, np.ndarray]:
    """Cluster rows of ``X``; returns ``(centers, labels)``.

    Fewer than ``k`` distinct rows gives one cluster per distinct row.
    Initial centres are stratified quantiles along the first coordinate.
    """
    distinct = np.unique(X, axis=0)
    if distinct.shape[0] <= k:
        labels = np.unique(X, axis=0, return_inverse=True)[1].ravel()
        return distinct, labels
    order = np.argsort(X[:, 0], kind="stable")
    picks = order[((np.arange(k) + 0.5) / k * X.shape[0]).astype(int)]
    centers = X[picks].copy()
    one_d = X.shape[1] == 1
    for _ in range(iterations):
        labels = _assign(X, centers, one_d)
        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, X)
        empty = counts == 0
        centers[~empty] = sums[~empty] / counts[~empty, None]
        if empty.any():
            # reseed empty cells with the points worst served by their centre
            d = np.linalg.norm(X - centers[labels], axis=1)
            far = np.argsort(-d, kind="stable")[: int(empty.sum())]
            centers[empty] = X[far]
    labels = _assign(X, centers, one_d)
    used = np.unique(labels)
    remap = np.full(k, -1)
    remap[used] = np.arange(used.size)
    centers = np.stack([X[labels == c].mean(axis=0) for c in used])
    return centers, remap[labels]


def _assign(X: np.ndarray, centers: np.ndarray, one_d: bool) -> np.ndarray:
    if one_d:
        order = np.argsort(centers[:, 0], kind="stable")
        c = centers[order, 0]
        cut = (c[1:] + c[:-1]) / 2
        return order[np.searchsorted(cut, X[:, 0], side="left")]
    out = np.empty(X.shape[0], dtype=int)
    step = max(1, 4_000_000 // max(centers.shape[0], 1))
    for s in range(0, X.shape[0], step):
        d = ((X[s:s + step, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        out[s:s + step] = np.argmin(d, axis=1)
    return out


def quantize_tree(samples: SamplePaths, branching: Sequence[int], spec: KernelSpec | None = None,
                  seed: int = 0, replicas: int = 1) -> ScenarioTree:
    """Stagewise clustering of sample paths into a scenario tree.

    Samples at stage ``t`` are clustered separately within each stage-(t-1)
    cluster; node values are cluster means and conditional probabilities are
    cluster frequencies.  With a kernel ``spec`` the paths are first smoothed
    (``replicas`` kernel draws per path, seeded by ``seed``).
    """
    branching = [int(b) for b in branching]
    if len(branching) != samples.T or any(b < 1 for b in branching):
        raise ValueError(f"branching needs {samples.T} entries >= 1")
    if samples.n < int(np.prod(branching)):
        raise InsufficientData(f"{samples.n} paths cannot fill {int(np.prod(branching))} leaves")
    data = samples.data
    if spec is not None:
        rng = np.random.default_rng(seed)
        reps = np.repeat(data, replicas, axis=0)
        noise = spec.sample(reps.shape[0], rng).reshape(reps.shape[0], samples.T, samples.m)
        data = reps.copy()
        data[:, 1:, :] += noise
    n = data.shape[0]
    parent, stage, prices, cond = [-1], [0], [data[:, 0, :].mean(axis=0)], [1.0]
    members = {0: np.arange(n)}
    for t in range(1, samples.T + 1):
        nxt = {}
        for k in sorted(members):
            idx = members[k]
            centers, labels = _lloyd(data[idx, t, :], branching[t - 1])
            order = np.lexsort(centers.T[::-1])[::-1]  # descending by first coordinate
            for c in order:
                sel = idx[labels == c]
                parent.append(k)
                stage.append(t)
                prices.append(centers[c])
                cond.append(sel.size / idx.size)
                nxt[len(parent) - 1] = sel
        members = nxt
    tree = ScenarioTree(np.array(parent), np.array(stage), np.array(prices), np.array(cond), samples.T)
    require_valid(tree)
    return tree


# ---------------------------------------------------------------------------
# large deviations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LdBoundParams:
    """Inputs of the tail bound ``exp(-K n eps^(2 ell + 4))``.

    ``K`` may be given directly or composed from the proof ingredients
    (``kappa_prime``, ``L``, ``c_lower``, ``c_upper``, ``Delta``,
    ``lambda_D1``, ``lambda_D``, ``gammas``), all of which must then be set.
    """

    ell: int
    eps: float
    K: float | None = None
    kappa_prime: float | None = None
    L: float | None = None
    c_lower: float | None = None
    c_upper: float | None = None
    Delta: float | None = None
    lambda_D1: float | None = None
    lambda_D: float | None = None
    gammas: tuple[float, ...] | None = None
    K_margin: float = 0.999

    def __post_init__(self) -> None:
        if self.ell < 1 or not self.eps > 0:
            raise ValueError("ell must be >= 1 and eps > 0")
        for name in ("K", "kappa_prime", "L", "c_lower", "c_upper", "Delta", "lambda_D1", "lambda_D"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive")
        if self.gammas is not None:
            object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
            if not self.gammas or any(not g > 0 for g in self.gammas):
                raise ValueError("gammas must be positive")

    def composed(self) -> dict[str, float]:
        """Constants of the proof chain; ``K_sup`` is the supremum of admissible K."""
        needed = ("kappa_prime", "L", "c_lower", "c_upper", "Delta", "lambda_D1", "lambda_D", "gammas")
        missing = [n for n in needed if getattr(self, n) is None]
        if missing:
            raise MissingConstant(
                "the rate constant K is only known to exist; supply K or all of: " + ", ".join(missing))
        p = 2 * self.ell + 4
        cl = self.c_lower * self.lambda_D1
        kappa1 = 1.0 / cl + 2.0 * self.c_upper * self.Delta ** self.ell / cl ** 2
        kappa3 = 2.0 * self.Delta * self.lambda_D * kappa1
        kappa2 = self.kappa_prime * (2.0 * self.L * kappa3) ** (-p)
        g = self.gammas
        T = len(g)
        factors = [T * g[t] * math.prod(1 + s for s in g[t + 1:]) for t in range(T)]
        K_sup = min(kappa2 / f ** p for f in factors)
        return {"kappa1": kappa1, "kappa2": kappa2, "kappa3": kappa3, "K_sup": K_sup}

    def rate(self) -> float:
        if self.K is not None:
            return self.K
        return self.composed()["K_sup"] * self.K_margin


def ld_sample_bound(params: LdBoundParams, confidence: float) -> int:
    """Smallest ``n`` with ``exp(-K n eps^(2 ell+4)) <= 1 - confidence``."""
    if not 0 < confidence < 1:
        raise ValueError("confidence must lie in (0, 1)")
    K = params.rate()
    need = math.log(1.0 / (1.0 - confidence)) / (K * params.eps ** (2 * params.ell + 4))
    # guard against round-off pushing an exact integer up by one
    n = math.ceil(need - 1e-9 * max(1.0, need))
    return max(1, n)


@dataclass
class ConvergenceRow:
    n: int
    median_nd: float
    q10: float
    q90: float
    values: np.ndarray


def ld_convergence_experiment(true_tree: ScenarioTree, n_grid: Sequence[int], replications: int,
                              spec: KernelSpec | str | None = None, seed: int = 0,
                              branching: Sequence[int] | None = None,
                              threads: int = 1) -> list[ConvergenceRow]:
    """Nested distance between ``true_tree`` and trees quantized from ``n`` of its paths.

    ``spec`` may be a kernel, ``"auto"`` (rule-of-thumb bandwidth per sample)
    or ``None`` (no smoothing).  Replication ``r`` at size ``n`` uses the seed
    sequence ``(seed, n, r)``.
    """
    require_valid(true_tree)
    if len(n_grid) == 0 or replications < 1:
        raise ValueError("need a non-empty grid and at least one replication")
    br = tuple(branching) if branching is not None else true_tree.branching()
    if br is None:
        raise ValueError("true tree has irregular branching; pass branching explicitly")

    def one(n: int, r: int) -> float:
        rng = np.random.default_rng([seed, n, r])
        samples = SamplePaths(true_tree.sample_paths(n, rng))
        kern = KernelSpec.rule_of_thumb(samples) if spec == "auto" else spec
        est = quantize_tree(samples, br, kern, seed=int(rng.integers(2**31)))
        return nested_distance_recursive(true_tree, est)[0]

    rows = []
    for n in n_grid:
        jobs = [(int(n), r) for r in range(replications)]
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                vals = np.array(list(pool.map(lambda j: one(*j), jobs)))
        else:
            vals = np.array([one(*j) for j in jobs])
        if replications > 1:
            q10, q90 = np.quantile(vals, [0.1, 0.9])
        else:
            q10 = q90 = math.nan
        rows.append(ConvergenceRow(int(n), float(np.median(vals)), float(q10), float(q90), vals))
    return rows


def write_convergence_csv(rows: Sequence[ConvergenceRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "median_nd", "q10", "q90"])
        for r in rows:
            w.writerow([r.n, repr(r.median_nd), "" if math.isnan(r.q10) else repr(r.q10),
                        "" if math.isnan(r.q90) else repr(r.q90)])


# ---------------------------------------------------------------------------
# density bounds on grids
# ---------------------------------------------------------------------------

@dataclass
class BoundReport:
    wasserstein: float
    wasserstein_bound: float
    sup_diff: float
    conditional_sup_diff: float
    conditional_bound: float
    kappa1: float
    precondition_ok: bool
    precondition_threshold: float

    @property
    def wasserstein_ok(self) -> bool:
        return self.wasserstein <= self.wasserstein_bound + 1e-12

    @property
    def conditional_ok(self) -> bool | None:
        """``None`` when the closeness precondition fails (no claim made)."""
        if not self.precondition_ok:
            return None
        return self.conditional_sup_diff <= self.conditional_bound + 1e-12

    @property
    def ok(self) -> bool:
        return self.wasserstein_ok and self.conditional_ok is not False


def bound_check_wasserstein_supnorm(f_grid, g_grid, domain: Sequence[tuple[float, float]],
                                    transport_points: int | None = 15) -> BoundReport:
    """Check the Wasserstein/sup-norm and conditional-density inequalities on a 2-D grid.

    ``f_grid[i, j]`` is the density at ``(x_i, y_j)`` on an equispaced grid
    covering ``domain = ((x0, x1), (y0, y1))``; x is the conditioned-on
    coordinate block (D1) and y the conditioning one (D2).  The Wasserstein
    side transports cell masses (midpoint rule, renormalised) with Euclidean
    cost, optionally on a coarser ``transport_points``-per-axis subgrid.
    """
    f = np.asarray(f_grid, dtype=float)
    g = np.asarray(g_grid, dtype=float)
    if f.shape != g.shape or f.ndim != 2:
        raise GridMismatch(f"grids of shapes {f.shape} and {g.shape} are not a common 2-D grid")
    if len(domain) != 2:
        raise GridMismatch("domain must give bounds for both axes")
    (x0, x1), (y0, y1) = domain
    nx, ny = f.shape
    xs, ys = np.linspace(x0, x1, nx), np.linspace(y0, y1, ny)
    lam1 = x1 - x0
    lam = lam1 * (y1 - y0)
    Delta = math.hypot(x1 - x0, y1 - y0)
    sup_diff = float(np.max(np.abs(f - g)))

    # Wasserstein side
    fx, gx = _coarsen(f, transport_points), _coarsen(g, transport_points)
    cx, cy = np.linspace(x0, x1, fx.shape[0]), np.linspace(y0, y1, fx.shape[1])
    pts = np.stack(np.meshgrid(cx, cy, indexing="ij"), axis=-1).reshape(-1, 2)
    a = np.clip(fx.ravel(), 0, None)
    b = np.clip(gx.ravel(), 0, None)
    a, b = a / a.sum(), b / b.sum()
    cost = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
    w, _ = transport(cost, a, b, engine="highs")
    w_bound = 2 * Delta * lam * sup_diff

    # conditional side: f(x|y) = f(x,y) / int f(x', y) dx'
    fy = np.trapezoid(f, xs, axis=0)
    gy = np.trapezoid(g, xs, axis=0)
    fc = f / fy[None, :]
    gc = g / gy[None, :]
    cond_diff = float(np.max(np.abs(fc - gc)))
    c_lo = float(min(f.min(), g.min()))
    c_hi = float(max(f.max(), g.max()))
    ell = 1
    if c_lo > 0:
        cl = c_lo * lam1
        kappa1 = 1.0 / cl + 2.0 * c_hi * Delta ** ell / cl ** 2
        threshold = c_lo * lam1 / (2 * Delta ** ell)
    else:
        kappa1, threshold = math.inf, 0.0
    del lam, ys
    return BoundReport(float(w), float(w_bound), sup_diff, cond_diff, kappa1 * sup_diff, kappa1,
                       c_lo > 0 and sup_diff <= threshold, threshold)


def _coarsen(f: np.ndarray, points: int | None) -> np.ndarray:
    if points is None or (f.shape[0] <= points and f.shape[1] <= points):
        return f
    ix = np.round(np.linspace(0, f.shape[0] - 1, min(points, f.shape[0]))).astype(int)
    iy = np.round(np.linspace(0, f.shape[1] - 1, min(points, f.shape[1]))).astype(int)
    return f[np.ix_(ix, iy)]


# ---------------------------------------------------------------------------
# Black-Scholes helpers
# ---------------------------------------------------------------------------

def black_scholes_call(S0: float, K: float, r: float, sigma: float, T: float) -> float:
    d1 = (math.log(S0 / K) + (r + 0.5 * sigma ** 2) * T) / (sigma * math.sqrt(T))
    d2 = d1 - sigma * math.sqrt(T)
    return float(S0 * norm.cdf(d1) - K * math.exp(-r * T) * norm.cdf(d2))


def lognormal_samples(n: int, S0: float = 100.0, r: float = 0.01, sigma: float = 0.2,
                      T: float = 1.0, discounted: bool = True, moment_match: bool = True) -> SamplePaths:
    """Stratified terminal samples of geometric Brownian motion (one step).

    Discounted prices are moment-matched so their mean is exactly ``S0``.
    """
    z = norm.ppf((np.arange(n) + 0.5) / n)
    ST = S0 * np.exp((r - 0.5 * sigma ** 2) * T + sigma * math.sqrt(T) * z)
    if discounted:
        ST = ST * math.exp(-r * T)
        if moment_match:
            ST *= S0 / ST.mean()
    paths = np.stack([np.full(n, S0), ST], axis=1)[:, :, None]
    return SamplePaths(paths)


def lognormal_tree(nodes: int = 500, samples: int = 200_000, S0: float = 100.0, r: float = 0.01,
                   sigma: float = 0.2, T: float = 1.0) -> ScenarioTree:
    """Two-stage tree (root plus ``nodes - 1`` leaves) quantizing discounted GBM."""
    if nodes < 2:
        raise ValueError("need at least two nodes")
    return quantize_tree(lognormal_samples(samples, S0, r, sigma, T), [nodes - 1])
