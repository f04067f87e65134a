"""Independent reference computations used by the tests.

None of these call into the package's solvers.
"""

import itertools
import math

import numpy as np


def lp_by_vertices(c, A_ub, b_ub, lower, upper, sense="min"):
    """Optimum of a small bounded LP by enumerating basic solutions.

    Constraints ``A_ub x <= b_ub`` plus finite box bounds.  Returns
    ``None`` when no vertex is feasible.
    """
    c = np.asarray(c, float)
    n = c.size
    rows = [(np.asarray(a, float), float(b)) for a, b in zip(A_ub, b_ub)]
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1
        rows.append((e, float(upper[i])))
        rows.append((-e, -float(lower[i])))
    best = None
    for combo in itertools.combinations(range(len(rows)), n):
        M = np.array([rows[k][0] for k in combo])
        if abs(np.linalg.det(M)) < 1e-10:
            continue
        x = np.linalg.solve(M, np.array([rows[k][1] for k in combo]))
        if all(a @ x <= b + 1e-9 for a, b in rows):
            v = c @ x
            if best is None or (v < best if sense == "min" else v > best):
                best = v
    return best


def norm_cdf(x: float) -> float:
    return 0.5 * (1 + math.erf(x / math.sqrt(2)))


def black_scholes(S0, K, r, sigma, T):
    d1 = (math.log(S0 / K) + (r + sigma * sigma / 2) * T) / (sigma * math.sqrt(T))
    d2 = d1 - sigma * math.sqrt(T)
    return S0 * norm_cdf(d1) - K * math.exp(-r * T) * norm_cdf(d2)


def wasserstein_1d(x, p, y, q):
    """W1 on the line via the integral of |F - G|."""
    pts = np.union1d(x, y)
    F = np.array([p[np.asarray(x) <= s].sum() for s in pts])
    G = np.array([q[np.asarray(y) <= s].sum() for s in pts])
    return float(np.abs(F - G)[:-1] @ np.diff(pts))


def avar_by_lp_free(values, probs, alpha):
    """AVaR via the Rockafellar-Uryasev formula, maximised over atoms."""
    v = np.asarray(values, float)
    p = np.asarray(probs, float)
    return max(a - np.maximum(a - v, 0) @ p / alpha for a in v)


def kde_direct(samples, h, c, query):
    """Tent-kernel estimate by explicit summation."""
    total = 0.0
    d = len(query)
    for s in samples:
        r = math.sqrt(sum(((qi - si) / h) ** 2 for qi, si in zip(query, s)))
        total += c * max(0.0, 1.0 - r) / h ** d
    return total / len(samples)


def robust_one_period(x, p, S0, strike, alpha, eps, h=1e-3, side="ask"):
    """Brute-force robust price on a one-period trinomial tree.

    Scans physical measures P on a simplex grid of step ``h`` that lie in
    the W1 ball of radius ``eps`` around ``p``; for each, martingale
    measures Q with ``Q <= P/alpha`` form a segment, whose endpoints are
    evaluated in closed form.
    """
    x = np.asarray(x, float)
    order = np.argsort(x)
    xs, ph = x[order], np.asarray(p, float)[order]
    pay = np.maximum(xs - strike, 0)
    A = np.array([np.ones(3), xs])
    v = np.cross(A[0], A[1])
    v = v / np.abs(v).max()
    q0 = np.linalg.lstsq(A, [1, S0], rcond=None)[0]
    n = int(round(1 / h))
    best = -np.inf if side == "ask" else np.inf
    Fh = np.cumsum(ph)[:2]
    gaps = np.diff(xs)
    cv, c0 = v @ pay, q0 @ pay
    for i0 in range(n + 1):
        a = i0 * h
        b = np.arange(0, n - i0 + 1) * h
        c = np.clip(1 - a - b, 0, None)
        P = np.stack([np.full_like(b, a), b, c], 1)
        W = np.abs(np.cumsum(P, 1)[:, :2] - Fh) @ gaps
        P = P[W <= eps + 1e-12]
        if P.size == 0:
            continue
        lo = np.full(len(P), -np.inf)
        hi = np.full(len(P), np.inf)
        for i in range(3):
            if v[i] == 0:
                continue
            floor = -q0[i] / v[i]
            cap = (P[:, i] / alpha - q0[i]) / v[i]
            if v[i] > 0:
                lo, hi = np.maximum(lo, floor), np.minimum(hi, cap)
            else:
                lo, hi = np.maximum(lo, cap), np.minimum(hi, floor)
        ok = lo <= hi + 1e-12
        if not ok.any():
            continue
        if side == "ask":
            s = np.where(cv > 0, hi, lo)[ok]
            best = max(best, float((c0 + cv * s).max()))
        else:
            s = np.where(cv > 0, lo, hi)[ok]
            best = min(best, float((c0 + cv * s).min()))
    return best
