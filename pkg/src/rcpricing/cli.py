"""``rcp`` command line.

Exit codes: 0 success, 1 validation failure, 2 I/O or parse error,
3 no acceptable price, 4 non-convergence, 5 missing constant.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import estimation as est
from .pricing import AcceptabilitySpec, BadLevel, NoAcceptablePrice, price
from .robust import (AmbiguitySpec, NonConvergence, robust_ask, robust_bid, spread_sweep,
                     thread_cap, write_sweep_csv)
from .transport import DimensionMismatch, DiscreteDistribution, nested_distance, wasserstein
from .tree import Claim, ScenarioTree, TreeError, european_call, european_put, from_path_matrix, validate

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_INFEASIBLE, EXIT_NONCONVERGENCE, EXIT_MISSING = range(6)

log = logging.getLogger("rcpricing")


class UsageError(Exception):
    """Bad input detected before dispatch (exit 2)."""


def fmt(x: float) -> str:
    return f"{x:.10g}"


# ---------------------------------------------------------------------------
# argument helpers
# ---------------------------------------------------------------------------

def _resolve(path: str) -> Path:
    """Existing path, or the bundled fixture of that file name."""
    p = Path(path)
    if p.exists():
        return p
    bundled = resources.files("rcpricing.data") / p.name
    if bundled.is_file():
        return Path(str(bundled))
    raise UsageError(f"no such file: {path}")


def _grid(text: str, name: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"--{name}: {exc}") from None
    if not vals:
        raise UsageError(f"--{name} is empty")
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise UsageError(f"--{name} must be strictly increasing")
    return vals


def _ints(text: str, name: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"--{name}: {exc}") from None
    if not vals:
        raise UsageError(f"--{name} is empty")
    return vals


def _load_tree(path: str) -> ScenarioTree:
    try:
        return ScenarioTree.load(_resolve(path))
    except (OSError, json.JSONDecodeError, TreeError, ValueError) as exc:
        raise UsageError(f"cannot read tree {path}: {exc}") from None


def _load_claim(args, tree: ScenarioTree) -> Claim:
    if args.claim:
        try:
            return Claim.load(_resolve(args.claim), tree)
        except (OSError, json.JSONDecodeError, TreeError, ValueError) as exc:
            raise UsageError(f"cannot read claim {args.claim}: {exc}") from None
    if args.strike is None and args.strike_pct is None:
        raise UsageError("give --claim, --strike or --strike-pct")
    strike = args.strike if args.strike is not None else args.strike_pct / 100 * float(tree.prices[tree.root, 0])
    make = european_call if args.payoff == "call" else european_put
    return make(tree, strike)


def _valid_tree(tree: ScenarioTree, path: str) -> int | None:
    report = validate(tree)
    if report.ok:
        return None
    for v in report.violations:
        print(f"{path}: {v}", file=sys.stderr)
    return EXIT_INVALID


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _read_rows(path: str) -> np.ndarray:
    rows = []
    with open(_resolve(path), newline="", encoding="utf-8") as fh:
        for k, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                if k == 0:
                    continue
                raise UsageError(f"{path}: non-numeric row {k + 1}") from None
    if not rows or len({len(r) for r in rows}) != 1:
        raise UsageError(f"{path}: need a non-empty CSV with equal-length rows")
    return np.array(rows)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_tree(args) -> int:
    if args.tree_cmd == "validate":
        tree = _load_tree(args.file)
        bad = _valid_tree(tree, args.file)
        if bad is not None:
            return bad
        print(f"valid: {tree.n_nodes} nodes, {tree.T} stages, {tree.n_assets} asset(s)")
        return EXIT_OK
    if args.tree_cmd == "from-paths":
        rows = _read_rows(args.csv)
        if rows.shape[1] % args.assets:
            raise UsageError(f"row length {rows.shape[1]} is not a multiple of {args.assets} assets")
        paths = rows.reshape(rows.shape[0], -1, args.assets).transpose(1, 0, 2)
        try:
            tree = from_path_matrix(paths)
        except TreeError as exc:
            print(f"{args.csv}: {exc}", file=sys.stderr)
            return EXIT_INVALID
        _write(args.output, tree.to_json())
        return EXIT_OK
    # from-samples
    try:
        samples = est.SamplePaths.from_csv(_resolve(args.csv), args.assets)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read samples {args.csv}: {exc}") from None
    branching = _ints(args.branching, "branching")
    spec = None
    if args.bandwidth is not None:
        spec = est.KernelSpec(args.bandwidth, samples.m * samples.T)
    elif args.smooth:
        spec = est.KernelSpec.rule_of_thumb(samples)
    try:
        tree = est.quantize_tree(samples, branching, spec, seed=args.seed)
    except est.InsufficientData as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INVALID
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _write(args.output, tree.to_json())
    return EXIT_OK


def cmd_distance(args) -> int:
    if args.dist_cmd == "nested":
        a, b = _load_tree(args.a), _load_tree(args.b)
        for t, p in ((a, args.a), (b, args.b)):
            bad = _valid_tree(t, p)
            if bad is not None:
                return bad
        try:
            d = nested_distance(a, b, method=args.method, ground_norm=args.norm)
        except (DimensionMismatch, ValueError) as exc:
            print(str(exc), file=sys.stderr)
            return EXIT_IO
        print(fmt(d))
        return EXIT_OK
    # wasserstein: CSV rows "weight,x_1,...,x_d"
    dists = []
    for path in (args.a, args.b):
        rows = _read_rows(path)
        if rows.shape[1] < 2:
            raise UsageError(f"{path}: rows need a weight and at least one coordinate")
        w = rows[:, 0]
        dists.append(DiscreteDistribution(rows[:, 1:], w / w.sum()))
    try:
        d, _ = wasserstein(dists[0], dists[1], ground_norm=args.norm)
    except DimensionMismatch as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_IO
    print(fmt(d))
    return EXIT_OK


def _acceptability(args) -> AcceptabilitySpec:
    if getattr(args, "superhedge", False):
        return AcceptabilitySpec.super_hedge()
    try:
        return AcceptabilitySpec(args.alpha)
    except BadLevel as exc:
        raise UsageError(str(exc)) from None


def cmd_price(args) -> int:
    tree = _load_tree(args.tree)
    bad = _valid_tree(tree, args.tree)
    if bad is not None:
        return bad
    claim = _load_claim(args, tree)
    try:
        res = price(tree, claim, _acceptability(args), side=args.side, dual=args.dual, engine=args.engine)
    except NoAcceptablePrice as exc:
        print(f"no acceptable {args.side} price: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    print(fmt(res.price))
    if args.report:
        _write(args.report, res.to_json(tree))
    return EXIT_OK


def cmd_robust(args) -> int:
    tree = _load_tree(args.tree)
    bad = _valid_tree(tree, args.tree)
    if bad is not None:
        return bad
    claim = _load_claim(args, tree)
    if args.epsilon < 0:
        raise UsageError("--epsilon must be non-negative")
    fn = robust_ask if args.side == "ask" else robust_bid
    try:
        res = fn(AmbiguitySpec(tree, args.epsilon), claim, _acceptability(args),
                 max_iter=args.max_iter, engine=args.engine, strict=True)
    except NoAcceptablePrice as exc:
        print(f"no acceptable {args.side} price in the ball: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NonConvergence as exc:
        print(f"{exc}; last iterate {fmt(exc.result.price)}", file=sys.stderr)
        if args.report:
            _write(args.report, exc.result.to_json(tree))
        return EXIT_NONCONVERGENCE
    print(fmt(res.price))
    if args.report:
        doc = res.to_dict(tree)
        doc["iterations"] = res.extras["iterations"]
        doc["local_optimum"] = res.extras["local_optimum"]
        doc["implied_cond_prob"] = [float(p) for p in res.extras["implied_model"].cond_prob]
        _write(args.report, json.dumps(doc, indent=2) + "\n")
    return EXIT_OK


def cmd_sweep(args) -> int:
    tree = _load_tree(args.tree)
    bad = _valid_tree(tree, args.tree)
    if bad is not None:
        return bad
    claim = _load_claim(args, tree)
    alphas = _grid(args.alpha_grid, "alpha-grid")
    epsilons = _grid(args.epsilon_grid, "epsilon-grid")
    if alphas[0] <= 0 or alphas[-1] > 1 or epsilons[0] < 0:
        raise UsageError("alphas must lie in (0, 1] and epsilons be non-negative")
    cells = spread_sweep(tree, claim, alphas, epsilons, threads=args.threads or thread_cap(),
                         max_iter=args.max_iter, engine=args.engine)
    if args.output in (None, "-"):
        w = csv.writer(sys.stdout)
        w.writerow(["alpha", "epsilon", "bid", "ask", "status"])
        for c in cells:
            w.writerow([repr(c.alpha), repr(c.epsilon), repr(c.bid), repr(c.ask), c.status])
    else:
        write_sweep_csv(cells, args.output)
    if any("max_iter" in c.status for c in cells):
        print("some cells did not converge (see status column)", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    return EXIT_OK


def cmd_ld_experiment(args) -> int:
    tree = _load_tree(args.true_tree)
    bad = _valid_tree(tree, args.true_tree)
    if bad is not None:
        return bad
    n_grid = _ints(args.n_grid, "n-grid")
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])) or n_grid[0] < 1:
        raise UsageError("--n-grid must be strictly increasing positive integers")
    spec = "auto" if args.smooth else None
    branching = _ints(args.branching, "branching") if args.branching else None
    try:
        rows = est.ld_convergence_experiment(tree, n_grid, args.reps, spec=spec, seed=args.seed,
                                             branching=branching, threads=args.threads or thread_cap())
    except est.InsufficientData as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INVALID
    if args.output in (None, "-"):
        print("n,median_nd,q10,q90")
        for r in rows:
            q = ["" if math.isnan(v) else fmt(v) for v in (r.q10, r.q90)]
            print(f"{r.n},{fmt(r.median_nd)},{q[0]},{q[1]}")
    else:
        est.write_convergence_csv(rows, args.output)
    return EXIT_OK


def cmd_ld_bound(args) -> int:
    gammas = tuple(_grid_any(args.gammas)) if args.gammas else None
    try:
        params = est.LdBoundParams(args.ell, args.eps, K=args.K, kappa_prime=args.kappa_prime, L=args.L,
                                   c_lower=args.c_lower, c_upper=args.c_upper, Delta=args.Delta,
                                   lambda_D1=args.lambda_D1, lambda_D=args.lambda_D, gammas=gammas)
        n = est.ld_sample_bound(params, args.confidence)
    except est.MissingConstant as exc:
        print(f"{exc}. The tail bound's rate constant is proven to exist but has no "
              "published value; pass --K or every proof ingredient.", file=sys.stderr)
        return EXIT_MISSING
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(n)
    return EXIT_OK


def _grid_any(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _claim_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tree", required=True, help="scenario tree JSON")
    p.add_argument("--claim", help="claim JSON ({\"cashflows\": {node id: value}})")
    p.add_argument("--strike", type=float, help="European option on asset 1 instead of --claim")
    p.add_argument("--strike-pct", type=float, help="strike as a percentage of the root price")
    p.add_argument("--payoff", choices=("call", "put"), default="call", help="option type for --strike")
    p.add_argument("--engine", choices=("auto", "simplex", "highs"), default="auto", help="LP engine")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="seed (default 0)")
    ap = argparse.ArgumentParser(prog="rcp", description="Acceptability pricing on scenario trees.")
    ap.add_argument("--seed", type=int, default=0, help="seed for every random choice (default 0)")
    ap.add_argument("-v", "--verbose", action="store_true", help="log solver progress to stderr")
    sub = ap.add_subparsers(dest="cmd", required=True)

    tr = sub.add_parser("tree", parents=[common], help="tree I/O").add_subparsers(dest="tree_cmd", required=True)
    p = tr.add_parser("validate", parents=[common], help="check tree invariants")
    p.add_argument("file")
    p = tr.add_parser("from-paths", parents=[common], help="tree from distinct paths (one CSV row per path)")
    p.add_argument("csv")
    p.add_argument("-o", "--output", help="output JSON (default stdout)")
    p.add_argument("--assets", type=int, default=1, help="assets per stage in each row")
    p = tr.add_parser("from-samples", parents=[common], help="quantize sampled paths into a tree")
    p.add_argument("csv")
    p.add_argument("--branching", required=True, help="children per stage, e.g. 3,3")
    p.add_argument("-o", "--output", help="output JSON (default stdout)")
    p.add_argument("--assets", type=int, default=1, help="assets per stage in each row")
    p.add_argument("--smooth", action="store_true", help="kernel-smooth with the rule-of-thumb bandwidth")
    p.add_argument("--bandwidth", type=float, help="kernel-smooth with this bandwidth")

    ds = sub.add_parser("distance", parents=[common], help="process distances").add_subparsers(dest="dist_cmd", required=True)
    p = ds.add_parser("nested", parents=[common], help="nested distance between two trees")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--method", choices=("recursive", "lp"), default="recursive")
    p.add_argument("--norm", choices=("l1", "l2"), default="l1", help="ground norm on paths")
    p = ds.add_parser("wasserstein", parents=[common], help="Wasserstein distance; CSV rows are weight,x1,...,xd")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--norm", choices=("l1", "l2"), default="l1", help="ground norm")

    p = sub.add_parser("price", parents=[common], help="acceptable ask or bid price")
    _claim_flags(p)
    p.add_argument("--alpha", type=float, default=1.0, help="AVaR level in (0, 1]")
    p.add_argument("--side", choices=("ask", "bid"), default="ask")
    p.add_argument("--dual", action="store_true", help="solve the pricing-measure program")
    p.add_argument("--superhedge", action="store_true", help="pointwise super-hedging instead of AVaR")
    p.add_argument("--report", help="write price, strategy and pricing measure as JSON")

    p = sub.add_parser("robust-price", parents=[common], help="price robust over a nested-distance ball")
    _claim_flags(p)
    p.add_argument("--alpha", type=float, default=1.0, help="AVaR level in (0, 1]")
    p.add_argument("--epsilon", type=float, required=True, help="ball radius")
    p.add_argument("--side", choices=("ask", "bid"), default="ask")
    p.add_argument("--max-iter", type=int, default=200, help="sweep cap")
    p.add_argument("--report", help="write result JSON")

    p = sub.add_parser("sweep", parents=[common], help="robust bid/ask over an (alpha, epsilon) grid")
    _claim_flags(p)
    p.add_argument("--alpha-grid", required=True, help="comma list, strictly increasing")
    p.add_argument("--epsilon-grid", required=True, help="comma list, strictly increasing")
    p.add_argument("--max-iter", type=int, default=200, help="sweep cap per cell")
    p.add_argument("--threads", type=int, help="parallel cells (default RCP_THREADS or 1)")
    p.add_argument("-o", "--output", help="CSV path (default stdout)")

    p = sub.add_parser("ld-experiment", parents=[common], help="nested distance of quantized sample trees vs sample size")
    p.add_argument("--true-tree", required=True)
    p.add_argument("--n-grid", required=True, help="sample sizes, e.g. 50,200,800")
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--branching", help="quantizer branching (default: that of the true tree)")
    p.add_argument("--smooth", action="store_true", help="kernel-smooth with the rule-of-thumb bandwidth")
    p.add_argument("--threads", type=int, help="parallel replications (default RCP_THREADS or 1)")
    p.add_argument("-o", "--output", help="CSV path (default stdout)")

    p = sub.add_parser("ld-bound", parents=[common], help="sample size for a large-deviation confidence level")
    p.add_argument("--K", type=float, help="rate constant")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--ell", type=int, required=True, help="dimension m*T")
    p.add_argument("--confidence", type=float, required=True)
    for name in ("kappa-prime", "L", "c-lower", "c-upper", "Delta", "lambda-D1", "lambda-D"):
        p.add_argument(f"--{name}", type=float, dest=name.replace("-", "_"),
                       help="proof constant for composing K")
    p.add_argument("--gammas", help="comma list of per-stage conditional Lipschitz constants")
    return ap


COMMANDS = {
    "tree": cmd_tree, "distance": cmd_distance, "price": cmd_price, "robust-price": cmd_robust,
    "sweep": cmd_sweep, "ld-experiment": cmd_ld_experiment, "ld-bound": cmd_ld_bound,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_IO
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.cmd](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
