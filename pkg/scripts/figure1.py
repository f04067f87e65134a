"""Bid/ask data for the two small example trees.

acceptability.csv: non-robust bid and ask over alpha (call struck at 95).
ambiguity.csv: robust bid and ask over epsilon at a fixed alpha.
"""

import argparse
import csv
from importlib.resources import files
from pathlib import Path

import numpy as np

from rcpricing.pricing import AcceptabilitySpec, price
from rcpricing.robust import spread_sweep, write_sweep_csv
from rcpricing.tree import ScenarioTree, european_call


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--outdir", default="results")
    ap.add_argument("--alpha", type=float, default=1.0, help="level for the ambiguity sweep")
    args = ap.parse_args()
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    alphas = np.round(np.linspace(0.05, 1.0, 20), 4)
    epsilons = [0.0, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0]
    for name in ("example1", "example2"):
        tree = ScenarioTree.load(files("rcpricing.data") / f"{name}.json")
        claim = european_call(tree, 95.0)
        with open(out / f"{name}_acceptability.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["alpha", "bid", "ask"])
            for a in alphas:
                spec = AcceptabilitySpec(float(a))
                w.writerow([a, price(tree, claim, spec, "bid").price, price(tree, claim, spec, "ask").price])
        cells = spread_sweep(tree, claim, [args.alpha], epsilons)
        write_sweep_csv(cells, out / f"{name}_ambiguity.csv")
        print(f"{name}: wrote {out}/{name}_acceptability.csv and {name}_ambiguity.csv")


if __name__ == "__main__":
    main()
