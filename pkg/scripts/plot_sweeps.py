"""Plot sweep CSVs (needs matplotlib; documentation aid only)."""

import argparse
import csv
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("csv", help="file with header alpha,epsilon,bid,ask,status")
    ap.add_argument("-o", "--output", default="sweep.png")
    args = ap.parse_args()
    by_alpha = defaultdict(list)
    with open(args.csv, newline="") as fh:
        for row in csv.DictReader(fh):
            by_alpha[float(row["alpha"])].append((float(row["epsilon"]), float(row["bid"]), float(row["ask"])))
    fig, ax = plt.subplots(figsize=(6, 4))
    for a, pts in sorted(by_alpha.items()):
        pts.sort()
        e = [p[0] for p in pts]
        line, = ax.plot(e, [p[2] for p in pts], label=f"ask, alpha={a:g}")
        ax.plot(e, [p[1] for p in pts], ls="--", color=line.get_color())
    ax.set_xlabel("epsilon")
    ax.set_ylabel("price")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(args.output, dpi=150)
    print(f"wrote {args.output}")


if __name__ == "__main__":
    main()
