"""Write the quantized lognormal tree (S0=100, r=0.01, sigma=0.2, T=1) as JSON."""

import argparse

from rcpricing.estimation import lognormal_tree


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("-o", "--output", default="lognormal-500.json")
    ap.add_argument("--nodes", type=int, default=500, help="total node count, root included")
    ap.add_argument("--samples", type=int, default=200_000, help="stratified draws to quantize")
    args = ap.parse_args()
    tree = lognormal_tree(args.nodes, args.samples)
    tree.save(args.output)
    print(f"wrote {args.output}: {tree.n_nodes} nodes")


if __name__ == "__main__":
    main()
