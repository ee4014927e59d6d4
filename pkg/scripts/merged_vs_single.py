"""Train one model on a single synthetic view and one on the fusion of two views; compare test MRR.

Each seed builds two KGs over one latent world (disjoint IRI namespaces,
partial sameAs alignment), splits both, fuses the training parts and
evaluates on the first view's test triples.
"""

import argparse
import csv
import sys
from dataclasses import asdict

from ukge.experiments import TwinConfig, merged_vs_single


def main():
    d = TwinConfig()
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--kind", default=d.kind, choices=["distmult", "complex", "qmult", "conex"])
    ap.add_argument("--dim", type=int, default=d.dim)
    ap.add_argument("--epochs", type=int, default=d.epochs)
    ap.add_argument("--negatives", type=int, default=d.negatives_per_positive)
    ap.add_argument("--lr", type=float, default=d.learning_rate)
    ap.add_argument("--batch-size", type=int, default=d.batch_size)
    ap.add_argument("--csv", help="also write one row per seed to this file")
    args = ap.parse_args()
    cfg = TwinConfig(args.kind, args.dim, args.epochs, args.negatives, args.lr, args.batch_size)

    results = []
    for seed in args.seeds:
        r = merged_vs_single(seed, cfg)
        results.append(r)
        print(f"seed {seed}: single {r.single_mrr:.4f} ({r.single_triples} triples)  "
              f"merged {r.merged_mrr:.4f} ({r.merged_triples} triples)", flush=True)
    wins = sum(r.merged_wins for r in results)
    print(f"merged better on {wins}/{len(results)} seeds")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(asdict(results[0])))
            w.writeheader()
            w.writerows(asdict(r) for r in results)
    return 0 if 2 * wins > len(results) else 1


if __name__ == "__main__":
    sys.exit(main())
