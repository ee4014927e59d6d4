"""Memorization sweep: all four scoring functions on the 10-entity / 30-triple permutation graph.

Reports final training loss and train MRR per kind and seed; this is the
run that fixed the loss threshold used in the training tests.
"""

import argparse
import time

from ukge.evaluation import evaluate
from ukge.models import ModelConfig
from ukge.synthetic import permutation_graph
from ukge.training import TrainConfig, train


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--kinds", nargs="+", default=["distmult", "complex", "qmult", "conex"])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--dim", type=int, default=32)
    ap.add_argument("--epochs", type=int, default=500)
    args = ap.parse_args()

    print(f"{'kind':<10}{'seed':>5}{'final loss':>13}{'train MRR':>11}{'secs':>7}")
    for kind in args.kinds:
        for seed in args.seeds:
            g = permutation_graph(10, 3, seed=seed)
            t0 = time.perf_counter()
            table, trace = train(g, ModelConfig(kind=kind, dim=args.dim, rng_seed=seed), TrainConfig(epochs=args.epochs, rng_seed=seed))
            mrr = evaluate(table, g.triples, range(g.num_entities)).mrr
            print(f"{kind:<10}{seed:>5}{trace.epoch_loss[-1]:>13.2e}{mrr:>11.3f}{time.perf_counter() - t0:>7.1f}", flush=True)


if __name__ == "__main__":
    main()
