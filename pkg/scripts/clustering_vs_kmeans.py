"""Compare evened percentile clustering against 1-D k-means on a large
synthetic population.

For each k both partitions are scored by the same seeded round-robin
sweep, so the numbers are directly comparable. Defaults match the
shipped acceptance run.
"""
import argparse
import csv
import sys

from fedss import GlobalModelSpec, SynthSpec, cluster, kmeans_1d, synth_population
from fedss.knee import avg_round_time_for_clusters
from fedss.seeds import derive_seed


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n-clients", type=int, default=10000)
    parser.add_argument("--seed", type=int, default=123, help="population and sweep seed")
    parser.add_argument("--k-min", type=int, default=2)
    parser.add_argument("--k-max", type=int, default=8)
    parser.add_argument("--sweep-rounds", type=int, default=1000)
    parser.add_argument("--clients-per-round", type=int, default=5)
    parser.add_argument("--csv", help="optional output CSV path")
    args = parser.parse_args(argv)

    model = GlobalModelSpec(model_size_bits=8e7, flops_per_sample=5e8)
    pop = synth_population(SynthSpec(), model, n=args.n_clients, seed=args.seed)
    times = pop.round_times()
    ts = [times[c.id] for c in pop.clients]
    ids = [c.id for c in pop.clients]

    rows = []
    print(f"{'k':>3} {'evened':>10} {'kmeans':>10} {'ratio':>7}")
    for k in range(args.k_min, args.k_max + 1):
        seed = derive_seed(args.seed, "sweep", k)
        evened = avg_round_time_for_clusters(
            pop, cluster(pop, k), args.sweep_rounds, args.clients_per_round, seed
        )
        lloyd = kmeans_1d(ts, k, seed=0, ids=ids).clusters
        if min(lloyd.sizes) < args.clients_per_round:
            print(f"{k:>3} {evened:>10.3f} {'infeasible':>10}")
            continue
        baseline = avg_round_time_for_clusters(
            pop, lloyd, args.sweep_rounds, args.clients_per_round, seed
        )
        rows.append({"k": k, "evened": evened, "kmeans": baseline, "ratio": evened / baseline})
        print(f"{k:>3} {evened:>10.3f} {baseline:>10.3f} {evened / baseline:>7.3f}")

    if args.csv:
        with open(args.csv, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=["k", "evened", "kmeans", "ratio"])
            writer.writeheader()
            writer.writerows(rows)
        print(f"wrote {args.csv}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
