"""Measure how each selection policy serves the slowest clients.

Slow devices get skewed label distributions, so a policy that rarely
aggregates them ships a global model that is worse on their data. Runs
every policy on shared per-seed data and reports slow-group accuracy
and weighted F1.
"""
import argparse
import csv
import sys

import numpy as np

from fedss import (
    FEDCS,
    FEDSS,
    RANDOM,
    PolicyConfig,
    TrainParams,
    cluster,
    default_population,
    evaluate_per_client,
    federated_train,
    generate_noniid_data,
    speed_ranks,
)
from fedss.seeds import derive_seed

KINDS = (RANDOM, FEDCS, FEDSS)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rounds", type=int, default=600)
    parser.add_argument("--epochs", type=int, default=1)
    parser.add_argument("--learning-rate", type=float, default=0.03)
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--clients-per-round", type=int, default=5)
    parser.add_argument("--overselect", type=int, default=8)
    parser.add_argument("--k", type=int, default=4, help="cluster count for round-robin")
    parser.add_argument("--classes", type=int, default=5)
    parser.add_argument("--features", type=int, default=8)
    parser.add_argument("--alpha", type=float, default=0.3)
    parser.add_argument("--class-sep", type=float, default=3.0)
    parser.add_argument("--bias-boost", type=float, default=8.0)
    parser.add_argument("--holdout", type=float, default=0.2)
    parser.add_argument("--seeds", type=int, default=5, help="number of replicate seeds")
    parser.add_argument("--csv", help="optional per-seed output CSV path")
    args = parser.parse_args(argv)

    pop = default_population()
    ranks = speed_ranks(pop)
    samples = [pop.by_id(i).num_samples for i in pop.ids]
    params = TrainParams(
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        eval_every=max(args.rounds, 1),
    )

    rows = []
    for s in range(args.seeds):
        data = generate_noniid_data(
            n_clients=len(pop),
            num_classes=args.classes,
            num_features=args.features,
            samples_per_client=samples,
            alpha=args.alpha,
            seed=derive_seed(s, "bias"),
            class_bias_ranks=ranks,
            class_sep=args.class_sep,
            holdout_fraction=args.holdout,
            bias_boost=args.bias_boost,
        )
        policy_seed = derive_seed(s, "bias", "policy")
        configs = {
            RANDOM: PolicyConfig(
                kind=RANDOM, clients_per_round=args.clients_per_round, rng_seed=policy_seed
            ),
            FEDCS: PolicyConfig(
                kind=FEDCS,
                clients_per_round=args.clients_per_round,
                fedcs_overselect=args.overselect,
                rng_seed=policy_seed,
            ),
            FEDSS: PolicyConfig(
                kind=FEDSS,
                clients_per_round=args.clients_per_round,
                cluster_set=cluster(pop, args.k),
                rng_seed=policy_seed,
            ),
        }
        for kind, cfg in configs.items():
            outcome = federated_train(pop, data, cfg, args.rounds, params)
            rep = evaluate_per_client(outcome.model, data, pop)
            rows.append(
                {
                    "seed": s,
                    "policy": kind,
                    "slow_accuracy": rep.slow_accuracy,
                    "slow_f1": rep.slow_f1,
                    "fast_accuracy": rep.fast_accuracy,
                    "fast_f1": rep.fast_f1,
                }
            )
            print(
                f"seed {s} {kind:<8} slow acc {rep.slow_accuracy:.4f} "
                f"slow f1 {rep.slow_f1:.4f} fast acc {rep.fast_accuracy:.4f}"
            )

    print()
    print(f"{'policy':<8} {'slow acc':>9} {'slow f1':>9} {'fast acc':>9}")
    for kind in KINDS:
        mine = [r for r in rows if r["policy"] == kind]
        print(
            f"{kind:<8} {np.mean([r['slow_accuracy'] for r in mine]):>9.4f} "
            f"{np.mean([r['slow_f1'] for r in mine]):>9.4f} "
            f"{np.mean([r['fast_accuracy'] for r in mine]):>9.4f}"
        )

    if args.csv:
        with open(args.csv, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
        print(f"wrote {args.csv}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
