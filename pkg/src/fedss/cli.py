"""Command-line front end: cluster, knee, simulate, train, compare.

Every subcommand accepts a JSON config file plus flag overrides, writes
its artifacts into ``--out`` when given, and embeds the fully resolved
config and seed in each JSON report. Runs are deterministic: the same
config and seed produce byte-identical output files. Failures exit
nonzero with a machine-readable category on stderr (2 config, 3 parse,
1 internal).
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Sequence

from .clustering import cluster
from .config import (
    RunConfig,
    build_population,
    load_config,
    resolve_cluster_count,
    resolve_policy,
    validate_policy_flags,
)
from .errors import ConfigurationError, EmptyTableError, TableParseError
from .knee import KneeCurve, default_max_clusters, kneedle, optimal_k
from .policies import KINDS
from .seeds import derive_seed
from .simulation import SimulationReport, fairness_summary, round_duration_cdf, simulate
from .training import (
    TrainParams,
    evaluate_per_client,
    federated_train,
    generate_noniid_data,
    speed_ranks,
)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONFIG = 2
EXIT_PARSE = 3


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_rounds_csv(path: Path, reports: Sequence[SimulationReport]) -> None:
    rows = []
    for report in reports:
        for rec in report.records:
            rows.append([
                rec.round_index,
                rec.policy,
                rec.duration,
                rec.cluster_index if rec.cluster_index is not None else "",
            ])
    _write_csv(path, ["round", "policy", "duration", "cluster"], rows)


def _write_cdf_csv(path: Path, report: SimulationReport) -> None:
    _write_csv(path, ["duration", "fraction"], round_duration_cdf(report))


def _write_curve_csv(path: Path, curve: KneeCurve) -> None:
    ks = curve.ks if curve.ks is not None else [""] * len(curve)
    rows = list(zip(ks, curve.xs, curve.ys))
    _write_csv(path, ["k", "x", "y"], rows)


def _out_dir(args) -> Path | None:
    if args.out is None:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _provenance(cfg: RunConfig) -> dict:
    return {"seed": cfg.seed, "config": cfg.resolved_dict()}


def _emit(out: Path | None, cfg: RunConfig, report_payload: dict, files: dict) -> None:
    """Write report.json, resolved_config.json, and extra files."""
    if out is None:
        return
    _write_json(out / "resolved_config.json", cfg.resolved_dict())
    _write_json(out / "report.json", {**_provenance(cfg), **report_payload})
    for name, writer in files.items():
        writer(out / name)


# flag -> (config section, key); None section means top level
_OVERRIDE_MAP = {
    "seed": (None, "seed"),
    "rounds": (None, "rounds"),
    "n_clients": ("population", "n_clients"),
    "devices": ("population", "devices"),
    "bandwidth": ("population", "bandwidth"),
    "model_size_bits": ("model", "model_size_bits"),
    "flops_per_sample": ("model", "flops_per_sample"),
    "policy": ("policy", "kind"),
    "clients_per_round": ("policy", "clients_per_round"),
    "fedcs_overselect": ("policy", "fedcs_overselect"),
    "k": ("policy", "k"),
    "k_min": ("knee", "k_min"),
    "k_max": ("knee", "k_max"),
    "sweep_rounds": ("knee", "sweep_rounds"),
    "sensitivity": ("knee", "sensitivity"),
    "epochs": ("train", "epochs"),
    "lr": ("train", "learning_rate"),
    "batch_size": ("train", "batch_size"),
    "classes": ("train", "num_classes"),
    "features": ("train", "num_features"),
    "alpha": ("train", "dirichlet_alpha"),
    "holdout_fraction": ("train", "holdout_fraction"),
    "eval_every": ("train", "eval_every"),
}


def _overrides_from_args(args) -> dict:
    overrides: dict = {}
    for flag, (section, key) in _OVERRIDE_MAP.items():
        value = getattr(args, flag, None)
        if value is None:
            continue
        if section is None:
            overrides[key] = value
        else:
            overrides.setdefault(section, {})[key] = value
    if getattr(args, "synth", False):
        overrides.setdefault("population", {})["source"] = "synth"
    if getattr(args, "auto_k", False):
        overrides.setdefault("policy", {})["auto_k"] = True
    if getattr(args, "speed_correlated_labels", False):
        overrides.setdefault("train", {})["speed_correlated_labels"] = True
    return overrides


def _load_run_config(args, require_kind: bool) -> RunConfig:
    cfg = load_config(args.config, _overrides_from_args(args))
    validate_policy_flags(cfg, require_kind=require_kind)
    return cfg


def cmd_cluster(args) -> int:
    cfg = _load_run_config(args, require_kind=False)
    population = build_population(cfg)
    k, _ = resolve_cluster_count(cfg, population)
    cs = cluster(population, k)
    out = _out_dir(args)
    _emit(out, cfg, {"command": "cluster", "result": cs.to_dict()}, {})
    print(f"clustered {len(population)} clients into k={cs.k} "
          f"(sizes {list(cs.sizes)}, k-anonymity {min(cs.sizes)})")
    for j, (members, centroid) in enumerate(zip(cs.clusters, cs.centroids)):
        print(f"  cluster {j}: centroid {centroid:.3f}s, members {list(members)}")
    return EXIT_OK


def cmd_knee(args) -> int:
    cfg = _load_run_config(args, require_kind=False)
    population = build_population(cfg)
    k_max = cfg.knee.k_max
    if k_max is None:
        k_max = default_max_clusters(population, cfg.policy.clients_per_round)
    ks = range(cfg.knee.k_min, k_max + 1)
    chosen, curve = optimal_k(
        population, ks,
        rounds=cfg.knee.sweep_rounds,
        clients_per_round=cfg.policy.clients_per_round,
        seed=derive_seed(cfg.seed, "knee"),
        sensitivity=cfg.knee.sensitivity,
    )
    knee_x = kneedle(curve, cfg.knee.sensitivity) if len(curve) >= 3 else None
    payload = {
        "command": "knee",
        "result": {
            "chosen_k": chosen,
            "knee_x": knee_x,
            "curve": [
                {"k": k, "x": x, "y": y} for k, x, y in zip(curve.ks, curve.xs, curve.ys)
            ],
        },
    }
    out = _out_dir(args)
    _emit(out, cfg, payload, {"curve.csv": lambda p: _write_curve_csv(p, curve)})
    print(f"swept k={list(curve.ks)}; knee at x={knee_x}; chosen k={chosen}")
    return EXIT_OK


def _simulate_one(cfg: RunConfig, population, kind: str) -> SimulationReport:
    policy_cfg = resolve_policy(cfg, population, kind=kind)
    return simulate(population, policy_cfg, cfg.rounds)


def cmd_simulate(args) -> int:
    cfg = _load_run_config(args, require_kind=True)
    population = build_population(cfg)
    report = _simulate_one(cfg, population, cfg.policy.kind)
    fairness = fairness_summary(report, population)
    payload = {
        "command": "simulate",
        "report": report.to_dict(),
        "fairness": fairness.to_dict(),
    }
    out = _out_dir(args)
    _emit(out, cfg, payload, {
        "rounds.csv": lambda p: _write_rounds_csv(p, [report]),
        "cdf.csv": lambda p: _write_cdf_csv(p, report),
    })
    q = report.duration_quantiles or {}
    print(f"{report.policy}: {report.rounds} rounds, total {report.total_time:.2f}s, "
          f"p50 {q.get('p50', float('nan')):.2f}s, p90 {q.get('p90', float('nan')):.2f}s")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_run_config(args, require_kind=True)
    population = build_population(cfg)
    policy_cfg = resolve_policy(cfg, population, kind=cfg.policy.kind)
    tr = cfg.train
    ranks = speed_ranks(population) if tr.speed_correlated_labels else None
    datasets = generate_noniid_data(
        n_clients=len(population),
        num_classes=tr.num_classes,
        num_features=tr.num_features,
        samples_per_client=[population.by_id(i).num_samples for i in population.ids],
        alpha=tr.dirichlet_alpha,
        seed=cfg.seed,
        class_bias_ranks=ranks,
        class_sep=tr.class_sep,
        holdout_fraction=tr.holdout_fraction,
        bias_boost=tr.bias_boost,
    )
    params = TrainParams(
        epochs=tr.epochs,
        learning_rate=tr.learning_rate,
        batch_size=tr.batch_size,
        eval_every=tr.eval_every,
    )
    outcome = federated_train(population, datasets, policy_cfg, cfg.rounds, params)
    eval_report = evaluate_per_client(outcome.model, datasets, population)
    payload = {
        "command": "train",
        "report": outcome.report.to_dict(),
        "fairness": fairness_summary(outcome.report, population).to_dict(),
    }
    accuracy_rows = [
        [h.round_index, outcome.report.policy, h.accuracy, h.loss] for h in outcome.history
    ]
    out = _out_dir(args)
    _emit(out, cfg, payload, {
        "rounds.csv": lambda p: _write_rounds_csv(p, [outcome.report]),
        "cdf.csv": lambda p: _write_cdf_csv(p, outcome.report),
        "accuracy_by_round.csv": lambda p: _write_csv(
            p, ["round", "policy", "global_accuracy", "global_loss"], accuracy_rows
        ),
        "eval.json": lambda p: _write_json(p, {**_provenance(cfg), "eval": eval_report.to_dict()}),
    })
    final = outcome.history[-1] if outcome.history else None
    acc = f"{final.accuracy:.4f}" if final else "n/a"
    print(f"{outcome.report.policy}: trained {cfg.rounds} rounds, "
          f"global accuracy {acc}, slow-group accuracy {eval_report.slow_accuracy:.4f}, "
          f"fast-group accuracy {eval_report.fast_accuracy:.4f}")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load_run_config(args, require_kind=False)
    if cfg.policy.kind is not None:
        raise ConfigurationError("compare runs every policy; drop the policy kind setting")
    population = build_population(cfg)
    reports = {kind: _simulate_one(cfg, population, kind) for kind in KINDS}
    summary = {}
    for kind, report in reports.items():
        q = report.duration_quantiles or {}
        fairness = fairness_summary(report, population)
        summary[kind] = {
            "total_time": report.total_time,
            "p50": q.get("p50"),
            "p90": q.get("p90"),
            "slow_quartile_share": fairness.slow_share,
            "k_anonymity": report.k_anonymity,
        }
    payload = {"command": "compare", "policies": summary}
    out = _out_dir(args)
    _emit(out, cfg, payload, {
        "rounds.csv": lambda p: _write_rounds_csv(p, [reports[k] for k in KINDS]),
    })
    header = f"{'policy':<8} {'total_time_s':>14} {'p50_s':>10} {'p90_s':>10} {'slow_share':>11}"
    print(header)
    for kind in KINDS:
        s = summary[kind]
        print(f"{kind:<8} {s['total_time']:>14.2f} {s['p50']:>10.2f} "
              f"{s['p90']:>10.2f} {s['slow_quartile_share']:>11.4f}")
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override its keys")
    parser.add_argument("--seed", type=int, help="root seed for every random stream")
    parser.add_argument("--out", help="directory for report files")
    parser.add_argument("--n-clients", dest="n_clients", type=int, help="population size")
    parser.add_argument("--devices", help="device table CSV (device,gflops)")
    parser.add_argument("--bandwidth", help="bandwidth table CSV (region,download_mbps,upload_mbps)")
    parser.add_argument("--synth", action="store_true", help="draw a synthetic population instead of tables")
    parser.add_argument("--model-size-bits", dest="model_size_bits", type=float)
    parser.add_argument("--flops-per-sample", dest="flops_per_sample", type=float)


def _add_cluster_knobs(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--k", type=int, help="fixed cluster count")
    parser.add_argument("--auto-k", dest="auto_k", action="store_true",
                        help="pick the cluster count from the sweep knee")
    parser.add_argument("--k-min", dest="k_min", type=int)
    parser.add_argument("--k-max", dest="k_max", type=int)
    parser.add_argument("--sweep-rounds", dest="sweep_rounds", type=int)
    parser.add_argument("--sensitivity", type=float, help="knee detector sensitivity")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedss",
        description="Round-time-aware client selection: cluster, pick k, simulate, train, compare.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_cluster = sub.add_parser("cluster", help="cluster clients by predicted round time")
    _add_common(p_cluster)
    _add_cluster_knobs(p_cluster)
    p_cluster.add_argument("--clients-per-round", dest="clients_per_round", type=int)
    p_cluster.set_defaults(func=cmd_cluster)

    p_knee = sub.add_parser("knee", help="sweep k and report the knee of the time curve")
    _add_common(p_knee)
    p_knee.add_argument("--k-min", dest="k_min", type=int)
    p_knee.add_argument("--k-max", dest="k_max", type=int)
    p_knee.add_argument("--sweep-rounds", dest="sweep_rounds", type=int)
    p_knee.add_argument("--sensitivity", type=float)
    p_knee.add_argument("--clients-per-round", dest="clients_per_round", type=int)
    p_knee.set_defaults(func=cmd_knee)

    p_sim = sub.add_parser("simulate", help="simulate one policy over the time model")
    _add_common(p_sim)
    _add_cluster_knobs(p_sim)
    p_sim.add_argument("--policy", choices=KINDS)
    p_sim.add_argument("--clients-per-round", dest="clients_per_round", type=int)
    p_sim.add_argument("--fedcs-overselect", dest="fedcs_overselect", type=int)
    p_sim.add_argument("--rounds", type=int)
    p_sim.set_defaults(func=cmd_simulate)

    p_train = sub.add_parser("train", help="federated training with the chosen policy")
    _add_common(p_train)
    _add_cluster_knobs(p_train)
    p_train.add_argument("--policy", choices=KINDS)
    p_train.add_argument("--clients-per-round", dest="clients_per_round", type=int)
    p_train.add_argument("--fedcs-overselect", dest="fedcs_overselect", type=int)
    p_train.add_argument("--rounds", type=int)
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--lr", type=float)
    p_train.add_argument("--batch-size", dest="batch_size", type=int)
    p_train.add_argument("--classes", type=int)
    p_train.add_argument("--features", type=int)
    p_train.add_argument("--alpha", type=float, help="Dirichlet concentration for class skew")
    p_train.add_argument("--speed-correlated-labels", dest="speed_correlated_labels",
                         action="store_true",
                         help="tilt class ownership by client speed rank")
    p_train.add_argument("--holdout-fraction", dest="holdout_fraction", type=float)
    p_train.add_argument("--eval-every", dest="eval_every", type=int)
    p_train.set_defaults(func=cmd_train)

    p_cmp = sub.add_parser("compare", help="run all three policies on one population")
    _add_common(p_cmp)
    _add_cluster_knobs(p_cmp)
    p_cmp.add_argument("--clients-per-round", dest="clients_per_round", type=int)
    p_cmp.add_argument("--fedcs-overselect", dest="fedcs_overselect", type=int)
    p_cmp.add_argument("--rounds", type=int)
    p_cmp.set_defaults(func=cmd_compare)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        _fail("config", str(exc))
        return EXIT_CONFIG
    except (TableParseError, EmptyTableError) as exc:
        _fail("parse", str(exc))
        return EXIT_PARSE
    except FileNotFoundError as exc:
        _fail("parse", str(exc))
        return EXIT_PARSE
    except Exception as exc:  # pragma: no cover - defensive
        _fail("internal", f"{type(exc).__name__}: {exc}")
        return EXIT_INTERNAL


def _fail(category: str, message: str) -> None:
    print(json.dumps({"error": {"category": category, "message": message}}), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
