"""Round-by-round simulation driven purely by the round-time model.

No training happens here: each round selects clients, charges the round
its slowest aggregated client's predicted time, and moves on. Reports
carry everything the CLI and the fairness analysis need, and two runs
with the same population, policy config, and round count are identical.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .clustering import k_anonymity
from .devices import Population
from .errors import ConfigurationError
from .policies import FEDSS, PolicyConfig, RoundSelection, make_policy

QUANTILE_LEVELS = (0.10, 0.50, 0.90, 0.99)


@dataclass(frozen=True)
class RoundRecord:
    round_index: int
    policy: str
    duration: float
    invited: tuple[int, ...]
    aggregated: tuple[int, ...]
    cluster_index: int | None = None


@dataclass(frozen=True)
class SimulationReport:
    policy: str
    rounds: int
    seed: int
    clients_per_round: int
    records: tuple[RoundRecord, ...]
    total_time: float
    selection_counts: Mapping[int, int]
    aggregation_counts: Mapping[int, int]
    duration_quantiles: Mapping[str, float] | None
    k_anonymity: int | None = None

    def durations(self) -> np.ndarray:
        return np.array([r.duration for r in self.records])

    def to_dict(self) -> dict:
        return {
            "policy": self.policy,
            "rounds": self.rounds,
            "seed": self.seed,
            "clients_per_round": self.clients_per_round,
            "total_time": self.total_time,
            "selection_counts": {str(i): c for i, c in sorted(self.selection_counts.items())},
            "aggregation_counts": {str(i): c for i, c in sorted(self.aggregation_counts.items())},
            "duration_quantiles": dict(self.duration_quantiles) if self.duration_quantiles else None,
            "k_anonymity": self.k_anonymity,
        }


def _nearest_rank(sorted_values: np.ndarray, q: float) -> float:
    idx = max(int(np.ceil(q * sorted_values.size)) - 1, 0)
    return float(sorted_values[idx])


def duration_quantiles(durations: Sequence[float]) -> dict[str, float] | None:
    """Nearest-rank quantiles at the standard reporting levels."""
    values = np.sort(np.asarray(durations, dtype=float))
    if values.size == 0:
        return None
    return {f"p{int(q * 100)}": _nearest_rank(values, q) for q in QUANTILE_LEVELS}


def compile_report(
    population: Population,
    config: PolicyConfig,
    selections: Iterable[RoundSelection],
) -> SimulationReport:
    """Fold per-round selections into a SimulationReport."""
    records = []
    selection_counts = {i: 0 for i in population.ids}
    aggregation_counts = {i: 0 for i in population.ids}
    for sel in selections:
        records.append(
            RoundRecord(
                round_index=sel.round_index,
                policy=sel.policy,
                duration=sel.round_duration,
                invited=sel.invited,
                aggregated=sel.aggregated,
                cluster_index=sel.cluster_index,
            )
        )
        for i in sel.invited:
            selection_counts[i] += 1
        for i in sel.aggregated:
            aggregation_counts[i] += 1
    durations = np.array([r.duration for r in records])
    return SimulationReport(
        policy=config.kind,
        rounds=len(records),
        seed=config.rng_seed,
        clients_per_round=config.clients_per_round,
        records=tuple(records),
        total_time=float(durations.sum()) if records else 0.0,
        selection_counts=selection_counts,
        aggregation_counts=aggregation_counts,
        duration_quantiles=duration_quantiles(durations),
        k_anonymity=k_anonymity(config.cluster_set) if config.kind == FEDSS else None,
    )


def simulate(population: Population, config: PolicyConfig, rounds: int) -> SimulationReport:
    """Run ``rounds`` rounds of the configured policy over the time model."""
    if rounds < 0:
        raise ConfigurationError("rounds must be >= 0")
    config = config.validated(population)
    policy = make_policy(population, config)
    selections = (policy.select(r) for r in range(rounds))
    return compile_report(population, config, selections)


def round_duration_cdf(report: SimulationReport) -> list[tuple[float, float]]:
    """Empirical CDF of round durations as (duration, fraction <= duration).

    Duplicate durations collapse into a single step carrying the highest
    cumulative fraction, so a constant-duration run yields one point.
    """
    durations = np.sort(report.durations())
    n = durations.size
    points: list[tuple[float, float]] = []
    for i, d in enumerate(durations, start=1):
        value = float(d)
        frac = i / n
        if points and points[-1][0] == value:
            points[-1] = (value, frac)
        else:
            points.append((value, frac))
    return points


@dataclass(frozen=True)
class FairnessSummary:
    """How evenly aggregation slots were spread over clients."""

    clients_per_round: int
    rounds: int
    aggregation_share: Mapping[int, float]
    selection_share: Mapping[int, float]
    gini: float
    slow_ids: tuple[int, ...]
    slow_share: float

    def to_dict(self) -> dict:
        return {
            "clients_per_round": self.clients_per_round,
            "rounds": self.rounds,
            "aggregation_share": {str(i): s for i, s in sorted(self.aggregation_share.items())},
            "selection_share": {str(i): s for i, s in sorted(self.selection_share.items())},
            "gini": self.gini,
            "slow_ids": list(self.slow_ids),
            "slow_share": self.slow_share,
        }


def _gini(counts: np.ndarray) -> float:
    total = counts.sum()
    if total == 0:
        return 0.0
    diffs = np.abs(counts[:, None] - counts[None, :]).sum()
    return float(diffs / (2 * counts.size * total))


def fairness_summary(
    report: SimulationReport,
    population: Population,
    slow_count: int | None = None,
) -> FairnessSummary:
    """Aggregation shares, a Gini spread, and the slow clients' cut.

    ``slow_count`` defaults to the slowest quartile (at least one client).
    Shares are fractions of rounds, so a perfectly fair run gives every
    client clients_per_round/n.
    """
    n = len(population)
    if slow_count is None:
        slow_count = max(1, n // 4)
    slow_count = min(slow_count, n)
    rounds = report.rounds
    agg = {i: (report.aggregation_counts[i] / rounds if rounds else 0.0) for i in population.ids}
    sel = {i: (report.selection_counts[i] / rounds if rounds else 0.0) for i in population.ids}
    ordered = population.sorted_by_time()
    slow_ids = tuple(c.id for c in ordered[-slow_count:])
    counts = np.array([report.aggregation_counts[i] for i in population.ids], dtype=float)
    total = counts.sum()
    slow_total = sum(report.aggregation_counts[i] for i in slow_ids)
    return FairnessSummary(
        clients_per_round=report.clients_per_round,
        rounds=rounds,
        aggregation_share=agg,
        selection_share=sel,
        gini=_gini(counts),
        slow_ids=slow_ids,
        slow_share=float(slow_total / total) if total else 0.0,
    )
