"""Choosing the cluster count from the time-vs-k tradeoff curve.

More clusters mean faster average rounds but smaller anonymity sets, so
the interesting k sits where the curve stops improving quickly. The
detector normalizes the curve to the unit square, measures how far it
bulges away from the diagonal, and accepts the first bulge peak that is
followed by a sufficiently deep drop; sensitivity scales the required
drop. Curves are left unsmoothed: sweeps here are cheap enough to run
with generous round counts instead.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .clustering import ClusterSet, cluster
from .devices import Population
from .errors import ConfigurationError
from .policies import FEDSS, PolicyConfig
from .seeds import derive_seed
from .simulation import simulate

log = logging.getLogger(__name__)

# Fallback rule when no knee is confirmed: smallest k whose average time
# is within this factor of the sweep minimum.
FLAT_CURVE_SLACK = 1.05


@dataclass(frozen=True)
class KneeCurve:
    """Sampled (x, y) curve with strictly increasing x.

    ``ks`` carries the cluster count behind each sample when the curve
    came from a sweep; synthetic curves may omit it.
    """

    xs: tuple[float, ...]
    ys: tuple[float, ...]
    ks: tuple[int, ...] | None = None

    def __post_init__(self):
        if len(self.xs) != len(self.ys):
            raise ConfigurationError("xs and ys must have equal length")
        if self.ks is not None and len(self.ks) != len(self.xs):
            raise ConfigurationError("ks must align with xs")
        if len(self.xs) == 0:
            raise ConfigurationError("curve must contain at least one point")
        if np.any(np.diff(self.xs) <= 0):
            raise ConfigurationError("xs must be strictly increasing")

    def __len__(self) -> int:
        return len(self.xs)


def kneedle(curve: KneeCurve, sensitivity: float = 1.0) -> float | None:
    """First confirmed knee of a diminishing-returns curve, or None.

    Works on concave increasing curves and on convex decreasing ones
    (which are flipped vertically first). Both axes are min-max
    normalized; the difference d = y - x peaks at candidate knees, and a
    candidate is confirmed when d falls below the peak minus
    sensitivity times the mean x step before another peak appears.
    Returns the knee's x in original coordinates.
    """
    if sensitivity < 0:
        raise ConfigurationError("sensitivity must be >= 0")
    if len(curve) < 3:
        raise ConfigurationError("knee detection needs at least 3 points")
    x = np.asarray(curve.xs, dtype=float)
    y = np.asarray(curve.ys, dtype=float)
    y_span = y.max() - y.min()
    if y_span == 0:
        return None
    xn = (x - x.min()) / (x.max() - x.min())
    yn = (y - y.min()) / y_span
    if y[-1] < y[0]:
        yn = 1.0 - yn
    d = yn - xn
    n = d.size
    peaks = [
        i for i in range(1, n - 1)
        if d[i] > d[i - 1] and d[i] >= d[i + 1]
    ]
    if not peaks:
        return None
    peak_set = set(peaks)
    mean_gap = float(np.mean(np.diff(xn)))
    for p in peaks:
        threshold = d[p] - sensitivity * mean_gap
        for j in range(p + 1, n):
            if j in peak_set:
                break
            if d[j] < threshold:
                return float(x[p])
    return None


def avg_round_time_for_clusters(
    population: Population,
    cluster_set: ClusterSet,
    rounds: int,
    clients_per_round: int,
    seed: int,
) -> float:
    """Mean round duration of round-robin selection over a fixed clustering."""
    if rounds < 1:
        raise ConfigurationError("rounds must be >= 1")
    smallest = min(cluster_set.sizes)
    if clients_per_round > smallest:
        raise ConfigurationError(
            f"clients_per_round {clients_per_round} exceeds smallest cluster size {smallest}"
        )
    config = PolicyConfig(
        kind=FEDSS,
        clients_per_round=clients_per_round,
        cluster_set=cluster_set,
        rng_seed=seed,
    )
    report = simulate(population, config, rounds)
    return report.total_time / rounds


def avg_round_time_for_k(
    population: Population,
    k: int,
    rounds: int,
    clients_per_round: int,
    seed: int,
) -> float:
    """Mean round duration when the population is split into k clusters."""
    return avg_round_time_for_clusters(
        population, cluster(population, k), rounds, clients_per_round, seed
    )


def default_max_clusters(population: Population, clients_per_round: int) -> int:
    """Largest k worth sweeping: capped at 10 and at n/clients_per_round."""
    return max(1, min(10, len(population) // clients_per_round))


def sweep_k(
    population: Population,
    ks: Sequence[int],
    rounds: int,
    clients_per_round: int,
    seed: int,
) -> KneeCurve:
    """Average round time per candidate k, x-axis normalized to k/n.

    Each k runs under its own derived seed so adding or removing
    candidates does not disturb the others. Infeasible k (a cluster
    smaller than clients_per_round) are skipped with a warning.
    """
    n = len(population)
    xs: list[float] = []
    ys: list[float] = []
    kept: list[int] = []
    for k in sorted(set(ks)):
        if k < 1 or k > n:
            log.warning("skipping k=%d: outside [1, %d]", k, n)
            continue
        try:
            y = avg_round_time_for_k(
                population, k, rounds, clients_per_round, derive_seed(seed, "sweep", k)
            )
        except ConfigurationError as exc:
            log.warning("skipping k=%d: %s", k, exc)
            continue
        kept.append(k)
        xs.append(k / n)
        ys.append(y)
    if not kept:
        raise ConfigurationError("no feasible k in sweep range")
    return KneeCurve(xs=tuple(xs), ys=tuple(ys), ks=tuple(kept))


def optimal_k(
    population: Population,
    ks: Sequence[int],
    rounds: int,
    clients_per_round: int,
    seed: int,
    sensitivity: float = 1.0,
) -> tuple[int, KneeCurve]:
    """Sweep candidate cluster counts and pick one.

    The knee of the sweep curve wins when one is confirmed; otherwise the
    smallest k within FLAT_CURVE_SLACK of the sweep minimum is chosen,
    which handles flat curves from homogeneous populations. Returns the
    chosen k along with the sweep curve for reporting.
    """
    curve = sweep_k(population, ks, rounds, clients_per_round, seed)
    knee_x = kneedle(curve, sensitivity) if len(curve) >= 3 else None
    if knee_x is not None:
        idx = int(np.argmin(np.abs(np.asarray(curve.xs) - knee_x)))
        return curve.ks[idx], curve
    ys = np.asarray(curve.ys)
    cutoff = ys.min() * FLAT_CURVE_SLACK
    for k, y in zip(curve.ks, curve.ys):
        if y <= cutoff:
            return k, curve
    return curve.ks[-1], curve
