"""Equal-size percentile clustering of clients by predicted round time.

Centroids are seeded at evenly spaced percentiles of the round-time
distribution, clients are attached to their nearest centroid, and cluster
sizes are then evened out so no cluster is more than one client larger
than another. Clusters always form contiguous ranges of the time-sorted
client list, so cluster index 0 is the fastest group and index k-1 the
slowest.

A plain 1-D Lloyd k-means lives here too as the comparison baseline; its
sizes are deliberately left uneven.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .devices import Population
from .errors import ConfigurationError

log = logging.getLogger(__name__)

# Moving a client into a faster cluster is allowed to overshoot the
# receiving cluster's own time range by at most this factor before the
# move is flagged as drastic. Evening always completes regardless; the
# factor only controls diagnostics.
DRASTIC_MOVE_FACTOR = 1.5


def percentile_positions(k: int) -> list[float]:
    """Percentile ranks used to seed k centroids: 100*i/(k+1), i=1..k."""
    if k < 1:
        raise ConfigurationError("k must be >= 1")
    return [100.0 * i / (k + 1) for i in range(1, k + 1)]


def percentile_centroids(times: Sequence[float], k: int) -> np.ndarray:
    """Seed centroids at evenly spaced percentiles of ``times``.

    Percentiles use linear interpolation at rank q*(n-1)/100, so the
    result is non-decreasing and lies within [min(times), max(times)].
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ConfigurationError("times must be a non-empty 1-D sequence")
    if not 1 <= k <= times.size:
        raise ConfigurationError(f"k must be in [1, {times.size}], got {k}")
    return np.percentile(times, percentile_positions(k))


@dataclass(frozen=True)
class ClusterSet:
    """A partition of client ids into k clusters ordered fastest-first."""

    k: int
    clusters: tuple[tuple[int, ...], ...]
    centroids: tuple[float, ...]

    def __post_init__(self):
        if self.k != len(self.clusters) or self.k != len(self.centroids):
            raise ConfigurationError("k, clusters, and centroids must agree in length")
        flat = [i for c in self.clusters for i in c]
        if len(set(flat)) != len(flat):
            raise ConfigurationError("clusters must be disjoint")

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(c) for c in self.clusters)

    @property
    def member_ids(self) -> tuple[int, ...]:
        return tuple(sorted(i for c in self.clusters for i in c))

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "clusters": [list(c) for c in self.clusters],
            "centroids": list(self.centroids),
            "sizes": list(self.sizes),
            "k_anonymity": k_anonymity(self),
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "ClusterSet":
        return cls(
            k=payload["k"],
            clusters=tuple(tuple(c) for c in payload["clusters"]),
            centroids=tuple(payload["centroids"]),
        )


def _assign_sorted(ts_sorted: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Cluster index per time for times sorted ascending.

    Nearest-centroid in 1-D reduces to comparing against midpoints between
    consecutive distinct centroid values. The midpoint comparison is
    order-exact under positive rescaling, unlike differences of squared
    distances, and a time equal to a midpoint lands in the lower-indexed
    cluster. Duplicate centroids collapse onto the first index holding the
    value, matching the lower-index tie rule.
    """
    uniques, first_idx = np.unique(centroids, return_index=True)
    cuts = (uniques[:-1] + uniques[1:]) / 2.0
    return first_idx[np.searchsorted(cuts, ts_sorted, side="left")]


def assign_by_nearest(
    times: Sequence[float],
    centroids: Sequence[float],
    ids: Sequence[int] | None = None,
) -> ClusterSet:
    """Attach each client to the centroid nearest its round time.

    Ties (equal squared distance) go to the lower-indexed, faster cluster.
    ``ids`` defaults to 0..n-1; clients are processed in (time, id) order
    so every cluster is a contiguous range of the time-sorted list.
    """
    times = np.asarray(times, dtype=float)
    centroids = np.asarray(centroids, dtype=float)
    if np.any(np.diff(centroids) < 0):
        raise ConfigurationError("centroids must be non-decreasing")
    if ids is None:
        ids = np.arange(times.size)
    ids = np.asarray(ids)
    if ids.size != times.size:
        raise ConfigurationError("ids and times must have equal length")
    order = np.lexsort((ids, times))
    labels = _assign_sorted(times[order], centroids)
    clusters = tuple(
        tuple(int(i) for i in ids[order][labels == j]) for j in range(centroids.size)
    )
    return ClusterSet(k=centroids.size, clusters=clusters, centroids=tuple(float(c) for c in centroids))


def _mean_centroids(clusters: Sequence[Sequence[int]], times_by_id: Mapping[int, float],
                    fallback: Sequence[float]) -> tuple[float, ...]:
    # An empty cluster keeps its seed centroid so lengths stay aligned.
    out = []
    for j, members in enumerate(clusters):
        if members:
            out.append(float(np.mean([times_by_id[i] for i in members])))
        else:
            out.append(float(fallback[j]))
    return tuple(out)


def even_out(raw: ClusterSet, times_by_id: Mapping[int, float]) -> ClusterSet:
    """Even cluster sizes to a max-min spread of at most one client.

    Size already within spread one is left untouched. Otherwise boundary
    clients shift between adjacent clusters until each cluster holds
    floor(n/k) or ceil(n/k) members, with the larger share going to the
    faster clusters; contiguity over the time-sorted order is preserved
    throughout. Reported centroids are the mean round time of the final
    membership either way.
    """
    sizes = raw.sizes
    if max(sizes) - min(sizes) <= 1:
        return ClusterSet(
            k=raw.k,
            clusters=raw.clusters,
            centroids=_mean_centroids(raw.clusters, times_by_id, raw.centroids),
        )
    members = [i for c in raw.clusters for i in c]
    members.sort(key=lambda i: (times_by_id[i], i))
    n, k = len(members), raw.k
    base, extra = divmod(n, k)
    targets = [base + 1 if j < extra else base for j in range(k)]
    clusters: list[tuple[int, ...]] = []
    pos = 0
    for j, t in enumerate(targets):
        chunk = tuple(members[pos:pos + t])
        pos += t
        previous = set(raw.clusters[j])
        pulled_up = [i for i in chunk if i not in previous and _origin_index(raw, i) > j]
        if pulled_up and previous:
            ceiling = DRASTIC_MOVE_FACTOR * max(times_by_id[i] for i in previous)
            for i in pulled_up:
                if times_by_id[i] > ceiling:
                    log.warning(
                        "evening moved client %s (t=%.3g) into faster cluster %d whose "
                        "slowest original member is %.3g",
                        i, times_by_id[i], j, ceiling / DRASTIC_MOVE_FACTOR,
                    )
        clusters.append(chunk)
    return ClusterSet(
        k=k,
        clusters=tuple(clusters),
        centroids=_mean_centroids(clusters, times_by_id, raw.centroids),
    )


def _origin_index(cs: ClusterSet, client_id: int) -> int:
    for j, members in enumerate(cs.clusters):
        if client_id in members:
            return j
    raise KeyError(client_id)


def cluster(population: Population, k: int) -> ClusterSet:
    """Percentile-seeded, size-evened clustering of a population.

    Runs in O(n log n): one sort plus linear passes.
    """
    times_by_id = population.round_times()
    ordered = population.sorted_by_time()
    ids = [c.id for c in ordered]
    ts = [times_by_id[i] for i in ids]
    centroids = percentile_centroids(ts, k)
    raw = assign_by_nearest(ts, centroids, ids=ids)
    return even_out(raw, times_by_id)


@dataclass(frozen=True)
class KMeansResult:
    clusters: ClusterSet
    iterations: int
    converged: bool


def kmeans_1d(
    times: Sequence[float],
    k: int,
    seed: int = 0,
    max_iters: int = 100,
    ids: Sequence[int] | None = None,
) -> KMeansResult:
    """Lloyd's k-means on round times, the unevened comparison baseline.

    Initialization reuses the percentile seeds so runs are reproducible;
    ``seed`` only matters when an empty cluster must be re-seeded from a
    random data point. Iterations count centroid updates performed before
    assignments stop changing.
    """
    times = np.asarray(times, dtype=float)
    if not 1 <= k <= times.size:
        raise ConfigurationError(f"k must be in [1, {times.size}], got {k}")
    if ids is None:
        ids = np.arange(times.size)
    ids = np.asarray(ids)
    order = np.lexsort((ids, times))
    ts = times[order]
    sorted_ids = ids[order]
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x6B6D]))
    centroids = percentile_centroids(ts, k).astype(float)

    def nearest(cents: np.ndarray) -> np.ndarray:
        # argmin returns the first minimum, i.e. ties toward lower index
        return np.argmin((ts[:, None] - cents[None, :]) ** 2, axis=1)

    assignments = nearest(centroids)
    iterations = 0
    converged = False
    while iterations < max_iters:
        for j in range(k):
            mask = assignments == j
            if mask.any():
                centroids[j] = ts[mask].mean()
            else:
                centroids[j] = ts[rng.integers(0, ts.size)]
        iterations += 1
        fresh = nearest(centroids)
        if np.array_equal(fresh, assignments):
            converged = True
            break
        assignments = fresh

    by_centroid = np.argsort(centroids, kind="stable")
    clusters = tuple(
        tuple(int(i) for i in sorted_ids[assignments == j]) for j in by_centroid
    )
    cents = tuple(float(centroids[j]) for j in by_centroid)
    return KMeansResult(
        clusters=ClusterSet(k=k, clusters=clusters, centroids=cents),
        iterations=iterations,
        converged=converged,
    )


def k_anonymity(cs: ClusterSet) -> int:
    """Smallest cluster size: the anonymity set a member is hidden in."""
    return min(cs.sizes)
