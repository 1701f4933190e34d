"""Per-round client selection: Random, FedCS-style, and cluster round-robin.

All three policies pick ``clients_per_round`` clients to aggregate each
round and report the round's duration as the slowest aggregated client's
predicted time. Draws are deterministic per (seed, round_index): each
round derives its own RNG stream, so replaying any prefix of rounds
reproduces the original selections exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .clustering import ClusterSet
from .devices import Population
from .errors import ConfigurationError
from .seeds import POLICY, stream_rng

RANDOM = "random"
FEDCS = "fedcs"
FEDSS = "fedss"
KINDS = (RANDOM, FEDCS, FEDSS)


@dataclass(frozen=True)
class RoundSelection:
    """Outcome of one round's selection, ids in ascending order."""

    round_index: int
    policy: str
    invited: tuple[int, ...]
    aggregated: tuple[int, ...]
    round_duration: float
    cluster_index: int | None = None


@dataclass(frozen=True)
class PolicyConfig:
    """Which policy to run and its knobs.

    ``fedcs_overselect`` only applies to FedCS and defaults to
    ``clients_per_round`` (which degenerates to Random). ``cluster_set``
    is required for FedSS and must give every cluster at least
    ``clients_per_round`` members.
    """

    kind: str
    clients_per_round: int
    fedcs_overselect: int | None = None
    cluster_set: ClusterSet | None = None
    rng_seed: int = 0

    def validated(self, population: Population) -> "PolicyConfig":
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown policy kind: {self.kind!r}")
        n = len(population)
        k_sel = self.clients_per_round
        if k_sel < 1:
            raise ConfigurationError("clients_per_round must be >= 1")
        if k_sel > n:
            raise ConfigurationError(f"clients_per_round {k_sel} exceeds population size {n}")
        cfg = self
        if self.kind == FEDCS:
            over = self.fedcs_overselect if self.fedcs_overselect is not None else k_sel
            if not k_sel <= over <= n:
                raise ConfigurationError(
                    f"fedcs_overselect must lie in [{k_sel}, {n}], got {over}"
                )
            cfg = replace(cfg, fedcs_overselect=over)
        elif self.fedcs_overselect is not None:
            raise ConfigurationError("fedcs_overselect only applies to the fedcs policy")
        if self.kind == FEDSS:
            if self.cluster_set is None:
                raise ConfigurationError("fedss requires a cluster_set")
            if not set(self.cluster_set.member_ids) <= set(population.ids):
                raise ConfigurationError("cluster_set contains ids outside the population")
            smallest = min(self.cluster_set.sizes)
            if k_sel > smallest:
                raise ConfigurationError(
                    f"clients_per_round {k_sel} exceeds smallest cluster size {smallest}"
                )
        elif self.cluster_set is not None:
            raise ConfigurationError("cluster_set only applies to the fedss policy")
        return cfg


def _duration(times: dict[int, float], ids) -> float:
    return max(times[i] for i in ids)


def _draw(rng: np.random.Generator, pool: np.ndarray, count: int) -> np.ndarray:
    return rng.choice(pool, size=count, replace=False)


def select_random(
    population: Population,
    clients_per_round: int,
    rng: np.random.Generator,
    round_index: int = 0,
) -> RoundSelection:
    """Uniform draw without replacement from the whole population."""
    pool = np.array(population.ids)
    if clients_per_round > pool.size:
        raise ConfigurationError("clients_per_round exceeds population size")
    picked = tuple(sorted(int(i) for i in _draw(rng, pool, clients_per_round)))
    times = population.round_times()
    return RoundSelection(
        round_index=round_index,
        policy=RANDOM,
        invited=picked,
        aggregated=picked,
        round_duration=_duration(times, picked),
    )


def select_fedcs(
    population: Population,
    clients_per_round: int,
    overselect: int,
    rng: np.random.Generator,
    round_index: int = 0,
) -> RoundSelection:
    """Invite extra clients, keep the fastest responders.

    ``overselect`` clients are invited uniformly; the ``clients_per_round``
    with the smallest predicted times (ties by id) are aggregated, so the
    round lasts exactly as long as its slowest kept client.
    """
    pool = np.array(population.ids)
    if not clients_per_round <= overselect <= pool.size:
        raise ConfigurationError("need clients_per_round <= overselect <= population size")
    invited = sorted(int(i) for i in _draw(rng, pool, overselect))
    times = population.round_times()
    by_speed = sorted(invited, key=lambda i: (times[i], i))
    kept = tuple(sorted(by_speed[:clients_per_round]))
    return RoundSelection(
        round_index=round_index,
        policy=FEDCS,
        invited=tuple(invited),
        aggregated=kept,
        round_duration=_duration(times, kept),
    )


def select_fedss(
    population: Population,
    cluster_set: ClusterSet,
    round_robin_cursor: int,
    clients_per_round: int,
    rng: np.random.Generator,
    round_index: int = 0,
) -> RoundSelection:
    """Uniform draw inside the cluster the round-robin cursor points at.

    Clusters are visited in fastest-to-slowest order, wrapping every
    ``cluster_set.k`` rounds. Draws are taken over the cluster's members
    in ascending id order, so a single all-client cluster reproduces the
    Random policy draw for draw.
    """
    idx = round_robin_cursor % cluster_set.k
    members = np.array(sorted(cluster_set.clusters[idx]))
    if clients_per_round > members.size:
        raise ConfigurationError(
            f"cluster {idx} has {members.size} members, cannot select {clients_per_round}"
        )
    picked = tuple(sorted(int(i) for i in _draw(rng, members, clients_per_round)))
    times = population.round_times()
    return RoundSelection(
        round_index=round_index,
        policy=FEDSS,
        invited=picked,
        aggregated=picked,
        round_duration=_duration(times, picked),
        cluster_index=int(idx),
    )


class _BasePolicy:
    def __init__(self, population: Population, config: PolicyConfig):
        self.population = population
        self.config = config
        self._times = population.round_times()

    def _rng(self, round_index: int) -> np.random.Generator:
        return stream_rng(self.config.rng_seed, POLICY, "round", round_index)

    def select(self, round_index: int) -> RoundSelection:
        raise NotImplementedError


class RandomPolicy(_BasePolicy):
    def select(self, round_index: int) -> RoundSelection:
        return select_random(
            self.population, self.config.clients_per_round, self._rng(round_index), round_index
        )


class FedCSPolicy(_BasePolicy):
    def select(self, round_index: int) -> RoundSelection:
        return select_fedcs(
            self.population,
            self.config.clients_per_round,
            self.config.fedcs_overselect,
            self._rng(round_index),
            round_index,
        )


class FedSSPolicy(_BasePolicy):
    def __init__(self, population: Population, config: PolicyConfig):
        super().__init__(population, config)
        self.cursor = 0

    def select(self, round_index: int) -> RoundSelection:
        selection = select_fedss(
            self.population,
            self.config.cluster_set,
            self.cursor,
            self.config.clients_per_round,
            self._rng(round_index),
            round_index,
        )
        self.cursor += 1
        return selection


def make_policy(population: Population, config: PolicyConfig) -> _BasePolicy:
    config = config.validated(population)
    cls = {RANDOM: RandomPolicy, FEDCS: FedCSPolicy, FEDSS: FedSSPolicy}[config.kind]
    return cls(population, config)
