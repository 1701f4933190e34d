import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedss import (
    FEDCS,
    FEDSS,
    RANDOM,
    ConfigurationError,
    PolicyConfig,
    cluster,
    make_policy,
)
from fedss.policies import select_fedcs, select_fedss, select_random
from fedss.seeds import POLICY, stream_rng

from conftest import int_time_population


def rng_for(seed, r=0):
    return stream_rng(seed, POLICY, "round", r)


def test_random_selects_exactly_k(fixture_population, fixture_times):
    sel = select_random(fixture_population, 5, rng_for(0))
    assert len(sel.aggregated) == 5
    assert sel.invited == sel.aggregated
    assert list(sel.aggregated) == sorted(sel.aggregated)
    assert sel.round_duration == max(fixture_times[i] for i in sel.aggregated)
    assert sel.cluster_index is None


def test_random_full_population_hits_global_max(fixture_population, fixture_times):
    n = len(fixture_population.clients)
    sel = select_random(fixture_population, n, rng_for(1))
    assert sel.aggregated == tuple(sorted(fixture_times))
    assert sel.round_duration == max(fixture_times.values())


def test_fedcs_keeps_fastest_of_invited():
    pop = int_time_population([1, 2, 3, 4, 5, 6, 7, 8])
    times = pop.round_times()
    sel = select_fedcs(pop, 5, 8, rng_for(0))
    assert sel.invited == tuple(range(8))
    assert sel.aggregated == (0, 1, 2, 3, 4)
    assert sel.round_duration == times[4]


def test_fedcs_duration_is_kth_smallest(fixture_population, fixture_times):
    sel = select_fedcs(fixture_population, 5, 8, rng_for(3))
    assert len(sel.invited) == 8
    assert len(sel.aggregated) == 5
    invited_times = sorted(fixture_times[i] for i in sel.invited)
    assert sel.round_duration == invited_times[4]
    assert set(sel.aggregated) <= set(sel.invited)


def test_fedcs_tie_break_prefers_lower_id():
    pop = int_time_population([5, 5, 5, 5], ids=[10, 11, 12, 13])
    sel = select_fedcs(pop, 2, 4, rng_for(0))
    assert sel.aggregated == (10, 11)


def test_fedcs_without_overselect_matches_random(fixture_population):
    for r in range(20):
        a = select_random(fixture_population, 5, rng_for(7, r), r)
        b = select_fedcs(fixture_population, 5, 5, rng_for(7, r), r)
        assert a.aggregated == b.aggregated
        assert a.round_duration == b.round_duration


def test_fedss_single_cluster_matches_random(fixture_population):
    cs = cluster(fixture_population, 1)
    for r in range(20):
        a = select_random(fixture_population, 5, rng_for(2, r), r)
        b = select_fedss(fixture_population, cs, r, 5, rng_for(2, r), r)
        assert a.aggregated == b.aggregated


def test_fedss_draws_within_cursor_cluster(fixture_population, fixture_times):
    cs = cluster(fixture_population, 4)
    for r in range(8):
        sel = select_fedss(fixture_population, cs, r, 3, rng_for(5, r), r)
        assert sel.cluster_index == r % 4
        members = set(cs.clusters[r % 4])
        assert set(sel.aggregated) <= members
        lo = min(fixture_times[i] for i in members)
        hi = max(fixture_times[i] for i in members)
        assert lo <= sel.round_duration <= hi


def test_fedss_policy_cursor_wraps(fixture_population):
    cs = cluster(fixture_population, 4)
    policy = make_policy(
        fixture_population,
        PolicyConfig(kind=FEDSS, clients_per_round=5, cluster_set=cs, rng_seed=0),
    )
    seen = [policy.select(r).cluster_index for r in range(8)]
    assert seen == [0, 1, 2, 3, 0, 1, 2, 3]


def test_fedss_rounds_sort_by_cluster_speed(fixture_population):
    # Contiguous clusters mean every fast-cluster round beats every
    # slower-cluster round outright, not just on average.
    cs = cluster(fixture_population, 4)
    policy = make_policy(
        fixture_population,
        PolicyConfig(kind=FEDSS, clients_per_round=5, cluster_set=cs, rng_seed=0),
    )
    by_cluster = {}
    for r in range(40):
        sel = policy.select(r)
        by_cluster.setdefault(sel.cluster_index, []).append(sel.round_duration)
    for i in range(3):
        assert max(by_cluster[i]) <= min(by_cluster[i + 1])


def test_policy_streams_are_replayable(fixture_population):
    cfg = PolicyConfig(kind=RANDOM, clients_per_round=5, rng_seed=11)
    first = [make_policy(fixture_population, cfg).select(r).aggregated for r in range(10)]
    second = [make_policy(fixture_population, cfg).select(r).aggregated for r in range(10)]
    assert first == second
    assert len(set(first)) > 1


def test_rounds_use_distinct_streams(fixture_population):
    policy = make_policy(
        fixture_population, PolicyConfig(kind=RANDOM, clients_per_round=5, rng_seed=0)
    )
    draws = {policy.select(r).aggregated for r in range(30)}
    assert len(draws) > 1


def test_validated_fills_fedcs_default(fixture_population):
    cfg = PolicyConfig(kind=FEDCS, clients_per_round=5).validated(fixture_population)
    assert cfg.fedcs_overselect == 5


def test_validation_rejects_misconfiguration(fixture_population):
    cs = cluster(fixture_population, 4)
    bad = [
        PolicyConfig(kind="greedy", clients_per_round=5),
        PolicyConfig(kind=RANDOM, clients_per_round=0),
        PolicyConfig(kind=RANDOM, clients_per_round=21),
        PolicyConfig(kind=RANDOM, clients_per_round=5, fedcs_overselect=8),
        PolicyConfig(kind=RANDOM, clients_per_round=5, cluster_set=cs),
        PolicyConfig(kind=FEDCS, clients_per_round=5, fedcs_overselect=4),
        PolicyConfig(kind=FEDCS, clients_per_round=5, fedcs_overselect=21),
        PolicyConfig(kind=FEDCS, clients_per_round=5, cluster_set=cs),
        PolicyConfig(kind=FEDSS, clients_per_round=5),
        PolicyConfig(kind=FEDSS, clients_per_round=6, cluster_set=cs),
    ]
    for cfg in bad:
        with pytest.raises(ConfigurationError):
            cfg.validated(fixture_population)


def test_validation_rejects_foreign_cluster_ids(fixture_population):
    other = cluster(int_time_population(range(1, 21), ids=range(100, 120)), 4)
    cfg = PolicyConfig(kind=FEDSS, clients_per_round=5, cluster_set=other)
    with pytest.raises(ConfigurationError):
        cfg.validated(fixture_population)


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(min_value=0, max_value=2**32 - 1),
    r=st.integers(min_value=0, max_value=500),
    kind=st.sampled_from([RANDOM, FEDCS, FEDSS]),
)
def test_selection_invariants(fixture_population, fixture_times, seed, r, kind):
    cs = cluster(fixture_population, 4) if kind == FEDSS else None
    over = 8 if kind == FEDCS else None
    cfg = PolicyConfig(
        kind=kind,
        clients_per_round=5,
        fedcs_overselect=over,
        cluster_set=cs,
        rng_seed=seed,
    )
    sel = make_policy(fixture_population, cfg).select(r)
    assert len(sel.aggregated) == 5
    assert len(set(sel.aggregated)) == 5
    assert list(sel.aggregated) == sorted(sel.aggregated)
    assert set(sel.aggregated) <= set(fixture_times)
    assert sel.round_duration == max(fixture_times[i] for i in sel.aggregated)
    assert sel.round_index == r
    assert sel.policy == kind
