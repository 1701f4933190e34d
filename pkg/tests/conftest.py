import numpy as np
import pytest

from fedss import ClientProfile, GlobalModelSpec, Population, default_population

# Transfer time shared by every client of an integer-time population; a
# dyadic constant so t + SHIFT is exactly representable for small ints.
TIME_SHIFT = 2.0 ** -29


def int_time_population(ts, ids=None) -> Population:
    """Population whose round times are exactly t_i + TIME_SHIFT.

    Compute time carries the integer part (num_samples = t_i with unit
    FLOP cost and rate), so relative order and spacing are exact; the
    uniform transfer shift keeps the positivity invariants satisfied.
    """
    if ids is None:
        ids = range(len(ts))
    model = GlobalModelSpec(model_size_bits=2.0 ** -30, flops_per_sample=1.0)
    clients = tuple(
        ClientProfile(
            id=int(i),
            uplink_bps=1.0,
            downlink_bps=1.0,
            flops_rate=1.0,
            num_samples=int(t),
        )
        for i, t in zip(ids, ts)
    )
    return Population(clients=clients, model=model)


@pytest.fixture(scope="session")
def fixture_population() -> Population:
    return default_population()


@pytest.fixture(scope="session")
def fixture_times(fixture_population) -> dict[int, float]:
    return dict(fixture_population.round_times())


def assert_partition(cluster_set, ids) -> None:
    flat = [i for c in cluster_set.clusters for i in c]
    assert len(flat) == len(set(flat))
    assert set(flat) == set(ids)


def assert_contiguous(cluster_set, times_by_id) -> None:
    concatenated = [i for c in cluster_set.clusters for i in c]
    expected = sorted(times_by_id, key=lambda i: (times_by_id[i], i))
    assert concatenated == expected
