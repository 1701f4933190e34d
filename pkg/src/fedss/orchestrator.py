"""In-process concurrent round execution with an ack-counting barrier.

Worker threads stand in for remote clients: each runs its work function,
then acknowledges completion on a shared barrier that fires exactly once
when the target count is reached. Simulated durations are carried in the
results and are decoupled from wall-clock scheduling, so outcomes do not
depend on thread interleaving. The request/response boundary (ids in,
ClientResult out) is the seam where a networked transport would slot in.
"""
from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor, wait
from dataclasses import dataclass
from typing import Callable, Sequence

from .errors import ConfigurationError, RoundFailedError


@dataclass(frozen=True)
class ClientResult:
    """One client's completed round: simulated duration plus payload."""

    client_id: int
    duration: float
    payload: object = None


class RoundBarrier:
    """Counts completions and releases the coordinator exactly once.

    ``ack`` may be called concurrently from many workers; each client may
    ack at most once, the count never exceeds the target, and the
    completion event fires on exactly the ack that reaches the target.
    """

    def __init__(self, target: int):
        if target < 1:
            raise ConfigurationError("barrier target must be >= 1")
        self.target = target
        self._lock = threading.Lock()
        self._done = threading.Event()
        self._results: list[ClientResult] = []
        self._seen: set[int] = set()
        self._completions = 0

    @property
    def acked(self) -> int:
        with self._lock:
            return len(self._results)

    @property
    def completion_count(self) -> int:
        """How many times the barrier has fired; never exceeds one."""
        with self._lock:
            return self._completions

    def ack(self, result: ClientResult) -> None:
        with self._lock:
            if result.client_id in self._seen:
                raise RuntimeError(f"client {result.client_id} acked twice")
            if len(self._results) >= self.target:
                raise RuntimeError("barrier received more acks than its target")
            self._seen.add(result.client_id)
            self._results.append(result)
            if len(self._results) == self.target:
                self._completions += 1
                self._done.set()

    def wait(self, timeout: float | None = None) -> tuple[ClientResult, ...]:
        """Block until the target count is reached; results by client id."""
        if not self._done.wait(timeout):
            raise TimeoutError(f"barrier saw {self.acked}/{self.target} acks")
        with self._lock:
            return tuple(sorted(self._results, key=lambda r: r.client_id))


def dispatch_round(
    client_ids: Sequence[int],
    work: Callable[[int], ClientResult],
    *,
    first_k: int | None = None,
    max_workers: int | None = None,
    barrier: RoundBarrier | None = None,
) -> tuple[ClientResult, ...]:
    """Run ``work`` for every client concurrently and collect the round.

    Results come back ordered by client id regardless of completion
    interleaving. With ``first_k``, only the k results with the smallest
    (duration, id) are kept and the rest are discarded, mirroring a
    deadline server that stops listening after the k fastest responders;
    ranking uses the simulated durations, never wall-clock order, so the
    kept set is reproducible. All invited clients still run and ack.

    Any client raising makes the whole round fail with an error naming
    the offenders; nothing is partially aggregated. ``barrier`` may be
    injected to observe the ack accounting from outside.
    """
    ids = list(client_ids)
    if not ids:
        raise ConfigurationError("dispatch_round needs at least one client")
    if len(set(ids)) != len(ids):
        raise ConfigurationError("client ids must be unique")
    if first_k is not None and not 1 <= first_k <= len(ids):
        raise ConfigurationError(f"first_k must lie in [1, {len(ids)}]")
    if barrier is None:
        barrier = RoundBarrier(len(ids))
    elif barrier.target != len(ids):
        raise ConfigurationError("injected barrier target must equal the client count")

    def run_one(cid: int) -> None:
        result = work(cid)
        if not isinstance(result, ClientResult) or result.client_id != cid:
            raise RuntimeError(f"work for client {cid} returned a mismatched result")
        barrier.ack(result)

    workers = max_workers or len(ids)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {cid: pool.submit(run_one, cid) for cid in ids}
        wait(list(futures.values()))
    failed = sorted(cid for cid, f in futures.items() if f.exception() is not None)
    if failed:
        raise RoundFailedError(failed, cause=futures[failed[0]].exception())
    results = barrier.wait(timeout=0)
    if first_k is not None and first_k < len(results):
        fastest = sorted(results, key=lambda r: (r.duration, r.client_id))[:first_k]
        results = tuple(sorted(fastest, key=lambda r: r.client_id))
    return results
