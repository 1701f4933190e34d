"""Desk-scale federated training of a multinomial logistic model.

Synthetic classification data is spread across clients with a Dirichlet
prior over class proportions, optionally correlated with client speed so
that slow clients own particular classes. Local training is plain
mini-batch gradient descent on softmax cross-entropy; the server applies
sample-count-weighted FedAvg to the returned deltas. Every random choice
derives from named seed streams, so a run is a pure function of its
configuration.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .devices import Population
from .errors import ConfigurationError
from .metrics import ConfusionMatrix, accuracy, f1_weighted
from .orchestrator import ClientResult, dispatch_round
from .policies import FEDCS, PolicyConfig, make_policy
from .seeds import DATA, TRAINING, stream_rng
from .simulation import SimulationReport, compile_report


@dataclass(frozen=True)
class GlobalModel:
    """Shared softmax-regression parameters, versioned per aggregation."""

    weights: np.ndarray  # (num_classes, num_features)
    bias: np.ndarray  # (num_classes,)
    version: int = 0

    def __post_init__(self):
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ConfigurationError("weights must be (classes, features), bias (classes,)")

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def num_features(self) -> int:
        return self.weights.shape[1]

    def predict(self, features: np.ndarray) -> np.ndarray:
        logits = features @ self.weights.T + self.bias
        return np.argmax(logits, axis=1)


def zero_model(num_classes: int, num_features: int) -> GlobalModel:
    return GlobalModel(
        weights=np.zeros((num_classes, num_features)),
        bias=np.zeros(num_classes),
        version=0,
    )


@dataclass(frozen=True)
class TrainParams:
    epochs: int = 2
    learning_rate: float = 0.1
    batch_size: int = 32
    eval_every: int = 10

    def __post_init__(self):
        if self.epochs < 0 or self.learning_rate < 0:
            raise ConfigurationError("epochs and learning_rate must be >= 0")
        if self.batch_size < 1 or self.eval_every < 1:
            raise ConfigurationError("batch_size and eval_every must be >= 1")


@dataclass(frozen=True)
class ClientDataset:
    """One client's local examples plus a frozen holdout split."""

    client_id: int
    features: np.ndarray  # (n, num_features)
    labels: np.ndarray  # (n,)
    num_classes: int
    holdout_idx: np.ndarray  # sorted unique positions kept out of training

    def __post_init__(self):
        if self.features.ndim != 2 or self.labels.shape != (self.features.shape[0],):
            raise ConfigurationError("features must be (n, d) with matching labels")
        if self.holdout_idx.size:
            if self.holdout_idx.min() < 0 or self.holdout_idx.max() >= self.n:
                raise ConfigurationError("holdout_idx out of range")
            if np.unique(self.holdout_idx).size != self.holdout_idx.size:
                raise ConfigurationError("holdout_idx must be unique")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def train_idx(self) -> np.ndarray:
        return np.setdiff1d(np.arange(self.n), self.holdout_idx)

    @property
    def train_features(self) -> np.ndarray:
        return self.features[self.train_idx]

    @property
    def train_labels(self) -> np.ndarray:
        return self.labels[self.train_idx]

    @property
    def holdout_features(self) -> np.ndarray:
        return self.features[self.holdout_idx]

    @property
    def holdout_labels(self) -> np.ndarray:
        return self.labels[self.holdout_idx]

    def class_histogram(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


def _largest_remainder(proportions: np.ndarray, total: int) -> np.ndarray:
    """Integer counts summing to ``total`` that track ``proportions``.

    Deterministic: leftover units go to the largest fractional parts,
    ties broken toward the lower class index.
    """
    ideal = proportions * total
    base = np.floor(ideal).astype(int)
    leftover = total - base.sum()
    if leftover > 0:
        order = sorted(range(proportions.size), key=lambda c: (-(ideal[c] - base[c]), c))
        for c in order[:leftover]:
            base[c] += 1
    return base


def speed_ranks(population: Population) -> dict[int, float]:
    """id -> rank in [0, 1] by predicted round time, 0 being fastest."""
    ordered = population.sorted_by_time()
    n = len(ordered)
    if n == 1:
        return {ordered[0].id: 0.0}
    return {c.id: pos / (n - 1) for pos, c in enumerate(ordered)}


def generate_noniid_data(
    n_clients: int,
    num_classes: int,
    num_features: int,
    samples_per_client: int | Sequence[int],
    alpha: float,
    seed: int,
    class_bias_ranks: Mapping[int, float] | None = None,
    class_sep: float = 3.0,
    holdout_fraction: float = 0.2,
    bias_boost: float = 8.0,
) -> list[ClientDataset]:
    """Draw per-client Gaussian-mixture data with Dirichlet class skew.

    Class-conditional means are shared by every client and drawn once per
    seed, scaled to ``class_sep`` so classes are separable but not
    trivial. Each client's class proportions come from Dirichlet(alpha);
    small alpha concentrates a client's data on few classes, huge alpha
    approaches uniform. With ``class_bias_ranks`` (id -> speed rank in
    [0, 1]) the Dirichlet base measure is tilted so clients of similar
    speed favor the same classes, which is how selection bias against
    slow clients becomes visible in per-class skill.

    Proportions are realized as exact deterministic counts, and a
    stratified ``holdout_fraction`` of each client's data is fenced off
    for evaluation. Client ids are 0..n_clients-1 in the returned list.
    """
    if n_clients < 1 or num_classes < 1 or num_features < 1:
        raise ConfigurationError("n_clients, num_classes, num_features must be >= 1")
    if alpha <= 0:
        raise ConfigurationError("alpha must be positive")
    if not 0 <= holdout_fraction < 1:
        raise ConfigurationError("holdout_fraction must lie in [0, 1)")
    if isinstance(samples_per_client, (int, np.integer)):
        counts = [int(samples_per_client)] * n_clients
    else:
        counts = [int(s) for s in samples_per_client]
        if len(counts) != n_clients:
            raise ConfigurationError("samples_per_client must give one count per client")
    if any(s < 0 for s in counts):
        raise ConfigurationError("sample counts must be >= 0")

    mean_rng = stream_rng(seed, DATA, "means")
    raw = mean_rng.standard_normal((num_classes, num_features))
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    means = class_sep * raw / norms

    datasets = []
    for cid in range(n_clients):
        rng = stream_rng(seed, DATA, "client", cid)
        if class_bias_ranks is not None:
            rank = float(class_bias_ranks[cid])
            dominant = min(num_classes - 1, int(rank * num_classes))
            weights = np.ones(num_classes)
            weights[dominant] = bias_boost
            alpha_vec = alpha * num_classes * weights / weights.sum()
        else:
            alpha_vec = np.full(num_classes, alpha)
        proportions = rng.dirichlet(alpha_vec)
        n = counts[cid]
        per_class = _largest_remainder(proportions, n)
        labels = np.repeat(np.arange(num_classes), per_class)
        features = means[labels] + rng.standard_normal((n, num_features))
        perm = rng.permutation(n)
        labels = labels[perm]
        features = features[perm]

        holdout_parts = []
        for c in range(num_classes):
            class_pos = np.flatnonzero(labels == c)
            take = int(class_pos.size * holdout_fraction)
            if take:
                holdout_parts.append(rng.choice(class_pos, size=take, replace=False))
        holdout = np.sort(np.concatenate(holdout_parts)) if holdout_parts else np.array([], dtype=int)
        if holdout.size == 0 and n >= 2:
            biggest = int(np.argmax(np.bincount(labels, minlength=num_classes)))
            holdout = np.array([int(rng.choice(np.flatnonzero(labels == biggest)))])
        datasets.append(
            ClientDataset(
                client_id=cid,
                features=features,
                labels=labels,
                num_classes=num_classes,
                holdout_idx=holdout,
            )
        )
    return datasets


def softmax_loss_and_grad(
    weights: np.ndarray, bias: np.ndarray, features: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy and its gradients for a softmax classifier."""
    n = features.shape[0]
    if n == 0:
        raise ConfigurationError("cannot evaluate loss on zero samples")
    logits = features @ weights.T + bias
    logits -= logits.max(axis=1, keepdims=True)
    exp = np.exp(logits)
    probs = exp / exp.sum(axis=1, keepdims=True)
    loss = float(-np.mean(np.log(probs[np.arange(n), labels] + 1e-300)))
    dz = probs
    dz[np.arange(n), labels] -= 1.0
    dz /= n
    return loss, dz.T @ features, dz.sum(axis=0)


@dataclass(frozen=True)
class LocalUpdate:
    """A client's parameter delta plus its aggregation weight."""

    delta_weights: np.ndarray
    delta_bias: np.ndarray
    num_samples: int


def local_train(
    model: GlobalModel, dataset: ClientDataset, params: TrainParams, rng: np.random.Generator
) -> LocalUpdate:
    """Mini-batch gradient descent from the model snapshot; returns a delta.

    Zero epochs, a zero learning rate, or an empty training split all
    yield an exactly zero delta. The aggregation weight is the client's
    training split size.
    """
    features = dataset.train_features
    labels = dataset.train_labels
    n = labels.size
    weights = model.weights.copy()
    bias = model.bias.copy()
    if n > 0 and params.epochs > 0 and params.learning_rate > 0:
        batch = min(params.batch_size, n)
        for _ in range(params.epochs):
            order = rng.permutation(n)
            for start in range(0, n, batch):
                take = order[start:start + batch]
                _, grad_w, grad_b = softmax_loss_and_grad(weights, bias, features[take], labels[take])
                weights -= params.learning_rate * grad_w
                bias -= params.learning_rate * grad_b
    return LocalUpdate(
        delta_weights=weights - model.weights,
        delta_bias=bias - model.bias,
        num_samples=int(n),
    )


def fedavg_aggregate(model: GlobalModel, updates: Sequence[LocalUpdate]) -> GlobalModel:
    """Apply sample-count-weighted deltas to the snapshot.

    new = snapshot + sum_i (n_i / sum_j n_j) * delta_i. All-zero weights
    leave the parameters untouched; the version always advances by one.
    """
    total = sum(u.num_samples for u in updates)
    if total == 0:
        return GlobalModel(model.weights.copy(), model.bias.copy(), model.version + 1)
    delta_w = np.zeros_like(model.weights)
    delta_b = np.zeros_like(model.bias)
    for u in updates:
        share = u.num_samples / total
        delta_w += share * u.delta_weights
        delta_b += share * u.delta_bias
    return GlobalModel(model.weights + delta_w, model.bias + delta_b, model.version + 1)


@dataclass(frozen=True)
class RoundEval:
    round_index: int
    accuracy: float
    loss: float


@dataclass(frozen=True)
class TrainOutcome:
    model: GlobalModel
    report: SimulationReport
    history: tuple[RoundEval, ...]


def _pooled_holdout(datasets: Sequence[ClientDataset]) -> tuple[np.ndarray, np.ndarray]:
    xs = [d.holdout_features for d in datasets if d.holdout_idx.size]
    ys = [d.holdout_labels for d in datasets if d.holdout_idx.size]
    if not xs:
        return np.zeros((0, 1)), np.zeros(0, dtype=int)
    return np.concatenate(xs), np.concatenate(ys)


def evaluate_global(model: GlobalModel, datasets: Sequence[ClientDataset]) -> tuple[float, float]:
    """(accuracy, mean cross-entropy) over all clients' pooled holdouts."""
    features, labels = _pooled_holdout(datasets)
    if labels.size == 0:
        return 0.0, 0.0
    cm = ConfusionMatrix.from_predictions(labels, model.predict(features), model.num_classes)
    loss, _, _ = softmax_loss_and_grad(model.weights, model.bias, features, labels)
    return accuracy(cm), loss


def federated_train(
    population: Population,
    datasets: Sequence[ClientDataset],
    config: PolicyConfig,
    rounds: int,
    params: TrainParams,
) -> TrainOutcome:
    """Run selection, concurrent local training, and FedAvg for ``rounds``.

    Round timing bookkeeping matches the pure simulator exactly: the same
    policy with the same seed yields the same SimulationReport whether or
    not training is attached. Local training RNG streams depend only on
    (seed, round, client id), never on the policy, so two policies that
    happen to select the same clients produce identical updates.
    """
    if rounds < 0:
        raise ConfigurationError("rounds must be >= 0")
    config = config.validated(population)
    by_id = {d.client_id: d for d in datasets}
    if set(by_id) != set(population.ids):
        raise ConfigurationError("datasets must cover exactly the population's client ids")
    for profile in population.clients:
        if by_id[profile.id].n != profile.num_samples:
            raise ConfigurationError(
                f"client {profile.id}: dataset has {by_id[profile.id].n} rows, "
                f"profile declares {profile.num_samples}"
            )
    classes = {d.num_classes for d in datasets}
    widths = {d.features.shape[1] for d in datasets}
    if len(classes) != 1 or len(widths) != 1:
        raise ConfigurationError("datasets must agree on num_classes and feature width")

    policy = make_policy(population, config)
    times = population.round_times()
    model = zero_model(classes.pop(), widths.pop())
    selections = []
    history: list[RoundEval] = []

    for r in range(rounds):
        selection = policy.select(r)
        snapshot = model

        def run_client(cid: int) -> ClientResult:
            rng = stream_rng(config.rng_seed, TRAINING, "round", r, "client", cid)
            update = local_train(snapshot, by_id[cid], params, rng)
            return ClientResult(client_id=cid, duration=times[cid], payload=update)

        keep = config.clients_per_round if config.kind == FEDCS else None
        results = dispatch_round(selection.invited, run_client, first_k=keep)
        kept_ids = tuple(res.client_id for res in results)
        if kept_ids != selection.aggregated:
            raise RuntimeError(
                f"round {r}: dispatch kept {kept_ids}, policy aggregated {selection.aggregated}"
            )
        model = fedavg_aggregate(model, [res.payload for res in results])
        selections.append(selection)
        if (r + 1) % params.eval_every == 0 or r == rounds - 1:
            acc, loss = evaluate_global(model, datasets)
            history.append(RoundEval(round_index=r, accuracy=acc, loss=loss))

    report = compile_report(population, config, selections)
    return TrainOutcome(model=model, report=report, history=tuple(history))


@dataclass(frozen=True)
class ClientEval:
    client_id: int
    accuracy: float
    f1_weighted: float
    holdout_size: int
    evaluated: bool


@dataclass(frozen=True)
class EvalReport:
    """Per-client holdout skill plus fast/slow group summaries."""

    per_client: tuple[ClientEval, ...]
    fast_ids: tuple[int, ...]
    slow_ids: tuple[int, ...]
    fast_accuracy: float
    slow_accuracy: float
    fast_f1: float
    slow_f1: float

    def to_dict(self) -> dict:
        return {
            "per_client": [
                {
                    "client_id": e.client_id,
                    "accuracy": e.accuracy,
                    "f1_weighted": e.f1_weighted,
                    "holdout_size": e.holdout_size,
                    "evaluated": e.evaluated,
                }
                for e in self.per_client
            ],
            "fast_ids": list(self.fast_ids),
            "slow_ids": list(self.slow_ids),
            "fast_accuracy": self.fast_accuracy,
            "slow_accuracy": self.slow_accuracy,
            "fast_f1": self.fast_f1,
            "slow_f1": self.slow_f1,
        }


def evaluate_per_client(
    model: GlobalModel,
    datasets: Sequence[ClientDataset],
    population: Population,
    group_size: int = 4,
) -> EvalReport:
    """Score the global model on each client's own holdout.

    Group means cover the ``group_size`` fastest and slowest clients by
    predicted round time (ties by id); clients with an empty holdout are
    flagged and excluded from the means.
    """
    if group_size < 1:
        raise ConfigurationError("group_size must be >= 1")
    by_id = {d.client_id: d for d in datasets}
    evals = []
    for cid in population.ids:
        ds = by_id[cid]
        if ds.holdout_idx.size == 0:
            evals.append(ClientEval(cid, 0.0, 0.0, 0, False))
            continue
        cm = ConfusionMatrix.from_predictions(
            ds.holdout_labels, model.predict(ds.holdout_features), ds.num_classes
        )
        evals.append(
            ClientEval(cid, accuracy(cm), f1_weighted(cm), int(ds.holdout_idx.size), True)
        )
    by_cid = {e.client_id: e for e in evals}
    ordered = [c.id for c in population.sorted_by_time()]
    size = min(group_size, len(ordered))
    fast_ids = tuple(ordered[:size])
    slow_ids = tuple(ordered[-size:])

    def group_mean(ids: tuple[int, ...], field: str) -> float:
        values = [getattr(by_cid[i], field) for i in ids if by_cid[i].evaluated]
        return float(np.mean(values)) if values else 0.0

    return EvalReport(
        per_client=tuple(evals),
        fast_ids=fast_ids,
        slow_ids=slow_ids,
        fast_accuracy=group_mean(fast_ids, "accuracy"),
        slow_accuracy=group_mean(slow_ids, "accuracy"),
        fast_f1=group_mean(fast_ids, "f1_weighted"),
        slow_f1=group_mean(slow_ids, "f1_weighted"),
    )
