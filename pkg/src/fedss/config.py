"""Run configuration: JSON file plus flag overrides, strictly validated.

A run is described by a nested config with sections for the population,
the model, the policy, training, and the knee sweep. Unknown keys are
rejected by name rather than ignored, and policy-specific knobs may only
appear together with the policy they belong to. The fully resolved
config (with every default filled in) is embedded in all JSON outputs so
any result file can be traced back to its exact inputs.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .clustering import cluster
from .devices import (
    DEFAULT_MODEL,
    DEFAULT_SAMPLES_RANGE,
    GlobalModelSpec,
    Population,
    SynthSpec,
    bundled_fixture_paths,
    load_population,
    synth_population,
)
from .errors import ConfigurationError
from .knee import default_max_clusters, optimal_k
from .policies import FEDCS, FEDSS, KINDS, RANDOM, PolicyConfig
from .seeds import derive_seed


@dataclass(frozen=True)
class SynthOptions:
    flops_rate: tuple[float, float] = (1e9, 1e12)
    uplink_bps: tuple[float, float] = (1e6, 1e9)
    downlink_bps: tuple[float, float] = (2e6, 2e9)
    num_samples: tuple[int, int] = (50, 500)


@dataclass(frozen=True)
class PopulationOptions:
    source: str = "fixture"  # fixture | synth
    n_clients: int = 20
    devices: str | None = None  # None -> bundled table
    bandwidth: str | None = None
    samples_range: tuple[int, int] = DEFAULT_SAMPLES_RANGE
    synth: SynthOptions = field(default_factory=SynthOptions)


@dataclass(frozen=True)
class ModelOptions:
    model_size_bits: float = DEFAULT_MODEL.model_size_bits
    flops_per_sample: float = DEFAULT_MODEL.flops_per_sample


@dataclass(frozen=True)
class PolicyOptions:
    kind: str | None = None
    clients_per_round: int = 5
    fedcs_overselect: int | None = None
    k: int | None = None
    auto_k: bool = False


@dataclass(frozen=True)
class TrainOptions:
    epochs: int = 2
    learning_rate: float = 0.1
    batch_size: int = 32
    num_classes: int = 5
    num_features: int = 8
    dirichlet_alpha: float = 0.3
    speed_correlated_labels: bool = False
    class_sep: float = 3.0
    bias_boost: float = 8.0
    holdout_fraction: float = 0.2
    eval_every: int = 10


@dataclass(frozen=True)
class KneeOptions:
    k_min: int = 1
    k_max: int | None = None  # None -> min(10, n // clients_per_round)
    sweep_rounds: int = 200
    sensitivity: float = 1.0


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    rounds: int = 100
    population: PopulationOptions = field(default_factory=PopulationOptions)
    model: ModelOptions = field(default_factory=ModelOptions)
    policy: PolicyOptions = field(default_factory=PolicyOptions)
    train: TrainOptions = field(default_factory=TrainOptions)
    knee: KneeOptions = field(default_factory=KneeOptions)

    def resolved_dict(self) -> dict:
        """Every knob with defaults filled in, ready for provenance."""
        return dataclasses.asdict(self)


_SECTION_TYPES = {
    "population": PopulationOptions,
    "model": ModelOptions,
    "policy": PolicyOptions,
    "train": TrainOptions,
    "knee": KneeOptions,
}
_TUPLE_FIELDS = {"samples_range", "flops_rate", "uplink_bps", "downlink_bps", "num_samples"}


def _build_section(cls, payload: Mapping, path: str):
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs: dict[str, Any] = {}
    for key, value in payload.items():
        if key not in known:
            raise ConfigurationError(f"unknown config key: {path}{key}")
        if key == "synth":
            if not isinstance(value, Mapping):
                raise ConfigurationError(f"{path}{key} must be an object")
            kwargs[key] = _build_section(SynthOptions, value, f"{path}{key}.")
        elif key in _TUPLE_FIELDS:
            if not (isinstance(value, (list, tuple)) and len(value) == 2):
                raise ConfigurationError(f"{path}{key} must be a [low, high] pair")
            kwargs[key] = (value[0], value[1])
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigurationError(f"bad value under {path.rstrip('.') or 'config'}: {exc}") from exc


def config_from_dict(payload: Mapping) -> RunConfig:
    """Parse a nested config mapping; unknown keys fail by name."""
    top_fields = {f.name for f in dataclasses.fields(RunConfig)}
    kwargs: dict[str, Any] = {}
    for key, value in payload.items():
        if key not in top_fields:
            raise ConfigurationError(f"unknown config key: {key}")
        if key in _SECTION_TYPES:
            if not isinstance(value, Mapping):
                raise ConfigurationError(f"config section {key} must be an object")
            kwargs[key] = _build_section(_SECTION_TYPES[key], value, f"{key}.")
        else:
            kwargs[key] = value
    return RunConfig(**kwargs)


def _deep_merge(base: dict, extra: Mapping) -> dict:
    out = dict(base)
    for key, value in extra.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path: str | Path | None, overrides: Mapping | None = None) -> RunConfig:
    """Read a JSON config file (optional) and apply nested overrides.

    Overrides use the same nesting as the file; they win key by key.
    """
    payload: dict = {}
    if path is not None:
        with open(path) as fh:
            try:
                payload = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(payload, dict):
            raise ConfigurationError(f"config file {path} must hold a JSON object")
    if overrides:
        payload = _deep_merge(payload, overrides)
    return config_from_dict(payload)


def validate_policy_flags(cfg: RunConfig, require_kind: bool) -> None:
    """Reject knob combinations that contradict the chosen policy."""
    pol = cfg.policy
    if pol.k is not None and pol.auto_k:
        raise ConfigurationError("choose either a fixed k or auto_k, not both")
    if pol.kind is None:
        if require_kind:
            raise ConfigurationError("a policy kind is required (random, fedcs, or fedss)")
        return
    if pol.kind not in KINDS:
        raise ConfigurationError(f"unknown policy kind: {pol.kind!r}")
    if pol.kind != FEDCS and pol.fedcs_overselect is not None:
        raise ConfigurationError(f"fedcs_overselect conflicts with policy {pol.kind!r}")
    if pol.kind != FEDSS and (pol.k is not None or pol.auto_k):
        raise ConfigurationError(f"cluster options (k, auto_k) conflict with policy {pol.kind!r}")


def build_model(cfg: RunConfig) -> GlobalModelSpec:
    return GlobalModelSpec(
        model_size_bits=cfg.model.model_size_bits,
        flops_per_sample=cfg.model.flops_per_sample,
    )


def build_population(cfg: RunConfig) -> Population:
    """Materialize the configured population, deterministic per seed."""
    pop = cfg.population
    model = build_model(cfg)
    if pop.source == "fixture":
        devices, bandwidth = bundled_fixture_paths()
        if pop.devices is not None:
            devices = Path(pop.devices)
        if pop.bandwidth is not None:
            bandwidth = Path(pop.bandwidth)
        return load_population(
            devices, bandwidth, model, n=pop.n_clients, seed=cfg.seed,
            samples_range=pop.samples_range,
        )
    if pop.source == "synth":
        spec = SynthSpec(
            flops_rate=pop.synth.flops_rate,
            uplink_bps=pop.synth.uplink_bps,
            downlink_bps=pop.synth.downlink_bps,
            num_samples=pop.synth.num_samples,
        )
        return synth_population(spec, model, n=pop.n_clients, seed=cfg.seed)
    raise ConfigurationError(f"unknown population source: {pop.source!r}")


def resolve_cluster_count(cfg: RunConfig, population: Population) -> tuple[int, Any]:
    """The k to use for FedSS: fixed, knee-picked, or the feasibility cap.

    Returns (k, sweep_curve); the curve is None unless auto_k ran.
    """
    pol = cfg.policy
    if pol.k is not None:
        return pol.k, None
    k_max = cfg.knee.k_max
    if k_max is None:
        k_max = default_max_clusters(population, pol.clients_per_round)
    if pol.auto_k:
        ks = range(cfg.knee.k_min, k_max + 1)
        chosen, curve = optimal_k(
            population,
            ks,
            rounds=cfg.knee.sweep_rounds,
            clients_per_round=pol.clients_per_round,
            seed=derive_seed(cfg.seed, "knee"),
            sensitivity=cfg.knee.sensitivity,
        )
        return chosen, curve
    return k_max, None


def resolve_policy(cfg: RunConfig, population: Population, kind: str | None = None) -> PolicyConfig:
    """Turn config options into a runnable, validated PolicyConfig."""
    pol = cfg.policy
    kind = kind or pol.kind
    if kind is None:
        raise ConfigurationError("a policy kind is required (random, fedcs, or fedss)")
    cluster_set = None
    if kind == FEDSS:
        k, _ = resolve_cluster_count(cfg, population)
        cluster_set = cluster(population, k)
    overselect = pol.fedcs_overselect if kind == FEDCS else None
    if kind == FEDCS and overselect is None:
        overselect = min(len(population), pol.clients_per_round + 3)
    # One shared policy stream: different kinds on the same seed see the
    # same per-round randomness, mirroring a paired experiment design.
    return PolicyConfig(
        kind=kind,
        clients_per_round=pol.clients_per_round,
        fedcs_overselect=overselect,
        cluster_set=cluster_set,
        rng_seed=derive_seed(cfg.seed, "policy"),
    ).validated(population)
