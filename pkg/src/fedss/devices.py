"""Client profiles, hardware tables, and round-time prediction.

Units are explicit and fixed package-wide: model size in bits, link rates
in bits/second, per-sample training cost in FLOP, and device compute in
FLOP/second. Input tables use consumer-friendly units (GFLOPS, Mbit/s)
and are converted on load.

The bundled device and bandwidth tables are an illustrative synthetic mix
of phone-class hardware and access networks, not measurements of any real
fleet.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, EmptyTableError, TableParseError
from .seeds import POPULATION, stream_rng

UNITS = {
    "model_size": "bits",
    "bandwidth": "bits/second",
    "flops_per_sample": "flop",
    "flops_rate": "flop/second",
    "round_time": "seconds",
}

GFLOPS = 1e9
MBPS = 1e6

# Fixture-backed populations default to this seed so that every consumer
# of "the 20-client fixture" sees the same draw.
DEFAULT_FIXTURE_SEED = 7
DEFAULT_SAMPLES_RANGE = (50, 500)


@dataclass(frozen=True)
class GlobalModelSpec:
    """Size and per-sample training cost of the shared model."""

    model_size_bits: float
    flops_per_sample: float

    def __post_init__(self):
        if not (self.model_size_bits > 0):
            raise ConfigurationError("model_size_bits must be positive")
        if not (self.flops_per_sample > 0):
            raise ConfigurationError("flops_per_sample must be positive")


@dataclass(frozen=True)
class ClientProfile:
    """One client's link rates, compute rate, and local dataset size."""

    id: int
    uplink_bps: float
    downlink_bps: float
    flops_rate: float
    num_samples: int

    def __post_init__(self):
        for name in ("uplink_bps", "downlink_bps", "flops_rate"):
            value = getattr(self, name)
            if not (value > 0 and np.isfinite(value)):
                raise ConfigurationError(f"client {self.id}: {name} must be positive and finite")
        if self.num_samples < 0:
            raise ConfigurationError(f"client {self.id}: num_samples must be >= 0")


def estimate_round_time(client: ClientProfile, model: GlobalModelSpec) -> float:
    """Predicted wall time for one round on ``client``, in seconds.

    Download and upload each move the full model once; compute scales with
    the client's local sample count.
    """
    upload = model.model_size_bits / client.uplink_bps
    compute = client.num_samples * model.flops_per_sample / client.flops_rate
    download = model.model_size_bits / client.downlink_bps
    return upload + compute + download


@dataclass(frozen=True)
class Population:
    """A fixed set of clients plus the model they will train."""

    clients: tuple[ClientProfile, ...]
    model: GlobalModelSpec

    def __post_init__(self):
        if not self.clients:
            raise ConfigurationError("population must contain at least one client")
        ids = [c.id for c in self.clients]
        if len(set(ids)) != len(ids):
            raise ConfigurationError("client ids must be unique")

    def __len__(self) -> int:
        return len(self.clients)

    def _memo(self, key: str, build):
        # Clients and model are immutable, so derived lookups are cached
        # on first use; policies query round times every round and large
        # populations cannot afford to recompute them.
        if key not in self.__dict__:
            object.__setattr__(self, key, build())
        return self.__dict__[key]

    @property
    def ids(self) -> tuple[int, ...]:
        return self._memo("_ids", lambda: tuple(sorted(c.id for c in self.clients)))

    def by_id(self, client_id: int) -> ClientProfile:
        index = self._memo("_by_id", lambda: {c.id: c for c in self.clients})
        return index[client_id]

    def round_times(self) -> Mapping[int, float]:
        """id -> predicted round time for every client (read-only view)."""
        return self._memo(
            "_round_times",
            lambda: MappingProxyType(
                {c.id: estimate_round_time(c, self.model) for c in self.clients}
            ),
        )

    def sorted_by_time(self) -> list[ClientProfile]:
        """Clients ordered by (round time, id) ascending."""
        times = self.round_times()
        return list(self._memo(
            "_sorted_by_time",
            lambda: tuple(sorted(self.clients, key=lambda c: (times[c.id], c.id))),
        ))


def _read_table(path: str | Path, columns: Sequence[str]) -> list[dict[str, float | str]]:
    """Parse a CSV table with an exact header and numeric value columns.

    The first column is kept as a string label; the rest must parse as
    positive finite floats. Raises TableParseError naming file, line, and
    column on the first malformed cell, EmptyTableError when no data rows
    follow the header.
    """
    path = Path(path)
    rows: list[dict[str, float | str]] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyTableError(str(path)) from None
        header = [h.strip() for h in header]
        if header != list(columns):
            raise TableParseError(
                str(path), 1, ",".join(header),
                f"expected header {','.join(columns)}",
            )
        for lineno, raw in enumerate(reader, start=2):
            if not raw or all(not cell.strip() for cell in raw):
                continue
            if len(raw) != len(columns):
                raise TableParseError(
                    str(path), lineno, columns[min(len(raw), len(columns)) - 1],
                    f"expected {len(columns)} fields, got {len(raw)}",
                )
            row: dict[str, float | str] = {columns[0]: raw[0].strip()}
            for col, cell in zip(columns[1:], raw[1:]):
                try:
                    value = float(cell)
                except ValueError:
                    raise TableParseError(str(path), lineno, col, f"not a number: {cell!r}") from None
                if not (value > 0 and np.isfinite(value)):
                    raise TableParseError(str(path), lineno, col, f"must be positive and finite, got {cell!r}")
                row[col] = value
            rows.append(row)
    if not rows:
        raise EmptyTableError(str(path))
    return rows


def read_device_table(path: str | Path) -> list[dict]:
    """Rows of ``device,gflops`` with compute converted to FLOP/s."""
    rows = _read_table(path, ("device", "gflops"))
    return [{"device": r["device"], "flops_rate": r["gflops"] * GFLOPS} for r in rows]


def read_bandwidth_table(path: str | Path) -> list[dict]:
    """Rows of ``region,download_mbps,upload_mbps`` converted to bit/s."""
    rows = _read_table(path, ("region", "download_mbps", "upload_mbps"))
    return [
        {
            "region": r["region"],
            "downlink_bps": r["download_mbps"] * MBPS,
            "uplink_bps": r["upload_mbps"] * MBPS,
        }
        for r in rows
    ]


def bundled_fixture_paths() -> tuple[Path, Path]:
    """Paths of the device and bandwidth tables shipped with the package."""
    data = resources.files("fedss") / "data"
    return Path(str(data / "devices.csv")), Path(str(data / "bandwidth.csv"))


def load_population(
    device_table: str | Path,
    bandwidth_table: str | Path,
    model: GlobalModelSpec,
    n: int,
    seed: int,
    samples_range: tuple[int, int] = DEFAULT_SAMPLES_RANGE,
) -> Population:
    """Draw ``n`` clients by pairing random device and bandwidth rows.

    Device and region rows are sampled independently and uniformly with
    replacement; local dataset sizes are uniform integers over
    ``samples_range`` (inclusive). Deterministic per seed.
    """
    if n < 1:
        raise ConfigurationError("population size must be >= 1")
    lo, hi = samples_range
    if lo < 0 or hi < lo:
        raise ConfigurationError("samples_range must satisfy 0 <= lo <= hi")
    devices = read_device_table(device_table)
    bandwidths = read_bandwidth_table(bandwidth_table)
    rng = stream_rng(seed, POPULATION)
    device_idx = rng.integers(0, len(devices), size=n)
    bw_idx = rng.integers(0, len(bandwidths), size=n)
    samples = rng.integers(lo, hi + 1, size=n)
    clients = tuple(
        ClientProfile(
            id=i,
            uplink_bps=bandwidths[bw_idx[i]]["uplink_bps"],
            downlink_bps=bandwidths[bw_idx[i]]["downlink_bps"],
            flops_rate=devices[device_idx[i]]["flops_rate"],
            num_samples=int(samples[i]),
        )
        for i in range(n)
    )
    return Population(clients=clients, model=model)


DEFAULT_MODEL = GlobalModelSpec(model_size_bits=8e7, flops_per_sample=5e8)


def default_population(n: int = 20, seed: int = DEFAULT_FIXTURE_SEED) -> Population:
    """The bundled heterogeneous fixture population."""
    dev, bw = bundled_fixture_paths()
    return load_population(dev, bw, DEFAULT_MODEL, n=n, seed=seed)


@dataclass(frozen=True)
class SynthSpec:
    """Log-uniform ranges for synthetic client draws.

    Each field is an inclusive (low, high) range; low == high pins the
    value exactly, which makes perfectly homogeneous populations easy to
    construct in tests.
    """

    flops_rate: tuple[float, float] = (1e9, 1e12)
    uplink_bps: tuple[float, float] = (1e6, 1e9)
    downlink_bps: tuple[float, float] = (2e6, 2e9)
    num_samples: tuple[int, int] = (50, 500)

    def __post_init__(self):
        for name in ("flops_rate", "uplink_bps", "downlink_bps", "num_samples"):
            lo, hi = getattr(self, name)
            if not (lo > 0 and hi >= lo):
                raise ConfigurationError(f"synth range {name} must satisfy 0 < lo <= hi")


def _log_uniform(rng: np.random.Generator, lo: float, hi: float, size: int) -> np.ndarray:
    if lo == hi:
        return np.full(size, float(lo))
    return np.exp(rng.uniform(np.log(lo), np.log(hi), size=size))


def synth_population(
    spec: SynthSpec,
    model: GlobalModelSpec,
    n: int,
    seed: int,
) -> Population:
    """Draw ``n`` synthetic clients with log-uniform rates and sizes."""
    if n < 1:
        raise ConfigurationError("population size must be >= 1")
    rng = stream_rng(seed, POPULATION, "synth")
    flops = _log_uniform(rng, *spec.flops_rate, n)
    up = _log_uniform(rng, *spec.uplink_bps, n)
    down = _log_uniform(rng, *spec.downlink_bps, n)
    samples = np.rint(_log_uniform(rng, float(spec.num_samples[0]), float(spec.num_samples[1]), n))
    clients = tuple(
        ClientProfile(
            id=i,
            uplink_bps=float(up[i]),
            downlink_bps=float(down[i]),
            flops_rate=float(flops[i]),
            num_samples=int(samples[i]),
        )
        for i in range(n)
    )
    return Population(clients=clients, model=model)


def population_to_dict(population: Population) -> dict:
    """JSON-ready form with an explicit units declaration."""
    return {
        "units": dict(UNITS),
        "model": {
            "model_size_bits": population.model.model_size_bits,
            "flops_per_sample": population.model.flops_per_sample,
        },
        "clients": [
            {
                "id": c.id,
                "uplink_bps": c.uplink_bps,
                "downlink_bps": c.downlink_bps,
                "flops_rate": c.flops_rate,
                "num_samples": c.num_samples,
            }
            for c in sorted(population.clients, key=lambda c: c.id)
        ],
    }


def population_from_dict(payload: Mapping) -> Population:
    units = payload.get("units")
    if units is not None and units != UNITS:
        raise ConfigurationError(f"population file declares unexpected units: {units}")
    model = GlobalModelSpec(**payload["model"])
    clients = tuple(ClientProfile(**c) for c in payload["clients"])
    return Population(clients=clients, model=model)


def save_population(population: Population, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(population_to_dict(population), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_population_json(path: str | Path) -> Population:
    with open(path) as fh:
        return population_from_dict(json.load(fh))
