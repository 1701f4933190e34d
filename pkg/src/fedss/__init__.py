"""Smart client selection for federated learning over heterogeneous devices.

Clients are clustered by predicted round time so each round draws from
one speed tier, which shortens rounds without starving slow devices the
way deadline-based filtering does. The package ships the time model, the
equal-size percentile clustering, a knee detector for choosing the
cluster count, round simulation, and a small federated trainer for
measuring the model-bias side effects of each selection policy.
"""
from .clustering import ClusterSet, KMeansResult, assign_by_nearest, cluster, even_out, k_anonymity, kmeans_1d, percentile_centroids
from .config import (
    RunConfig,
    build_population,
    config_from_dict,
    load_config,
    resolve_cluster_count,
    resolve_policy,
)
from .devices import (
    ClientProfile,
    GlobalModelSpec,
    Population,
    SynthSpec,
    default_population,
    estimate_round_time,
    load_population,
    load_population_json,
    save_population,
    synth_population,
)
from .errors import ConfigurationError, EmptyTableError, RoundFailedError, TableParseError
from .knee import KneeCurve, kneedle, optimal_k, sweep_k
from .metrics import ConfusionMatrix, accuracy, f1_weighted, precision_recall_per_class
from .orchestrator import ClientResult, RoundBarrier, dispatch_round
from .policies import (
    FEDCS,
    FEDSS,
    KINDS,
    RANDOM,
    FedCSPolicy,
    FedSSPolicy,
    PolicyConfig,
    RandomPolicy,
    RoundSelection,
    make_policy,
)
from .simulation import (
    FairnessSummary,
    RoundRecord,
    SimulationReport,
    fairness_summary,
    round_duration_cdf,
    simulate,
)
from .training import (
    ClientDataset,
    EvalReport,
    GlobalModel,
    TrainOutcome,
    TrainParams,
    evaluate_global,
    evaluate_per_client,
    fedavg_aggregate,
    federated_train,
    generate_noniid_data,
    local_train,
    speed_ranks,
)

__version__ = "0.1.0"

__all__ = [
    "ClusterSet",
    "KMeansResult",
    "assign_by_nearest",
    "cluster",
    "even_out",
    "k_anonymity",
    "kmeans_1d",
    "percentile_centroids",
    "RunConfig",
    "build_population",
    "config_from_dict",
    "load_config",
    "resolve_cluster_count",
    "resolve_policy",
    "ClientProfile",
    "GlobalModelSpec",
    "Population",
    "SynthSpec",
    "default_population",
    "estimate_round_time",
    "load_population",
    "load_population_json",
    "save_population",
    "synth_population",
    "ConfigurationError",
    "EmptyTableError",
    "RoundFailedError",
    "TableParseError",
    "KneeCurve",
    "kneedle",
    "optimal_k",
    "sweep_k",
    "ConfusionMatrix",
    "accuracy",
    "f1_weighted",
    "precision_recall_per_class",
    "ClientResult",
    "RoundBarrier",
    "dispatch_round",
    "FEDCS",
    "FEDSS",
    "KINDS",
    "RANDOM",
    "FedCSPolicy",
    "FedSSPolicy",
    "PolicyConfig",
    "RandomPolicy",
    "RoundSelection",
    "make_policy",
    "FairnessSummary",
    "RoundRecord",
    "SimulationReport",
    "fairness_summary",
    "round_duration_cdf",
    "simulate",
    "ClientDataset",
    "EvalReport",
    "GlobalModel",
    "TrainOutcome",
    "TrainParams",
    "evaluate_global",
    "evaluate_per_client",
    "fedavg_aggregate",
    "federated_train",
    "generate_noniid_data",
    "local_train",
    "speed_ranks",
]
