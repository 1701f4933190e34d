"""End-to-end acceptance checks, one per shipping criterion.

Each test pins its full configuration (population, seeds, rounds,
tolerances) and prints one ``criterion NN PASS|FAIL`` line; run with
``pytest tests/test_acceptance.py -v -s`` to see them. The heavier
checks (large-population sweep, bias training) take tens of seconds.
"""
import json
import time
from fractions import Fraction

import numpy as np

from fedss import (
    FEDCS,
    FEDSS,
    RANDOM,
    ClientProfile,
    ClientResult,
    GlobalModel,
    GlobalModelSpec,
    PolicyConfig,
    RoundBarrier,
    SynthSpec,
    TrainParams,
    cluster,
    default_population,
    dispatch_round,
    estimate_round_time,
    evaluate_per_client,
    fedavg_aggregate,
    federated_train,
    generate_noniid_data,
    kmeans_1d,
    kneedle,
    simulate,
    speed_ranks,
    synth_population,
)
from fedss.clustering import percentile_positions
from fedss.cli import main as cli_main
from fedss.knee import KneeCurve, avg_round_time_for_clusters
from fedss.seeds import derive_seed
from fedss.training import LocalUpdate, softmax_loss_and_grad

from conftest import int_time_population


def _report(num: int, ok: bool, description: str) -> None:
    print(f"criterion {num:02d} {'PASS' if ok else 'FAIL'} {description}")
    assert ok, f"criterion {num:02d}: {description}"


def test_criterion_01_round_time_formula():
    c1 = ClientProfile(id=0, uplink_bps=1e6, downlink_bps=1e6, flops_rate=1e9, num_samples=0)
    m1 = GlobalModelSpec(model_size_bits=8e6, flops_per_sample=5e8)
    c2 = ClientProfile(id=0, uplink_bps=1e7, downlink_bps=5e7, flops_rate=1e9, num_samples=5)
    m2 = GlobalModelSpec(model_size_bits=1e8, flops_per_sample=2e9)
    ok = estimate_round_time(c1, m1) == 16.0 and estimate_round_time(c2, m2) == 22.0

    rng = np.random.default_rng(1001)
    for _ in range(10):
        size = float(rng.uniform(1e6, 1e9))
        flops = float(rng.uniform(1e6, 1e10))
        ul, dl = (float(v) for v in rng.uniform(1e5, 1e9, size=2))
        rate = float(rng.uniform(1e8, 1e13))
        s = int(rng.integers(0, 2000))
        got = estimate_round_time(
            ClientProfile(id=0, uplink_bps=ul, downlink_bps=dl, flops_rate=rate, num_samples=s),
            GlobalModelSpec(model_size_bits=size, flops_per_sample=flops),
        )
        want = Fraction(size) / Fraction(ul) + Fraction(s) * Fraction(flops) / Fraction(rate) \
            + Fraction(size) / Fraction(dl)
        ok &= abs(got - float(want)) <= 1e-12 * float(want)
    _report(1, ok, "round-time formula matches exact arithmetic to 1e-12")


def test_criterion_02_clustering_invariants():
    rng = np.random.default_rng(20260817)
    ok = True
    for _ in range(1000):
        n = int(rng.integers(8, 501))
        k = int(rng.integers(1, 9))
        ts = rng.integers(1, 10**6, size=n).tolist()
        pop = int_time_population(ts)
        cs = cluster(pop, k)
        times = pop.round_times()

        flat = [i for members in cs.clusters for i in members]
        ok &= len(flat) == n and set(flat) == set(range(n))
        sizes = cs.sizes
        ok &= max(sizes) - min(sizes) <= 1
        ok &= flat == sorted(times, key=lambda i: (times[i], i))

        # Power-of-two factors rescale every float exactly, so cluster
        # equality can be demanded outright rather than approximately.
        scale = 2.0 ** int(rng.integers(-8, 9))
        scaled = int_time_population(ts)
        scaled_model = GlobalModelSpec(
            model_size_bits=scaled.model.model_size_bits * scale,
            flops_per_sample=scaled.model.flops_per_sample * scale,
        )
        rescaled = type(pop)(clients=scaled.clients, model=scaled_model)
        ok &= cluster(rescaled, k).clusters == cs.clusters
        if not ok:
            break
    _report(2, ok, "1000 random populations: partition, spread <= 1, contiguity, scale-equivariance")


def test_criterion_03_percentile_positions():
    ok = percentile_positions(3) == [25.0, 50.0, 75.0]
    _report(3, ok, "k=3 centroid percentiles are exactly (25, 50, 75)")


def test_criterion_04_knee_detection():
    f = lambda x: -1.0 / x + 5.0
    xs = np.linspace(0.1, 10.0, 100)
    knee = kneedle(KneeCurve(xs=tuple(xs), ys=tuple(f(xs))))

    dense = np.linspace(0.1, 10.0, 20001)
    ys = f(dense)
    dy = np.gradient(ys, dense)
    d2y = np.gradient(dy, dense)
    kappa = np.abs(d2y) / (1 + dy**2) ** 1.5
    oracle = float(dense[100:-100][np.argmax(kappa[100:-100])])

    line = KneeCurve(xs=tuple(xs), ys=tuple(2.0 * xs + 1.0))
    ok = knee is not None and abs(knee - oracle) <= 0.2 and kneedle(line) is None
    _report(4, ok, "knee within 0.2 of the max-curvature oracle; straight line has none")


def test_criterion_05_beats_kmeans_at_scale():
    start = time.monotonic()
    model = GlobalModelSpec(model_size_bits=8e7, flops_per_sample=5e8)
    pop = synth_population(SynthSpec(), model, n=10000, seed=123)
    times = pop.round_times()
    ts = [times[c.id] for c in pop.clients]
    ids = [c.id for c in pop.clients]
    ok = True
    for k in range(2, 9):
        seed = derive_seed(123, "sweep", k)
        evened = avg_round_time_for_clusters(pop, cluster(pop, k), 1000, 5, seed)
        lloyd = kmeans_1d(ts, k, seed=0, ids=ids).clusters
        baseline = avg_round_time_for_clusters(pop, lloyd, 1000, 5, seed)
        ok &= evened <= baseline
    elapsed = time.monotonic() - start
    ok &= elapsed < 60.0
    _report(5, ok, f"10000 clients, k=2..8: evened percentile clusters beat 1-D k-means ({elapsed:.1f}s)")


def test_criterion_06_total_time_ordering():
    pop = default_population()
    seed = derive_seed(0, "policy")
    rounds = 2800
    random_t = simulate(
        pop, PolicyConfig(kind=RANDOM, clients_per_round=5, rng_seed=seed), rounds
    ).total_time
    fedcs_t = simulate(
        pop,
        PolicyConfig(kind=FEDCS, clients_per_round=5, fedcs_overselect=8, rng_seed=seed),
        rounds,
    ).total_time
    fedss_t = simulate(
        pop,
        PolicyConfig(kind=FEDSS, clients_per_round=5, cluster_set=cluster(pop, 4), rng_seed=seed),
        rounds,
    ).total_time
    ok = fedcs_t < fedss_t < random_t and fedss_t <= 0.9 * random_t
    _report(6, ok, f"totals: fedcs {fedcs_t:.0f} < fedss {fedss_t:.0f} < random {random_t:.0f}, ratio {fedss_t / random_t:.2f}")


def test_criterion_07_durations_below_random_median():
    pop = default_population()
    seed = derive_seed(0, "policy")
    random_r = simulate(pop, PolicyConfig(kind=RANDOM, clients_per_round=4, rng_seed=seed), 2000)
    fedss_r = simulate(
        pop,
        PolicyConfig(kind=FEDSS, clients_per_round=4, cluster_set=cluster(pop, 5), rng_seed=seed),
        2000,
    )
    median = float(np.median(random_r.durations()))
    frac = float(np.mean(fedss_r.durations() < median))
    ok = frac >= 0.80
    _report(7, ok, f"{frac:.1%} of round-robin rounds beat the random policy's median")


def test_criterion_08_fairness_and_starvation():
    pop = default_population()
    n = len(pop.clients)
    rounds = 10000
    ok = True
    for s in range(5):
        fedss_r = simulate(
            pop,
            PolicyConfig(
                kind=FEDSS,
                clients_per_round=5,
                cluster_set=cluster(pop, 4),
                rng_seed=derive_seed(s, "f8"),
            ),
            rounds,
        )
        expected = rounds * 5 / n
        ok &= all(
            abs(c - expected) <= 0.20 * expected for c in fedss_r.selection_counts.values()
        )
        fedcs_r = simulate(
            pop,
            PolicyConfig(
                kind=FEDCS,
                clients_per_round=5,
                fedcs_overselect=8,
                rng_seed=derive_seed(s, "c8"),
            ),
            rounds,
        )
        slow4 = [c.id for c in pop.sorted_by_time()[-4:]]
        share = sum(fedcs_r.aggregation_counts[i] for i in slow4) / (rounds * 5)
        ok &= share < 0.05
    _report(8, ok, "fedss counts within 20% of R*K/N on 5 seeds; fedcs starves the slow quartile")


def test_criterion_09_dispatch_under_concurrency():
    ok = True
    for trial in range(1000):
        ids = list(range(64))
        barrier = RoundBarrier(64)
        results = dispatch_round(
            ids,
            lambda cid: ClientResult(client_id=cid, duration=float((cid * 37) % 11)),
            barrier=barrier,
            max_workers=16,
        )
        ok &= barrier.acked == 64
        ok &= barrier.completion_count == 1
        ok &= [r.client_id for r in results] == ids
        if not ok:
            break
    _report(9, ok, "1000 rounds of 64 concurrent clients: all acked, fired once, id order")


def test_criterion_10_training_math():
    rng = np.random.default_rng(2)
    w = rng.standard_normal((3, 5))
    b = rng.standard_normal(3)
    x = rng.standard_normal((12, 5))
    y = rng.integers(0, 3, size=12)
    _, grad_w, grad_b = softmax_loss_and_grad(w, b, x, y)
    h = 1e-6
    worst = 0.0
    for arr, grad in ((w, grad_w), (b, grad_b)):
        for idx in np.ndindex(arr.shape):
            arr[idx] += h
            up, _, _ = softmax_loss_and_grad(w, b, x, y)
            arr[idx] -= 2 * h
            down, _, _ = softmax_loss_and_grad(w, b, x, y)
            arr[idx] += h
            fd = (up - down) / (2 * h)
            worst = max(worst, abs(fd - grad[idx]) / max(1.0, abs(fd)))
    ok = worst < 1e-5

    model = GlobalModel(rng.standard_normal((3, 5)), rng.standard_normal(3), version=0)
    single = LocalUpdate(rng.standard_normal((3, 5)), rng.standard_normal(3), 4)
    applied = fedavg_aggregate(model, [single])
    ok &= np.allclose(applied.weights, model.weights + single.delta_weights, rtol=0, atol=1e-12)

    trio = [LocalUpdate(rng.standard_normal((3, 5)), rng.standard_normal(3), n) for n in (1, 2, 3)]
    mixed = fedavg_aggregate(model, trio)
    want = model.weights + sum(u.num_samples * u.delta_weights for u in trio) / 6
    ok &= np.allclose(mixed.weights, want, rtol=0, atol=1e-12)

    empty = fedavg_aggregate(model, [LocalUpdate(np.ones((3, 5)), np.ones(3), 0)])
    ok &= np.array_equal(empty.weights, model.weights) and empty.version == 1
    _report(10, ok, f"gradient check (worst rel err {worst:.1e}) and exact FedAvg identities")


def test_criterion_11_slow_client_skill():
    pop = default_population()
    ranks = speed_ranks(pop)
    samples = [pop.by_id(i).num_samples for i in pop.ids]
    params = TrainParams(epochs=1, learning_rate=0.03, batch_size=32, eval_every=200)
    rounds = 600
    acc = {kind: [] for kind in (RANDOM, FEDCS, FEDSS)}
    f1 = {kind: [] for kind in (RANDOM, FEDCS, FEDSS)}
    for s in range(5):
        data = generate_noniid_data(
            n_clients=len(pop),
            num_classes=5,
            num_features=8,
            samples_per_client=samples,
            alpha=0.3,
            seed=derive_seed(s, "bias"),
            class_bias_ranks=ranks,
            class_sep=3.0,
            holdout_fraction=0.2,
            bias_boost=8.0,
        )
        policy_seed = derive_seed(s, "bias", "policy")
        configs = {
            RANDOM: PolicyConfig(kind=RANDOM, clients_per_round=5, rng_seed=policy_seed),
            FEDCS: PolicyConfig(
                kind=FEDCS, clients_per_round=5, fedcs_overselect=8, rng_seed=policy_seed
            ),
            FEDSS: PolicyConfig(
                kind=FEDSS, clients_per_round=5, cluster_set=cluster(pop, 4), rng_seed=policy_seed
            ),
        }
        for kind, cfg in configs.items():
            outcome = federated_train(pop, data, cfg, rounds, params)
            evaluation = evaluate_per_client(outcome.model, data, pop)
            acc[kind].append(evaluation.slow_accuracy)
            f1[kind].append(evaluation.slow_f1)
    mean_acc = {kind: float(np.mean(v)) for kind, v in acc.items()}
    mean_f1 = {kind: float(np.mean(v)) for kind, v in f1.items()}
    ok = mean_acc[FEDSS] >= mean_acc[FEDCS] + 0.03
    ok &= abs(mean_acc[FEDSS] - mean_acc[RANDOM]) <= 0.02
    ok &= mean_f1[FEDSS] >= mean_f1[FEDCS] + 0.03
    ok &= abs(mean_f1[FEDSS] - mean_f1[RANDOM]) <= 0.02
    _report(
        11,
        ok,
        "slow-group skill: fedss {:.3f} vs fedcs {:.3f} vs random {:.3f} (acc), same shape for F1".format(
            mean_acc[FEDSS], mean_acc[FEDCS], mean_acc[RANDOM]
        ),
    )


def test_criterion_12_byte_identical_reruns(tmp_path):
    ok = True
    sim_argv = ["simulate", "--policy", "fedss", "--k", "4", "--rounds", "25", "--seed", "6"]
    train_argv = [
        "train", "--policy", "fedcs", "--rounds", "3", "--epochs", "1",
        "--eval-every", "2", "--seed", "6",
    ]
    for name, argv, files in (
        ("sim", sim_argv, ["report.json", "resolved_config.json", "rounds.csv", "cdf.csv"]),
        ("train", train_argv, ["report.json", "rounds.csv", "accuracy_by_round.csv", "eval.json"]),
    ):
        first = tmp_path / f"{name}-a"
        second = tmp_path / f"{name}-b"
        ok &= cli_main(argv + ["--out", str(first)]) == 0
        ok &= cli_main(argv + ["--out", str(second)]) == 0
        for fname in files:
            ok &= (first / fname).read_bytes() == (second / fname).read_bytes()
    _report(12, ok, "CLI simulate and train reruns are byte-identical")
