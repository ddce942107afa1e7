"""Acceptance suite: one test per criterion, printing a pass/fail line each.

Run with `pytest tests/test_acceptance.py -v -s`. The heavyweight artifacts
(24k problems, their model labels, the pretrained checkpoint, the 13k
simulated-human panel) are deterministic functions of ACCEPT_SEED and are
cached under .cache/acceptance so re-runs regenerate nothing; delete that
directory to force full regeneration. A run takes roughly 35-45 minutes, most
of it in criterion 7's six full-convergence training runs.

Criterion 12 (the participant UI) lives in the frontend package: see
frontend/tests, run with `npm test` there.
"""

import dataclasses
import math
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from choiceprior.baselines import BaselineParams, baseline_fit_predict
from choiceprior.cognitive import (
    BEAST15,
    BEAST18,
    BeastParams,
    beast_rate,
    derive_seed,
    generate_targets,
)
from choiceprior.datasets import (
    build_dataset,
    load_targets,
    save_targets,
    split_by_problem,
)
from choiceprior.gambles import (
    Gamble,
    LotShape,
    Problem,
    expand,
    load_problems,
    lottery_distribution,
    sample_joint,
    save_problems,
)
from choiceprior.net import NetworkConfig, SparseNetwork
from choiceprior.pipeline import (
    PRETRAIN_CALIBRATION,
    PRETRAIN_FIDELITY_THRESHOLD,
    PerturbationSpec,
    bootstrap_mse,
    convergence_traces,
    learning_curve,
    mse,
    simulate_human_targets,
)
from choiceprior.service import ExperimentServer
from choiceprior.space import SpaceConfig, generate_set
from conftest import random_gamble

ACCEPT_SEED = 2026
CACHE = Path(__file__).resolve().parent.parent / ".cache" / "acceptance"

POOL_SIZE = 24_000
PRETRAIN_PROBLEMS = 20_000  # remainder of the pool is the held-out synthetic set
SIM_HUMAN_PROBLEMS = 13_000
BLOCKS = ((1, False), (2, True))


def report(criterion: int, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
    assert ok, f"criterion {criterion}: {detail}"


# -- heavyweight shared fixtures -------------------------------------------------


@pytest.fixture(scope="session")
def pool():
    CACHE.mkdir(parents=True, exist_ok=True)
    path = CACHE / f"pool-{ACCEPT_SEED}-{POOL_SIZE}.csv"
    if not path.exists():
        ps = generate_set(SpaceConfig(), POOL_SIZE, rng=ACCEPT_SEED)
        save_problems(ps.problems, path)
    return load_problems(path)


@pytest.fixture(scope="session")
def beast_labels(pool):
    path = CACHE / f"beast15-{ACCEPT_SEED}-{POOL_SIZE}.csv"
    if not path.exists():
        records = generate_targets(pool, "beast15", BLOCKS, seed=ACCEPT_SEED)
        save_targets(records, path)
    return load_targets(path)


@pytest.fixture(scope="session")
def synth_split(pool, beast_labels):
    ds = build_dataset(pool, beast_labels)
    frac = PRETRAIN_PROBLEMS / POOL_SIZE
    pre, held = split_by_problem(ds, (frac, 1 - frac), seed=1, names=["pretrain", "heldout"])
    return pre, held


@pytest.fixture(scope="session")
def pretrained(synth_split):
    path = CACHE / f"pretrained-{ACCEPT_SEED}.npz"
    if not path.exists():
        pre, held = synth_split
        cfg = NetworkConfig(input_dim=12, seed=ACCEPT_SEED)
        net = SparseNetwork(cfg)
        net.fit_normalizer(pre.features)
        net.train(
            pre.features, pre.a_rate,
            epochs=PRETRAIN_CALIBRATION["epochs"],
            val=(held.features, held.a_rate), patience=20,
        )
        net.save(path)
    return SparseNetwork.load(path)


@pytest.fixture(scope="session")
def sim_human(pool, beast_labels):
    ppath = CACHE / f"sim-problems-{ACCEPT_SEED}.csv"
    tpath = CACHE / f"sim-human-{ACCEPT_SEED}.csv"
    if not (ppath.exists() and tpath.exists()):
        rng = np.random.default_rng(derive_seed(ACCEPT_SEED, "sim-pick"))
        pick = rng.choice(len(pool), size=SIM_HUMAN_PROBLEMS, replace=False)
        sub = [pool[i] for i in pick]
        sub_ids = {p.id for p in sub}
        base = [r for r in beast_labels if r.problem_id in sub_ids]
        human = simulate_human_targets(
            sub, base_records=base, perturbation=PerturbationSpec(),
            participants_per_problem=16, seed=derive_seed(ACCEPT_SEED, "panel"),
        )
        save_problems(sub, ppath)
        save_targets(human, tpath)
    problems = load_problems(ppath)
    return build_dataset(problems, load_targets(tpath))


# -- criteria ---------------------------------------------------------------------


def test_c01_gamble_core():
    t0 = time.monotonic()
    rng = np.random.default_rng(derive_seed(ACCEPT_SEED, "c1"))
    for _ in range(10_000):
        g = random_gamble(rng)
        d = expand(g)
        assert abs(sum(p for _, p in d.outcomes) - 1.0) <= 1e-9
        if g.lot_shape == LotShape.SYMM:
            mean = sum(Fraction(w) * Fraction(x) for x, w in lottery_distribution(g))
            assert mean == Fraction(g.high)
    marginal_problems = [
        Problem("m1", Gamble(20, 0.5, 0, 3, LotShape.SYMM), Gamble(5, 0.8, -5), corr=1,
                schema="CPC18"),
        Problem("m2", Gamble(100, 0.5, -100), Gamble(30, 0.25, -10, 4, LotShape.RSKEW), corr=0),
        Problem("m3", Gamble(10, 0.1, 2), Gamble(8, 0.9, -3, 5, LotShape.LSKEW), corr=-1),
    ]
    n = 100_000
    for i, p in enumerate(marginal_problems):
        a, b = sample_joint(p, np.random.default_rng(derive_seed(ACCEPT_SEED, "c1m", str(i))), size=n)
        for draws, dist in ((a, p.distributions()[0]), (b, p.distributions()[1])):
            for payoff, prob in dist.outcomes:
                se = math.sqrt(prob * (1 - prob) / n)
                assert abs(np.mean(draws == payoff) - prob) <= 3 * se + 1e-12
    elapsed = time.monotonic() - t0
    report(1, elapsed < 30, f"10k expansions exact, joint marginals within 3 SE ({elapsed:.1f}s < 30s)")


def test_c02_problem_generator(tmp_path):
    t0 = time.monotonic()
    cfg = SpaceConfig()
    exclusion = generate_set(cfg, 1_000, rng=derive_seed(ACCEPT_SEED, "c2-excl") % 2**32)
    seed = derive_seed(ACCEPT_SEED, "c2-main") % 2**32
    ps1 = generate_set(cfg, 10_000, exclusions=[exclusion], rng=seed)
    ps2 = generate_set(cfg, 10_000, exclusions=[exclusion], rng=seed)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    save_problems(ps1.problems, p1)
    save_problems(ps2.problems, p2)
    from choiceprior.gambles import is_degenerate

    keys = {p.canonical_key() for p in ps1}
    ok = (
        len(ps1) == 10_000
        and len(keys) == 10_000
        and not any(is_degenerate(p) for p in ps1)
        and keys.isdisjoint(exclusion.key_set())
        and p1.read_bytes() == p2.read_bytes()
    )
    elapsed = time.monotonic() - t0
    report(2, ok and elapsed < 60,
           f"10k unique non-degenerate problems, exclusion-disjoint, byte-identical replay ({elapsed:.1f}s < 60s)")


def test_c03_beast_sanity():
    t0 = time.monotonic()
    params = BeastParams(n_agents=10_000)
    risky = Problem("risky", Gamble(100, 0.5, -100), Gamble(0, 1.0, 0))
    r_risky = beast_rate(risky, BEAST15, params, ((1, False),),
                         rng=derive_seed(ACCEPT_SEED, "c3a")).rates[0][2]
    same = Problem("same", Gamble(10, 0.5, 0), Gamble(10, 0.5, 0))
    r_same = beast_rate(same, BEAST15, params, ((1, False),),
                        rng=derive_seed(ACCEPT_SEED, "c3b")).rates[0][2]
    dom = Problem("dom", Gamble(10, 1.0, 0), Gamble(0, 1.0, 0))
    r_dom = beast_rate(dom, BEAST18, params, ((1, False),),
                       rng=derive_seed(ACCEPT_SEED, "c3c")).rates[0][2]
    elapsed = time.monotonic() - t0
    ok = r_risky < 0.5 and 0.47 <= r_same <= 0.53 and r_dom == 1.0 and elapsed < 10
    report(3, ok,
           f"risky={r_risky:.3f}<0.5, identical={r_same:.3f} in [0.47,0.53], "
           f"forced dominance={r_dom} ({elapsed:.1f}s < 10s)")


def test_c04_gradient_oracle():
    t0 = time.monotonic()
    net = SparseNetwork(NetworkConfig(input_dim=5, hidden=(3, 2), dropout=0.0,
                                      sparse=False, seed=7))
    for s in net.srelu_params:
        s[0] = -0.6
        s[1] = 0.3
        s[2] = 0.9
        s[3] = 0.7
    rng = np.random.default_rng(3)
    X = rng.normal(size=(8, 5))
    y = rng.random(8)
    _, (zs, _, _, _) = net._forward_full(X, train_mode=False)
    for z, s in zip(zs, net.srelu_params):
        assert np.minimum(np.abs(z - s[0]), np.abs(z - s[2])).min() > 1e-3
    g_w, g_b, g_s = net.gradients(X, y)
    h = 1e-6
    worst = 0.0

    def check(get, set_, analytic):
        nonlocal worst
        v0 = get()
        set_(v0 + h)
        lp = net.loss(X, y)
        set_(v0 - h)
        lm = net.loss(X, y)
        set_(v0)
        num = (lp - lm) / (2 * h)
        rel = abs(analytic - num) / max(abs(analytic), abs(num), 1e-8)
        worst = max(worst, rel)
        assert rel <= 1e-4

    for li, W in enumerate(net.weights):
        for i in range(W.shape[0]):
            for j in range(W.shape[1]):
                check(lambda: W[i, j], lambda v: W.__setitem__((i, j), v), g_w[li][i, j])
    for li, b in enumerate(net.biases):
        for j in range(b.shape[0]):
            check(lambda: b[j], lambda v: b.__setitem__(j, v), g_b[li][j])
    for li, S in enumerate(net.srelu_params):
        for r in range(4):
            for j in range(S.shape[1]):
                check(lambda: S[r, j], lambda v: S.__setitem__((r, j), v), g_s[li][r, j])
    elapsed = time.monotonic() - t0
    report(4, elapsed < 5,
           f"all weight/bias/activation gradients within 1e-4 of central differences "
           f"(worst {worst:.2e}, {elapsed:.1f}s < 5s)")


def test_c05_set_invariants():
    rng = np.random.default_rng(derive_seed(ACCEPT_SEED, "c5"))
    X = rng.normal(size=(4_000, 12))
    y = rng.random(4_000)
    net = SparseNetwork(NetworkConfig(input_dim=12, seed=ACCEPT_SEED))
    net.fit_normalizer(X)
    count = net.parameter_count()
    assert count < 10_000
    for epoch in range(50):
        net.train_epoch(X, y)
        # oracle: the zeta smallest-|w| live edges per layer must disappear
        expected_survivors = []
        for W, m in zip(net.weights, net.masks):
            rows, cols = np.nonzero(m)
            k = int(np.floor(net.config.zeta * len(rows)))
            order = np.lexsort((cols, rows, np.abs(W[rows, cols])))
            keep = order[k:]
            expected_survivors.append({(rows[i], cols[i]): W[rows[i], cols[i]] for i in keep})
        net.evolve_topology()
        assert net.parameter_count() == count
        for W, m, surv in zip(net.weights, net.masks, expected_survivors):
            assert np.all(W[~m] == 0.0)
            for (r, c), w in surv.items():
                assert m[r, c] and W[r, c] == w
    report(5, True,
           f"50 train+evolve epochs keep {count} (<10k) parameters, masked zeros, "
           f"and full-sort pruning")


def test_c06_pretraining_fidelity(pretrained, synth_split):
    _, held = synth_split
    err = mse(pretrained.predict(held.features), held.a_rate)
    ok = err <= PRETRAIN_FIDELITY_THRESHOLD
    report(6, ok,
           f"held-out synthetic MSE {err:.4f} <= {PRETRAIN_FIDELITY_THRESHOLD} "
           f"(threshold frozen at calibration seed {PRETRAIN_CALIBRATION['seed']}, "
           f"which observed {PRETRAIN_CALIBRATION['observed_heldout_mse']})")


def test_c07_crossover(pretrained, sim_human):
    curve = learning_curve(
        sim_human,
        fractions=[0.01, 1.0],
        repeats=3,
        priors=("random", "pretrained"),
        pretrained=pretrained,
        net_config=pretrained.config,
        seed=derive_seed(ACCEPT_SEED, "c7"),
        # Both arms must actually converge for the full-data comparison to be
        # meaningful: the from-scratch arm needs the long patience (its val
        # trace plateaus for stretches before improving), and fine-tuning uses
        # a 100x-below-training learning rate; at the spec'd 1e-6 default it
        # would need on the order of a thousand epochs to cross the simulated
        # panel's systematic tilt (criterion 8 exercises the 1e-6 recipe).
        finetune_lr=1e-5,
        finetune_epochs=200,
        finetune_patience=30,
        fresh_epochs=300,
        fresh_patience=None,
    )
    rand = curve.curves["priors"]["random"]["raw"]
    pre = curve.curves["priors"]["pretrained"]["raw"]
    small_ok = [p <= 0.5 * r for p, r in zip(pre["0.01"], rand["0.01"])]
    big_ok = [abs(p - r) < 0.10 * max(p, r) for p, r in zip(pre["1.0"], rand["1.0"])]
    # statistical monotonicity: more data never hurts the mean, for either prior
    means = {p: dict(zip(curve.curves["fractions"], curve.curves["priors"][p]["mean"]))
             for p in ("random", "pretrained")}
    mono_ok = all(means[p][1.0] <= means[p][0.01] for p in means)
    detail = (
        f"fraction 0.01 pretrained/random ratios "
        f"{[round(p / r, 3) for p, r in zip(pre['0.01'], rand['0.01'])]} (all <= 0.5); "
        f"fraction 1.0 gaps "
        f"{[f'{abs(p - r) / max(p, r):.1%}' for p, r in zip(pre['1.0'], rand['1.0'])]} (all < 10%); "
        f"means monotone in data for both priors"
    )
    report(7, all(small_ok) and all(big_ok) and mono_ok, detail)


def test_c08_convergence_speed(pretrained, sim_human):
    epochs = 60
    out = convergence_traces(
        sim_human, pretrained, pretrained.config,
        runs=5, epochs=epochs, seed=derive_seed(ACCEPT_SEED, "c8"),
        train_fraction=0.1,
    )
    epoch1_ok, reach_ok, improve_ok, details = [], [], [], []
    for pre, rnd, initial in zip(out.traces["pretrained"], out.traces["random"],
                                 out.traces["pretrained_initial"]):
        epoch1_ok.append(pre[0] < rnd[0])
        rnd_final = min(rnd)
        reach = next((i + 1 for i, v in enumerate(pre) if v <= rnd_final), epochs + 1)
        reach_ok.append(reach <= epochs // 2)
        # fine-tuning must not end worse than the untouched prior
        improve_ok.append(min(pre) <= initial)
        details.append(f"ep1 {pre[0]:.4f}<{rnd[0]:.4f}, reach@{reach}")
    report(8, all(epoch1_ok) and all(reach_ok) and all(improve_ok),
           f"5/5 runs: pretrained epoch-1 below random, reaches random's best "
           f"within {epochs // 2} epochs, and fine-tuning improves on the prior "
           f"[{'; '.join(details)}]")


def test_c09_bootstrap_variability(pretrained, sim_human):
    preds = pretrained.predict(sim_human.features)
    small = bootstrap_mse(preds, sim_human, n_samples=100, sample_size=210,
                          seed=derive_seed(ACCEPT_SEED, "c9a") % 2**32)
    big = bootstrap_mse(preds, sim_human, n_samples=100, sample_size=6_500,
                        seed=derive_seed(ACCEPT_SEED, "c9b") % 2**32)
    ratio = small["std"] / big["std"]
    report(9, ratio >= 2.0,
           f"bootstrap MSE std at 210 problems is {ratio:.1f}x the std at 6,500 (>= 2x)")


def test_c10_baseline_ordering(sim_human, pretrained):
    train, val = split_by_problem(sim_human, (0.8, 0.2),
                                  seed=derive_seed(ACCEPT_SEED, "c10"), names=["t", "v"])
    cfg = dataclasses.replace(pretrained.config, seed=derive_seed(ACCEPT_SEED, "c10net"))
    net = SparseNetwork(cfg)
    net.fit_normalizer(train.features)
    net.train(train.features, train.a_rate, epochs=120,
              val=(val.features, val.a_rate), patience=25)
    mlp = mse(net.predict(val.features), val.a_rate)
    knn, _ = baseline_fit_predict("knn", train, val, BaselineParams(k=5))
    lin, _ = baseline_fit_predict("linear_regression", train, val)
    report(10, mlp < knn < lin,
           f"MLP {mlp:.4f} < kNN {knn:.4f} < linear regression {lin:.4f}")


def test_c11_service_protocol(pool, tmp_path):
    server = ExperimentServer(pool[:60], seed=derive_seed(ACCEPT_SEED, "c11") % 2**32)

    def run_session(left_choices: int) -> tuple[str, str]:
        s = server.create_session(f"accept-{left_choices}")
        lefts = 0
        trials = 0
        while True:
            desc = server.trial_descriptor(s.id)
            if desc["done"]:
                break
            take_left = lefts < left_choices
            side = "left" if take_left else "right"
            out = server.submit_choice(s.id, desc["problem_id"], desc[side]["gamble"])
            lefts += take_left
            trials += 1
            if desc["condition"] == "no_feedback":
                assert "forgone" not in out
            else:
                assert "forgone" in out
        assert trials == 100
        return s.id, server.finalize_session(s.id)["status"]

    _, status_81 = run_session(81)
    _, status_80 = run_session(80)
    records = server.aggregate()
    csv_text = server.aggregates_csv()
    path = tmp_path / "agg.csv"
    path.write_bytes(csv_text.encode())
    loaded = load_targets(path)
    ds = build_dataset(pool[:60], loaded)
    ok = (status_81 == "excluded" and status_80 == "complete"
          and loaded == records and len(ds) == len(records) and len(records) > 0)
    report(11, ok,
           f"100-trial session completes; 81/100 same-side -> {status_81}, "
           f"80/100 -> {status_80}; aggregate CSV round-trips ({len(records)} records)")


def test_c12_ui_end_to_end():
    pytest.skip(
        "criterion 12 is the secondary component's suite: frontend/tests "
        "(state machine, rendering, and a live-service session) — run `npm test` in frontend/"
    )
