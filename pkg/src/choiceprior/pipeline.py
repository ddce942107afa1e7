"""Experiment harness: metrics, simulated-human data, training workflows,
learning curves, and bootstrap evaluation.

Every harness function is seeded and records its configuration inside the
report it returns, so any number in a report can be regenerated from the
report alone.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .cognitive import PTParams, derive_seed, generate_targets, pt_rate
from .datasets import (
    Dataset,
    TargetRecord,
    build_dataset,
    sample_problem_fraction,
    split_by_problem,
)
from .gambles import Problem, ValidationError
from .net import NetworkConfig, SparseNetwork


# Pretraining-fidelity gate for the acceptance suite: an under-10k-parameter
# sparse net pretrained on 20k labeled problems (2 blocks) must score at or
# below this MSE against held-out model targets. Frozen from the calibration
# run at seed 2026, which observed 0.0031 after 150 epochs.
PRETRAIN_FIDELITY_THRESHOLD = 0.015
PRETRAIN_CALIBRATION = {"seed": 2026, "observed_heldout_mse": 0.0031, "epochs": 150}


def mse(predictions: Sequence[float], targets: Sequence[float]) -> float:
    """Mean squared error; lengths must match and be nonempty."""
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape or p.size == 0:
        raise ValidationError(f"prediction/target shapes differ or empty: {p.shape} vs {t.shape}")
    return float(np.mean((p - t) ** 2))


@dataclass(frozen=True)
class PerturbationSpec:
    """Systematic distortion applied to a base model's rates before sampling
    noise: blend toward a prospect-theory rate with the given weight."""

    pt_weight: float = 0.2
    pt_params: PTParams = PTParams()
    pt_temperature: float = 25.0
    trials_per_participant: int = 5


def simulate_human_targets(
    problems: Sequence[Problem],
    base: str = "beast15",
    perturbation: PerturbationSpec = PerturbationSpec(),
    participants_per_problem: int | None = 16,
    seed: int = 0,
    base_records: Sequence[TargetRecord] | None = None,
    blocks: tuple[tuple[int, bool], ...] = ((1, False), (2, True)),
) -> list[TargetRecord]:
    """Pseudo-human targets: base-model rates, systematically tilted toward
    prospect theory, plus binomial sampling noise for a finite panel.

    ``participants_per_problem=None`` disables the noise (an infinite panel).
    Pass precomputed ``base_records`` to skip re-running the base model.
    """
    if participants_per_problem is not None and participants_per_problem < 1:
        raise ValidationError("participants_per_problem must be >= 1 (or None for no noise)")
    if base_records is None:
        base_records = generate_targets(problems, base, blocks, seed=derive_seed(seed, "base"))
    by_id = {p.id: p for p in problems}
    rng = np.random.default_rng(derive_seed(seed, "panel"))
    out = []
    for rec in base_records:
        p = by_id.get(rec.problem_id)
        if p is None:
            raise ValidationError(f"base record references unknown problem {rec.problem_id!r}")
        w = perturbation.pt_weight
        rate = rec.a_rate
        if w > 0.0:
            rate = (1.0 - w) * rate + w * pt_rate(p, perturbation.pt_params, perturbation.pt_temperature)
        if participants_per_problem is None:
            out.append(TargetRecord(rec.problem_id, rec.block, rec.feedback, 0, float(rate)))
        else:
            n_choices = participants_per_problem * perturbation.trials_per_participant
            k = int(rng.binomial(n_choices, rate))
            out.append(
                TargetRecord(
                    rec.problem_id, rec.block, rec.feedback,
                    participants_per_problem, k / n_choices,
                )
            )
    return out


# -- reports -------------------------------------------------------------------


def _hash_config(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True, default=str).encode()).hexdigest()[:16]


@dataclass
class ExperimentReport:
    """Self-describing result bundle; every number is reproducible from the
    seeds and config recorded here."""

    kind: str
    config: dict
    seeds: dict
    tables: dict = field(default_factory=dict)
    curves: dict = field(default_factory=dict)
    traces: dict = field(default_factory=dict)
    config_hash: str = ""

    def __post_init__(self) -> None:
        if not self.config_hash:
            self.config_hash = _hash_config(self.config)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentReport":
        return cls(**json.loads(Path(path).read_text()))


# -- training workflows ----------------------------------------------------------


def pretrain_network(
    ds: Dataset,
    config: NetworkConfig,
    epochs: int = 400,
    patience: int = 20,
    holdout: float = 0.05,
    seed: int = 0,
) -> tuple[SparseNetwork, dict]:
    """Train a fresh network on model-labeled data with early stopping on a
    held-out problem split; freezes the feature normalizer on the train side."""
    train, hold = split_by_problem(ds, (1.0 - holdout, holdout), seed=seed, names=["train", "holdout"])
    net = SparseNetwork(config)
    net.fit_normalizer(train.features)
    history = net.train(
        train.features, train.a_rate, epochs=epochs,
        val=(hold.features, hold.a_rate), patience=patience,
    )
    return net, history


def train_fresh(
    ds_train: Dataset,
    ds_val: Dataset,
    config: NetworkConfig,
    epochs: int = 300,
    patience: int = 30,
    evolve_fraction: float = 0.5,
) -> tuple[SparseNetwork, dict]:
    """Random-initialization arm: standard learning rate, topology evolution
    during the first part of the budget, then frozen for clean convergence."""
    net = SparseNetwork(config)
    net.fit_normalizer(ds_train.features)
    history = net.train(
        ds_train.features, ds_train.a_rate, epochs=epochs,
        val=(ds_val.features, ds_val.a_rate), patience=patience,
        evolve_until=int(epochs * evolve_fraction),
    )
    return net, history


def finetune_network(
    net: SparseNetwork,
    ds_train: Dataset,
    ds_val: Dataset | None = None,
    learning_rate: float = 1e-6,
    epochs: int = 400,
    patience: int | None = 60,
) -> dict:
    val = None if ds_val is None else (ds_val.features, ds_val.a_rate)
    return net.finetune(
        ds_train.features, ds_train.a_rate,
        learning_rate=learning_rate, epochs=epochs, val=val, patience=patience,
    )


@dataclass(frozen=True)
class PipelineConfig:
    net: NetworkConfig
    seed: int = 0
    pretrain_epochs: int = 400
    pretrain_patience: int = 20
    finetune_lr: float = 1e-6
    finetune_epochs: int = 400
    finetune_patience: int | None = 60
    fresh_epochs: int = 300
    fresh_patience: int = 30
    human_split: tuple[float, float, float] = (0.8, 0.1, 0.1)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return d


def run_pipeline(
    problems: Sequence[Problem],
    synth_records: Sequence[TargetRecord],
    human_records: Sequence[TargetRecord],
    config: PipelineConfig,
    pretrained: SparseNetwork | None = None,
) -> tuple[ExperimentReport, dict[str, SparseNetwork]]:
    """Pretrain on model-labeled data, fine-tune on (pseudo-)human data, and
    benchmark against a random-initialization arm.

    Returns the report plus the trained networks keyed by arm name.
    """
    synth = build_dataset(problems, synth_records)
    human = build_dataset(problems, human_records)
    train, val, test = split_by_problem(
        human, config.human_split, seed=derive_seed(config.seed, "human-split"),
        names=["train", "validation", "test"],
    )

    if pretrained is None:
        pretrained, pre_history = pretrain_network(
            synth, config.net, config.pretrain_epochs, config.pretrain_patience,
            seed=derive_seed(config.seed, "pretrain"),
        )
    else:
        pre_history = {}

    nets: dict[str, SparseNetwork] = {}
    rows = []

    nets["pretrained_only"] = pretrained
    for split_name, split_ds in (("validation", val), ("test", test)):
        rows.append({
            "model": "pretrained_only", "split": split_name,
            "mse": mse(pretrained.predict(split_ds.features), split_ds.a_rate),
        })

    tuned = clone_network(pretrained)
    tune_history = finetune_network(
        tuned, train, val, config.finetune_lr, config.finetune_epochs, config.finetune_patience
    )
    nets["finetuned"] = tuned
    for split_name, split_ds in (("validation", val), ("test", test)):
        rows.append({
            "model": "finetuned", "split": split_name,
            "mse": mse(tuned.predict(split_ds.features), split_ds.a_rate),
        })

    fresh_cfg = dataclasses.replace(config.net, seed=derive_seed(config.seed, "fresh"))
    fresh, fresh_history = train_fresh(train, val, fresh_cfg, config.fresh_epochs, config.fresh_patience)
    nets["random_init"] = fresh
    for split_name, split_ds in (("validation", val), ("test", test)):
        rows.append({
            "model": "random_init", "split": split_name,
            "mse": mse(fresh.predict(split_ds.features), split_ds.a_rate),
        })

    report = ExperimentReport(
        kind="pipeline",
        config=config.to_dict(),
        seeds={"seed": config.seed},
        tables={"mse": rows},
        traces={
            "pretrain": pre_history, "finetune": tune_history, "random_init": fresh_history,
        },
    )
    return report, nets


def clone_network(net: SparseNetwork) -> SparseNetwork:
    """Deep copy through the checkpoint format (which also exercises it)."""
    import os
    import tempfile

    fd, name = tempfile.mkstemp(suffix=".npz")
    os.close(fd)
    path = Path(name)
    try:
        net.save(path)
        return SparseNetwork.load(path)
    finally:
        path.unlink(missing_ok=True)


# -- learning curves -------------------------------------------------------------


def learning_curve(
    human: Dataset,
    fractions: Sequence[float],
    repeats: int = 10,
    priors: Sequence[str] = ("random", "pretrained"),
    pretrained: SparseNetwork | None = None,
    net_config: NetworkConfig | None = None,
    seed: int = 0,
    finetune_lr: float = 1e-6,
    finetune_epochs: int = 400,
    finetune_patience: int | None = 60,
    fresh_epochs: int = 300,
    fresh_patience: int = 30,
    keep_traces: bool = False,
) -> ExperimentReport:
    """Validation MSE as a function of the training-set fraction.

    Each repeat draws a fresh 80/20 problem split; each fraction keeps a
    seeded subset of the train side's problems. ``priors`` selects the arms:
    "random" trains from scratch, "pretrained" fine-tunes the supplied net.
    """
    for f in fractions:
        if not 0.0 < f <= 1.0:
            raise ValidationError(f"fraction {f!r} outside (0, 1]")
    if "pretrained" in priors and pretrained is None:
        raise ValidationError("pretrained prior requested but no pretrained network given")
    if "random" in priors and net_config is None:
        if pretrained is None:
            raise ValidationError("random prior needs a network config")
        net_config = pretrained.config

    results: dict[str, dict[float, list[float]]] = {p: {f: [] for f in fractions} for p in priors}
    traces: dict = {}
    for rep in range(repeats):
        train, val = split_by_problem(
            human, (0.8, 0.2), seed=derive_seed(seed, "split", str(rep)),
            names=["train", "validation"],
        )
        for frac in fractions:
            subset = sample_problem_fraction(train, frac, seed=derive_seed(seed, "frac", str(rep), repr(frac)))
            for prior in priors:
                if prior == "pretrained":
                    net = clone_network(pretrained)
                    history = net.finetune(
                        subset.features, subset.a_rate,
                        learning_rate=finetune_lr, epochs=finetune_epochs,
                        val=(val.features, val.a_rate), patience=finetune_patience,
                    )
                elif prior == "random":
                    cfg = dataclasses.replace(
                        net_config, seed=derive_seed(seed, "init", str(rep), repr(frac))
                    )
                    net = SparseNetwork(cfg)
                    net.fit_normalizer(subset.features)
                    history = net.train(
                        subset.features, subset.a_rate, epochs=fresh_epochs,
                        val=(val.features, val.a_rate), patience=fresh_patience,
                        evolve_until=fresh_epochs // 2,
                    )
                else:
                    raise ValidationError(f"unknown prior {prior!r}")
                score = mse(net.predict(val.features), val.a_rate)
                results[prior][frac].append(score)
                if keep_traces:
                    traces[f"{prior}/rep{rep}/frac{frac}"] = history.get("val_mse", [])

    curves = {"fractions": list(fractions), "priors": {}}
    for prior in priors:
        means, ses = [], []
        for frac in fractions:
            vals = np.array(results[prior][frac])
            means.append(float(vals.mean()))
            ses.append(float(vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0)
        curves["priors"][prior] = {
            "mean": means, "stderr": ses,
            "raw": {repr(f): results[prior][f] for f in fractions},
        }
    if "pretrained" in priors and "random" in priors:
        # crossover diagnostic: smallest fraction at which fine-tuning already
        # beats the best mean the non-pretrained arm reaches at any fraction
        best_random = min(curves["priors"]["random"]["mean"])
        crossover = next(
            (f for f, m in zip(fractions, curves["priors"]["pretrained"]["mean"])
             if m < best_random),
            None,
        )
        curves["crossover_fraction"] = crossover
    return ExperimentReport(
        kind="learning_curve",
        config={
            "fractions": list(fractions), "repeats": repeats, "priors": list(priors),
            "finetune_lr": finetune_lr, "finetune_epochs": finetune_epochs,
            "fresh_epochs": fresh_epochs,
            "net": dataclasses.asdict(net_config) if net_config else None,
        },
        seeds={"seed": seed},
        curves=curves,
        traces=traces,
    )


def convergence_traces(
    human: Dataset,
    pretrained: SparseNetwork,
    net_config: NetworkConfig,
    runs: int = 5,
    epochs: int = 150,
    seed: int = 0,
    finetune_lr: float = 1e-6,
    train_fraction: float = 1.0,
) -> ExperimentReport:
    """Per-epoch validation MSE of fine-tuning versus training from scratch.

    ``train_fraction`` subsamples the train side's problems (the validation
    side keeps its full size), putting the comparison in a chosen data regime.
    """
    traces: dict = {"pretrained": [], "random": [], "pretrained_initial": []}
    for run in range(runs):
        train, val = split_by_problem(
            human, (0.8, 0.2), seed=derive_seed(seed, "conv-split", str(run)),
            names=["train", "validation"],
        )
        if train_fraction < 1.0:
            train = sample_problem_fraction(
                train, train_fraction, seed=derive_seed(seed, "conv-frac", str(run))
            )
        net = clone_network(pretrained)
        traces["pretrained_initial"].append(mse(net.predict(val.features), val.a_rate))
        h = net.finetune(
            train.features, train.a_rate, learning_rate=finetune_lr,
            epochs=epochs, val=(val.features, val.a_rate), patience=None,
        )
        traces["pretrained"].append(h["val_mse"])
        cfg = dataclasses.replace(net_config, seed=derive_seed(seed, "conv-init", str(run)))
        fresh = SparseNetwork(cfg)
        fresh.fit_normalizer(train.features)
        h = fresh.train(
            train.features, train.a_rate, epochs=epochs,
            val=(val.features, val.a_rate), patience=None,
        )
        traces["random"].append(h["val_mse"])
    return ExperimentReport(
        kind="convergence",
        config={"runs": runs, "epochs": epochs, "finetune_lr": finetune_lr,
                "train_fraction": train_fraction},
        seeds={"seed": seed},
        traces=traces,
    )


# -- bootstrap ---------------------------------------------------------------------


def bootstrap_mse(
    predictions: Sequence[float],
    ds: Dataset,
    n_samples: int = 100,
    sample_size: int | None = None,
    replace: bool = True,
    seed: int = 0,
    bins: int = 20,
) -> dict:
    """Problem-level bootstrap distribution of MSE.

    Each of ``n_samples`` draws resamples ``sample_size`` problems (with
    replacement by default) and scores all their rows, problems entering with
    multiplicity.
    """
    predictions = np.asarray(predictions, dtype=np.float64)
    if predictions.shape[0] != len(ds):
        raise ValidationError("predictions are not aligned with the dataset rows")
    pids = ds.problem_ids()
    if sample_size is None:
        sample_size = len(pids)
    if sample_size > len(pids):
        raise ValidationError(f"sample_size {sample_size} exceeds {len(pids)} problems")
    rows_by_pid: dict[str, list[int]] = {}
    for i, pid in enumerate(ds.ids):
        rows_by_pid.setdefault(pid, []).append(i)
    row_arrays = {pid: np.array(r) for pid, r in rows_by_pid.items()}
    sq = (predictions - ds.a_rate) ** 2
    rng = np.random.default_rng(seed)
    samples = []
    for _ in range(n_samples):
        chosen = rng.choice(len(pids), size=sample_size, replace=replace)
        # sorted rows make the float sum independent of draw order
        idx = np.sort(np.concatenate([row_arrays[pids[i]] for i in chosen]))
        samples.append(float(sq[idx].mean()))
    samples_arr = np.array(samples)
    lo, hi = float(samples_arr.min()), float(samples_arr.max())
    if hi - lo < 1e-12:  # degenerate distribution; give the histogram some width
        pad = max(abs(lo) * 1e-6, 1e-9)
        counts, edges = np.histogram(samples_arr, bins=bins, range=(lo - pad, hi + pad))
    else:
        counts, edges = np.histogram(samples_arr, bins=bins)
    return {
        "n_samples": n_samples,
        "sample_size": sample_size,
        "replace": replace,
        "seed": seed,
        "mean": float(samples_arr.mean()),
        "std": float(samples_arr.std(ddof=1)) if n_samples > 1 else 0.0,
        "histogram": {"counts": counts.tolist(), "edges": edges.tolist()},
        "samples": samples,
    }


# -- tiny hyperparameter grid -------------------------------------------------------


def grid_search(
    base: NetworkConfig,
    grid: dict[str, Sequence],
    train: Dataset,
    val: Dataset,
    epochs: int = 50,
    patience: int = 10,
) -> tuple[NetworkConfig, list[dict]]:
    """Exhaustive search over a small config grid; returns the best config."""
    import itertools

    keys = list(grid)
    results = []
    best: tuple[float, NetworkConfig | None] = (np.inf, None)
    for values in itertools.product(*(grid[k] for k in keys)):
        cfg = dataclasses.replace(base, **dict(zip(keys, values)))
        net = SparseNetwork(cfg)
        net.fit_normalizer(train.features)
        net.train(train.features, train.a_rate, epochs=epochs,
                  val=(val.features, val.a_rate), patience=patience)
        score = mse(net.predict(val.features), val.a_rate)
        results.append({**dict(zip(keys, values)), "val_mse": score})
        if score < best[0]:
            best = (score, cfg)
    assert best[1] is not None
    return best[1], results
