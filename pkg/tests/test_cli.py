"""End-to-end CLI flows on small artifacts, including exit codes."""

import json

import numpy as np
import pytest

from choiceprior.cli import main
from choiceprior.datasets import load_targets
from choiceprior.gambles import load_problems
from choiceprior.net import NetworkConfig, SparseNetwork


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    problems = root / "problems.csv"
    assert main([
        "sample-problems", "--schema", "cpc15", "--count", "120",
        "--seed", "3", "--out", str(problems),
    ]) == 0
    targets = root / "targets.csv"
    assert main([
        "label", "--problems", str(problems), "--model", "beast15",
        "--n-agents", "300", "--seed", "5", "--out", str(targets),
    ]) == 0
    human = root / "human.csv"
    assert main([
        "simulate-humans", "--problems", str(problems), "--base-targets", str(targets),
        "--participants", "16", "--seed", "7", "--out", str(human),
    ]) == 0
    return root, problems, targets, human


class TestDataCommands:
    def test_sample_problems_outputs(self, workdir):
        root, problems, *_ = workdir
        assert problems.exists()
        sidecar = problems.with_suffix(".csv.provenance.json")
        assert sidecar.exists()
        meta = json.loads(sidecar.read_text())
        assert meta["count"] == 120 and meta["seed"] == 3
        assert len(load_problems(problems)) == 120

    def test_sample_problems_deterministic(self, workdir, tmp_path):
        root, problems, *_ = workdir
        again = tmp_path / "again.csv"
        assert main(["sample-problems", "--schema", "cpc15", "--count", "120",
                     "--seed", "3", "--out", str(again)]) == 0
        assert again.read_bytes() == problems.read_bytes()

    def test_exclusions_flag(self, workdir, tmp_path):
        root, problems, *_ = workdir
        fresh = tmp_path / "fresh.csv"
        assert main(["sample-problems", "--count", "50", "--seed", "9",
                     "--exclude", str(problems), "--out", str(fresh)]) == 0
        old = {p.canonical_key() for p in load_problems(problems)}
        new = {p.canonical_key() for p in load_problems(fresh)}
        assert old.isdisjoint(new)

    def test_label_and_simulate_shapes(self, workdir):
        _, problems, targets, human = workdir
        recs = load_targets(targets)
        assert len(recs) == 240
        hum = load_targets(human)
        assert len(hum) == 240
        assert all(r.n == 16 for r in hum)

    def test_label_eu_model(self, workdir, tmp_path):
        _, problems, *_ = workdir
        out = tmp_path / "eu.csv"
        assert main(["label", "--problems", str(problems), "--model", "eu",
                     "--out", str(out)]) == 0
        assert all(r.n == 0 for r in load_targets(out))


@pytest.fixture(scope="module")
def trained(workdir, tmp_path_factory):
    root, problems, targets, human = workdir
    model = tmp_path_factory.mktemp("models") / "net.npz"
    code = main([
        "pretrain", "--problems", str(problems), "--targets", str(targets),
        "--hidden", "16,8", "--epsilon", "3.0", "--epochs", "25", "--patience", "10",
        "--seed", "2", "--out", str(model),
    ])
    assert code == 0
    return model


class TestModelCommands:
    def test_pretrain_checkpoint_loads(self, trained):
        net = SparseNetwork.load(trained)
        assert net.config.hidden == (16, 8)
        assert net.epoch > 0

    def test_finetune(self, workdir, trained, tmp_path):
        _, problems, _, human = workdir
        out = tmp_path / "tuned.npz"
        assert main([
            "finetune", "--model", str(trained), "--problems", str(problems),
            "--targets", str(human), "--epochs", "3", "--out", str(out),
        ]) == 0
        assert out.exists()

    def test_evaluate_writes_report_bundle(self, workdir, trained, tmp_path):
        _, problems, targets, _ = workdir
        rd = tmp_path / "report"
        assert main([
            "evaluate", "--model", str(trained), "--problems", str(problems),
            "--targets", str(targets), "--report-dir", str(rd),
        ]) == 0
        assert (rd / "report.json").exists()
        assert (rd / "mse_table.csv").exists()
        assert (rd / "mse.png").stat().st_size > 0
        report = json.loads((rd / "report.json").read_text())
        assert {r["split"] for r in report["tables"]["mse"]} == {
            "rows", "problem_mean", "no_feedback", "feedback",
        }

    def test_learning_curve_bundle(self, workdir, trained, tmp_path):
        _, problems, _, human = workdir
        rd = tmp_path / "curve"
        assert main([
            "learning-curve", "--problems", str(problems), "--human", str(human),
            "--pretrained", str(trained), "--fractions", "0.5,1.0", "--repeats", "1",
            "--finetune-epochs", "2", "--fresh-epochs", "2",
            "--seed", "4", "--report-dir", str(rd),
        ]) == 0
        assert (rd / "curve.png").stat().st_size > 0
        assert (rd / "curve.csv").exists()
        report = json.loads((rd / "report.json").read_text())
        assert report["curves"]["fractions"] == [0.5, 1.0]

    def test_bootstrap_bundle(self, workdir, trained, tmp_path):
        _, problems, targets, _ = workdir
        rd = tmp_path / "boot"
        assert main([
            "bootstrap", "--model", str(trained), "--problems", str(problems),
            "--targets", str(targets), "--samples", "30", "--size", "20", "--size", "100",
            "--seed", "6", "--report-dir", str(rd),
        ]) == 0
        report = json.loads((rd / "report.json").read_text())
        stds = {row["size"]: row["std"] for row in report["tables"]["bootstrap"]}
        assert stds["20"] > stds["100"]
        assert (rd / "bootstrap.png").stat().st_size > 0

    def test_baseline_command(self, workdir, tmp_path):
        _, problems, _, human = workdir
        rd = tmp_path / "base"
        assert main(["baseline", "--kind", "knn", "--problems", str(problems),
                     "--human", str(human), "--report-dir", str(rd)]) == 0
        assert (rd / "report.json").exists()


class TestExitCodes:
    def test_validation_error_is_one(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("id,nope\n")
        out = tmp_path / "t.csv"
        assert main(["label", "--problems", str(bad), "--out", str(out)]) == 1

    def test_missing_file_is_one(self, tmp_path):
        assert main(["label", "--problems", str(tmp_path / "ghost.csv"),
                     "--out", str(tmp_path / "t.csv")]) == 1

    def test_training_failure_is_two(self, workdir, tmp_path):
        _, problems, _, human = workdir
        # poison a checkpoint so the first fine-tuning epoch yields NaN loss
        cfg = NetworkConfig(input_dim=12, hidden=(8,), sparse=False, seed=0)
        net = SparseNetwork(cfg)
        net.weights[0][0, 0] = np.nan
        sick = tmp_path / "sick.npz"
        net.save(sick)
        code = main([
            "finetune", "--model", str(sick), "--problems", str(problems),
            "--targets", str(human), "--epochs", "2", "--out", str(tmp_path / "o.npz"),
        ])
        assert code == 2

    def test_help_is_zero(self):
        assert main(["--help"]) == 0
