"""Command-line surface tying the pipeline together.

Every subcommand reads/writes the canonical CSV/JSON formats, takes --seed,
and exits 0 on success, 1 on validation errors, 2 on training failures.
Report-producing commands write the report JSON, a CSV table, and PNG figures
into --report-dir.
"""

from __future__ import annotations

import dataclasses
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import baselines, pipeline, reports
from .cognitive import BeastParams, generate_targets
from .datasets import build_dataset, load_targets, save_targets, split_by_problem
from .gambles import Schema, ValidationError, load_problems
from .net import NetworkConfig, SparseNetwork, TrainingError
from .pipeline import ExperimentReport, PerturbationSpec
from .space import GenerationError, SpaceConfig, generate_set, save_problem_set


def _parse_blocks(spec: str) -> tuple[tuple[int, bool], ...]:
    out = []
    try:
        for part in spec.split(","):
            block, feedback = part.split(":")
            out.append((int(block), bool(int(feedback))))
    except ValueError as exc:
        raise ValidationError(f"bad blocks spec {spec!r}; expected e.g. '1:0,2:1'") from exc
    if not out:
        raise ValidationError("blocks spec is empty")
    return tuple(out)


def _parse_hidden(spec: str) -> tuple[int, ...]:
    return tuple(int(w) for w in spec.split(","))


def _schema(name: str) -> Schema:
    return Schema(name.upper())


@click.group()
def cli() -> None:
    """Risky-choice prediction pipeline."""


@cli.command("sample-problems")
@click.option("--schema", type=click.Choice(["cpc15", "cpc18"]), default="cpc15")
@click.option("--count", type=int, required=True)
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(), required=True)
@click.option("--exclude", type=click.Path(exists=True), multiple=True,
              help="Problem CSVs whose problems must not reappear.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON file overriding sampling-space fields.")
def sample_problems_cmd(schema, count, seed, out, exclude, config_path):
    """Generate a deduplicated, non-degenerate problem set."""
    base = SpaceConfig(schema=_schema(schema))
    if config_path:
        overrides = json.loads(Path(config_path).read_text())
        cfg = SpaceConfig.from_dict({**base.to_dict(), **overrides})
    else:
        cfg = base
    from .space import ProblemSet

    exclusions = []
    for path in exclude:
        probs = load_problems(path)
        exclusions.append(ProblemSet(probs, probs[0].schema if probs else cfg.schema))
    ps = generate_set(cfg, count, exclusions, rng=seed)
    sidecar = save_problem_set(ps, out)
    click.echo(f"wrote {len(ps)} problems to {out} (provenance: {sidecar})")


@cli.command("label")
@click.option("--problems", "problems_path", type=click.Path(exists=True), required=True)
@click.option("--model", type=click.Choice(["beast15", "beast18", "eu", "pt"]), default="beast15")
@click.option("--blocks", default="1:0,2:1", help="Comma list of block:feedback pairs.")
@click.option("--seed", type=int, default=0)
@click.option("--n-agents", type=int, default=4000)
@click.option("--sigma", type=float, default=None)
@click.option("--out", type=click.Path(), required=True)
def label_cmd(problems_path, model, blocks, seed, n_agents, sigma, out):
    """Label problems with a cognitive model's per-block choice rates."""
    problems = load_problems(problems_path)
    params = BeastParams(n_agents=n_agents)
    if sigma is not None:
        params = dataclasses.replace(params, sigma=sigma)
    parsed_blocks = _parse_blocks(blocks)
    records = generate_targets(problems, model, parsed_blocks, seed=seed,
                               beast_params=params)
    save_targets(records, out)
    # model-config sidecar so every target file carries its generator settings
    sidecar = Path(str(out) + ".model.json")
    sidecar.write_text(json.dumps({
        "model": model,
        "blocks": [[b, int(f)] for b, f in parsed_blocks],
        "seed": seed,
        "params": dataclasses.asdict(params),
    }, indent=2, sort_keys=True) + "\n")
    click.echo(f"wrote {len(records)} target records to {out} (config: {sidecar})")


@cli.command("simulate-humans")
@click.option("--problems", "problems_path", type=click.Path(exists=True), required=True)
@click.option("--base", type=click.Choice(["beast15", "beast18", "eu", "pt"]), default="beast15")
@click.option("--base-targets", type=click.Path(exists=True), default=None,
              help="Reuse existing base-model targets instead of re-running the model.")
@click.option("--participants", type=int, default=16)
@click.option("--pt-weight", type=float, default=0.2)
@click.option("--pt-temperature", type=float, default=25.0)
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(), required=True)
def simulate_humans_cmd(problems_path, base, base_targets, participants, pt_weight,
                        pt_temperature, seed, out):
    """Generate pseudo-human targets (systematic tilt plus panel noise)."""
    problems = load_problems(problems_path)
    base_records = load_targets(base_targets) if base_targets else None
    spec = PerturbationSpec(pt_weight=pt_weight, pt_temperature=pt_temperature)
    records = pipeline.simulate_human_targets(
        problems, base, spec, participants, seed=seed, base_records=base_records
    )
    save_targets(records, out)
    click.echo(f"wrote {len(records)} simulated-human records to {out}")


def _net_options(fn):
    fn = click.option("--hidden", default="200,275,100")(fn)
    fn = click.option("--dropout", type=float, default=0.15)(fn)
    fn = click.option("--dense", is_flag=True, default=False)(fn)
    fn = click.option("--epsilon", type=float, default=5.0)(fn)
    fn = click.option("--zeta", type=float, default=0.3)(fn)
    fn = click.option("--lr", type=float, default=0.001)(fn)
    return fn


def _network_config(input_dim, hidden, dropout, dense, epsilon, zeta, lr, seed) -> NetworkConfig:
    return NetworkConfig(
        input_dim=input_dim, hidden=_parse_hidden(hidden), dropout=dropout,
        sparse=not dense, epsilon=epsilon, zeta=zeta, learning_rate=lr, seed=seed,
    )


@cli.command("pretrain")
@click.option("--problems", "problems_path", type=click.Path(exists=True), required=True)
@click.option("--targets", "targets_path", type=click.Path(exists=True), required=True)
@click.option("--epochs", type=int, default=400)
@click.option("--patience", type=int, default=20)
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(), required=True)
@_net_options
def pretrain_cmd(problems_path, targets_path, epochs, patience, seed, out,
                 hidden, dropout, dense, epsilon, zeta, lr):
    """Train a network on model-labeled synthetic targets."""
    problems = load_problems(problems_path)
    ds = build_dataset(problems, load_targets(targets_path))
    cfg = _network_config(ds.features.shape[1], hidden, dropout, dense, epsilon, zeta, lr, seed)
    net, history = pipeline.pretrain_network(ds, cfg, epochs=epochs, patience=patience, seed=seed)
    net.save(out)
    click.echo(
        f"pretrained {net.parameter_count()}-parameter net for "
        f"{history['epochs_run']} epochs (best val MSE {history.get('best_val_mse', float('nan')):.5f}); saved to {out}"
    )


@cli.command("finetune")
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--problems", "problems_path", type=click.Path(exists=True), required=True)
@click.option("--targets", "targets_path", type=click.Path(exists=True), required=True)
@click.option("--lr", type=float, default=1e-6)
@click.option("--epochs", type=int, default=400)
@click.option("--patience", type=int, default=60)
@click.option("--val-fraction", type=float, default=0.1,
              help="Problem fraction held out for early stopping (0 disables).")
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(), required=True)
def finetune_cmd(model_path, problems_path, targets_path, lr, epochs, patience,
                 val_fraction, seed, out):
    """Fine-tune a pretrained network on (pseudo-)human targets."""
    net = SparseNetwork.load(model_path)
    problems = load_problems(problems_path)
    ds = build_dataset(problems, load_targets(targets_path))
    if val_fraction > 0:
        train, val = split_by_problem(ds, (1 - val_fraction, val_fraction), seed=seed,
                                      names=["train", "validation"])
        history = pipeline.finetune_network(net, train, val, lr, epochs, patience)
    else:
        history = pipeline.finetune_network(net, ds, None, lr, epochs, None)
    net.save(out)
    click.echo(f"fine-tuned for {history['epochs_run']} epochs; saved to {out}")


@cli.command("evaluate")
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--problems", "problems_path", type=click.Path(exists=True), required=True)
@click.option("--targets", "targets_path", type=click.Path(exists=True), required=True)
@click.option("--report-dir", type=click.Path(), default=None)
def evaluate_cmd(model_path, problems_path, targets_path, report_dir):
    """Score a checkpoint against a target CSV (row-level and problem-level MSE)."""
    net = SparseNetwork.load(model_path)
    problems = load_problems(problems_path)
    ds = build_dataset(problems, load_targets(targets_path))
    preds = net.predict(ds.features)
    row_mse = pipeline.mse(preds, ds.a_rate)
    by_problem: dict[str, list[float]] = {}
    for pid, sq in zip(ds.ids, (preds - ds.a_rate) ** 2):
        by_problem.setdefault(pid, []).append(float(sq))
    problem_mse = float(np.mean([np.mean(v) for v in by_problem.values()]))
    rows = [
        {"model": "checkpoint", "split": "rows", "mse": row_mse},
        {"model": "checkpoint", "split": "problem_mean", "mse": problem_mse},
    ]
    for flag, name in ((False, "no_feedback"), (True, "feedback")):
        mask = ds.feedback == flag
        if mask.any():
            rows.append({"model": "checkpoint", "split": name,
                         "mse": pipeline.mse(preds[mask], ds.a_rate[mask])})
    click.echo(f"row MSE {row_mse:.6f}; problem-mean MSE {problem_mse:.6f}")
    if report_dir:
        out = Path(report_dir)
        out.mkdir(parents=True, exist_ok=True)
        report = ExperimentReport(
            kind="evaluate",
            config={"model": str(model_path), "targets": str(targets_path)},
            seeds={}, tables={"mse": rows},
        )
        report.save(out / "report.json")
        reports.write_table_csv(rows, out / "mse_table.csv")
        reports.mse_table_figure(rows, out / "mse.png")
        click.echo(f"report written to {out}")


@cli.command("learning-curve")
@click.option("--problems", "problems_path", type=click.Path(exists=True), required=True)
@click.option("--human", "human_path", type=click.Path(exists=True), required=True)
@click.option("--pretrained", "pretrained_path", type=click.Path(exists=True), required=True)
@click.option("--fractions", default="0.01,0.02,0.04,0.08,0.16,0.32,0.64,1.0")
@click.option("--repeats", type=int, default=10)
@click.option("--priors", default="random,pretrained")
@click.option("--seed", type=int, default=0)
@click.option("--finetune-epochs", type=int, default=400)
@click.option("--fresh-epochs", type=int, default=300)
@click.option("--report-dir", type=click.Path(), required=True)
def learning_curve_cmd(problems_path, human_path, pretrained_path, fractions, repeats,
                       priors, seed, finetune_epochs, fresh_epochs, report_dir):
    """Validation MSE versus training-set fraction for both priors."""
    problems = load_problems(problems_path)
    human = build_dataset(problems, load_targets(human_path))
    pretrained = SparseNetwork.load(pretrained_path)
    report = pipeline.learning_curve(
        human,
        fractions=[float(f) for f in fractions.split(",")],
        repeats=repeats,
        priors=tuple(priors.split(",")),
        pretrained=pretrained,
        net_config=pretrained.config,
        seed=seed,
        finetune_epochs=finetune_epochs,
        fresh_epochs=fresh_epochs,
        keep_traces=True,
    )
    out = Path(report_dir)
    out.mkdir(parents=True, exist_ok=True)
    report.save(out / "report.json")
    reports.write_table_csv(reports.learning_curve_table(report), out / "curve.csv")
    reports.learning_curve_figure(report, out / "curve.png")
    click.echo(f"learning-curve report written to {out}")


@cli.command("bootstrap")
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--problems", "problems_path", type=click.Path(exists=True), required=True)
@click.option("--targets", "targets_path", type=click.Path(exists=True), required=True)
@click.option("--samples", type=int, default=100)
@click.option("--size", "sizes", type=int, multiple=True, required=True,
              help="Problem-level sample size; repeat for several panels.")
@click.option("--seed", type=int, default=0)
@click.option("--report-dir", type=click.Path(), required=True)
def bootstrap_cmd(model_path, problems_path, targets_path, samples, sizes, seed, report_dir):
    """Bootstrap the MSE distribution over problem resamples."""
    net = SparseNetwork.load(model_path)
    problems = load_problems(problems_path)
    ds = build_dataset(problems, load_targets(targets_path))
    preds = net.predict(ds.features)
    summaries = {
        str(size): pipeline.bootstrap_mse(preds, ds, n_samples=samples, sample_size=size, seed=seed)
        for size in sizes
    }
    out = Path(report_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = ExperimentReport(
        kind="bootstrap",
        config={"samples": samples, "sizes": list(sizes)},
        seeds={"seed": seed},
        tables={"bootstrap": [
            {"size": label, "mean": s["mean"], "std": s["std"]} for label, s in summaries.items()
        ]},
        traces={"summaries": summaries},
    )
    report.save(out / "report.json")
    reports.write_table_csv(report.tables["bootstrap"], out / "bootstrap.csv")
    reports.bootstrap_figure(summaries, out / "bootstrap.png")
    for label, s in summaries.items():
        click.echo(f"size {label}: mean MSE {s['mean']:.5f}, std {s['std']:.5f}")


@cli.command("baseline")
@click.option("--kind", type=click.Choice(["linreg", "linear_regression", "knn"]), required=True)
@click.option("--problems", "problems_path", type=click.Path(exists=True), required=True)
@click.option("--human", "human_path", type=click.Path(exists=True), required=True)
@click.option("--k", type=int, default=5)
@click.option("--inverse-distance", is_flag=True, default=False)
@click.option("--seed", type=int, default=0)
@click.option("--report-dir", type=click.Path(), default=None)
def baseline_cmd(kind, problems_path, human_path, k, inverse_distance, seed, report_dir):
    """Fit a reference regressor on an 80/20 problem split and report MSE."""
    problems = load_problems(problems_path)
    ds = build_dataset(problems, load_targets(human_path))
    train, val = split_by_problem(ds, (0.8, 0.2), seed=seed, names=["train", "validation"])
    params = baselines.BaselineParams(k=k, inverse_distance=inverse_distance)
    err, _ = baselines.baseline_fit_predict(kind, train, val, params)
    click.echo(f"{kind} validation MSE {err:.6f}")
    if report_dir:
        out = Path(report_dir)
        out.mkdir(parents=True, exist_ok=True)
        rows = [{"model": kind, "split": "validation", "mse": err}]
        ExperimentReport(
            kind="baseline", config={"kind": kind, "k": k}, seeds={"seed": seed},
            tables={"mse": rows},
        ).save(out / "report.json")
        reports.write_table_csv(rows, out / "mse_table.csv")


@cli.command("serve")
@click.option("--problems", "problems_path", type=click.Path(exists=True), required=True)
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
@click.option("--seed", type=int, default=0)
@click.option("--log", "log_path", type=click.Path(), default=None,
              help="Append-only JSONL record log (replayed on restart).")
def serve_cmd(problems_path, host, port, seed, log_path):
    """Run the experiment HTTP service."""
    import uvicorn

    from .service import ExperimentServer, create_app

    problems = load_problems(problems_path)
    server = ExperimentServer(problems, seed=seed, log_path=log_path)
    app = create_app(server)
    uvicorn.run(app, host=host, port=port, log_level="warning")


def main(argv=None) -> int:
    try:
        cli(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.Abort:
        return 1
    except (ValidationError, GenerationError) as exc:
        click.echo(f"validation error: {exc}", err=True)
        return 1
    except TrainingError as exc:
        click.echo(f"training failure: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
