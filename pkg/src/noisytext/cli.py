"""Command-line entry points; each pipeline stage is independently invocable.
Exit codes: 0 on success, 1 on configuration errors, 2 on runtime failures.
Every subcommand writes its resolved configuration next to its outputs.
"""
from __future__ import annotations
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path
import click
from . import bench as bench_mod
from .corpus import SynthSpec, generate_synthetic, load_encoded, save_dataset
from .errors import ConfigError, DataError, FormatError
from .model import ClassifierConfig, init_model, load_model, save_model
from .noise import (NoiseSpec, TransitionMatrix, apply_rules, corrupt_labels,
                    load_rules)
from .train import TaptConfig, TrainConfig, tapt_pretrain, train


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _write_resolved(out_dir: Path, name: str, config: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / f"{name}.config.json", "w", encoding="utf-8") as fh:
        json.dump(config, fh, indent=2, default=str)


@click.group()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None, help="JSON config file for the subcommand.")
@click.option("--out-dir", type=click.Path(), default=".", show_default=True)
@click.pass_context
def main(ctx, seed, config_path, out_dir):
    """Desk-scale laboratory for text classification under label noise."""
    ctx.obj = {
        "seed": seed,
        "config": _load_config(config_path),
        "out_dir": Path(out_dir),
    }


@main.command()
@click.option("--k", type=int, default=4)
@click.option("--vocab-size", type=int, default=200)
@click.option("--keywords-per-class", type=int, default=5)
@click.option("--doc-length", type=int, default=20)
@click.option("--signal-rate", type=float, default=0.5)
@click.option("--n-docs", type=int, default=2000)
@click.option("--out", default="synth.jsonl", show_default=True)
@click.pass_obj
def synth(obj, k, vocab_size, keywords_per_class, doc_length, signal_rate,
          n_docs, out):
    """Generate a synthetic class-keyword corpus."""
    fields = {"k": k, "vocab_size": vocab_size,
              "keywords_per_class": keywords_per_class,
              "doc_length": doc_length, "signal_rate": signal_rate,
              "n_docs": n_docs, "seed": obj["seed"]}
    fields.update(obj["config"].get("synthetic", {}))
    spec = SynthSpec(**fields)
    dataset = generate_synthetic(spec)
    out_path = obj["out_dir"] / out
    obj["out_dir"].mkdir(parents=True, exist_ok=True)
    save_dataset(dataset, out_path)
    _write_resolved(obj["out_dir"], "synth", asdict(spec))
    click.echo(f"wrote {len(dataset)} examples to {out_path}")


@main.command("inject-noise")
@click.option("--dataset", "dataset_path", required=True,
              type=click.Path(exists=True))
@click.option("--kind", type=click.Choice(["uniform", "single_flip"]),
              default="uniform", show_default=True)
@click.option("--level", type=float, required=True)
@click.option("--out", default="noisy.jsonl", show_default=True)
@click.pass_obj
def inject_noise(obj, dataset_path, kind, level, out):
    """Corrupt gold labels through a simulated transition matrix."""
    dataset = load_encoded(dataset_path)
    matrix = NoiseSpec(kind, level).matrix(dataset.num_classes)
    noisy = corrupt_labels(dataset, matrix, obj["seed"])
    out_path = obj["out_dir"] / out
    obj["out_dir"].mkdir(parents=True, exist_ok=True)
    save_dataset(noisy, out_path)
    _write_resolved(obj["out_dir"], "inject-noise", {
        "dataset": str(dataset_path), "kind": kind, "level": level,
        "seed": obj["seed"], "matrix": matrix.entries.tolist()})
    click.echo(f"wrote noisy dataset to {out_path}")


@main.command("label-weak")
@click.option("--dataset", "dataset_path", required=True,
              type=click.Path(exists=True))
@click.option("--rules", "rules_path", required=True,
              type=click.Path(exists=True))
@click.option("--fallback", default="drop", show_default=True,
              help="Class index for unmatched documents, or 'drop'.")
@click.option("--out", default="weak.jsonl", show_default=True)
@click.pass_obj
def label_weak(obj, dataset_path, rules_path, fallback, out):
    """Weak-label a dataset with keyword rules."""
    dataset = load_encoded(dataset_path)
    rules = load_rules(rules_path, dataset.class_names)
    fb = fallback if fallback == "drop" else int(fallback)
    labeled = apply_rules(dataset, rules, fb)
    out_path = obj["out_dir"] / out
    obj["out_dir"].mkdir(parents=True, exist_ok=True)
    save_dataset(labeled, out_path)
    _write_resolved(obj["out_dir"], "label-weak", {
        "dataset": str(dataset_path), "rules": str(rules_path),
        "fallback": fallback})
    click.echo(f"wrote weak-labeled dataset to {out_path} "
               f"({len(labeled)} examples kept)")


def _model_config(obj, dataset, arch="embed_mlp") -> ClassifierConfig:
    fields = {"arch": arch, "k": dataset.num_classes,
              "vocab_size": dataset.vocab.size, "init_seed": obj["seed"]}
    fields.update(obj["config"].get("model", {}))
    return ClassifierConfig(**fields)


@main.command()
@click.option("--dataset", "dataset_path", required=True,
              type=click.Path(exists=True))
@click.option("--epochs", type=int, default=5, show_default=True)
@click.option("--mask-prob", type=float, default=0.15, show_default=True)
@click.option("--learning-rate", type=float, default=1e-2, show_default=True)
@click.option("--out", default="pretrained.json", show_default=True)
@click.pass_obj
def tapt(obj, dataset_path, epochs, mask_prob, learning_rate, out):
    """Masked-token pretraining of an embed_mlp model's embedding table."""
    dataset = load_encoded(dataset_path)
    model_cfg = _model_config(obj, dataset)
    cfg_fields = {"mask_prob": mask_prob, "pretrain_epochs": epochs,
                  "learning_rate": learning_rate, "seed": obj["seed"]}
    cfg_fields.update(obj["config"].get("tapt", {}))
    cfg = TaptConfig(**cfg_fields)
    model, mlm_acc = tapt_pretrain(init_model(model_cfg), dataset, cfg,
                                   return_mlm_accuracy=True)
    out_path = obj["out_dir"] / out
    obj["out_dir"].mkdir(parents=True, exist_ok=True)
    save_model(model, out_path)
    _write_resolved(obj["out_dir"], "tapt",
                    {"model": asdict(model_cfg)} | asdict(cfg))
    click.echo(f"wrote checkpoint to {out_path} "
               f"(masked-token accuracy {mlm_acc:.4f})")


@main.command("train")
@click.option("--train", "train_path", required=True,
              type=click.Path(exists=True))
@click.option("--val", "val_path", type=click.Path(exists=True), default=None)
@click.option("--test", "test_path", required=True,
              type=click.Path(exists=True))
@click.option("--method", type=click.Choice(sorted(bench_mod.METHOD_CODES)),
              default="WN", show_default=True)
@click.option("--arch", type=click.Choice(["bow_linear", "embed_mlp"]),
              default="embed_mlp", show_default=True)
@click.option("--start-checkpoint", type=click.Path(exists=True), default=None,
              help="Warm-start model (e.g. after tapt).")
@click.option("--transition-json", type=click.Path(exists=True), default=None,
              help="Transition matrix for NMat, JSON k x k array.")
@click.option("--out", default="result.json", show_default=True)
@click.pass_obj
def train_cmd(obj, train_path, val_path, test_path, method, arch,
              start_checkpoint, transition_json, out):
    """Run one training regime and write its trace and checkpoint."""
    train_set = load_encoded(train_path)
    test_set = load_encoded(test_path)
    val_set = load_encoded(val_path) if val_path else None
    train_method, use_val = bench_mod.METHOD_CODES[method]
    overrides = dict(obj["config"].get("train", {}))
    if transition_json is not None:
        overrides["transition"] = TransitionMatrix.from_json(
            Path(transition_json).read_text(encoding="utf-8"))
    train_cfg = TrainConfig(method=train_method, use_validation=use_val,
                            seed=obj["seed"], **overrides)
    model_cfg = _model_config(obj, train_set, arch)
    start = load_model(start_checkpoint) if start_checkpoint else None
    selected, result = train(train_set, val_set, test_set, model_cfg,
                             train_cfg, start_model=start)
    out_path = obj["out_dir"] / out
    obj["out_dir"].mkdir(parents=True, exist_ok=True)
    out_path.write_text(result.to_json(), encoding="utf-8")
    save_model(selected, out_path.with_suffix(".model.json"))
    resolved = asdict(replace(train_cfg, transition=None))
    resolved["model"] = asdict(model_cfg)
    _write_resolved(obj["out_dir"], "train", resolved)
    click.echo(f"selected epoch {result.selected_epoch}, "
               f"clean test accuracy {result.final_test_accuracy:.4f}")


@main.command()
@click.option("--out", default="report", show_default=True,
              help="Basename for report.{json,csv,md}.")
@click.pass_obj
def benchmark(obj, out):
    """Run the full experiment grid described by --config."""
    if not obj["config"]:
        raise ConfigError("benchmark requires --config with an experiment spec")
    spec = bench_mod.parse_spec(obj["config"])
    report = bench_mod.run_experiment(spec)
    out_dir = obj["out_dir"]
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{out}.json").write_text(report.to_json(), encoding="utf-8")
    bench_mod.emit_report(report, "csv", out_dir / f"{out}.csv")
    bench_mod.emit_report(report, "markdown", out_dir / f"{out}.md")
    _write_resolved(out_dir, "benchmark",
                    json.loads(json.dumps(spec, default=bench_mod._jsonable)))
    click.echo(f"wrote {out}.json, {out}.csv, {out}.md to {out_dir}")


@main.command()
@click.option("--report", "report_path", required=True,
              type=click.Path(exists=True), help="report.json from benchmark.")
@click.option("--fmt", type=click.Choice(["csv", "markdown", "delta"]),
              default="markdown", show_default=True)
@click.option("--out", default=None, help="Output path (default: stdout).")
@click.pass_obj
def report(obj, report_path, fmt, out):
    """Re-emit a saved report as CSV, Markdown, or the TAPT delta table."""
    rep = bench_mod.Report.from_json(Path(report_path).read_text(encoding="utf-8"))
    if fmt == "delta":
        rows = bench_mod.delta_table(rep)
        text = "\n".join(f"{r['method']} ({r['noise']}): {r['rendered']}"
                         for r in rows) + "\n"
    elif fmt == "csv":
        text = bench_mod.report_csv(rep)
    else:
        text = bench_mod.report_markdown(rep)
    if out is None:
        click.echo(text, nl=False)
    else:
        Path(out).write_text(text, encoding="utf-8")


def run() -> int:
    try:
        main(standalone_mode=False)
        return 0
    except click.exceptions.Abort:
        return 2
    except (click.UsageError, ConfigError, FormatError, DataError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except Exception as exc:  # runtime failure
        click.echo(f"failure: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(run())
