"""Command-line entry point.

Subcommands cover the pipeline end to end: pack raw sources into token
blocks, build and inspect the instruction dataset, generate synthetic
samples, emit stage configs, evaluate against a completion backend, run the
classical baselines, and render result reports.

Exit codes: 0 success, 1 usage error, 2 input error, 3 backend error,
4 augmentation finished under target (partial output written).

Backends are addressed by URI: `mock:fixtures.json` for the offline fixture
backend, `http://host:port` for a live completion endpoint (API key via
FINADAPT_API_KEY). Every non-dry run appends one record to the run log
(FINADAPT_RUN_LOG or ./finadapt_runs.jsonl).
"""
from __future__ import annotations

import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import click

from . import __version__
from . import augment as aug
from . import baselines as bl
from . import corpus as cp
from . import evalharness as ev
from . import instruct as ins
from . import reporting as rp
from . import trainconfig as tc
from .errors import BackendError, FinadaptError, InputDataError
from .modelio import CompletionClient, HTTPBackend, MockModel
from .tokenization import load_tokenizer

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_BACKEND = 3
EXIT_PARTIAL = 4


@dataclass
class PipelineRunRecord:
    subcommand: str
    config_hash: str
    inputs: list[str]
    outputs: list[str]
    seed: int | None
    wall_time_s: float
    version: str
    started_at: str


def _config_hash(subcommand: str, params: dict) -> str:
    canonical = json.dumps(
        {"subcommand": subcommand, "params": {k: str(v) for k, v in sorted(params.items())}},
        sort_keys=True,
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def _finish_run(
    ctx: click.Context,
    inputs: list[str | Path],
    outputs: list[str | Path],
    seed: int | None = None,
) -> None:
    """Append exactly one run record, unless this is a dry run."""
    state = ctx.obj or {}
    if state.get("dry_run"):
        return
    record = PipelineRunRecord(
        subcommand=ctx.command.name or "",
        config_hash=_config_hash(ctx.command.name or "", ctx.params),
        inputs=[str(p) for p in inputs],
        outputs=[str(p) for p in outputs],
        seed=seed,
        wall_time_s=round(time.monotonic() - state.get("started", time.monotonic()), 3),
        version=__version__,
        started_at=state.get("started_at", ""),
    )
    log_path = Path(state.get("run_log") or "finadapt_runs.jsonl")
    with log_path.open("a", encoding="utf-8") as handle:
        handle.write(json.dumps(asdict(record)) + "\n")


def make_backend(uri: str, max_concurrency: int = 4) -> CompletionClient:
    if uri.startswith("mock:"):
        backend = MockModel.from_json_file(uri[len("mock:") :])
    elif uri.startswith(("http://", "https://")):
        backend = HTTPBackend(base_url=uri, api_key=os.environ.get("FINADAPT_API_KEY", ""))
    else:
        raise InputDataError(f"backend URI must be mock:PATH or http(s)://…, got {uri!r}")
    return CompletionClient(backend=backend, max_concurrency=max_concurrency)


def _echo_json(data: dict) -> None:
    click.echo(json.dumps(data, indent=2, sort_keys=True))


@click.group(name="finadapt")
@click.version_option(version=__version__, prog_name="finadapt")
@click.option(
    "--run-log",
    type=click.Path(dir_okay=False),
    default=None,
    help="Run-record file (default: $FINADAPT_RUN_LOG or ./finadapt_runs.jsonl).",
)
@click.pass_context
def cli(ctx: click.Context, run_log: str | None) -> None:
    """Financial-domain LLM adaptation toolkit."""
    ctx.obj = {
        "run_log": run_log or os.environ.get("FINADAPT_RUN_LOG", "finadapt_runs.jsonl"),
        "started": time.monotonic(),
        "started_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "dry_run": False,
    }


def _dry_run_option(fn):
    return click.option(
        "--dry-run", is_flag=True, help="Validate inputs and write nothing."
    )(fn)


def _set_dry(ctx: click.Context, dry_run: bool) -> None:
    if ctx.obj is not None:
        ctx.obj["dry_run"] = dry_run


@cli.command("pack")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(dir_okay=False))
@click.option("--tokenizer", "tokenizer_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--format", "out_format", type=click.Choice(["jsonl", "binary"]), default="jsonl")
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None)
@_dry_run_option
@click.pass_context
def pack_cmd(ctx, manifest_path, tokenizer_path, out_path, out_format, report_path, dry_run):
    """Pack raw sources into fixed-length token blocks per the manifest."""
    _set_dry(ctx, dry_run)
    tokenizer = load_tokenizer(tokenizer_path)
    manifest = cp.load_manifest(manifest_path)
    blocks, report = cp.build_mixture(manifest, tokenizer)
    _echo_json(report.to_json_dict())
    if dry_run:
        return EXIT_OK
    if out_format == "binary":
        cp.write_blocks_binary(blocks, out_path)
    else:
        cp.write_blocks_jsonl(blocks, out_path)
    outputs = [out_path]
    if report_path:
        Path(report_path).write_text(
            json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        outputs.append(report_path)
    _finish_run(ctx, [manifest_path, tokenizer_path], outputs, seed=manifest.shuffle_seed)
    return EXIT_OK


@cli.group("instructions")
def instructions_group() -> None:
    """Build and inspect the instruction dataset."""


@instructions_group.command("build")
@click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--exclude", "excluded", multiple=True, help="Task names to drop entirely.")
@click.option("--id-prefix", default="instr")
@_dry_run_option
@click.pass_context
def instructions_build(ctx, input_path, out_path, excluded, id_prefix, dry_run):
    """Load raw samples, drop excluded tasks, down-sample, assign ids."""
    _set_dry(ctx, dry_run)
    excluded_set = frozenset(t.lower() for t in excluded) if excluded else ins.DEFAULT_EXCLUDED_TASKS
    samples = ins.load_samples(input_path, excluded_tasks=excluded_set)
    kept = ins.with_ids(ins.downsample(samples), id_prefix)
    _echo_json(
        {
            "loaded": len(samples),
            "kept": len(kept),
            "stats": ins.stats(kept).to_json_dict(),
        }
    )
    if dry_run:
        return EXIT_OK
    ins.save_samples(kept, out_path)
    _finish_run(ctx, [input_path], [out_path])
    return EXIT_OK


@instructions_group.command("downsample")
@click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@_dry_run_option
@click.pass_context
def instructions_downsample(ctx, input_path, out_path, dry_run):
    """Keep one sample per (task, input, answer)."""
    _set_dry(ctx, dry_run)
    samples = ins.load_samples(input_path, excluded_tasks=frozenset())
    kept = ins.downsample(samples)
    _echo_json({"loaded": len(samples), "kept": len(kept)})
    if dry_run:
        return EXIT_OK
    ins.save_samples(kept, out_path)
    _finish_run(ctx, [input_path], [out_path])
    return EXIT_OK


@instructions_group.command("stats")
@click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False))
@click.pass_context
def instructions_stats(ctx, input_path):
    """Print per-task sample counts."""
    samples = ins.load_samples(input_path)
    _echo_json(ins.stats(samples).to_json_dict())
    _finish_run(ctx, [input_path], [])
    return EXIT_OK


@instructions_group.command("render")
@click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--tokenizer", "tokenizer_path", type=click.Path(dir_okay=False), default=None)
@_dry_run_option
@click.pass_context
def instructions_render(ctx, input_path, out_path, tokenizer_path, dry_run):
    """Export rendered training texts (with token ids when a tokenizer is given)."""
    _set_dry(ctx, dry_run)
    samples = ins.load_samples(input_path)
    tokenizer = load_tokenizer(tokenizer_path) if tokenizer_path else None
    _echo_json({"samples": len(samples), "tokenized": tokenizer is not None})
    if dry_run:
        return EXIT_OK
    ins.export_rendered(samples, out_path, tokenizer=tokenizer)
    inputs = [input_path] + ([tokenizer_path] if tokenizer_path else [])
    _finish_run(ctx, inputs, [out_path])
    return EXIT_OK


def _load_seeds(path: str, task: ins.Task):
    if not Path(path).is_file():
        raise InputDataError(f"seeds file not found: {path}")
    seeds = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputDataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            x = str(record.get("x") or record.get("text") or "").strip()
            if task is ins.Task.NER:
                seeds.append(aug.NerSeed(x=x))
            else:
                y = str(record.get("y") or record.get("label") or "").strip()
                seeds.append(aug.SentimentSeed(x=x, y=y))
    if not seeds:
        raise InputDataError(f"no seeds found in {path}")
    return seeds


@cli.command("augment")
@click.option("--task", "task_name", required=True, type=click.Choice([t.value for t in aug.AUGMENTABLE_TASKS]))
@click.option("--target", required=True, type=click.IntRange(min=0))
@click.option("--seeds", "seeds_path", required=True, type=click.Path(dir_okay=False))
@click.option("--existing", "existing_path", type=click.Path(dir_okay=False), default=None)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None)
@click.option("--backend", "backend_uri", default=lambda: os.environ.get("FINADAPT_ENDPOINT", ""))
@click.option("--seed", type=int, default=0, help="Seed-order shuffle seed.")
@click.option("--budget-multiplier", type=click.IntRange(min=1), default=3)
@click.option("--temperature", type=float, default=0.8)
@click.option("--concurrency", type=click.IntRange(min=1), default=4)
@click.option("--ner-answer-format", type=click.Choice(["entity_list", "bio"]), default="entity_list")
@_dry_run_option
@click.pass_context
def augment_cmd(
    ctx,
    task_name,
    target,
    seeds_path,
    existing_path,
    out_path,
    report_path,
    backend_uri,
    seed,
    budget_multiplier,
    temperature,
    concurrency,
    ner_answer_format,
    dry_run,
):
    """Generate synthetic instruction samples for one task."""
    _set_dry(ctx, dry_run)
    if not backend_uri:
        raise InputDataError("no backend: pass --backend or set FINADAPT_ENDPOINT")
    task = ins.Task(task_name)
    seeds = _load_seeds(seeds_path, task)
    existing = (
        [s.input for s in ins.load_samples(existing_path)] if existing_path else []
    )
    client = make_backend(backend_uri, max_concurrency=concurrency)
    if dry_run:
        _echo_json(
            {
                "task": task.value,
                "target": target,
                "seeds": len(seeds),
                "existing_inputs": len(existing),
                "reply_budget": budget_multiplier * target,
            }
        )
        return EXIT_OK
    samples, report = aug.run_augmentation(
        task,
        seeds,
        target,
        client,
        existing_inputs=existing,
        seed=seed,
        budget_multiplier=budget_multiplier,
        temperature=temperature,
        ner_answer_format=ner_answer_format,
    )
    config = aug.augmentation_config(temperature, ner_answer_format, budget_multiplier)
    _echo_json(report.to_json_dict(config))
    ins.save_samples(samples, out_path)
    outputs = [out_path]
    if report_path:
        Path(report_path).write_text(
            json.dumps(report.to_json_dict(config), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        outputs.append(report_path)
    inputs = [seeds_path] + ([existing_path] if existing_path else [])
    _finish_run(ctx, inputs, outputs, seed=seed)
    return EXIT_PARTIAL if report.budget_exhausted else EXIT_OK


@cli.command("emit-train-config")
@click.option("--stage", "stage_name", required=True, type=click.Choice([s.value for s in tc.Stage]))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--dataset", "dataset_path", default="")
@click.option("--seed", type=int, default=0)
@click.option("--pad-token-id", type=int, default=None)
@click.option("--init-from", "init_from", default="", help="Checkpoint directory for stage 2.")
@_dry_run_option
@click.pass_context
def emit_train_config_cmd(ctx, stage_name, out_path, dataset_path, seed, pad_token_id, init_from, dry_run):
    """Write the training configuration for one stage."""
    _set_dry(ctx, dry_run)
    config = tc.emit_config(tc.Stage(stage_name))
    text = tc.serialize_config(
        config, dataset_path=dataset_path, seed=seed, pad_token_id=pad_token_id, init_from=init_from
    )
    click.echo(text, nl=False)
    if dry_run:
        return EXIT_OK
    Path(out_path).write_text(text, encoding="utf-8")
    _finish_run(ctx, [dataset_path] if dataset_path else [], [out_path], seed=seed)
    return EXIT_OK


@cli.command("eval")
@click.option("--task", "task_path", required=True, type=click.Path(dir_okay=False))
@click.option("--backend", "backend_uri", default=lambda: os.environ.get("FINADAPT_ENDPOINT", ""))
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None)
@click.option("--run-name", default="", help="Label carried into the report for the grid.")
@click.option("--concurrency", type=click.IntRange(min=1), default=4)
@_dry_run_option
@click.pass_context
def eval_cmd(ctx, task_path, backend_uri, out_path, report_path, run_name, concurrency, dry_run):
    """Evaluate a backend on one task file."""
    _set_dry(ctx, dry_run)
    if not backend_uri:
        raise InputDataError("no backend: pass --backend or set FINADAPT_ENDPOINT")
    spec = ev.load_task_file(task_path)
    client = make_backend(backend_uri, max_concurrency=concurrency)
    if dry_run:
        _echo_json(
            {
                "task": spec.task.value,
                "samples": len(spec.samples),
                "labels": list(spec.label_set),
            }
        )
        return EXIT_OK
    report = ev.run_eval(spec, client)
    body = report.to_json_dict()
    if run_name:
        body["run"] = run_name
    _echo_json(body)
    outputs = []
    if out_path:
        ev.save_predictions(report.predictions, out_path)
        outputs.append(out_path)
    if report_path:
        Path(report_path).write_text(
            json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        outputs.append(report_path)
    _finish_run(ctx, [task_path], outputs)
    return EXIT_OK


@cli.group("baseline")
def baseline_group() -> None:
    """Classical sentiment baselines."""


def _classification_predictions(spec: ev.TaskSpec, predict) -> list[ev.Prediction]:
    return [
        ev.Prediction(
            sample_id=s.sample_id, predicted=predict(s.input), gold=s.gold, subtask=s.subtask
        )
        for s in spec.samples
    ]


def _baseline_report(run_name: str, spec: ev.TaskSpec, predictions: list[ev.Prediction]) -> dict:
    return {
        "run": run_name,
        "task": spec.task.value,
        "metric": "weighted_f1",
        "value": ev.weighted_f1(predictions),
        "sample_count": len(predictions),
        "extra_metrics": {"accuracy": ev.accuracy(predictions)},
    }


def _emit_baseline(ctx, spec, predictions, run_name, out_path, report_path, dry_run, inputs):
    body = _baseline_report(run_name, spec, predictions)
    _echo_json(body)
    if dry_run:
        return EXIT_OK
    outputs = []
    if out_path:
        ev.save_predictions(predictions, out_path)
        outputs.append(out_path)
    if report_path:
        Path(report_path).write_text(
            json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        outputs.append(report_path)
    _finish_run(ctx, inputs, outputs)
    return EXIT_OK


@baseline_group.command("lexicon")
@click.option("--lexicon", "lexicon_path", required=True, type=click.Path(dir_okay=False))
@click.option("--eval", "task_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None)
@_dry_run_option
@click.pass_context
def baseline_lexicon(ctx, lexicon_path, task_path, out_path, report_path, dry_run):
    """Polarity-lexicon classifier on a classification task file."""
    _set_dry(ctx, dry_run)
    lexicon = bl.load_lexicon_csv(lexicon_path)
    spec = ev.load_task_file(task_path)
    predictions = _classification_predictions(spec, lambda text: bl.lexicon_classify(lexicon, text))
    return _emit_baseline(
        ctx, spec, predictions, "lexicon", out_path, report_path, dry_run, [lexicon_path, task_path]
    )


@baseline_group.command("nb")
@click.option("--train", "train_path", required=True, type=click.Path(dir_okay=False))
@click.option("--eval", "task_path", required=True, type=click.Path(dir_okay=False))
@click.option("--smoothing", type=float, default=1.0)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None)
@_dry_run_option
@click.pass_context
def baseline_nb(ctx, train_path, task_path, smoothing, out_path, report_path, dry_run):
    """Naive Bayes classifier trained on {"text","label"} records."""
    _set_dry(ctx, dry_run)
    if not Path(train_path).is_file():
        raise InputDataError(f"training file not found: {train_path}")
    corpus = []
    with open(train_path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                corpus.append((str(record["text"]), str(record["label"])))
            except (json.JSONDecodeError, KeyError) as exc:
                raise InputDataError(f"{train_path}:{lineno}: bad record: {exc}") from exc
    model = bl.nb_train(corpus, smoothing=smoothing)
    spec = ev.load_task_file(task_path)
    predictions = _classification_predictions(spec, lambda text: bl.nb_predict(model, text))
    return _emit_baseline(
        ctx, spec, predictions, "naive_bayes", out_path, report_path, dry_run, [train_path, task_path]
    )


@cli.command("report")
@click.argument("inputs", nargs=-1, required=True, type=click.Path(dir_okay=False))
@click.option("--out-dir", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--format", "fmt", type=click.Choice(["table", "csv"]), default="table")
@click.pass_context
def report_cmd(ctx, inputs, out_dir, fmt):
    """Render collected report files to a results table and figures."""
    grid, written = rp.build_report(list(inputs), out_dir, fmt=fmt)
    click.echo(grid)
    _finish_run(ctx, list(inputs), written)
    return EXIT_OK


def dispatch(argv: list[str]) -> int:
    """Run one CLI invocation and map failures onto the exit-code contract."""
    try:
        result = cli.main(args=list(argv), prog_name="finadapt", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except BackendError as exc:
        click.echo(f"backend error: {exc}", err=True)
        return EXIT_BACKEND
    except InputDataError as exc:
        click.echo(f"input error: {exc}", err=True)
        return EXIT_INPUT
    except FinadaptError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_INPUT
    return result if isinstance(result, int) else EXIT_OK


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
