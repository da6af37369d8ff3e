import json
from pathlib import Path

import pytest

from finadapt.augment import build_sentiment_prompt, SentimentSeed
from finadapt.cli import (
    EXIT_BACKEND,
    EXIT_INPUT,
    EXIT_OK,
    EXIT_PARTIAL,
    EXIT_USAGE,
    dispatch,
    make_backend,
)
from finadapt.errors import InputDataError
from finadapt.instruct import render_prompt
from finadapt.modelio import prompt_key


@pytest.fixture
def workspace(tmp_path, tokenizer_path, monkeypatch):
    """Corpus, manifest, datasets, and mock fixtures for CLI runs."""
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("FINADAPT_ENDPOINT", raising=False)
    monkeypatch.delenv("FINADAPT_RUN_LOG", raising=False)

    corpus = tmp_path / "corpus"
    (corpus / "news").mkdir(parents=True)
    (corpus / "filings").mkdir()
    for k in range(3):
        (corpus / "news" / f"doc{k}.txt").write_text(
            f"markets rose on strong profit figures in round {k}. " * 12
        )
        (corpus / "filings" / f"doc{k}.txt").write_text(
            f"the company reported a loss for period {k}. " * 12
        )
    manifest = tmp_path / "manifest.json"
    manifest.write_text(json.dumps({
        "block_len": 64,
        "shuffle_seed": 7,
        "sources": [
            {"tag": "news", "glob": "corpus/news/*.txt", "target_tokens": 320},
            {"tag": "filings", "glob": "corpus/filings/*.txt", "target_tokens": 320},
        ],
    }))

    raw = tmp_path / "raw_instructions.jsonl"
    rows = [
        {"task": "fpb", "instruction": f"Variant {k}.", "input": "Same sentence.",
         "answer": "neutral"}
        for k in range(10)
    ]
    rows.append({"task": "fpb", "instruction": "Classify.", "input": "Profits rose.",
                 "answer": "positive"})
    rows.append({"task": "bigdata22", "instruction": "Predict.", "input": "x",
                 "answer": "rise"})
    raw.write_text("\n".join(json.dumps(r) for r in rows) + "\n")

    instruction = "Classify the sentiment."
    task_file = tmp_path / "fpb.task.jsonl"
    task_lines = [
        {"task": "fpb", "instruction": instruction,
         "labels": ["positive", "negative", "neutral"]},
        {"id": "a", "input": "Profits rose.", "gold": "positive"},
        {"id": "b", "input": "Profits fell.", "gold": "negative"},
    ]
    task_file.write_text("\n".join(json.dumps(l) for l in task_lines) + "\n")

    score_table = {}
    for text, winner in (("Profits rose.", "positive"), ("Profits fell.", "negative")):
        prompt = render_prompt(instruction, text)
        score_table[prompt_key(prompt)] = {
            lab: (-0.5 if lab == winner else -4.0)
            for lab in ("positive", "negative", "neutral")
        }
    seeds = [SentimentSeed(x=f"Seed sentence {k}.", y="neutral") for k in range(3)]
    generation_table = {
        prompt_key(build_sentiment_prompt(seed)): f"<stc> Fresh line {k}. </stc>"
        for k, seed in enumerate(seeds)
    }
    dup_generation_table = {
        prompt_key(build_sentiment_prompt(seed)): "<stc> Same reply. </stc>"
        for seed in seeds
    }
    mock_path = tmp_path / "mock.json"
    mock_path.write_text(json.dumps(
        {"generation_table": generation_table, "score_table": score_table}
    ))
    dup_mock_path = tmp_path / "mock_dup.json"
    dup_mock_path.write_text(json.dumps({"generation_table": dup_generation_table}))

    seeds_path = tmp_path / "seeds.jsonl"
    seeds_path.write_text("\n".join(
        json.dumps({"x": s.x, "y": s.y}) for s in seeds
    ) + "\n")

    lexicon_path = tmp_path / "lexicon.csv"
    lexicon_path.write_text("word,polarity\nrose,positive\nfell,negative\n")
    nb_train_path = tmp_path / "nb_train.jsonl"
    nb_train_path.write_text("\n".join(json.dumps(r) for r in [
        {"text": "profits rose strongly", "label": "positive"},
        {"text": "profits fell sharply", "label": "negative"},
        {"text": "results were flat overall", "label": "neutral"},
    ]) + "\n")

    return {
        "root": tmp_path,
        "manifest": manifest,
        "tokenizer": Path(tokenizer_path),
        "task_file": task_file,
        "mock": mock_path,
        "dup_mock": dup_mock_path,
        "seeds": seeds_path,
        "raw_instructions": raw,
        "lexicon": lexicon_path,
        "nb_train": nb_train_path,
        "run_log": tmp_path / "runs.jsonl",
    }


def run(ws, *args):
    return dispatch(["--run-log", str(ws["run_log"]), *args])


def test_help_and_usage_exit_codes(workspace):
    assert dispatch(["--help"]) == EXIT_OK
    assert dispatch(["pack", "--no-such-flag"]) == EXIT_USAGE
    assert dispatch(["no-such-command"]) == EXIT_USAGE


def test_missing_input_file_maps_to_input_error(workspace):
    code = run(workspace, "pack",
               "--manifest", "absent.json",
               "--tokenizer", str(workspace["tokenizer"]),
               "--out", "blocks.jsonl")
    assert code == EXIT_INPUT


def test_pack_writes_blocks_report_and_run_record(workspace, capsys):
    out = workspace["root"] / "blocks.jsonl"
    report = workspace["root"] / "mixture.json"
    code = run(workspace, "pack",
               "--manifest", str(workspace["manifest"]),
               "--tokenizer", str(workspace["tokenizer"]),
               "--out", str(out),
               "--report", str(report))
    assert code == EXIT_OK
    echoed = json.loads(capsys.readouterr().out)
    assert {s["source_tag"] for s in echoed["sources"]} == {"news", "filings"}
    assert out.is_file() and report.is_file()
    records = [json.loads(l) for l in workspace["run_log"].read_text().splitlines()]
    assert len(records) == 1
    assert records[0]["subcommand"] == "pack"
    assert str(out) in records[0]["outputs"]


def test_pack_dry_run_writes_nothing(workspace):
    out = workspace["root"] / "blocks.jsonl"
    code = run(workspace, "pack",
               "--manifest", str(workspace["manifest"]),
               "--tokenizer", str(workspace["tokenizer"]),
               "--out", str(out),
               "--dry-run")
    assert code == EXIT_OK
    assert not out.exists()
    assert not workspace["run_log"].exists()


def test_pack_reruns_are_byte_identical(workspace):
    outs = []
    for name in ("a.jsonl", "b.jsonl"):
        out = workspace["root"] / name
        assert run(workspace, "pack",
                   "--manifest", str(workspace["manifest"]),
                   "--tokenizer", str(workspace["tokenizer"]),
                   "--out", str(out)) == EXIT_OK
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_instructions_build_downsamples_and_filters(workspace, capsys):
    out = workspace["root"] / "instructions.jsonl"
    code = run(workspace, "instructions", "build",
               "--input", str(workspace["raw_instructions"]),
               "--out", str(out))
    assert code == EXIT_OK
    rows = [json.loads(l) for l in out.read_text().splitlines()]
    # Ten duplicates collapse to one; the excluded task is dropped entirely.
    assert len(rows) == 2
    assert all(r["task"] == "fpb" for r in rows)
    assert all(r["id"].startswith("instr-") for r in rows)


def test_instructions_stats_reports_counts(workspace, capsys):
    code = run(workspace, "instructions", "stats",
               "--input", str(workspace["raw_instructions"]))
    assert code == EXIT_OK
    stats = json.loads(capsys.readouterr().out)
    assert stats["per_task"]["fpb"] == 11
    assert stats["total"] == 11


def test_instructions_render_emits_token_ids(workspace):
    built = workspace["root"] / "instructions.jsonl"
    run(workspace, "instructions", "build",
        "--input", str(workspace["raw_instructions"]), "--out", str(built))
    rendered = workspace["root"] / "rendered.jsonl"
    code = run(workspace, "instructions", "render",
               "--input", str(built),
               "--out", str(rendered),
               "--tokenizer", str(workspace["tokenizer"]))
    assert code == EXIT_OK
    rows = [json.loads(l) for l in rendered.read_text().splitlines()]
    assert all("### Instruction: " in r["text"] for r in rows)
    assert all(isinstance(r["ids"], list) and r["ids"] for r in rows)


def test_eval_with_mock_backend(workspace, capsys):
    report_path = workspace["root"] / "eval_report.json"
    code = run(workspace, "eval",
               "--task", str(workspace["task_file"]),
               "--backend", f"mock:{workspace['mock']}",
               "--report", str(report_path),
               "--run-name", "adapted")
    assert code == EXIT_OK
    body = json.loads(report_path.read_text())
    assert body["task"] == "fpb"
    assert body["value"] == pytest.approx(1.0)
    assert body["run"] == "adapted"


def test_eval_requires_backend(workspace):
    code = run(workspace, "eval", "--task", str(workspace["task_file"]))
    assert code == EXIT_INPUT


def test_eval_missing_mock_entry_is_backend_error(workspace):
    empty_mock = workspace["root"] / "empty_mock.json"
    empty_mock.write_text(json.dumps({"score_table": {}}))
    code = run(workspace, "eval",
               "--task", str(workspace["task_file"]),
               "--backend", f"mock:{empty_mock}")
    assert code == EXIT_BACKEND


def test_augment_success_and_partial(workspace, capsys):
    out = workspace["root"] / "synthetic.jsonl"
    code = run(workspace, "augment",
               "--task", "fpb", "--target", "2",
               "--seeds", str(workspace["seeds"]),
               "--backend", f"mock:{workspace['mock']}",
               "--out", str(out))
    assert code == EXIT_OK
    assert len(out.read_text().splitlines()) == 2
    capsys.readouterr()

    partial_out = workspace["root"] / "partial.jsonl"
    code = run(workspace, "augment",
               "--task", "fpb", "--target", "3",
               "--seeds", str(workspace["seeds"]),
               "--backend", f"mock:{workspace['dup_mock']}",
               "--out", str(partial_out))
    assert code == EXIT_PARTIAL
    body = json.loads(capsys.readouterr().out)
    assert body["budget_exhausted"] is True
    assert body["generated"] + body["rejected_parse"] + body["rejected_duplicate"] \
        + body["rejected_validation"] == body["replies"]


def test_augment_dry_run_writes_nothing(workspace):
    out = workspace["root"] / "none.jsonl"
    code = run(workspace, "augment",
               "--task", "fpb", "--target", "2",
               "--seeds", str(workspace["seeds"]),
               "--backend", f"mock:{workspace['mock']}",
               "--out", str(out), "--dry-run")
    assert code == EXIT_OK
    assert not out.exists() and not workspace["run_log"].exists()


def test_emit_train_config_round_trip(workspace, capsys):
    out = workspace["root"] / "stage1.json"
    code = run(workspace, "emit-train-config", "--stage", "docs_pretrain",
               "--out", str(out), "--dataset", "blocks.jsonl")
    assert code == EXIT_OK
    body = json.loads(out.read_text())
    assert body["context_len"] == 2048 and body["epochs"] == 2
    assert capsys.readouterr().out.strip() == out.read_text().strip()


def test_baseline_lexicon_and_nb(workspace, capsys):
    for args in (
        ("baseline", "lexicon", "--lexicon", str(workspace["lexicon"]),
         "--eval", str(workspace["task_file"])),
        ("baseline", "nb", "--train", str(workspace["nb_train"]),
         "--eval", str(workspace["task_file"])),
    ):
        code = run(workspace, *args)
        assert code == EXIT_OK
        body = json.loads(capsys.readouterr().out)
        assert body["task"] == "fpb"
        assert body["value"] == pytest.approx(1.0)
        assert body["run"] in ("lexicon", "naive_bayes")


def test_baseline_nb_missing_train_file(workspace):
    code = run(workspace, "baseline", "nb", "--train", "absent.jsonl",
               "--eval", str(workspace["task_file"]))
    assert code == EXIT_INPUT


def test_report_renders_table_and_figures(workspace, capsys):
    eval_report = workspace["root"] / "eval_report.json"
    run(workspace, "eval",
        "--task", str(workspace["task_file"]),
        "--backend", f"mock:{workspace['mock']}",
        "--report", str(eval_report), "--run-name", "adapted")
    mixture_report = workspace["root"] / "mixture.json"
    run(workspace, "pack",
        "--manifest", str(workspace["manifest"]),
        "--tokenizer", str(workspace["tokenizer"]),
        "--out", str(workspace["root"] / "blocks.jsonl"),
        "--report", str(mixture_report))
    capsys.readouterr()

    out_dir = workspace["root"] / "report"
    code = run(workspace, "report", str(eval_report), str(mixture_report),
               "--out-dir", str(out_dir))
    assert code == EXIT_OK
    grid = capsys.readouterr().out
    assert "adapted" in grid and "fpb" in grid
    assert (out_dir / "results.csv").is_file()
    assert (out_dir / "metrics.png").stat().st_size > 0
    assert (out_dir / "mixture.png").stat().st_size > 0


def test_make_backend_uri_validation(workspace):
    with pytest.raises(InputDataError):
        make_backend("ftp://wrong")
    client = make_backend(f"mock:{workspace['mock']}")
    assert client.max_concurrency == 4
