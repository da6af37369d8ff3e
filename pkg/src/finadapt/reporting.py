"""Result reporting: gather run artifacts (evaluation reports, baseline
reports, mixture reports) into a delimited table, a text grid, and rendered
figure files.

Outputs land in one directory: results.csv plus metrics.png (metric value
per task, grouped by run) and, when a mixture report is among the inputs,
mixture.png (per-source token share).
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .errors import InputDataError


def load_report_files(paths: list[str | Path]) -> tuple[list[dict], list[dict]]:
    """Split input JSON files into metric rows and mixture reports.

    A metric report carries task/metric/value; a mixture report carries
    block_len/sources. The run label is the report's "run" field, else the
    file stem.
    """
    metric_rows: list[dict] = []
    mixtures: list[dict] = []
    for raw_path in paths:
        path = Path(raw_path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputDataError(f"cannot read report {path}: {exc}") from exc
        if "sources" in data and "block_len" in data:
            data.setdefault("run", path.stem)
            mixtures.append(data)
        elif "value" in data and "task" in data:
            metric_rows.append(
                {
                    "run": str(data.get("run", path.stem)),
                    "task": str(data["task"]),
                    "metric": str(data.get("metric", "")),
                    "value": float(data["value"]),
                    "sample_count": int(data.get("sample_count", 0)),
                }
            )
        else:
            raise InputDataError(f"{path}: not a recognized report file")
    return metric_rows, mixtures


def write_metrics_csv(rows: list[dict], path: Path) -> None:
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(
            handle, fieldnames=["run", "task", "metric", "value", "sample_count"]
        )
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def render_grid(rows: list[dict]) -> str:
    """Text grid: one row per run, one column per task."""
    if not rows:
        return "(no metric reports)"
    runs = sorted({row["run"] for row in rows})
    tasks = sorted({row["task"] for row in rows})
    cells = {(row["run"], row["task"]): row["value"] for row in rows}
    name_width = max(len("run"), *(len(r) for r in runs))
    col_width = max(8, *(len(t) for t in tasks))
    header = " | ".join(["run".ljust(name_width)] + [t.rjust(col_width) for t in tasks])
    rule = "-+-".join(["-" * name_width] + ["-" * col_width for _ in tasks])
    lines = [header, rule]
    for run in runs:
        row_cells = []
        for task in tasks:
            value = cells.get((run, task))
            row_cells.append(("-" if value is None else f"{value:.4f}").rjust(col_width))
        lines.append(" | ".join([run.ljust(name_width)] + row_cells))
    return "\n".join(lines)


def render_metrics_figure(rows: list[dict], path: Path) -> None:
    runs = sorted({row["run"] for row in rows})
    tasks = sorted({row["task"] for row in rows})
    cells = {(row["run"], row["task"]): row["value"] for row in rows}
    fig, ax = plt.subplots(figsize=(1.8 + 1.4 * len(tasks), 4.0))
    width = 0.8 / max(1, len(runs))
    for k, run in enumerate(runs):
        xs = [n + k * width for n in range(len(tasks))]
        ys = [cells.get((run, task), 0.0) for task in tasks]
        ax.bar(xs, ys, width=width, label=run)
    ax.set_xticks([n + 0.4 - width / 2 for n in range(len(tasks))])
    ax.set_xticklabels(tasks)
    ax.set_ylim(0.0, 1.0)
    ax.set_ylabel("metric value")
    ax.set_title("Evaluation results by task")
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_mixture_figure(mixture: dict, path: Path) -> None:
    sources = mixture.get("sources", [])
    tags = [str(s.get("source_tag", "?")) for s in sources]
    shares = [float(s.get("percent", 0.0)) for s in sources]
    fig, ax = plt.subplots(figsize=(1.8 + 1.0 * max(4, len(tags)), 3.6))
    ax.bar(range(len(tags)), shares, color="#4878a8")
    ax.set_xticks(range(len(tags)))
    ax.set_xticklabels(tags)
    ax.set_ylabel("% of sampled tokens")
    ax.set_title(f"Corpus mixture ({mixture.get('run', 'mixture')})")
    for n, share in enumerate(shares):
        ax.text(n, share, f"{share:.1f}", ha="center", va="bottom", fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def build_report(
    inputs: list[str | Path], out_dir: str | Path, fmt: str = "table"
) -> tuple[str, list[Path]]:
    """Render all outputs; returns the text grid and the written file paths."""
    if fmt not in ("table", "csv"):
        raise InputDataError(f"unknown report format {fmt!r}")
    metric_rows, mixtures = load_report_files(list(inputs))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    csv_path = out_dir / "results.csv"
    write_metrics_csv(metric_rows, csv_path)
    written.append(csv_path)
    if metric_rows:
        fig_path = out_dir / "metrics.png"
        render_metrics_figure(metric_rows, fig_path)
        written.append(fig_path)
    for n, mixture in enumerate(mixtures):
        fig_path = out_dir / ("mixture.png" if n == 0 else f"mixture_{n}.png")
        render_mixture_figure(mixture, fig_path)
        written.append(fig_path)

    grid = render_grid(metric_rows) if fmt == "table" else csv_path.read_text(encoding="utf-8")
    return grid, written
