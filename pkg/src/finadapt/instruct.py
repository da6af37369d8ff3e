"""Instruction dataset: the three-header render/parse template, down-sampling
to one instruction per unique input-answer pair, and per-task accounting.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .errors import InputDataError

INSTRUCTION_HEADER = "### Instruction:"
INPUT_HEADER = "### Input:"
ANSWER_HEADER = "### Answer:"
_HEADERS = (INSTRUCTION_HEADER, INPUT_HEADER, ANSWER_HEADER)

# Tasks excluded from the dataset entirely; override via load_samples.
DEFAULT_EXCLUDED_TASKS = frozenset({"bigdata22", "acl18", "cikm18"})


class Task(str, Enum):
    FPB = "fpb"
    FIQA_SA = "fiqa_sa"
    NER = "ner"
    HEADLINE = "headline"
    FINQA = "finqa"
    CONVFINQA = "convfinqa"


class TemplateCollision(InputDataError):
    """A sample field contains one of the literal header markers."""


class MalformedInstruction(InputDataError):
    """Text does not contain the three headers in order."""


class InvalidSample(InputDataError):
    """A sample violates a structural invariant (e.g. empty answer)."""


@dataclass(frozen=True)
class InstructionSample:
    task: Task
    instruction: str
    input: str
    answer: str
    sample_id: str = ""
    provenance: str = "original"  # "original" or "synthetic"

    def key(self) -> tuple[Task, str, str]:
        return (self.task, self.input, self.answer)


@dataclass(frozen=True)
class DatasetStats:
    per_task: dict[Task, int]
    total: int

    def to_json_dict(self) -> dict:
        return {"per_task": {t.value: n for t, n in self.per_task.items()}, "total": self.total}


def validate_sample(sample: InstructionSample) -> None:
    for name, value in (
        ("instruction", sample.instruction),
        ("input", sample.input),
        ("answer", sample.answer),
    ):
        for header in _HEADERS:
            if header in value:
                raise TemplateCollision(f"{name} field contains {header!r}")
    if not sample.answer:
        raise InvalidSample("answer must be non-empty")


def render(sample: InstructionSample) -> str:
    """Render the three-line training text for one sample."""
    validate_sample(sample)
    return (
        f"{INSTRUCTION_HEADER} {sample.instruction}\n"
        f"{INPUT_HEADER} {sample.input}\n"
        f"{ANSWER_HEADER} {sample.answer}"
    )


def render_prompt(instruction: str, input_text: str) -> str:
    """Same template with the answer slot left empty, for evaluation prompts."""
    return f"{INSTRUCTION_HEADER} {instruction}\n{INPUT_HEADER} {input_text}\n{ANSWER_HEADER} "


def parse(text: str, task: Task = Task.FPB, provenance: str = "original") -> InstructionSample:
    """Inverse of render; raises MalformedInstruction on missing or misordered headers."""
    positions = [text.find(h) for h in _HEADERS]
    if any(p < 0 for p in positions):
        missing = [h for h, p in zip(_HEADERS, positions) if p < 0]
        raise MalformedInstruction(f"missing headers: {missing}")
    if positions[0] != 0 or not positions[0] < positions[1] < positions[2]:
        raise MalformedInstruction("headers out of order")

    def grab(header: str, start: int, end: int | None) -> str:
        chunk = text[start + len(header) : end]
        if not chunk.startswith(" "):
            raise MalformedInstruction(f"expected a single space after {header!r}")
        return chunk[1:]

    # Each field runs to the newline that precedes the next header.
    instruction = grab(INSTRUCTION_HEADER, positions[0], positions[1] - 1)
    if text[positions[1] - 1] != "\n" or text[positions[2] - 1] != "\n":
        raise MalformedInstruction("headers must start on their own line")
    input_text = grab(INPUT_HEADER, positions[1], positions[2] - 1)
    answer = grab(ANSWER_HEADER, positions[2], None)
    sample = InstructionSample(
        task=task, instruction=instruction, input=input_text, answer=answer, provenance=provenance
    )
    validate_sample(sample)
    return sample


def downsample(samples: Sequence[InstructionSample]) -> list[InstructionSample]:
    """Keep exactly one sample per (task, input, answer) group: the first seen.

    Output order preserves first-occurrence order. Idempotent.
    """
    seen: set[tuple[Task, str, str]] = set()
    kept = []
    for sample in samples:
        key = sample.key()
        if key not in seen:
            seen.add(key)
            kept.append(sample)
    return kept


def stats(samples: Iterable[InstructionSample]) -> DatasetStats:
    """Exact per-task sample counts; every task appears, zeros included."""
    counts = Counter(s.task for s in samples)
    per_task = {task: counts.get(task, 0) for task in Task}
    return DatasetStats(per_task=per_task, total=sum(per_task.values()))


def load_samples(
    path: str | Path,
    excluded_tasks: frozenset[str] = DEFAULT_EXCLUDED_TASKS,
) -> list[InstructionSample]:
    """Read a dataset JSON-lines file.

    Record layout: {"task", "instruction", "input", "answer", "id"?, "provenance"?}.
    Records whose task is in excluded_tasks are dropped; an unknown task is an
    error. Fields are whitespace-stripped on load.
    """
    path = Path(path)
    if not path.is_file():
        raise InputDataError(f"dataset not found: {path}")
    samples = []
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputDataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            task_name = str(record.get("task", "")).lower()
            if task_name in excluded_tasks:
                continue
            try:
                task = Task(task_name)
            except ValueError:
                raise InputDataError(f"{path}:{lineno}: unknown task {task_name!r}") from None
            sample = InstructionSample(
                task=task,
                instruction=str(record.get("instruction", "")).strip(),
                input=str(record.get("input", "")).strip(),
                answer=str(record.get("answer", "")).strip(),
                sample_id=str(record.get("id", "")).strip(),
                provenance=str(record.get("provenance", "original")),
            )
            validate_sample(sample)
            samples.append(sample)
    return samples


def save_samples(samples: Iterable[InstructionSample], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        for sample in samples:
            handle.write(
                json.dumps(
                    {
                        "task": sample.task.value,
                        "instruction": sample.instruction,
                        "input": sample.input,
                        "answer": sample.answer,
                        "id": sample.sample_id,
                        "provenance": sample.provenance,
                    }
                )
                + "\n"
            )


def export_rendered(
    samples: Iterable[InstructionSample],
    path: str | Path,
    tokenizer=None,
) -> None:
    """Write the trainer export: one rendered sample per record.

    Each record carries {"id", "text"}; when a tokenizer is given, the record
    also carries "ids" so downstream consumers need no tokenizer of their own.
    """
    with Path(path).open("w", encoding="utf-8") as handle:
        for sample in samples:
            record: dict = {"id": sample.sample_id, "text": render(sample)}
            if tokenizer is not None:
                record["ids"] = tokenizer.encode(record["text"], split_special=False).ids
            handle.write(json.dumps(record) + "\n")


def with_ids(samples: Sequence[InstructionSample], prefix: str) -> list[InstructionSample]:
    """Assign sequential sample ids where missing."""
    out = []
    for n, sample in enumerate(samples):
        if sample.sample_id:
            out.append(sample)
        else:
            out.append(replace(sample, sample_id=f"{prefix}-{n:06d}"))
    return out
