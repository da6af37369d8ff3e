"""Evaluation harness.

Classification tasks (sentence sentiment, aspect sentiment, the nine binary
headline subtasks) decode under constraint: every allowed label is scored as
a forced continuation of the prompt and the argmax wins, with ties broken by
label order. Entity extraction decodes freely and the reply is parsed with
the shared entity-list parser; an unparseable reply scores as an empty
prediction instead of aborting the run.

Metrics: weighted F1 (per-class F1 weighted by gold class frequencies) and
accuracy for classification, micro F1 over exact (surface, type) pairs for
entities. The headline task aggregates as the unweighted mean of its
subtasks' weighted F1.
"""
from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .augment import EntityTag, parse_ner_response, UnknownEntityType, NoValidEntities
from .augment import UnparseableGeneration
from .errors import InputDataError
from .instruct import Task, render_prompt
from .modelio import CompletionClient, GenerationRequest, ScoredContinuation

CLASSIFICATION_TASKS = (Task.FPB, Task.FIQA_SA, Task.HEADLINE)


class EmptyTask(InputDataError):
    """An evaluation task has no samples."""


@dataclass(frozen=True)
class EvalSample:
    sample_id: str
    input: str
    gold: str | tuple[tuple[str, str], ...]
    subtask: str = ""


@dataclass(frozen=True)
class TaskSpec:
    task: Task
    instruction: str
    samples: tuple[EvalSample, ...]
    label_set: tuple[str, ...] = ()

    def validate(self) -> None:
        if not self.samples:
            raise EmptyTask(f"task {self.task.value} has no samples")
        if self.task in CLASSIFICATION_TASKS:
            if len(self.label_set) < 2:
                raise InputDataError(f"task {self.task.value} needs >= 2 labels")
            if len(set(self.label_set)) != len(self.label_set):
                raise InputDataError("label_set entries must be distinct")
            for sample in self.samples:
                if sample.gold not in self.label_set:
                    raise InputDataError(
                        f"sample {sample.sample_id}: gold {sample.gold!r} not in label set"
                    )


@dataclass(frozen=True)
class Prediction:
    sample_id: str
    predicted: str | tuple[tuple[str, str], ...]
    gold: str | tuple[tuple[str, str], ...]
    scores: dict[str, float] | None = None
    subtask: str = ""


@dataclass
class EvalReport:
    task: str
    metric_name: str
    value: float
    sample_count: int
    per_subtask: dict[str, float] = field(default_factory=dict)
    extra_metrics: dict[str, float] = field(default_factory=dict)
    predictions: list[Prediction] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "task": self.task,
            "metric": self.metric_name,
            "value": self.value,
            "sample_count": self.sample_count,
            "per_subtask": dict(sorted(self.per_subtask.items())),
            "extra_metrics": self.extra_metrics,
        }


def argmax_label(labels: Sequence[str], scored: Sequence[ScoredContinuation]) -> str:
    """Highest total logprob wins; exact ties go to the earlier label."""
    best = 0
    for n in range(1, len(scored)):
        if scored[n].total_logprob > scored[best].total_logprob:
            best = n
    return labels[best]


def classify_constrained(
    client: CompletionClient, prompt: str, labels: Sequence[str]
) -> tuple[str, dict[str, float]]:
    """Score every allowed label as a forced continuation and take the argmax."""
    if not labels:
        raise InputDataError("labels must be non-empty")
    if len(set(labels)) != len(labels):
        raise InputDataError("labels must be distinct")
    scored = client.score_continuations(prompt, labels)
    scores = {s.continuation: s.total_logprob for s in scored}
    return argmax_label(labels, scored), scores


def generate_ner(
    client: CompletionClient,
    prompt: str,
    sentence: str | None = None,
    *,
    max_new_tokens: int = 64,
) -> list[EntityTag]:
    """Free generation parsed as an entity list; garbage parses to []."""
    reply = client.generate(
        [
            GenerationRequest(
                prompt=prompt,
                max_new_tokens=max_new_tokens,
                temperature=0.0,
                stop_sequences=("\n",),
            )
        ]
    )[0]
    reference = sentence if sentence is not None else prompt
    try:
        return parse_ner_response(reply, reference)
    except (UnparseableGeneration, UnknownEntityType, NoValidEntities):
        return []


def _f1(tp: int, fp: int, fn: int) -> float:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def weighted_f1(predictions: Sequence[Prediction]) -> float:
    """Per-class F1 averaged with weights equal to gold class frequencies."""
    if not predictions:
        raise InputDataError("weighted_f1 needs at least one prediction")
    gold_counts = Counter(p.gold for p in predictions)
    total = len(predictions)
    value = 0.0
    for label, count in gold_counts.items():
        tp = sum(1 for p in predictions if p.predicted == label and p.gold == label)
        fp = sum(1 for p in predictions if p.predicted == label and p.gold != label)
        fn = sum(1 for p in predictions if p.predicted != label and p.gold == label)
        value += (count / total) * _f1(tp, fp, fn)
    return value


def accuracy(predictions: Sequence[Prediction]) -> float:
    if not predictions:
        raise InputDataError("accuracy needs at least one prediction")
    return sum(1 for p in predictions if p.predicted == p.gold) / len(predictions)


def entity_f1(predictions: Sequence[Prediction]) -> float:
    """Micro F1 over exact (surface, type) pairs pooled across samples."""
    if not predictions:
        raise InputDataError("entity_f1 needs at least one prediction")
    tp = fp = fn = 0
    for p in predictions:
        predicted = set(p.predicted)
        gold = set(p.gold)
        tp += len(predicted & gold)
        fp += len(predicted - gold)
        fn += len(gold - predicted)
    return _f1(tp, fp, fn)


def run_eval(spec: TaskSpec, client: CompletionClient) -> EvalReport:
    """Apply the per-task decoding protocol and aggregate the task metric."""
    spec.validate()
    if spec.task in CLASSIFICATION_TASKS:
        predictions = _run_classification(spec, client)
        if spec.task is Task.HEADLINE:
            by_subtask: dict[str, list[Prediction]] = defaultdict(list)
            for p in predictions:
                by_subtask[p.subtask].append(p)
            per_subtask = {name: weighted_f1(ps) for name, ps in by_subtask.items()}
            value = sum(per_subtask.values()) / len(per_subtask)
            metric_name = "mean_weighted_f1"
        else:
            per_subtask = {}
            value = weighted_f1(predictions)
            metric_name = "weighted_f1"
        extra = {"accuracy": accuracy(predictions)}
    elif spec.task is Task.NER:
        predictions = _run_ner(spec, client)
        per_subtask = {}
        value = entity_f1(predictions)
        metric_name = "entity_f1"
        extra = {}
    else:
        raise InputDataError(f"task {spec.task.value} has no evaluation protocol")
    return EvalReport(
        task=spec.task.value,
        metric_name=metric_name,
        value=value,
        sample_count=len(predictions),
        per_subtask=per_subtask,
        extra_metrics=extra,
        predictions=list(predictions),
    )


def _run_classification(spec: TaskSpec, client: CompletionClient) -> list[Prediction]:
    prompts = [render_prompt(spec.instruction, s.input) for s in spec.samples]
    labels = list(spec.label_set)
    scored = client.score_many([(prompt, labels) for prompt in prompts])
    predictions = []
    for sample, sample_scored in zip(spec.samples, scored):
        predicted = argmax_label(labels, sample_scored)
        predictions.append(
            Prediction(
                sample_id=sample.sample_id,
                predicted=predicted,
                gold=sample.gold,
                scores={s.continuation: s.total_logprob for s in sample_scored},
                subtask=sample.subtask,
            )
        )
    return predictions


def _run_ner(spec: TaskSpec, client: CompletionClient) -> list[Prediction]:
    requests = [
        GenerationRequest(
            prompt=render_prompt(spec.instruction, s.input),
            max_new_tokens=64,
            temperature=0.0,
            stop_sequences=("\n",),
        )
        for s in spec.samples
    ]
    replies = client.generate(requests)
    predictions = []
    for sample, reply in zip(spec.samples, replies):
        try:
            tags = parse_ner_response(reply, sample.input)
        except (UnparseableGeneration, UnknownEntityType, NoValidEntities):
            tags = []
        predictions.append(
            Prediction(
                sample_id=sample.sample_id,
                predicted=tuple((t.surface, t.etype) for t in tags),
                gold=sample.gold,
                subtask=sample.subtask,
            )
        )
    return predictions


def load_task_file(path: str | Path) -> TaskSpec:
    """Read a task file: a header line {task, instruction, labels?} followed
    by sample lines {id, input, gold, subtask?}.

    Entity gold may be a [surface, type] pair list or an entity-list string.
    """
    path = Path(path)
    if not path.is_file():
        raise InputDataError(f"task file not found: {path}")
    with path.open(encoding="utf-8") as handle:
        lines = [line for line in handle if line.strip()]
    if not lines:
        raise EmptyTask(f"task file {path} is empty")
    try:
        header = json.loads(lines[0])
        records = [json.loads(line) for line in lines[1:]]
    except json.JSONDecodeError as exc:
        raise InputDataError(f"{path}: invalid JSON: {exc}") from exc
    try:
        task = Task(str(header["task"]).lower())
    except (KeyError, ValueError):
        raise InputDataError(f"{path}: header must name a known task") from None
    instruction = str(header.get("instruction", ""))
    label_set = tuple(str(lab) for lab in header.get("labels", ()))
    samples = []
    for n, record in enumerate(records):
        gold = record.get("gold")
        if task is Task.NER:
            gold = _parse_gold_entities(gold, str(record.get("input", "")))
        else:
            gold = str(gold)
        samples.append(
            EvalSample(
                sample_id=str(record.get("id", f"{path.name}#{n}")),
                input=str(record.get("input", "")),
                gold=gold,
                subtask=str(record.get("subtask", "")),
            )
        )
    spec = TaskSpec(task=task, instruction=instruction, samples=tuple(samples), label_set=label_set)
    spec.validate()
    return spec


def _parse_gold_entities(gold, sentence: str) -> tuple[tuple[str, str], ...]:
    if isinstance(gold, str):
        tags = parse_ner_response(gold, sentence)
        return tuple((t.surface, t.etype) for t in tags)
    if isinstance(gold, (list, tuple)):
        return tuple((str(surface), str(etype)) for surface, etype in gold)
    raise InputDataError(f"cannot interpret entity gold {gold!r}")


def save_predictions(predictions: Sequence[Prediction], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        for p in predictions:
            record = {
                "id": p.sample_id,
                "predicted": list(p.predicted) if isinstance(p.predicted, tuple) else p.predicted,
                "gold": list(p.gold) if isinstance(p.gold, tuple) else p.gold,
            }
            if p.scores is not None:
                record["scores"] = p.scores
            if p.subtask:
                record["subtask"] = p.subtask
            handle.write(json.dumps(record) + "\n")
