"""Synthetic instruction generation.

Sentiment samples come from a one-shot prompt that fixes the target label and
shows one real (sentence, label) pair; the model must wrap its new sentence
in <stc> tags. Entity samples come from a fixed one-shot tagging prompt; the
model labels a supplied unlabeled sentence with `name, TYPE` pairs. Replies
are parsed, validated, and deduplicated against the existing dataset and the
current batch; generation loops until the target count is met or the retry
budget runs out. The batch report keeps the exact accounting identity
generated + rejected_parse + rejected_duplicate + rejected_validation ==
replies received.
"""
from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import InputDataError
from .instruct import _HEADERS, InstructionSample, Task
from .modelio import CompletionClient, GenerationRequest

SENTIMENT_LABELS = ("positive", "negative", "neutral")
ENTITY_TYPES = ("PER", "ORG", "LOC")

SENTIMENT_PROMPT = (
    "Write a sentence with a {y} financial sentiment. "
    "Use the format <stc> sentence </stc>. "
    "Reuse terms from the example. Example: '<stc> {x} </stc>'"
)

NER_PROMPT = (
    "Identify the named entities that represent a person ('PER'), "
    "an organization ('ORG'), or a location ('LOC') in a financial context. "
    "Use the format 'Entities: entity name, entity type'.\n"
    "Sentence: 'The Bank gave money to the Borrower to open a business in New York.'; "
    "Entities: 'Bank, ORG | Borrower, PER | New York, LOC'\n"
    "Do the same with this sentence, identifying 'PER', 'ORG', 'LOC' entities.\n"
    "Sentence: '{x}'; Entities:"
)

# Instruction text attached to accepted synthetic samples, one per task.
SYNTHETIC_INSTRUCTIONS = {
    Task.FPB: (
        "What is the sentiment of the input financial sentence? "
        "Answer with positive, negative, or neutral."
    ),
    Task.FIQA_SA: (
        "What is the sentiment of the input financial text? "
        "Answer with positive, negative, or neutral."
    ),
    Task.NER: (
        "List the named entities of type person ('PER'), organization ('ORG'), "
        "or location ('LOC') in the input sentence. Use the format "
        "'entity name, entity type', separating entities with ' | '."
    ),
}

AUGMENTABLE_TASKS = (Task.FPB, Task.FIQA_SA, Task.NER)


class UnparseableGeneration(InputDataError):
    """A model reply does not follow the requested output format."""


class UnknownEntityType(InputDataError):
    """A parsed entity carries a type outside PER/ORG/LOC."""


class NoValidEntities(InputDataError):
    """Every entity item in a reply was rejected."""


@dataclass(frozen=True)
class SentimentSeed:
    x: str
    y: str

    def __post_init__(self) -> None:
        if not self.x.strip():
            raise InputDataError("seed sentence must be non-empty")
        if self.y not in SENTIMENT_LABELS:
            raise InputDataError(f"seed label must be one of {SENTIMENT_LABELS}, got {self.y!r}")


@dataclass(frozen=True)
class NerSeed:
    x: str

    def __post_init__(self) -> None:
        if not self.x.strip():
            raise InputDataError("seed sentence must be non-empty")


@dataclass(frozen=True)
class EntityTag:
    surface: str
    etype: str


@dataclass
class AugmentationBatchReport:
    task: str
    requested: int
    generated: int = 0
    rejected_parse: int = 0
    rejected_duplicate: int = 0
    rejected_validation: int = 0
    replies: int = 0
    budget_exhausted: bool = False
    rejection_examples: dict[str, list[str]] = field(default_factory=dict)

    def check_identity(self) -> bool:
        total = (
            self.generated
            + self.rejected_parse
            + self.rejected_duplicate
            + self.rejected_validation
        )
        return total == self.replies

    def to_json_dict(self, config: dict | None = None) -> dict:
        out = {
            "task": self.task,
            "requested": self.requested,
            "generated": self.generated,
            "rejected_parse": self.rejected_parse,
            "rejected_duplicate": self.rejected_duplicate,
            "rejected_validation": self.rejected_validation,
            "replies": self.replies,
            "budget_exhausted": self.budget_exhausted,
            "rejection_examples": self.rejection_examples,
        }
        if config:
            out["config"] = config
        return out

    def _note_rejection(self, kind: str, reply: str, cap: int = 5) -> None:
        examples = self.rejection_examples.setdefault(kind, [])
        if len(examples) < cap:
            examples.append(reply[:200])


def build_sentiment_prompt(seed: SentimentSeed) -> str:
    return SENTIMENT_PROMPT.format(y=seed.y, x=seed.x)


def build_ner_prompt(seed: NerSeed) -> str:
    return NER_PROMPT.format(x=seed.x)


_STC_OPEN = "<stc>"
_STC_CLOSE = "</stc>"


def parse_sentiment_response(text: str) -> str:
    """Trimmed content of the first <stc> ... </stc> span."""
    start = text.find(_STC_OPEN)
    if start < 0:
        raise UnparseableGeneration("no <stc> tag in reply")
    start += len(_STC_OPEN)
    end = text.find(_STC_CLOSE, start)
    if end < 0:
        raise UnparseableGeneration("unclosed <stc> tag in reply")
    content = text[start:end].strip()
    if not content:
        raise UnparseableGeneration("empty <stc> span")
    if _STC_OPEN in content or _STC_CLOSE in content:
        raise UnparseableGeneration("nested <stc> tags")
    return content


def parse_ner_response(text: str, sentence: str) -> list[EntityTag]:
    """Parse `name, TYPE` items separated by `|` and keep the valid ones.

    Items whose surface does not occur verbatim in the sentence are dropped;
    an unknown type or an item without a comma rejects the whole reply. Exact
    duplicates collapse to their first occurrence.
    """
    body = text.strip().strip("'\"").strip()
    if not body:
        raise UnparseableGeneration("empty entity reply")
    tags: list[EntityTag] = []
    seen: set[tuple[str, str]] = set()
    for item in body.split("|"):
        item = item.strip().strip("'\"").strip()
        if not item:
            raise UnparseableGeneration(f"empty entity item in {text!r}")
        surface, comma, etype = item.rpartition(",")
        if not comma:
            raise UnparseableGeneration(f"entity item without comma: {item!r}")
        surface = surface.strip().strip("'\"").strip()
        etype = etype.strip().strip("'\"").strip()
        if etype not in ENTITY_TYPES:
            raise UnknownEntityType(f"unknown entity type {etype!r} in {item!r}")
        if not surface or surface not in sentence:
            continue
        key = (surface, etype)
        if key not in seen:
            seen.add(key)
            tags.append(EntityTag(surface=surface, etype=etype))
    if not tags:
        raise NoValidEntities(f"no entity in {text!r} occurs in the sentence")
    return tags


def serialize_entities(
    tags: Sequence[EntityTag], sentence: str = "", answer_format: str = "entity_list"
) -> str:
    """Render entity tags in the dataset's answer format.

    entity_list: `A, ORG | B, PER`. bio: one `token LABEL` line per
    whitespace token of the sentence, with B-/I- prefixes on entity spans.
    """
    if answer_format == "entity_list":
        return " | ".join(f"{t.surface}, {t.etype}" for t in tags)
    if answer_format == "bio":
        return _serialize_bio(tags, sentence)
    raise InputDataError(f"unknown answer format {answer_format!r}")


def _serialize_bio(tags: Sequence[EntityTag], sentence: str) -> str:
    tokens = sentence.split()
    labels = ["O"] * len(tokens)
    spans = sorted(tags, key=lambda t: -len(t.surface))
    for tag in spans:
        surface_tokens = tag.surface.split()
        width = len(surface_tokens)
        for start in range(len(tokens) - width + 1):
            if tokens[start : start + width] == surface_tokens and all(
                lab == "O" for lab in labels[start : start + width]
            ):
                labels[start] = f"B-{tag.etype}"
                for k in range(start + 1, start + width):
                    labels[k] = f"I-{tag.etype}"
                break
    return "\n".join(f"{tok} {lab}" for tok, lab in zip(tokens, labels))


_WS_RE = re.compile(r"\s+")


def dedup_key(text: str) -> str:
    """Case-folded, whitespace-collapsed form used for duplicate detection."""
    return _WS_RE.sub(" ", text.strip()).casefold()


def _contains_header(text: str) -> bool:
    return any(header in text for header in _HEADERS)


def run_augmentation(
    task: Task,
    seeds: Sequence[SentimentSeed] | Sequence[NerSeed],
    target_new: int,
    client: CompletionClient,
    existing_inputs: Iterable[str] = (),
    *,
    seed: int = 0,
    budget_multiplier: int = 3,
    temperature: float = 0.8,
    max_new_tokens: int = 128,
    ner_answer_format: str = "entity_list",
    id_prefix: str = "synth",
) -> tuple[list[InstructionSample], AugmentationBatchReport]:
    """Generate target_new accepted synthetic samples for one task.

    Seeds are visited in a seeded shuffled order, cycling when a pass is not
    enough; each round requests only as many replies as samples are still
    missing, so the reply budget (budget_multiplier x target_new) is spent
    only on retries after rejections.
    """
    if task not in AUGMENTABLE_TASKS:
        raise InputDataError(f"task {task.value} is not augmentable")
    if target_new < 0:
        raise InputDataError("target_new must be >= 0")
    report = AugmentationBatchReport(task=task.value, requested=target_new)
    if target_new == 0:
        return [], report
    if not seeds:
        raise InputDataError("seeds must be non-empty")

    order = list(range(len(seeds)))
    random.Random(seed).shuffle(order)
    seen = {dedup_key(text) for text in existing_inputs}
    budget = budget_multiplier * target_new
    accepted: list[InstructionSample] = []
    cursor = 0

    while len(accepted) < target_new and report.replies < budget:
        round_size = min(target_new - len(accepted), budget - report.replies)
        round_seeds = [seeds[order[(cursor + n) % len(order)]] for n in range(round_size)]
        cursor += round_size
        requests = [
            GenerationRequest(
                prompt=_build_prompt(task, s),
                max_new_tokens=max_new_tokens,
                temperature=temperature,
                stop_sequences=("\n",) if task is Task.NER else (),
            )
            for s in round_seeds
        ]
        replies = client.generate(requests)
        for round_seed, reply in zip(round_seeds, replies):
            report.replies += 1
            try:
                input_text, answer = _accept(task, round_seed, reply, ner_answer_format)
            except UnparseableGeneration as exc:
                report.rejected_parse += 1
                report._note_rejection("parse", f"{exc}: {reply}")
                continue
            except InputDataError as exc:
                report.rejected_validation += 1
                report._note_rejection("validation", f"{exc}: {reply}")
                continue
            if _contains_header(input_text) or _contains_header(answer):
                report.rejected_validation += 1
                report._note_rejection("validation", f"template marker in reply: {reply}")
                continue
            key = dedup_key(input_text)
            if key in seen:
                report.rejected_duplicate += 1
                report._note_rejection("duplicate", reply)
                continue
            seen.add(key)
            accepted.append(
                InstructionSample(
                    task=task,
                    instruction=SYNTHETIC_INSTRUCTIONS[task],
                    input=input_text,
                    answer=answer,
                    sample_id=f"{id_prefix}-{task.value}-{len(accepted):06d}",
                    provenance="synthetic",
                )
            )

    report.generated = len(accepted)
    report.budget_exhausted = len(accepted) < target_new
    return accepted, report


def _build_prompt(task: Task, seed) -> str:
    if task is Task.NER:
        return build_ner_prompt(seed)
    return build_sentiment_prompt(seed)


def _accept(task: Task, seed, reply: str, ner_answer_format: str) -> tuple[str, str]:
    """Parse one reply into (input, answer) or raise the rejection reason."""
    if task is Task.NER:
        tags = parse_ner_response(reply, seed.x)
        return seed.x, serialize_entities(tags, seed.x, ner_answer_format)
    sentence = parse_sentiment_response(reply)
    return sentence, seed.y


def augmentation_config(
    temperature: float = 0.8, ner_answer_format: str = "entity_list", budget_multiplier: int = 3
) -> dict:
    """Config block surfaced in report headers; documents local choices."""
    return {
        "dedup_criterion": "casefold + whitespace collapse on input text",
        "temperature": temperature,
        "ner_answer_format": ner_answer_format,
        "budget_multiplier": budget_multiplier,
    }
