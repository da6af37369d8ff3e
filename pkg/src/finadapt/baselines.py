"""Classical sentiment baselines: a polarity-lexicon scorer and a multinomial
Naive Bayes bag-of-words classifier.

Both share one tokenizer: lowercase, split on non-alphanumeric boundaries.
The lexicon rule counts positive and negative hits (repeats count) and calls
ties, including zero hits, neutral. Naive Bayes uses additive smoothing over
the training vocabulary, skips out-of-vocabulary tokens at prediction time,
and breaks posterior ties toward the label seen first in training.
"""
from __future__ import annotations

import csv
import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import InputDataError


class InvalidSmoothing(InputDataError):
    """Additive smoothing must be strictly positive."""


class MissingClass(InputDataError):
    """A required label has no training examples."""


_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercased maximal alphanumeric runs."""
    return _TOKEN_RE.findall(text.casefold())


@dataclass(frozen=True)
class SentimentLexicon:
    positive_terms: frozenset[str]
    negative_terms: frozenset[str]

    def __post_init__(self) -> None:
        if not self.positive_terms or not self.negative_terms:
            raise InputDataError("lexicon term sets must be non-empty")
        overlap = self.positive_terms & self.negative_terms
        if overlap:
            raise InputDataError(f"lexicon term sets overlap: {sorted(overlap)[:5]}")


def load_lexicon_csv(path: str | Path) -> SentimentLexicon:
    """Two-column CSV `word,polarity` with polarity positive or negative."""
    path = Path(path)
    if not path.is_file():
        raise InputDataError(f"lexicon file not found: {path}")
    positive: set[str] = set()
    negative: set[str] = set()
    with path.open(encoding="utf-8", newline="") as handle:
        for lineno, row in enumerate(csv.reader(handle), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < 2:
                raise InputDataError(f"{path}:{lineno}: expected word,polarity")
            word = row[0].strip().casefold()
            polarity = row[1].strip().casefold()
            if lineno == 1 and word == "word" and polarity == "polarity":
                continue
            if polarity == "positive":
                positive.add(word)
            elif polarity == "negative":
                negative.add(word)
            else:
                raise InputDataError(f"{path}:{lineno}: unknown polarity {polarity!r}")
    return SentimentLexicon(positive_terms=frozenset(positive), negative_terms=frozenset(negative))


def lexicon_classify(lexicon: SentimentLexicon, sentence: str) -> str:
    tokens = tokenize(sentence)
    positive_hits = sum(1 for tok in tokens if tok in lexicon.positive_terms)
    negative_hits = sum(1 for tok in tokens if tok in lexicon.negative_terms)
    if positive_hits > negative_hits:
        return "positive"
    if negative_hits > positive_hits:
        return "negative"
    return "neutral"


@dataclass(frozen=True)
class NaiveBayesModel:
    labels: tuple[str, ...]
    log_priors: dict[str, float]
    log_likelihoods: dict[str, dict[str, float]]
    vocabulary: frozenset[str]
    smoothing: float

    def check_invariants(self, tolerance: float = 1e-9) -> None:
        prior_mass = sum(math.exp(lp) for lp in self.log_priors.values())
        if abs(prior_mass - 1.0) > tolerance:
            raise AssertionError(f"priors sum to {prior_mass}, not 1")
        for label in self.labels:
            mass = sum(math.exp(ll) for ll in self.log_likelihoods[label].values())
            if abs(mass - 1.0) > tolerance:
                raise AssertionError(f"likelihoods for {label} sum to {mass}, not 1")


def nb_train(
    corpus: Sequence[tuple[str, str]],
    smoothing: float = 1.0,
    labels: Sequence[str] | None = None,
) -> NaiveBayesModel:
    """Multinomial Naive Bayes with add-`smoothing` estimates.

    Label order is first appearance in the corpus (or the given label list);
    that order also breaks prediction ties.
    """
    if smoothing <= 0:
        raise InvalidSmoothing(f"smoothing must be > 0, got {smoothing}")
    if not corpus:
        raise InputDataError("training corpus is empty")

    doc_counts: Counter[str] = Counter()
    token_counts: dict[str, Counter[str]] = defaultdict(Counter)
    seen_order: list[str] = []
    vocabulary: set[str] = set()
    for text, label in corpus:
        if label not in doc_counts:
            seen_order.append(label)
        doc_counts[label] += 1
        for token in tokenize(text):
            token_counts[label][token] += 1
            vocabulary.add(token)

    label_order = tuple(labels) if labels is not None else tuple(seen_order)
    missing = [label for label in label_order if doc_counts[label] == 0]
    if missing:
        raise MissingClass(f"no training examples for labels: {missing}")
    if len(label_order) < 2:
        raise InputDataError("need at least two labels")
    if not vocabulary:
        raise InputDataError("training corpus has no tokens")

    total_docs = sum(doc_counts[label] for label in label_order)
    log_priors = {
        label: math.log(doc_counts[label] / total_docs) for label in label_order
    }
    log_likelihoods: dict[str, dict[str, float]] = {}
    vocab_size = len(vocabulary)
    for label in label_order:
        total_tokens = sum(token_counts[label].values())
        denominator = total_tokens + smoothing * vocab_size
        log_likelihoods[label] = {
            token: math.log((token_counts[label][token] + smoothing) / denominator)
            for token in vocabulary
        }
    return NaiveBayesModel(
        labels=label_order,
        log_priors=log_priors,
        log_likelihoods=log_likelihoods,
        vocabulary=frozenset(vocabulary),
        smoothing=smoothing,
    )


def nb_predict(model: NaiveBayesModel, text: str) -> str:
    """Argmax of log prior plus summed token log-likelihoods.

    Out-of-vocabulary tokens are skipped; exact ties go to the earlier label.
    """
    scores = nb_scores(model, text)
    best = model.labels[0]
    for label in model.labels[1:]:
        if scores[label] > scores[best]:
            best = label
    return best


def nb_scores(model: NaiveBayesModel, text: str) -> dict[str, float]:
    tokens = [tok for tok in tokenize(text) if tok in model.vocabulary]
    return {
        label: model.log_priors[label]
        + sum(model.log_likelihoods[label][tok] for tok in tokens)
        for label in model.labels
    }
