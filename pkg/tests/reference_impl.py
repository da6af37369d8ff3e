"""Independent brute-force reference implementations used as test oracles.

These are deliberately written in the most literal way possible (full
materialization, exact rational arithmetic) and must stay independent of the
package modules they check: import nothing from the package here.
"""
from __future__ import annotations

from fractions import Fraction


def ref_pack(doc_id_lists: list[list[int]], separator_id: int, block_len: int):
    """Materialize the full separator-joined stream, slice, count remainder."""
    stream: list[int] = []
    for n, ids in enumerate(doc_id_lists):
        if n > 0:
            stream.append(separator_id)
        stream.extend(ids)
    blocks = []
    pos = 0
    while pos + block_len <= len(stream):
        blocks.append(stream[pos : pos + block_len])
        pos += block_len
    remainder = len(stream) - pos
    return blocks, remainder


def ref_argmax_label(labels: list[str], scores: list[float]) -> str:
    """First label attaining the maximum score."""
    best = max(scores)
    for label, score in zip(labels, scores):
        if score == best:
            return label
    raise AssertionError("unreachable")


def ref_accuracy(pairs: list[tuple[str, str]]) -> Fraction:
    """pairs: (predicted, gold)."""
    return Fraction(sum(1 for p, g in pairs if p == g), len(pairs))


def ref_weighted_f1(pairs: list[tuple]) -> Fraction:
    """Per-class F1, exact rational arithmetic, weighted by gold frequency."""
    total = len(pairs)
    gold_labels = []
    for _, gold in pairs:
        if gold not in gold_labels:
            gold_labels.append(gold)
    result = Fraction(0)
    for label in gold_labels:
        tp = sum(1 for p, g in pairs if p == label and g == label)
        fp = sum(1 for p, g in pairs if p == label and g != label)
        fn = sum(1 for p, g in pairs if p != label and g == label)
        precision = Fraction(tp, tp + fp) if tp + fp else Fraction(0)
        recall = Fraction(tp, tp + fn) if tp + fn else Fraction(0)
        f1 = (
            2 * precision * recall / (precision + recall)
            if precision + recall
            else Fraction(0)
        )
        weight = Fraction(sum(1 for _, g in pairs if g == label), total)
        result += weight * f1
    return result


def ref_entity_f1(pairs: list[tuple[set, set]]) -> Fraction:
    """pairs: (predicted entity set, gold entity set)."""
    tp = sum(len(p & g) for p, g in pairs)
    fp = sum(len(p - g) for p, g in pairs)
    fn = sum(len(g - p) for p, g in pairs)
    precision = Fraction(tp, tp + fp) if tp + fp else Fraction(0)
    recall = Fraction(tp, tp + fn) if tp + fn else Fraction(0)
    if precision + recall == 0:
        return Fraction(0)
    return 2 * precision * recall / (precision + recall)


def ref_nb_posteriors(
    corpus: list[tuple[list[str], str]],
    smoothing: Fraction,
    tokens: list[str],
    labels: list[str],
) -> dict[str, Fraction]:
    """Unnormalized multinomial posteriors with additive smoothing, exact.

    corpus entries carry pre-tokenized documents. Tokens outside the training
    vocabulary are skipped, mirroring the documented prediction rule.
    """
    vocabulary = sorted({tok for doc, _ in corpus for tok in doc})
    posteriors: dict[str, Fraction] = {}
    total_docs = len(corpus)
    for label in labels:
        docs = [doc for doc, lab in corpus if lab == label]
        prior = Fraction(len(docs), total_docs)
        class_tokens = [tok for doc in docs for tok in doc]
        denominator = Fraction(len(class_tokens)) + smoothing * len(vocabulary)
        value = prior
        for tok in tokens:
            if tok not in vocabulary:
                continue
            count = sum(1 for t in class_tokens if t == tok)
            value *= (Fraction(count) + smoothing) / denominator
        posteriors[label] = value
    return posteriors


def ref_nb_predict(
    corpus: list[tuple[list[str], str]],
    smoothing: Fraction,
    tokens: list[str],
    labels: list[str],
) -> str:
    posteriors = ref_nb_posteriors(corpus, smoothing, tokens, labels)
    best = max(posteriors.values())
    for label in labels:
        if posteriors[label] == best:
            return label
    raise AssertionError("unreachable")


def ref_downsample_size(keys: list[tuple]) -> int:
    return len(set(keys))
