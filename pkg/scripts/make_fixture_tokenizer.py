#!/usr/bin/env python3
"""Regenerate tests/fixtures/tokenizer.json, the miniature BPE definition used by the test suite.

The vocabulary is small enough that every token count asserted in tests can be
checked by hand: ids 0..127 are the single ASCII characters, ids 128.. are the
merge products in merge order, and the two special tokens come last.
"""
import json
from pathlib import Path

MERGES = [
    # one entry per new token; order is merge priority
    ("o", "f"),        # of
    ("t", "o"),        # to
    ("i", "n"),        # in
    ("t", "h"),        # th
    ("th", "e"),       # the
    ("a", "n"),        # an
    ("an", "d"),       # and
    ("b", "a"),        # ba
    ("n", "k"),        # nk
    ("ba", "nk"),      # bank
    ("r", "o"),        # ro
    ("s", "e"),        # se
    ("ro", "se"),      # rose
    ("f", "e"),        # fe
    ("l", "l"),        # ll
    ("fe", "ll"),      # fell
    ("l", "o"),        # lo
    ("s", "s"),        # ss
    ("lo", "ss"),      # loss
    ("p", "r"),        # pr
    ("i", "t"),        # it
    ("of", "it"),      # ofit
    ("pr", "ofit"),    # profit
    ("s", "h"),        # sh
    ("a", "r"),        # ar
    ("ar", "e"),       # are
    ("sh", "are"),     # share
    ("share", "s"),    # shares
    ("m", "a"),        # ma
    ("r", "k"),        # rk
    ("e", "t"),        # et
    ("ma", "rk"),      # mark
    ("mark", "et"),    # market
    ("g", "a"),        # ga
    ("ga", "in"),      # gain
]

END_OF_TEXT = "<|endoftext|>"
PAD = "<|pad|>"


def build() -> dict:
    vocab: dict[str, int] = {chr(i): i for i in range(128)}
    for left, right in MERGES:
        vocab[left + right] = len(vocab)
    vocab[END_OF_TEXT] = len(vocab)
    vocab[PAD] = len(vocab)
    return {
        "vocab": vocab,
        "merges": [[left, right] for left, right in MERGES],
        "special_tokens": {"end_of_text": END_OF_TEXT, "pad": PAD},
    }


if __name__ == "__main__":
    out = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "tokenizer.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(build(), indent=1) + "\n")
    definition = build()
    print(f"wrote {out} ({len(definition['vocab'])} vocabulary entries)")
