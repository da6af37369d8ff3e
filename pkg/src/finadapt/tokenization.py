"""Byte-pair-encoding tokenizer loaded from a JSON definition file.

The definition format follows the layout published alongside open language
models: a vocabulary (token string to id), an ordered merge list, and a
special-token table. Only loading and inference are supported; training a
tokenizer is out of scope. A loaded Tokenizer is immutable and safe to share
between threads.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

from .errors import InputDataError

END_OF_TEXT = "end_of_text"
PAD = "pad"

# Text is pre-tokenized into alternating runs of non-whitespace and whitespace;
# merges never cross a run boundary.
_CHUNK_RE = re.compile(r"\s+|\S+")


class MalformedTokenizerFile(InputDataError):
    """The definition file is missing or structurally invalid."""


class MissingSpecialToken(InputDataError):
    """The definition does not declare a required special token."""


class TokenIdOutOfRange(InputDataError):
    """A token id is not part of the vocabulary."""


class UnencodableText(InputDataError):
    """The text contains a byte with no vocabulary entry."""


@dataclass(frozen=True)
class TokenSequence:
    """Token ids produced from one piece of text."""

    ids: list[int]
    source_tag: str = ""

    def __len__(self) -> int:
        return len(self.ids)


@dataclass(frozen=True)
class Tokenizer:
    """Immutable BPE tokenizer.

    Attributes:
        vocab_size: number of vocabulary entries; every id is < vocab_size.
        special_tokens: special-token name to id (always contains end_of_text).
        definition_source: path the definition was loaded from.
    """

    vocab_size: int
    special_tokens: dict[str, int]
    definition_source: str
    _token_bytes: dict[int, bytes] = field(repr=False)
    _byte_to_id: dict[bytes, int] = field(repr=False)
    _merge_ranks: dict[tuple[bytes, bytes], int] = field(repr=False)
    _special_surfaces: dict[str, int] = field(repr=False)
    _special_re: re.Pattern | None = field(repr=False)

    @property
    def end_of_text_id(self) -> int:
        return self.special_tokens[END_OF_TEXT]

    @property
    def pad_id(self) -> int | None:
        return self.special_tokens.get(PAD)

    def special_surface(self, name: str) -> str:
        """Surface string of a named special token."""
        if name not in self.special_tokens:
            raise MissingSpecialToken(f"no special token named {name!r}")
        return self._token_bytes[self.special_tokens[name]].decode("latin-1")

    def encode(self, text: str, source_tag: str = "", split_special: bool = True) -> TokenSequence:
        """Encode text to token ids.

        With split_special enabled (the default), occurrences of special-token
        surface strings encode atomically to their single id. Encoding is
        deterministic: the same text always yields the same ids.
        """
        if not text:
            return TokenSequence(ids=[], source_tag=source_tag)
        ids: list[int] = []
        if split_special and self._special_re is not None:
            segments = self._special_re.split(text)
        else:
            segments = [text]
        for segment in segments:
            if not segment:
                continue
            special_id = self._special_surfaces.get(segment)
            if split_special and special_id is not None:
                ids.append(special_id)
                continue
            for chunk in _CHUNK_RE.findall(segment):
                ids.extend(self._encode_chunk(chunk))
        return TokenSequence(ids=ids, source_tag=source_tag)

    def decode(self, ids: TokenSequence | list[int]) -> str:
        """Decode token ids back to text; inverse of encode on encode's image."""
        raw = ids.ids if isinstance(ids, TokenSequence) else ids
        parts = []
        for i in raw:
            token = self._token_bytes.get(i)
            if token is None:
                raise TokenIdOutOfRange(f"token id {i} not in vocabulary of size {self.vocab_size}")
            parts.append(token)
        return b"".join(parts).decode("utf-8", errors="replace")

    # Per-chunk BPE with a cache; chunks repeat heavily in natural text, so
    # this is what makes whole-corpus encoding cheap.
    def _encode_chunk(self, chunk: str) -> tuple[int, ...]:
        return _encode_chunk_cached(self, chunk)

    def _encode_chunk_uncached(self, chunk: str) -> tuple[int, ...]:
        symbols = [bytes([b]) for b in chunk.encode("utf-8")]
        while len(symbols) > 1:
            best_rank = None
            best_pos = -1
            for pos in range(len(symbols) - 1):
                rank = self._merge_ranks.get((symbols[pos], symbols[pos + 1]))
                if rank is not None and (best_rank is None or rank < best_rank):
                    best_rank = rank
                    best_pos = pos
            if best_rank is None:
                break
            symbols[best_pos : best_pos + 2] = [symbols[best_pos] + symbols[best_pos + 1]]
        out = []
        for symbol in symbols:
            token_id = self._byte_to_id.get(symbol)
            if token_id is None:
                raise UnencodableText(f"no vocabulary entry for byte sequence {symbol!r}")
            out.append(token_id)
        return tuple(out)

    def __hash__(self) -> int:
        return hash((self.definition_source, self.vocab_size))


@lru_cache(maxsize=65536)
def _encode_chunk_cached(tokenizer: Tokenizer, chunk: str) -> tuple[int, ...]:
    return tokenizer._encode_chunk_uncached(chunk)


def load_tokenizer(path: str | Path) -> Tokenizer:
    """Load a tokenizer definition file.

    Args:
        path: JSON file with "vocab" (token string to id), "merges" (ordered
            [left, right] pairs), and "special_tokens" (name to surface string;
            must include "end_of_text", may include "pad").

    Returns:
        An immutable Tokenizer.

    Raises:
        MalformedTokenizerFile: missing file or invalid structure.
        MissingSpecialToken: no end_of_text entry.
    """
    path = Path(path)
    if not path.is_file():
        raise MalformedTokenizerFile(f"tokenizer definition not found: {path}")
    try:
        definition = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedTokenizerFile(f"cannot parse tokenizer definition {path}: {exc}") from exc
    if not isinstance(definition, dict):
        raise MalformedTokenizerFile(f"tokenizer definition {path} is not a JSON object")
    for key in ("vocab", "merges", "special_tokens"):
        if key not in definition:
            raise MalformedTokenizerFile(f"tokenizer definition {path} lacks {key!r}")

    vocab = definition["vocab"]
    if not isinstance(vocab, dict) or not vocab:
        raise MalformedTokenizerFile("vocab must be a non-empty object")
    vocab_size = len(vocab)
    token_bytes: dict[int, bytes] = {}
    byte_to_id: dict[bytes, int] = {}
    for token, token_id in vocab.items():
        if not isinstance(token_id, int) or not 0 <= token_id < vocab_size:
            raise MalformedTokenizerFile(
                f"token ids must be the contiguous range 0..{vocab_size - 1}; got {token_id!r}"
            )
        if token_id in token_bytes:
            raise MalformedTokenizerFile(f"duplicate token id {token_id}")
        encoded = token.encode("latin-1", errors="strict")
        token_bytes[token_id] = encoded
        byte_to_id[encoded] = token_id

    merge_ranks: dict[tuple[bytes, bytes], int] = {}
    for rank, pair in enumerate(definition["merges"]):
        if not (isinstance(pair, list) and len(pair) == 2):
            raise MalformedTokenizerFile(f"merge entry {rank} must be a [left, right] pair")
        left, right = (part.encode("latin-1") for part in pair)
        if left not in byte_to_id or right not in byte_to_id or left + right not in byte_to_id:
            raise MalformedTokenizerFile(f"merge {pair!r} references tokens outside the vocabulary")
        merge_ranks[(left, right)] = rank

    specials_raw = definition["special_tokens"]
    if not isinstance(specials_raw, dict) or END_OF_TEXT not in specials_raw:
        raise MissingSpecialToken(f"tokenizer definition {path} declares no end_of_text token")
    special_tokens: dict[str, int] = {}
    special_surfaces: dict[str, int] = {}
    for name, surface in specials_raw.items():
        if surface not in vocab:
            raise MalformedTokenizerFile(f"special token {name!r} surface {surface!r} not in vocab")
        special_tokens[name] = vocab[surface]
        special_surfaces[surface] = vocab[surface]

    # Longest surface first so overlapping specials split unambiguously.
    ordered = sorted(special_surfaces, key=len, reverse=True)
    special_re = re.compile("(" + "|".join(re.escape(s) for s in ordered) + ")") if ordered else None

    return Tokenizer(
        vocab_size=vocab_size,
        special_tokens=special_tokens,
        definition_source=str(path),
        _token_bytes=token_bytes,
        _byte_to_id=byte_to_id,
        _merge_ranks=merge_ranks,
        _special_surfaces=special_surfaces,
        _special_re=special_re,
    )
