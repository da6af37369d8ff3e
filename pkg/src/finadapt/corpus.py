"""Document dataset pipeline: ingest raw text per source, concatenate with the
end-of-text separator, slice into fixed-length token blocks, sample each source
to its token budget, and mix everything with a seeded shuffle.

All randomness is seeded through the manifest, so a (manifest, fixture) pair
always produces the same blocks.
"""
from __future__ import annotations

import glob as globlib
import hashlib
import json
import random
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .errors import InputDataError
from .tokenization import Tokenizer


class NoDocumentsFound(InputDataError):
    """A source glob matched no readable documents."""


class InsufficientData(InputDataError):
    """A source holds fewer tokens than its budget requires."""


class MalformedManifest(InputDataError):
    """The mixture manifest file is missing or invalid."""


@dataclass(frozen=True)
class RawDocument:
    text: str
    source_tag: str
    doc_id: str


@dataclass(frozen=True)
class TokenBlock:
    """One fixed-length pre-training example."""

    ids: tuple[int, ...]
    source_tag: str
    block_index: int

    def __len__(self) -> int:
        return len(self.ids)


@dataclass(frozen=True)
class ManifestEntry:
    source_tag: str
    glob: str
    target_tokens: int


@dataclass(frozen=True)
class MixtureManifest:
    entries: tuple[ManifestEntry, ...]
    block_len: int = 2048
    shuffle_seed: int = 0

    def validate(self) -> None:
        if self.block_len < 2:
            raise MalformedManifest(f"block_len must be >= 2, got {self.block_len}")
        tags = [e.source_tag for e in self.entries]
        if len(set(tags)) != len(tags):
            raise MalformedManifest(f"duplicate source tags in manifest: {tags}")
        for entry in self.entries:
            if entry.target_tokens <= 0:
                raise MalformedManifest(
                    f"source {entry.source_tag!r} has non-positive token budget"
                )


@dataclass
class SourceReport:
    source_tag: str
    documents: int = 0
    skipped_records: int = 0
    raw_tokens: int = 0           # concatenation length, separators included
    packed_blocks: int = 0
    dropped_remainder: int = 0    # tokens lost to the final partial block
    sampled_blocks: int = 0
    sampled_tokens: int = 0
    percent: float = 0.0


@dataclass
class MixtureReport:
    block_len: int
    shuffle_seed: int
    sources: list[SourceReport] = field(default_factory=list)
    total_tokens: int = 0

    def to_json_dict(self) -> dict:
        return {
            "block_len": self.block_len,
            "shuffle_seed": self.shuffle_seed,
            "total_tokens": self.total_tokens,
            "sources": [vars(s) for s in self.sources],
        }


def ingest_source(pattern: str, source_tag: str) -> Iterator[RawDocument | None]:
    """Yield documents matching a path glob in deterministic order.

    Files are visited in lexicographic path order. Plain .txt files yield one
    document each; .jsonl files yield one document per record with a "text"
    field. A malformed or empty record yields None so callers can count skips.

    Raises:
        NoDocumentsFound: the glob matched no files.
    """
    paths = sorted(globlib.glob(pattern, recursive=True))
    paths = [p for p in paths if Path(p).is_file()]
    if not paths:
        raise NoDocumentsFound(f"no files match {pattern!r}")
    for path_str in paths:
        path = Path(path_str)
        if path.suffix == ".jsonl":
            with path.open(encoding="utf-8") as handle:
                for lineno, line in enumerate(handle, start=1):
                    if not line.strip():
                        continue
                    try:
                        record = json.loads(line)
                        text = record["text"]
                    except (json.JSONDecodeError, TypeError, KeyError):
                        yield None
                        continue
                    if not isinstance(text, str) or not text.strip():
                        yield None
                        continue
                    doc_id = str(record.get("id", f"{path.name}#{lineno}"))
                    yield RawDocument(text=text, source_tag=source_tag, doc_id=doc_id)
        else:
            try:
                text = path.read_text(encoding="utf-8")
            except (OSError, UnicodeDecodeError) as exc:
                raise InputDataError(f"cannot read {path}: {exc}") from exc
            if not text.strip():
                yield None
                continue
            yield RawDocument(text=text, source_tag=source_tag, doc_id=path.name)


def pack_source(
    docs: Iterable[RawDocument],
    tokenizer: Tokenizer,
    block_len: int,
    source_tag: str = "",
) -> list[TokenBlock]:
    """Concatenate a source's documents and slice into full blocks.

    Documents are encoded in order and joined by exactly one end-of-text id
    between consecutive documents (none after the last). The concatenation is
    cut into consecutive non-overlapping blocks of block_len; the final partial
    remainder is dropped. Document text is encoded with special-token splitting
    disabled so text can never inject a separator.
    """
    if block_len < 2:
        raise InputDataError(f"block_len must be >= 2, got {block_len}")
    separator = tokenizer.end_of_text_id
    blocks: list[TokenBlock] = []
    buffer: list[int] = []
    tag = source_tag
    first = True
    for doc in docs:
        if doc is None:
            continue
        if not tag:
            tag = doc.source_tag
        if not first:
            buffer.append(separator)
        first = False
        buffer.extend(tokenizer.encode(doc.text, split_special=False).ids)
        while len(buffer) >= block_len:
            blocks.append(
                TokenBlock(ids=tuple(buffer[:block_len]), source_tag=tag, block_index=len(blocks))
            )
            del buffer[:block_len]
    return blocks


def sample_to_budget(blocks: list[TokenBlock], target_token_count: int, seed: int) -> list[TokenBlock]:
    """Take the first floor(target / block_len) blocks of a seeded shuffle.

    The budget is met in whole blocks and never exceeded.

    Raises:
        InsufficientData: fewer tokens available than the target requires.
    """
    if not blocks:
        raise InsufficientData("no blocks to sample from")
    block_len = len(blocks[0])
    available = len(blocks) * block_len
    if target_token_count > available:
        raise InsufficientData(
            f"budget {target_token_count} exceeds {available} available tokens"
        )
    wanted = target_token_count // block_len
    shuffled = list(blocks)
    random.Random(seed).shuffle(shuffled)
    return shuffled[:wanted]


def _source_seed(shuffle_seed: int, source_tag: str) -> int:
    # Stable across runs and platforms, unlike hash().
    digest = hashlib.sha256(f"{shuffle_seed}:{source_tag}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def build_mixture(
    manifest: MixtureManifest, tokenizer: Tokenizer
) -> tuple[list[TokenBlock], MixtureReport]:
    """Run the full pipeline for every manifest source and mix the results.

    Per source: ingest, pack, sample to the token budget. The sampled blocks
    of all sources are then shuffled together. The report carries per-source
    actual token counts and percentages of the mixed total.
    """
    manifest.validate()
    report = MixtureReport(block_len=manifest.block_len, shuffle_seed=manifest.shuffle_seed)
    mixed: list[TokenBlock] = []
    for entry in manifest.entries:
        source_report = SourceReport(source_tag=entry.source_tag)
        docs: list[RawDocument] = []
        for doc in ingest_source(entry.glob, entry.source_tag):
            if doc is None:
                source_report.skipped_records += 1
            else:
                docs.append(doc)
        if not docs:
            raise NoDocumentsFound(f"source {entry.source_tag!r} has no usable documents")
        source_report.documents = len(docs)
        blocks = pack_source(docs, tokenizer, manifest.block_len, source_tag=entry.source_tag)
        doc_tokens = sum(
            len(tokenizer.encode(d.text, split_special=False).ids) for d in docs
        )
        source_report.raw_tokens = doc_tokens + (len(docs) - 1)
        source_report.packed_blocks = len(blocks)
        source_report.dropped_remainder = source_report.raw_tokens - len(blocks) * manifest.block_len
        sampled = sample_to_budget(
            blocks,
            entry.target_tokens,
            seed=_source_seed(manifest.shuffle_seed, entry.source_tag),
        )
        source_report.sampled_blocks = len(sampled)
        source_report.sampled_tokens = len(sampled) * manifest.block_len
        report.sources.append(source_report)
        mixed.extend(sampled)

    random.Random(manifest.shuffle_seed).shuffle(mixed)
    report.total_tokens = len(mixed) * manifest.block_len
    for source_report in report.sources:
        if report.total_tokens:
            source_report.percent = round(
                100.0 * source_report.sampled_tokens / report.total_tokens, 4
            )
    return mixed, report


def load_manifest(path: str | Path) -> MixtureManifest:
    """Read a mixture manifest JSON file.

    Layout: {"block_len": int, "shuffle_seed": int,
             "sources": [{"tag": str, "glob": str, "target_tokens": int}]}.
    Relative globs resolve against the manifest's directory.
    """
    path = Path(path)
    if not path.is_file():
        raise MalformedManifest(f"manifest not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
        entries = tuple(
            ManifestEntry(
                source_tag=src["tag"],
                glob=str(Path(src["glob"]) if Path(src["glob"]).is_absolute()
                         else path.parent / src["glob"]),
                target_tokens=int(src["target_tokens"]),
            )
            for src in raw["sources"]
        )
        manifest = MixtureManifest(
            entries=entries,
            block_len=int(raw.get("block_len", 2048)),
            shuffle_seed=int(raw.get("shuffle_seed", 0)),
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise MalformedManifest(f"cannot parse manifest {path}: {exc}") from exc
    manifest.validate()
    return manifest


def write_blocks_jsonl(blocks: Iterable[TokenBlock], path: str | Path) -> None:
    """One record per block: {"source": str, "index": int, "ids": [int]}."""
    with Path(path).open("w", encoding="utf-8") as handle:
        for block in blocks:
            handle.write(
                json.dumps(
                    {"source": block.source_tag, "index": block.block_index, "ids": list(block.ids)}
                )
                + "\n"
            )


def read_blocks_jsonl(path: str | Path) -> list[TokenBlock]:
    blocks = []
    with Path(path).open(encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            record = json.loads(line)
            blocks.append(
                TokenBlock(
                    ids=tuple(record["ids"]),
                    source_tag=record["source"],
                    block_index=record["index"],
                )
            )
    return blocks


def write_blocks_binary(blocks: Iterable[TokenBlock], path: str | Path) -> None:
    """Compact binary block format: per block a little-endian uint32 length
    prefix followed by that many little-endian uint32 token ids."""
    with Path(path).open("wb") as handle:
        for block in blocks:
            handle.write(struct.pack("<I", len(block.ids)))
            handle.write(struct.pack(f"<{len(block.ids)}I", *block.ids))


def read_blocks_binary(path: str | Path, source_tag: str = "") -> list[TokenBlock]:
    blocks = []
    data = Path(path).read_bytes()
    offset = 0
    index = 0
    while offset < len(data):
        (length,) = struct.unpack_from("<I", data, offset)
        offset += 4
        ids = struct.unpack_from(f"<{length}I", data, offset)
        offset += 4 * length
        blocks.append(TokenBlock(ids=ids, source_tag=source_tag, block_index=index))
        index += 1
    return blocks
