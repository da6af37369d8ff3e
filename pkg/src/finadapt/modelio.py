"""Completion-backend client.

Two capabilities sit behind one interface: free-form generation (used by
augmentation and by unconstrained NER decoding) and log-probability scoring
of forced continuations (used by constrained label decoding).

The HTTP backend speaks the de-facto open completion protocol: POST JSON
{prompt, max_tokens, temperature, logprobs, echo, stop} to /v1/completions
and read choices[0] with text, token logprobs, and text offsets. Scoring a
continuation sends prompt+continuation with echo enabled and zero new tokens,
then sums logprobs of tokens whose text offset lies at or past the prompt
end. Failed requests retry with exponential backoff; when every attempt
fails the call raises BackendUnavailable.

The mock backend answers from fixture tables keyed by the sha256 of the
prompt. A missing key is always an error, never a silent default, so test
fixtures stay total over everything a run requests.
"""
from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import httpx

from .errors import BackendError, InputDataError


class BackendUnavailable(BackendError):
    """All retry attempts against the completion endpoint failed."""


class MockLookupError(BackendError):
    """The mock fixture table has no entry for a requested prompt."""


class NoCandidates(InputDataError):
    """score_continuations was called with an empty candidate list."""


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    max_new_tokens: int = 128
    temperature: float = 0.8
    stop_sequences: tuple[str, ...] = ()
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class ScoredContinuation:
    continuation: str
    total_logprob: float
    token_count: int


class ModelBackend(Protocol):
    def generate_text(self, request: GenerationRequest) -> str: ...

    def score_continuation(self, prompt: str, continuation: str) -> ScoredContinuation: ...


def prompt_key(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def truncate_at_stop(text: str, stop_sequences: Sequence[str]) -> str:
    cut = len(text)
    for marker in stop_sequences:
        pos = text.find(marker)
        if 0 <= pos < cut:
            cut = pos
    return text[:cut]


@dataclass(frozen=True)
class _Completion:
    """One parsed wire response."""

    text: str
    tokens: tuple[str, ...] = ()
    token_logprobs: tuple[float, ...] = ()
    text_offsets: tuple[int, ...] = ()


def _parse_completion(body: dict) -> _Completion:
    try:
        choice = body["choices"][0]
    except (KeyError, IndexError, TypeError) as exc:
        raise ValueError(f"malformed completion response: {body!r}") from exc
    lp = choice.get("logprobs") or {}
    return _Completion(
        text=choice.get("text", ""),
        tokens=tuple(lp.get("tokens", ())),
        token_logprobs=tuple(lp.get("token_logprobs", ())),
        text_offsets=tuple(lp.get("text_offset", ())),
    )


@dataclass
class HTTPBackend:
    """Client for a completion endpoint, with retry and backoff."""

    base_url: str
    api_key: str = ""
    max_attempts: int = 3
    backoff_base: float = 0.5
    timeout: float = 30.0
    sleep: Callable[[float], None] = time.sleep
    transport: httpx.BaseTransport | None = None
    _client: httpx.Client | None = None

    def _get_client(self) -> httpx.Client:
        if self._client is None:
            headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
            self._client = httpx.Client(
                base_url=self.base_url,
                timeout=self.timeout,
                headers=headers,
                transport=self.transport,
            )
        return self._client

    def _post(self, payload: dict) -> _Completion:
        last_error: Exception | None = None
        for attempt in range(self.max_attempts):
            try:
                response = self._get_client().post("/v1/completions", json=payload)
                if response.status_code >= 500:
                    raise BackendUnavailable(f"server error {response.status_code}")
                response.raise_for_status()
                return _parse_completion(response.json())
            except (httpx.HTTPError, BackendUnavailable, ValueError) as exc:
                last_error = exc
                if attempt + 1 < self.max_attempts:
                    self.sleep(self.backoff_base * (2**attempt))
        raise BackendUnavailable(
            f"completion endpoint failed after {self.max_attempts} attempts: {last_error}"
        )

    def generate_text(self, request: GenerationRequest) -> str:
        completion = self._post(
            {
                "prompt": request.prompt,
                "max_tokens": request.max_new_tokens,
                "temperature": request.temperature,
                "logprobs": None,
                "echo": False,
                "stop": list(request.stop_sequences) or None,
            }
        )
        # Servers usually honor stop themselves; truncating again is harmless.
        return truncate_at_stop(completion.text, request.stop_sequences)

    def score_continuation(self, prompt: str, continuation: str) -> ScoredContinuation:
        if not continuation:
            raise NoCandidates("continuation must be non-empty")
        completion = self._post(
            {
                "prompt": prompt + continuation,
                "max_tokens": 0,
                "temperature": 0.0,
                "logprobs": 1,
                "echo": True,
                "stop": None,
            }
        )
        if not completion.text_offsets or not completion.token_logprobs:
            raise BackendError("backend did not return echoed token logprobs")
        total = 0.0
        count = 0
        for offset, logprob in zip(completion.text_offsets, completion.token_logprobs):
            if offset >= len(prompt) and logprob is not None:
                total += logprob
                count += 1
        if count == 0:
            raise BackendError(f"continuation {continuation!r} produced no scored tokens")
        return ScoredContinuation(continuation=continuation, total_logprob=total, token_count=count)

    def close(self) -> None:
        if self._client is not None:
            self._client.close()
            self._client = None


def _mock_tokens(text: str) -> list[str]:
    """Whitespace-piece tokens used by the mock for truncation and counting.

    A leading space folds into the first token, mirroring how completion
    tokenizers attach the separator to the word that follows it.
    """
    tokens: list[str] = []
    for n, piece in enumerate(text.split(" ")):
        tokens.append(piece if n == 0 else " " + piece)
    if tokens and tokens[0] == "" and len(tokens) > 1:
        tokens = tokens[1:]
    return tokens


@dataclass
class MockModel:
    """Deterministic fixture-table backend for tests and offline runs.

    generation_table maps sha256(prompt) to a fixed raw reply; score_table
    maps sha256(prompt) to {continuation: logprob}. Lookups must be total:
    a missing key raises MockLookupError rather than inventing output.
    """

    generation_table: dict[str, str] = field(default_factory=dict)
    score_table: dict[str, dict[str, float]] = field(default_factory=dict)
    calls: list[str] = field(default_factory=list)

    @classmethod
    def from_json_file(cls, path: str | Path) -> "MockModel":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputDataError(f"cannot load mock fixtures from {path}: {exc}") from exc
        return cls(
            generation_table=dict(data.get("generation_table", {})),
            score_table={k: dict(v) for k, v in data.get("score_table", {}).items()},
        )

    def add_generation(self, prompt: str, reply: str) -> None:
        self.generation_table[prompt_key(prompt)] = reply

    def add_scores(self, prompt: str, scores: dict[str, float]) -> None:
        self.score_table.setdefault(prompt_key(prompt), {}).update(scores)

    def generate_text(self, request: GenerationRequest) -> str:
        self.calls.append(request.prompt)
        key = prompt_key(request.prompt)
        if key not in self.generation_table:
            raise MockLookupError(f"no mock generation for prompt hash {key[:12]}…")
        reply = self.generation_table[key]
        tokens = _mock_tokens(reply)
        if len(tokens) > request.max_new_tokens:
            reply = "".join(tokens[: request.max_new_tokens])
        return truncate_at_stop(reply, request.stop_sequences)

    def score_continuation(self, prompt: str, continuation: str) -> ScoredContinuation:
        if not continuation:
            raise NoCandidates("continuation must be non-empty")
        self.calls.append(prompt + continuation)
        key = prompt_key(prompt)
        table = self.score_table.get(key)
        if table is None or continuation not in table:
            raise MockLookupError(
                f"no mock score for prompt hash {key[:12]}… continuation {continuation!r}"
            )
        return ScoredContinuation(
            continuation=continuation,
            total_logprob=table[continuation],
            token_count=len(_mock_tokens(continuation)),
        )


@dataclass
class CompletionClient:
    """Bounded-concurrency fan-out; results always keep request order."""

    backend: ModelBackend
    max_concurrency: int = 4

    def generate(self, requests: Sequence[GenerationRequest]) -> list[str]:
        return self._map_ordered(self.backend.generate_text, requests)

    def score_continuations(
        self, prompt: str, candidates: Sequence[str]
    ) -> list[ScoredContinuation]:
        if not candidates:
            raise NoCandidates("candidate list is empty")

        def one(candidate: str) -> ScoredContinuation:
            return self.backend.score_continuation(prompt, candidate)

        return self._map_ordered(one, candidates)

    def score_many(
        self, jobs: Sequence[tuple[str, Sequence[str]]]
    ) -> list[list[ScoredContinuation]]:
        """Score several (prompt, candidates) jobs in one bounded fan-out.

        The flat request list shares the worker pool, so concurrency stays
        bounded regardless of how candidates distribute across prompts.
        """
        flat: list[tuple[str, str]] = []
        for prompt, candidates in jobs:
            if not candidates:
                raise NoCandidates("candidate list is empty")
            flat.extend((prompt, candidate) for candidate in candidates)

        def one(pair: tuple[str, str]) -> ScoredContinuation:
            return self.backend.score_continuation(pair[0], pair[1])

        scored = iter(self._map_ordered(one, flat))
        return [[next(scored) for _ in candidates] for _, candidates in jobs]

    def _map_ordered(self, fn, items: Sequence) -> list:
        if not items:
            return []
        if self.max_concurrency <= 1 or len(items) == 1:
            return [fn(item) for item in items]
        workers = min(self.max_concurrency, len(items))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
