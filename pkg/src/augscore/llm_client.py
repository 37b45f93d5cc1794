"""Chat-completion backends with retries, caching, and response parsing.

Two backends share one interface: an HTTP client for a chat-completion
endpoint (the request body carries ``temperature`` and ``top_p`` exactly as
configured), and a deterministic mock that paraphrases the exemplar found in
the prompt. The mock keeps the exemplar's content words, so augmented items
provably carry the minority class's token signal in offline tests.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol, Sequence

import httpx

from .errors import GenerationError, ParseError
from .prompt import EXAMPLE_TO_AUGMENT_HEADER, variant_marker
from .seeding import shuffle_key, stable_hash

logger = logging.getLogger(__name__)

API_KEY_ENV = "AUGSCORE_API_KEY"

_RETRYABLE_STATUS = {429}


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    n_variants: int
    model_name: str
    temperature: float = 0.0
    top_p: float = 0.01
    max_attempts: int = 5

    def __post_init__(self):
        if self.n_variants < 1:
            raise GenerationError("n_variants must be at least 1")
        if self.temperature < 0:
            raise GenerationError("temperature must be non-negative")
        if not 0 < self.top_p <= 1:
            raise GenerationError("top_p must be in (0, 1]")
        if self.max_attempts < 1:
            raise GenerationError("max_attempts must be at least 1")


@dataclass(frozen=True)
class RawCompletion:
    text: str
    backend: str  # "http" | "mock"
    request_fingerprint: str


def request_fingerprint(req: GenerationRequest) -> str:
    """Stable content hash of (prompt, hyperparameters, model name)."""
    payload = json.dumps(
        {
            "model_name": req.model_name,
            "n_variants": req.n_variants,
            "prompt": req.prompt,
            "temperature": req.temperature,
            "top_p": req.top_p,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class Backend(Protocol):
    kind: str

    def complete(self, req: GenerationRequest) -> str: ...


class CompletionCache:
    """Content-addressed completion store: one JSON file per fingerprint."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, fingerprint: str) -> Path:
        return self.directory / f"{fingerprint}.json"

    def get(self, fingerprint: str) -> RawCompletion | None:
        p = self._path(fingerprint)
        if not p.exists():
            return None
        rec = json.loads(p.read_text(encoding="utf-8"))
        return RawCompletion(text=rec["text"], backend=rec["backend"], request_fingerprint=fingerprint)

    def put(self, completion: RawCompletion) -> None:
        rec = {"text": completion.text, "backend": completion.backend}
        final = self._path(completion.request_fingerprint)
        tmp = final.with_suffix(".tmp")
        with self._lock:
            tmp.write_text(json.dumps(rec, ensure_ascii=False), encoding="utf-8")
            os.replace(tmp, final)


class HttpBackend:
    """Chat-completion client with exponential backoff and jitter.

    Retries transport errors, timeouts, 429, and 5xx up to the request's
    ``max_attempts``; other statuses fail immediately.
    """

    kind = "http"

    def __init__(
        self,
        endpoint: str,
        api_key: str | None = None,
        timeout: float = 60.0,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
        initial_backoff: float = 1.0,
        backoff_factor: float = 2.0,
        jitter: float = 0.25,
        jitter_seed: int = 0,
    ):
        key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        if not key:
            raise GenerationError(f"credential missing: set {API_KEY_ENV} or pass api_key")
        self.endpoint = endpoint
        self._api_key = key
        self._sleep = sleep
        self.initial_backoff = initial_backoff
        self.backoff_factor = backoff_factor
        self.jitter = jitter
        self.jitter_seed = jitter_seed
        self._client = httpx.Client(transport=transport, timeout=timeout)
        self.requests_sent = 0

    def _backoff(self, attempt: int, rng: random.Random) -> float:
        base = self.initial_backoff * self.backoff_factor ** (attempt - 1)
        return base * (1.0 + self.jitter * (2.0 * rng.random() - 1.0))

    def complete(self, req: GenerationRequest) -> str:
        payload = {
            "model": req.model_name,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
            "top_p": req.top_p,
        }
        headers = {"Authorization": f"Bearer {self._api_key}"}
        rng = random.Random(stable_hash("jitter", self.jitter_seed, request_fingerprint(req)))
        last: str = "no attempt made"
        for attempt in range(1, req.max_attempts + 1):
            try:
                self.requests_sent += 1
                resp = self._client.post(self.endpoint, json=payload, headers=headers)
            except httpx.TimeoutException as exc:
                last = f"timeout: {exc}"
            except httpx.TransportError as exc:
                last = f"transport error: {exc}"
            else:
                if resp.status_code == 200:
                    return _extract_choice_text(resp)
                last = f"HTTP {resp.status_code}"
                if resp.status_code not in _RETRYABLE_STATUS and resp.status_code < 500:
                    raise GenerationError(f"request failed, not retryable: {last}")
            if attempt < req.max_attempts:
                delay = self._backoff(attempt, rng)
                logger.debug("attempt %d failed (%s); retrying in %.2fs", attempt, last, delay)
                self._sleep(delay)
        raise GenerationError(f"all {req.max_attempts} attempts failed; last: {last}")


def _extract_choice_text(resp: httpx.Response) -> str:
    try:
        body = resp.json()
        return str(body["choices"][0]["message"]["content"])
    except (ValueError, LookupError, TypeError) as exc:
        raise GenerationError(f"malformed response body: {exc}") from exc


HEDGES = ("I think", "I believe", "Maybe", "It seems like", "I guess", "Probably", "To me")


class MockBackend:
    """Deterministic paraphrase generator for offline runs.

    The exemplar is lifted from the prompt's EXAMPLE TO AUGMENT section; each
    variant reorders word order within clauses (keyed-hash shuffle) and
    prepends a variant-indexed hedging phrase, then the variants are laid out
    in the canonical marker structure behind a short explanation preamble.
    """

    kind = "mock"

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.requests_seen = 0

    def complete(self, req: GenerationRequest) -> str:
        self.requests_seen += 1
        fp = request_fingerprint(req)
        exemplar = _extract_exemplar(req.prompt)
        variants = [self._paraphrase(exemplar, fp, k) for k in range(1, req.n_variants + 1)]
        preamble = (
            "Each augmented answer keeps the ideas of the example to augment, "
            "so it satisfies the same rubric elements and stays in the requested group."
        )
        return preamble + "\n" + format_variants(variants)

    def _paraphrase(self, text: str, fingerprint: str, k: int) -> str:
        hedge = HEDGES[stable_hash("hedge", self.seed, fingerprint, k) % len(HEDGES)]
        out: list[str] = []
        clauses = [c for c in re.split(r"[.;,]+", text) if c.strip()]
        for ci, clause in enumerate(clauses):
            words = clause.split()
            order = sorted(
                range(len(words)),
                key=lambda i: shuffle_key(f"mock:{self.seed}:{k}:{ci}", stable_hash(fingerprint), f"{i}:{words[i]}"),
            )
            out.extend(words[i] for i in order)
        return f"{hedge} {' '.join(out)}".strip()


def _extract_exemplar(prompt: str) -> str:
    marker = prompt.rfind(EXAMPLE_TO_AUGMENT_HEADER)
    if marker >= 0:
        tail = prompt[marker + len(EXAMPLE_TO_AUGMENT_HEADER) :]
    else:
        tail = " ".join(prompt.split()[-60:])
    return tail.strip()


def generate(
    req: GenerationRequest,
    backend: Backend,
    cache: CompletionCache | None = None,
    refresh: bool = False,
) -> RawCompletion:
    """Run one request, serving repeats from the cache when enabled."""
    fp = request_fingerprint(req)
    if cache is not None and not refresh:
        hit = cache.get(fp)
        if hit is not None:
            return hit
    text = backend.complete(req)
    completion = RawCompletion(text=text, backend=backend.kind, request_fingerprint=fp)
    if cache is not None:
        cache.put(completion)
    return completion


def generate_many(
    requests: Sequence[GenerationRequest],
    backend: Backend,
    cache: CompletionCache | None = None,
    max_in_flight: int = 4,
    refresh: bool = False,
) -> list[RawCompletion]:
    """Bounded-concurrency fan-out; results come back in request order."""
    if max_in_flight <= 1 or len(requests) <= 1:
        return [generate(r, backend, cache, refresh) for r in requests]
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        return list(pool.map(lambda r: generate(r, backend, cache, refresh), requests))


_MARKER_RE = re.compile(r"\baugmented\s+responses?\s+(\d+)\s*:", re.IGNORECASE)


def format_variants(variants: Sequence[str]) -> str:
    """Canonical marker layout; ``parse_variants`` inverts it exactly."""
    return "\n".join(f"{variant_marker(k)} {text}" for k, text in enumerate(variants, start=1))


def split_completion(text: str, expected_n: int) -> tuple[list[str], str]:
    """(variants, preamble) from a marker-structured completion."""
    if expected_n < 1:
        raise ParseError("expected_n must be at least 1", raw_text=text)
    matches = list(_MARKER_RE.finditer(text))
    if len(matches) != expected_n:
        raise ParseError(
            f"found {len(matches)} variant markers, expected {expected_n}", raw_text=text
        )
    indices = [int(m.group(1)) for m in matches]
    if indices != list(range(1, expected_n + 1)):
        raise ParseError(
            f"variant indices out of order or duplicated: {indices}", raw_text=text
        )
    variants: list[str] = []
    for i, m in enumerate(matches):
        end = matches[i + 1].start() if i + 1 < len(matches) else len(text)
        chunk = text[m.end() : end].strip()
        if not chunk:
            raise ParseError(f"variant {indices[i]} is empty", raw_text=text)
        variants.append(chunk)
    preamble = text[: matches[0].start()].strip()
    return variants, preamble


def parse_variants(completion: RawCompletion | str, expected_n: int) -> list[str]:
    """Texts between the ``Augmented Response(s) k:`` markers, in order.

    Markers tolerate case, flexible whitespace, and singular/plural; anything
    else (missing, extra, duplicated, or reordered markers) raises with the
    raw completion attached rather than returning a partial list.
    """
    text = completion.text if isinstance(completion, RawCompletion) else completion
    variants, preamble = split_completion(text, expected_n)
    if preamble:
        logger.debug("discarded completion preamble (%d chars)", len(preamble))
    return variants
