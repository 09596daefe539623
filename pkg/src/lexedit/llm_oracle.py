"""Complex-word pseudo labels from a language-model oracle.

Builds the fixed identification prompt, parses bracketed word-list responses
into token-aligned K/M labels, caches responses in an append-only JSON-lines
file, and provides both an HTTP client and a deterministic lexicon-based mock
for offline runs.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from .corpus import SentenceTokens
from .edit_predictor import KEEP, MASK, EditSequence

PROMPT_VERSION = "cwi-v1"

_PROMPT_TEMPLATE = (
    "Prompt:\n"
    "    Please identify the complex words in the following sentence.\n"
    "Sentence:\n"
    "    {sentence}\n"
    "Output format:\n"
    "    [w1, w2, ...]\n"
)


class OracleError(Exception):
    """Oracle misconfiguration or a hard, non-retryable failure."""


class TransientOracleError(OracleError):
    """Retryable transport-level failure (timeouts, connection loss, 5xx)."""


@dataclass(frozen=True)
class CwiPrompt:
    text: str


@dataclass(frozen=True)
class OracleResponse:
    raw: str
    words: tuple[str, ...]
    usable: bool

    def __post_init__(self):
        if not self.usable and self.words:
            raise ValueError("an unusable response must carry no words")


@dataclass(frozen=True)
class PseudoLabels:
    """Token-aligned pseudo edits plus which positions the verdict covers."""

    labels: EditSequence
    align_mask: tuple[bool, ...]

    def __post_init__(self):
        if len(self.labels) != len(self.align_mask):
            raise ValueError("labels and align_mask lengths differ")

    def aligned_count(self) -> int:
        return sum(self.align_mask)


def build_cwi_prompt(sentence: SentenceTokens) -> CwiPrompt:
    """Render the identification prompt; byte-stable for a given sentence."""
    return CwiPrompt(text=_PROMPT_TEMPLATE.format(sentence=sentence.text()))


def sentence_digest(sentence: SentenceTokens, prompt_version: str = PROMPT_VERSION) -> str:
    payload = prompt_version + "\n" + " ".join(sentence.tokens)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


_WORD_TRIM = re.compile(r"^[\W_]+|[\W_]+$", re.UNICODE)


def _normalize_word(word: str) -> str:
    return _WORD_TRIM.sub("", word.strip()).lower()


def _extract_bracket_list(raw: str) -> str | None:
    """Inner text of the first balanced [...] pair, or None."""
    start = raw.find("[")
    if start < 0:
        return None
    depth = 0
    for i in range(start, len(raw)):
        if raw[i] == "[":
            depth += 1
        elif raw[i] == "]":
            depth -= 1
            if depth == 0:
                return raw[start + 1 : i]
    return None


def response_for(raw: str, sentence: SentenceTokens) -> OracleResponse:
    """Interpret a raw oracle reply against one sentence.

    Usable means a bracketed list was found and its content aligns: either the
    list is empty, or at least one listed word matches a token.  Matching is
    case-insensitive, punctuation-stripped, whole-token.
    """
    inner = _extract_bracket_list(raw)
    if inner is None:
        return OracleResponse(raw=raw, words=(), usable=False)
    listed = tuple(w for part in inner.split(",") if (w := _normalize_word(part)))
    if not listed:
        return OracleResponse(raw=raw, words=(), usable=True)
    norm_tokens = {_normalize_word(t) for t in sentence.tokens}
    if not any(w in norm_tokens for w in listed):
        return OracleResponse(raw=raw, words=(), usable=False)
    return OracleResponse(raw=raw, words=listed, usable=True)


def parse_response(raw: str, sentence: SentenceTokens) -> PseudoLabels:
    """Token-aligned labels from a raw reply.

    Every matched word marks all of its occurrences M; unlisted tokens are K.
    An unusable reply (no bracket, or nothing listed matched) yields all-K
    labels with an all-false alignment so the sentence contributes nothing.
    """
    n = len(sentence)
    response = response_for(raw, sentence)
    if not response.usable:
        return PseudoLabels(
            labels=EditSequence((KEEP,) * n),
            align_mask=(False,) * n,
        )
    norm_tokens = [_normalize_word(t) for t in sentence.tokens]
    marked = set()
    for word in response.words:
        for i, tok in enumerate(norm_tokens):
            if tok == word:
                marked.add(i)
    labels = tuple(MASK if i in marked else KEEP for i in range(n))
    return PseudoLabels(labels=EditSequence(labels), align_mask=(True,) * n)


class OracleCache:
    """Append-only JSON-lines store keyed by sentence digest and prompt version."""

    def __init__(self, path: str | Path | None = None):
        self._path = Path(path) if path else None
        self._entries: dict[str, OracleResponse] = {}
        self._lock = threading.Lock()
        if self._path and self._path.exists():
            with open(self._path, encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    record = json.loads(line)
                    self._entries[record["digest"]] = OracleResponse(
                        raw=record["raw"],
                        words=tuple(record["words"]),
                        usable=record["usable"],
                    )

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, digest: str) -> OracleResponse | None:
        return self._entries.get(digest)

    def put(self, digest: str, response: OracleResponse, prompt_version: str = PROMPT_VERSION) -> None:
        with self._lock:
            if digest in self._entries:
                return
            self._entries[digest] = response
            if self._path:
                record = {
                    "digest": digest,
                    "prompt_version": prompt_version,
                    "raw": response.raw,
                    "words": list(response.words),
                    "usable": response.usable,
                }
                with open(self._path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record) + "\n")
                    fh.flush()


def annotate(
    sentences: list[SentenceTokens],
    client,
    cache: OracleCache | None = None,
    *,
    retries: int = 3,
    backoff: float = 0.25,
    max_concurrency: int = 1,
) -> list[PseudoLabels]:
    """Pseudo-label sentences, cache first, with bounded retry on transient failures.

    A reply that stays unusable after retries is cached as such and yields an
    all-false alignment.  Transport failures that outlive the retry budget are
    a hard error listing every sentence left uncovered.
    """
    if cache is None:
        cache = OracleCache()
    results: list[PseudoLabels | None] = [None] * len(sentences)
    pending: list[tuple[int, SentenceTokens, str]] = []
    for i, sentence in enumerate(sentences):
        digest = sentence_digest(sentence)
        hit = cache.get(digest)
        if hit is not None:
            results[i] = parse_response(hit.raw, sentence)
        else:
            pending.append((i, sentence, digest))

    unreachable: list[SentenceTokens] = []

    def fetch(item):
        i, sentence, digest = item
        prompt = build_cwi_prompt(sentence).text
        response = None
        for attempt in range(retries + 1):
            if attempt and backoff > 0:
                time.sleep(backoff * 2 ** (attempt - 1))
            try:
                raw = client(prompt)
            except TransientOracleError:
                continue
            response = response_for(raw, sentence)
            if response.usable:
                break
        return i, sentence, digest, response

    if max_concurrency > 1 and len(pending) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=max_concurrency) as pool:
            outcomes = list(pool.map(fetch, pending))
    else:
        outcomes = [fetch(item) for item in pending]

    for i, sentence, digest, response in outcomes:
        if response is None:
            unreachable.append(sentence)
            continue
        cache.put(digest, response)
        results[i] = parse_response(response.raw, sentence)

    if unreachable:
        listing = "; ".join(s.text() for s in unreachable[:10])
        more = f" (+{len(unreachable) - 10} more)" if len(unreachable) > 10 else ""
        raise OracleError(f"oracle unreachable for {len(unreachable)} sentences: {listing}{more}")
    return results  # type: ignore[return-value]


_SENTENCE_LINE = re.compile(r"Sentence:\s*\n\s*(.+)")


class MockOracleClient:
    """Deterministic lexicon oracle with independent per-word verdict flips.

    A distinct word in a sentence is labeled complex iff it belongs to the
    lexicon, then the verdict flips with probability flip_rate, decided by a
    hash of (seed, sentence, word) so repeated calls agree exactly.
    """

    def __init__(self, lexicon, flip_rate: float = 0.0, seed: int = 0):
        if not 0.0 <= flip_rate < 0.5:
            raise OracleError(f"flip_rate must be in [0, 0.5), got {flip_rate}")
        self.lexicon = {w.lower() for w in lexicon}
        self.flip_rate = flip_rate
        self.seed = seed
        self.calls = 0

    def would_flip(self, sentence_text: str, word: str) -> bool:
        key = f"{self.seed}|{sentence_text}|{word}".encode("utf-8")
        bucket = int.from_bytes(hashlib.sha256(key).digest()[:8], "big")
        return bucket / 2**64 < self.flip_rate

    def verdicts(self, sentence_text: str) -> list[tuple[str, bool]]:
        seen = set()
        out = []
        for token in sentence_text.split():
            word = _normalize_word(token)
            if not word or word in seen:
                continue
            seen.add(word)
            verdict = word in self.lexicon
            if self.would_flip(sentence_text, word):
                verdict = not verdict
            out.append((word, verdict))
        return out

    def __call__(self, prompt: str) -> str:
        self.calls += 1
        match = _SENTENCE_LINE.search(prompt)
        if match is None:
            raise OracleError("prompt does not contain a Sentence: block")
        sentence_text = match.group(1).strip()
        words = [w for w, verdict in self.verdicts(sentence_text) if verdict]
        return "[" + ", ".join(words) + "]"


def mock_oracle(lexicon, flip_rate: float = 0.0, seed: int = 0) -> MockOracleClient:
    return MockOracleClient(lexicon, flip_rate=flip_rate, seed=seed)


class HttpOracleClient:
    """Minimal chat-completions client; the API key comes from the environment."""

    def __init__(self, base_url: str, model: str, api_key_env: str = "ORACLE_API_KEY",
                 timeout: float = 30.0):
        if not base_url:
            raise OracleError("base_url must be configured for the HTTP oracle")
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout

    def __call__(self, prompt: str) -> str:
        import requests

        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        body = {"model": self.model, "messages": [{"role": "user", "content": prompt}]}
        try:
            resp = requests.post(
                f"{self.base_url}/chat/completions", json=body, headers=headers, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise TransientOracleError(f"oracle request failed: {exc}") from exc
        if resp.status_code >= 500:
            raise TransientOracleError(f"oracle server error {resp.status_code}")
        if resp.status_code != 200:
            raise OracleError(f"oracle request rejected with status {resp.status_code}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise OracleError(f"malformed oracle response: {exc}") from exc
