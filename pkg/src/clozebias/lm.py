"""Per-token log-probabilities for concrete sentences, from pluggable providers.

Three providers share one record shape (see docs/formats.md): a JSON-lines
logprob file, an HTTP endpoint speaking `POST /v1/logprobs`, and a seeded
deterministic mock for offline tests. Log-probabilities are natural log
throughout.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, MutableMapping, Protocol, Sequence

from clozebias.errors import (
    DegenerateInputError,
    FormatError,
    InvalidSpanError,
    MissingScoreError,
    TransportError,
)

LOGPROBS_ENDPOINT = "/v1/logprobs"
ENV_LM_URL = "CLOZEBIAS_LM_URL"


def sentence_id(model_id: str, text: str) -> str:
    """Stable 16-hex-char id of a (model, sentence) pair."""
    h = hashlib.sha256(f"{model_id}\x00{text}".encode("utf-8"))
    return h.hexdigest()[:16]


@dataclass(frozen=True)
class SentenceScore:
    """Token-level scores for one sentence from one model.

    logprobs[i] = ln P(token_i | tokens_<i); index 0 has no conditioning
    context and is None. Offsets are code-point [start, end) slices of
    `text`; tokens reconstruct the sentence by slicing (detokenization
    rule "offset-slices").
    """

    sentence_id: str
    model_id: str
    text: str
    tokens: tuple[str, ...]
    logprobs: tuple[float | None, ...]
    token_offsets: tuple[tuple[int, int], ...]
    detokenization: str = field(default="offset-slices", compare=False)

    def __post_init__(self):
        _validate_score(self)


def _validate_score(s: SentenceScore) -> None:
    if not s.tokens:
        raise FormatError(f"sentence {s.sentence_id!r}: no tokens")
    if not (len(s.tokens) == len(s.logprobs) == len(s.token_offsets)):
        raise FormatError(
            f"sentence {s.sentence_id!r}: tokens/logprobs/offsets length mismatch"
        )
    for i, lp in enumerate(s.logprobs):
        if lp is None:
            continue
        if not isinstance(lp, float) or math.isnan(lp) or lp > 0.0:
            raise FormatError(
                f"sentence {s.sentence_id!r}: logprob {lp!r} at index {i} is not a float <= 0"
            )
    prev_end = None
    for i, (a, b) in enumerate(s.token_offsets):
        if not (0 <= a < b <= len(s.text)):
            raise FormatError(f"sentence {s.sentence_id!r}: offset {(a, b)} out of range")
        if s.tokens[i] != s.text[a:b]:
            raise FormatError(
                f"sentence {s.sentence_id!r}: token {i} does not match its text slice"
            )
        if prev_end is not None:
            if a < prev_end:
                raise FormatError(f"sentence {s.sentence_id!r}: overlapping offsets at token {i}")
            if a > prev_end and not s.text[prev_end:a].isspace():
                raise FormatError(
                    f"sentence {s.sentence_id!r}: non-whitespace gap before token {i}"
                )
        prev_end = b
    head = s.text[: s.token_offsets[0][0]]
    tail = s.text[s.token_offsets[-1][1] :]
    if (head and not head.isspace()) or (tail and not tail.isspace()):
        raise FormatError(f"sentence {s.sentence_id!r}: offsets do not cover the text")
    expected = sentence_id(s.model_id, s.text)
    if s.sentence_id != expected:
        raise FormatError(
            f"sentence_id {s.sentence_id!r} does not match hash {expected!r} of (model_id, text)"
        )


def parse_score_record(obj: object) -> SentenceScore:
    """Validate one wire/file record and build a SentenceScore."""
    if not isinstance(obj, dict):
        raise FormatError(f"logprob record must be an object, got {type(obj).__name__}")
    required = ("sentence_id", "model_id", "text", "tokens", "logprobs", "token_offsets")
    missing = [k for k in required if k not in obj]
    if missing:
        raise FormatError(f"logprob record missing fields: {', '.join(missing)}")
    try:
        logprobs = tuple(None if lp is None else float(lp) for lp in obj["logprobs"])
        offsets = tuple((int(a), int(b)) for a, b in obj["token_offsets"])
        tokens = tuple(str(t) for t in obj["tokens"])
    except (TypeError, ValueError) as err:
        raise FormatError(f"malformed logprob record: {err}") from None
    return SentenceScore(
        sentence_id=str(obj["sentence_id"]),
        model_id=str(obj["model_id"]),
        text=str(obj["text"]),
        tokens=tokens,
        logprobs=logprobs,
        token_offsets=offsets,
    )


def score_to_record(s: SentenceScore) -> dict:
    return {
        "sentence_id": s.sentence_id,
        "model_id": s.model_id,
        "text": s.text,
        "tokens": list(s.tokens),
        "logprobs": list(s.logprobs),
        "token_offsets": [list(pair) for pair in s.token_offsets],
    }


@dataclass(frozen=True)
class PronounSpan:
    """Half-open token-index range locating the pronoun in a SentenceScore."""

    token_start: int
    token_end: int

    def __post_init__(self):
        if not (0 < self.token_start < self.token_end):
            raise InvalidSpanError(
                f"invalid span [{self.token_start}, {self.token_end}): "
                "must satisfy 0 < start < end (index 0 has no conditioning context)"
            )


# --- providers --------------------------------------------------------------


class Provider(Protocol):
    model_id: str

    def fetch(self, texts: Sequence[str]) -> list[SentenceScore]: ...


# one CJK char | a run of non-CJK word chars | one punctuation char: keeps
# Japanese pronouns alignable without a real tokenizer
_CJK = "぀-ヿ㐀-䶿一-鿿豈-﫿"
_TOKEN_RE = re.compile(rf"[{_CJK}]|[^\W{_CJK}]+|[^\w\s]")


def _stable_hash(seed: int, prefix: str, token: str) -> int:
    digest = hashlib.sha256(f"{seed}\x1f{prefix}\x1f{token}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


class MockProvider:
    """Deterministic offline provider: logprob = -(1 + (hash mod 1000)/1000)."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.model_id = f"mock-{seed}"

    def fetch(self, texts: Sequence[str]) -> list[SentenceScore]:
        return [self._score(t) for t in texts]

    def _score(self, text: str) -> SentenceScore:
        matches = list(_TOKEN_RE.finditer(text))
        if not matches:
            raise DegenerateInputError(f"mock provider cannot tokenize {text!r}")
        tokens = tuple(m.group(0) for m in matches)
        offsets = tuple((m.start(), m.end()) for m in matches)
        logprobs: list[float | None] = [None]
        for m in matches[1:]:
            h = _stable_hash(self.seed, text[: m.start()], m.group(0))
            logprobs.append(-(1.0 + (h % 1000) / 1000.0))
        return SentenceScore(
            sentence_id=sentence_id(self.model_id, text),
            model_id=self.model_id,
            text=text,
            tokens=tokens,
            logprobs=tuple(logprobs),
            token_offsets=offsets,
        )


class FileProvider:
    """Serves scores from a JSON-lines logprob file (one model per file)."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._by_id: dict[str, SentenceScore] = {}
        model_ids = set()
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as err:
                    raise FormatError(f"{self.path}:{lineno}: invalid JSON: {err}") from None
                try:
                    score = parse_score_record(obj)
                except FormatError as err:
                    raise FormatError(f"{self.path}:{lineno}: {err}") from None
                model_ids.add(score.model_id)
                self._by_id.setdefault(score.sentence_id, score)
        if not self._by_id:
            raise FormatError(f"no logprob records in {self.path}")
        if len(model_ids) > 1:
            raise FormatError(
                f"{self.path} mixes model_ids {sorted(model_ids)}; one model per file"
            )
        self.model_id = next(iter(model_ids))

    def fetch(self, texts: Sequence[str]) -> list[SentenceScore]:
        out = []
        for text in texts:
            sid = sentence_id(self.model_id, text)
            score = self._by_id.get(sid)
            if score is None:
                raise MissingScoreError(
                    f"no logprob record for sentence {text!r} (id {sid}) in {self.path}"
                )
            out.append(score)
        return out


class HTTPProvider:
    """POST /v1/logprobs client with bounded in-flight requests and retries."""

    def __init__(
        self,
        url: str,
        model_id: str,
        *,
        batch_size: int = 32,
        max_in_flight: int = 4,
        retries: int = 2,
        timeout: float = 60.0,
    ):
        self.url = url.rstrip("/")
        self.model_id = model_id
        self.batch_size = max(1, batch_size)
        self.max_in_flight = max(1, max_in_flight)
        self.retries = retries
        self.timeout = timeout

    def fetch(self, texts: Sequence[str]) -> list[SentenceScore]:
        chunks = [
            list(texts[i : i + self.batch_size])
            for i in range(0, len(texts), self.batch_size)
        ]
        if len(chunks) <= 1:
            results = [self._post(chunk) for chunk in chunks]
        else:
            with ThreadPoolExecutor(max_workers=self.max_in_flight) as pool:
                results = list(pool.map(self._post, chunks))
        return [score for batch in results for score in batch]

    def _post(self, texts: list[str]) -> list[SentenceScore]:
        import requests

        endpoint = self.url + LOGPROBS_ENDPOINT
        payload = {"model_id": self.model_id, "texts": texts}
        last_error = "unknown"
        for attempt in range(self.retries + 1):
            try:
                resp = requests.post(endpoint, json=payload, timeout=self.timeout)
            except requests.RequestException as err:
                last_error = str(err)
                continue
            if resp.status_code >= 500:
                last_error = f"HTTP {resp.status_code}"
                continue
            if resp.status_code != 200:
                raise TransportError(
                    f"{endpoint} returned HTTP {resp.status_code}: {_error_message(resp)}",
                    url=endpoint,
                    retries=attempt,
                )
            return self._parse(resp, texts, endpoint)
        raise TransportError(
            f"{endpoint} unreachable after {self.retries + 1} attempts: {last_error}",
            url=endpoint,
            retries=self.retries + 1,
        )

    def _parse(self, resp, texts: list[str], endpoint: str) -> list[SentenceScore]:
        try:
            body = resp.json()
        except ValueError:
            raise TransportError(f"{endpoint}: response is not JSON", url=endpoint) from None
        if not isinstance(body, list) or len(body) != len(texts):
            raise TransportError(
                f"{endpoint}: expected {len(texts)} records, got "
                f"{len(body) if isinstance(body, list) else type(body).__name__}",
                url=endpoint,
            )
        return [parse_score_record(obj) for obj in body]


def _error_message(resp) -> str:
    try:
        return str(resp.json()["error"]["message"])
    except Exception:
        return resp.text[:200]


# --- scoring interface ------------------------------------------------------


class Scorer:
    """Caching front end over a provider; one cache entry per sentence_id."""

    def __init__(self, provider: Provider):
        self.provider = provider
        self._cache: MutableMapping[str, SentenceScore] = {}
        self._lock = threading.Lock()

    @property
    def model_id(self) -> str:
        return self.provider.model_id

    def score(self, text: str) -> SentenceScore:
        return self.score_many([text])[0]

    def score_many(self, texts: Sequence[str]) -> list[SentenceScore]:
        ids = [sentence_id(self.provider.model_id, t) for t in texts]
        todo: dict[str, str] = {}
        for sid, text in zip(ids, texts):
            if sid not in self._cache:
                todo.setdefault(sid, text)
        if todo:
            fetched = self.provider.fetch(list(todo.values()))
            with self._lock:
                for score in fetched:
                    self._cache[score.sentence_id] = score
        return [self._cache[sid] for sid in ids]


def score_sentence(provider: Provider, sentence: str) -> SentenceScore:
    """One-shot scoring without a shared cache; see Scorer for cached use."""
    return provider.fetch([sentence])[0]


def pronoun_prob(
    score: SentenceScore, span: PronounSpan, length_normalize: bool = False
) -> float:
    """Probability of the (possibly multi-token) pronoun span.

    Default is the raw product of token probabilities; length_normalize
    takes the per-token geometric mean instead, for comparing pronouns
    that tokenize to different lengths.
    """
    if span.token_end > len(score.tokens):
        raise InvalidSpanError(
            f"span end {span.token_end} beyond {len(score.tokens)} tokens"
        )
    window = score.logprobs[span.token_start : span.token_end]
    if any(lp is None for lp in window):
        raise InvalidSpanError(f"span {span} covers an unscored token")
    total = math.fsum(window)
    if length_normalize:
        total /= len(window)
    return math.exp(total)


def sentence_mean_prob(score: SentenceScore, mode: str = "mean-prob") -> float:
    """Aggregate token probabilities over the sentence, excluding the first word.

    mean-prob averages the probabilities; geo-mean exponentiates the mean
    log-probability.
    """
    lps = score.logprobs[1:]
    if not lps:
        raise DegenerateInputError(f"sentence {score.sentence_id!r} has no scored tokens")
    if any(lp is None for lp in lps):
        raise DegenerateInputError(f"sentence {score.sentence_id!r} has unscored tokens")
    if mode == "mean-prob":
        return math.fsum(math.exp(lp) for lp in lps) / len(lps)
    if mode == "geo-mean":
        return math.exp(math.fsum(lps) / len(lps))
    raise ValueError(f"unknown aggregation mode: {mode!r}")


def char_range_to_span(score: SentenceScore, char_start: int, char_end: int) -> PronounSpan:
    """Map a character range onto whole tokens.

    The first covered token may carry leading whitespace (BPE-style " him"
    tokens); any other misalignment is an error rather than a silent split.
    """
    offsets = score.token_offsets
    begin = None
    for i, (a, b) in enumerate(offsets):
        if b <= char_start:
            continue
        if a == char_start or (a < char_start and score.text[a:char_start].isspace()):
            begin = i
        break
    if begin is None:
        raise InvalidSpanError(
            f"characters [{char_start}, {char_end}) of {score.text!r} do not start a token"
        )
    j = begin
    while j < len(offsets) and offsets[j][1] < char_end:
        j += 1
    if j >= len(offsets) or offsets[j][1] != char_end:
        raise InvalidSpanError(
            f"characters [{char_start}, {char_end}) of {score.text!r} do not end on a "
            "token boundary"
        )
    return PronounSpan(begin, j + 1)


def write_score_file(scores: Iterable[SentenceScore], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for score in scores:
            fh.write(json.dumps(score_to_record(score), ensure_ascii=False) + "\n")
