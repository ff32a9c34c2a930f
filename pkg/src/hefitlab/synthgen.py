"""Synthetic labelled tweets: prompt, chat-completion client, parsing, batch selection.

The endpoint speaks the usual chat-completion shape::

    POST {"model": ..., "messages": [{"role": "user", "content": ...}], "temperature": ...}
    ->   {"choices": [{"message": {"content": ...}}]}

with a bearer token read from an environment variable.  :class:`MockChatClient`
answers the same calls offline and deterministically.
"""

from __future__ import annotations

import hashlib
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import httpx
import numpy as np

from .data import LANGUAGE_NAMES, Dataset, LabeledText
from .errors import (
    AuthError,
    EndpointTimeout,
    LabError,
    MalformedResponse,
    ParseError,
    ResourceError,
    TransportError,
    ValidationError,
)
from .fixtures import AFFECTION_EMOJI, LEXICON, MENTION, make_tweet

log = logging.getLogger(__name__)

SAMPLES_PER_BATCH = 10
N_BATCHES = 10
KEEP_BATCHES = 5
SYNTH_SET_SIZE = KEEP_BATCHES * SAMPLES_PER_BATCH

DEFAULT_STATS = {"mean": 2.1, "min": 1, "max": 5, "std_dev": 0.9}
TYPE_NOTE = (
    "Short Tweets (Maximum of 10 words). \n"
    "The tweets may include errors slang, emojis, mentions and hashtags."
)
FORMALITY = "Informal"
CRITERION = (
    "Intimacy is a fundamental aspect of how we relate to others in social settings. "
    "Language encodes the social information of intimacy through the privacy of the topics "
    "and other cues such as linguistic hedging and very importantly swearing."
)
REFERENCE_EXAMPLES: tuple[tuple[str, float], ...] = (
    ("@user And then you change into your NSFW account and like them ", 2.6),
    ("But I, I can feel it take a hold I vote #WatermelonSugar as #BestMusicVideo at the #iHeartAwards", 1.0),
    ("Who should I draw on my live to entertain the horny mfs I know are gonna show up", 3.0),
    ("@user @mehdirhasan in addition, how can you change a rule written by god. he didn't just change his mind", 2.2),
    ("@user Holy crap! Suzi took that photo! That’s hilarious!", 2.8),
    ("Dragon angling darma", 2.25),
    ("like seriously just say ur pretending to like her cause of ariana and leave", 1.75),
    ("@user I think I fell in love with you", 4.8),
    ("@user sis didn't you get your nipples pierced??? ur the bravest woman alive already. whats a lil ear needle ", 4.4),
    ("I need you mf to step your game up cause the way this man came at me I almost threw up .", 2.33),
    ("@user @user This is how it would be for me. It's humiliating, and embarrassing, and a waste of my time and energy...", 3.2),
    ("@user Beyoncé is overrated", 1.2),
    ("lowkey wanna talk to him just like the old days", 2.5),
)


@dataclass(frozen=True)
class PromptSpec:
    target_language: str
    reference_examples: tuple[tuple[str, float], ...] = REFERENCE_EXAMPLES
    stats: tuple[tuple[str, float], ...] = tuple(DEFAULT_STATS.items())
    samples_per_batch: int = SAMPLES_PER_BATCH
    formality: str = FORMALITY
    text_type: str = TYPE_NOTE
    criterion: str = CRITERION
    strict: bool = True

    def validate(self) -> None:
        if self.strict:
            if not self.reference_examples:
                raise ValidationError("the strict preset needs reference examples")
            if self.samples_per_batch != SAMPLES_PER_BATCH:
                raise ValidationError("the strict preset asks for 10 samples per batch")
            if dict(self.stats) != DEFAULT_STATS:
                raise ValidationError("the strict preset uses mean 2.1, min 1, max 5, std 0.9")
        if self.samples_per_batch < 1:
            raise ValidationError("samples_per_batch must be positive")


def _num(value: float) -> str:
    return f"{value:g}"


def build_example_line(text: str, score: float) -> str:
    return f"{text}\tIntimacy Score: {_num(score)}/5"


def build_prompt(spec: PromptSpec) -> str:
    spec.validate()
    stats = dict(spec.stats)
    language = LANGUAGE_NAMES.get(spec.target_language, spec.target_language)
    lines = [
        f"Type of Text: {spec.text_type}",
        "",
        f"Formality: {spec.formality}",
        "",
        f"Intimacy criterion: {spec.criterion}",
        "",
        "Intimacy distribution statistics:",
        f"Mean: {_num(stats['mean'])}",
        f"Minimum: {_num(stats['min'])}",
        f"Maximum: {_num(stats['max'])}",
        f"Standard Deviation: {_num(stats['std_dev'])}",
        "",
        "Examples:",
        *(build_example_line(t, s) for t, s in spec.reference_examples),
        "",
        f"Generate {spec.samples_per_batch} more Tweet samples in {language} "
        "including their Intimacy Score according to the Intimacy criterion:",
    ]
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

_LINE = re.compile(r"^(?P<text>.*?\S)\s+Intimacy Score:\s*(?P<score>[0-9]+(?:\.[0-9]+)?)\s*/\s*5\s*$")


@dataclass
class GeneratedBatch:
    batch_id: int
    language: str
    items: list[LabeledText]
    raw: str
    diagnostics: list[str] = field(default_factory=list)

    @property
    def scores(self) -> np.ndarray:
        return np.array([it.score for it in self.items])


def parse_generated(raw: str, language: str, batch_id: int = 0) -> GeneratedBatch:
    """Pull ``<text> Intimacy Score: <s>/5`` lines out of a completion.

    Malformed lines and out-of-range scores are dropped with a diagnostic.
    """
    items: list[LabeledText] = []
    diagnostics: list[str] = []
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        m = _LINE.match(line.strip())
        if m is None:
            diagnostics.append(f"line {lineno}: no intimacy score found: {line.strip()[:60]!r}")
            continue
        score = float(m.group("score"))
        if not 1.0 <= score <= 5.0:
            diagnostics.append(f"line {lineno}: score {score} outside [1, 5]")
            continue
        item_id = f"synth-{language}-b{batch_id:02d}-{len(items):02d}"
        items.append(LabeledText(item_id, m.group("text").strip(), language, score, "synthetic"))
    if not items:
        raise ParseError(f"no parseable samples in batch {batch_id}", diagnostics)
    for d in diagnostics:
        log.debug("batch %d: %s", batch_id, d)
    return GeneratedBatch(batch_id, language, items, raw, diagnostics)


# ---------------------------------------------------------------------------
# clients
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GenerationClientConfig:
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-3.5-turbo"
    temperature: float = 1.0
    auth_env: str = "OPENAI_API_KEY"
    timeout: float = 60.0
    retries: int = 3
    backoff: float = 1.0
    max_concurrent: int = 4


@dataclass
class AuditEntry:
    attempt: int
    request: dict
    status: int | None
    response: str | None
    error: str | None


class ChatClient(Protocol):
    audit: list[AuditEntry]

    def complete(self, prompt: str) -> str: ...


class HTTPChatClient:
    """Blocking chat-completion client with retry on transient failures."""

    def __init__(
        self,
        config: GenerationClientConfig,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        token = os.environ.get(config.auth_env)
        if not token:
            raise AuthError(f"environment variable {config.auth_env} is not set")
        self.config = config
        self.audit: list[AuditEntry] = []
        self._token = token
        self._client = httpx.Client(transport=transport, timeout=config.timeout)
        self._slots = threading.BoundedSemaphore(config.max_concurrent)
        self._lock = threading.Lock()
        self._sleep = sleep

    def _record(self, entry: AuditEntry) -> None:
        with self._lock:
            self.audit.append(entry)
        log.info("generation attempt %d status=%s error=%s", entry.attempt, entry.status, entry.error)

    def complete(self, prompt: str) -> str:
        body = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
        }
        headers = {"Authorization": f"Bearer {self._token}"}
        last: TransportError | None = None
        for attempt in range(1, self.config.retries + 2):
            status = text = None
            try:
                with self._slots:
                    resp = self._client.post(self.config.endpoint, json=body, headers=headers)
                status, text = resp.status_code, resp.text
                if status in (401, 403):
                    raise AuthError(f"endpoint rejected credentials (HTTP {status})")
                if status == 429 or status >= 500:
                    raise TransportError(f"transient HTTP {status}")
                if status >= 400:
                    raise MalformedResponse(f"HTTP {status}: {text[:200]}")
                content = _extract_content(resp)
                self._record(AuditEntry(attempt, body, status, text, None))
                return content
            except httpx.TimeoutException as exc:
                last = EndpointTimeout(f"request timed out: {exc}")
            except httpx.TransportError as exc:
                last = TransportError(f"endpoint unreachable: {exc}")
            except (AuthError, MalformedResponse) as exc:
                self._record(AuditEntry(attempt, body, status, text, str(exc)))
                raise
            except TransportError as exc:
                last = exc
            self._record(AuditEntry(attempt, body, status, text, str(last)))
            if attempt <= self.config.retries:
                self._sleep(self.config.backoff * 2 ** (attempt - 1))
        assert last is not None
        raise type(last)(f"{last} (after {self.config.retries + 1} attempts)")

    def close(self) -> None:
        self._client.close()


def _extract_content(resp: httpx.Response) -> str:
    try:
        return str(resp.json()["choices"][0]["message"]["content"])
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise MalformedResponse(f"response is not a chat completion: {resp.text[:200]!r}") from exc


_LANG_BY_NAME = {name: code for code, name in LANGUAGE_NAMES.items()}
_TARGET = re.compile(r"Generate \d+ more Tweet samples in (?P<lang>[A-Za-z]+)")


class MockChatClient:
    """Offline stand-in: answers with fixture tweets in the requested language.

    Output depends only on the prompt and the call count for that prompt.
    Every completion starts with a chatty preamble line that the parser must
    discard.  Batches differ in how intimate they are, so selection matters.
    """

    def __init__(self, seed: int = 0, samples: int = SAMPLES_PER_BATCH) -> None:
        self.seed = seed
        self.samples = samples
        self.audit: list[AuditEntry] = []
        self._calls: dict[str, int] = {}
        self._lock = threading.Lock()

    def complete(self, prompt: str) -> str:
        m = _TARGET.search(prompt)
        if m is None or m.group("lang") not in _LANG_BY_NAME:
            raise MalformedResponse("mock client could not find a target language in the prompt")
        language = _LANG_BY_NAME[m.group("lang")]
        digest = hashlib.sha256(prompt.encode("utf-8")).digest()
        with self._lock:
            call = self._calls.get(digest.hex(), 0)
            self._calls[digest.hex()] = call + 1
        rng = np.random.default_rng([self.seed, int.from_bytes(digest[:8], "little"), call])
        shift = rng.normal(0.0, 0.6)
        lines = [f"Sure! Here are {self.samples} more tweets in {m.group('lang')}:"]
        for _ in range(self.samples):
            text = make_tweet(language, rng)
            score = min(5.0, max(1.0, _mock_score(text, language) + shift + rng.normal(0.0, 0.4)))
            lines.append(build_example_line(text, round(score, 2)))
        content = "\n".join(lines)
        request = {"model": "mock", "messages": [{"role": "user", "content": prompt}], "temperature": 1.0}
        with self._lock:
            self.audit.append(AuditEntry(len(self.audit) + 1, request, 200, content, None))
        return content


def _mock_score(text: str, language: str) -> float:
    words = text.split()
    intimate = set(LEXICON[language]["intimate"])
    return 1.0 + 0.8 * sum(w in intimate for w in words) + 0.4 * (words[:1] == [MENTION]) + 0.3 * sum(
        w in AFFECTION_EMOJI for w in words
    )


def generate_batch(client: ChatClient, prompt: str) -> str:
    return client.complete(prompt)


# ---------------------------------------------------------------------------
# selection
# ---------------------------------------------------------------------------

Selector = Callable[[Sequence[GeneratedBatch], int], list[GeneratedBatch]]


def stats_distance(batch: GeneratedBatch, target_mean: float = 2.1, target_std: float = 0.9) -> float:
    """Squared z-distance of a batch's (mean, population std) from the targets, in units of ``target_std``."""
    s = batch.scores
    return ((s.mean() - target_mean) / target_std) ** 2 + ((s.std() - target_std) / target_std) ** 2


def stats_proxy_selector(batches: Sequence[GeneratedBatch], k: int) -> list[GeneratedBatch]:
    """Keep the k batches closest to the target statistics; ties go to the lower batch id."""
    ranked = sorted(batches, key=lambda b: (stats_distance(b), b.batch_id))
    return ranked[:k]


class FileSelector:
    """Reads the chosen batch ids from a file, one id per line."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)

    def __call__(self, batches: Sequence[GeneratedBatch], k: int) -> list[GeneratedBatch]:
        if not self.path.exists():
            raise ResourceError(f"selection file {self.path} does not exist")
        lines = [ln.strip() for ln in self.path.read_text(encoding="utf-8").splitlines() if ln.strip()]
        if len(lines) != k:
            raise ValidationError(f"{self.path} must list exactly {k} batch ids, found {len(lines)}")
        try:
            wanted = [int(x) for x in lines]
        except ValueError:
            raise ValidationError(f"{self.path} contains a non-integer batch id") from None
        if len(set(wanted)) != k:
            raise ValidationError(f"{self.path} repeats a batch id")
        by_id = {b.batch_id: b for b in batches}
        unknown = [w for w in wanted if w not in by_id]
        if unknown:
            raise ValidationError(f"{self.path} names unknown batch ids {unknown}")
        return [by_id[w] for w in wanted]


def select_batches(
    batches: Sequence[GeneratedBatch],
    selector: Selector | None = None,
    k: int = KEEP_BATCHES,
    strict: bool = True,
) -> list[GeneratedBatch]:
    if strict and len(batches) != N_BATCHES:
        raise ValidationError(f"the strict preset selects from exactly {N_BATCHES} batches, got {len(batches)}")
    if len(batches) < k:
        raise ResourceError(f"need at least {k} batches to select from, got {len(batches)}")
    chosen = (selector or stats_proxy_selector)(batches, k)
    if len(chosen) != k:
        raise ValidationError(f"selector returned {len(chosen)} batches, expected {k}")
    return list(chosen)


class SynthesisError(LabError):
    def __init__(self, stage: str, language: str, cause: Exception) -> None:
        self.stage = stage
        self.language = language
        super().__init__(f"{language}: {stage} failed: {cause}")


def build_synth_set(
    language: str,
    client: ChatClient,
    selector: Selector | None = None,
    spec: PromptSpec | None = None,
) -> Dataset:
    """Generate 10 batches, keep the 5 best, return exactly 50 synthetic items."""
    spec = spec or PromptSpec(language)
    try:
        prompt = build_prompt(spec)
    except LabError as exc:
        raise SynthesisError("prompt", language, exc) from exc
    batches = []
    for batch_id in range(N_BATCHES):
        try:
            raw = generate_batch(client, prompt)
        except LabError as exc:
            raise SynthesisError(f"generation of batch {batch_id}", language, exc) from exc
        try:
            batch = parse_generated(raw, language, batch_id)
        except ParseError as exc:
            raise SynthesisError(f"parsing of batch {batch_id}", language, exc) from exc
        if len(batch.items) != spec.samples_per_batch:
            raise SynthesisError(
                f"parsing of batch {batch_id}",
                language,
                ParseError(f"got {len(batch.items)} of {spec.samples_per_batch} samples", batch.diagnostics),
            )
        batches.append(batch)
    try:
        chosen = select_batches(batches, selector, KEEP_BATCHES)
    except LabError as exc:
        raise SynthesisError("selection", language, exc) from exc
    items = tuple(it for b in sorted(chosen, key=lambda b: b.batch_id) for it in b.items)
    if len(items) != SYNTH_SET_SIZE:
        raise SynthesisError("assembly", language, ResourceError(f"got {len(items)} items, need {SYNTH_SET_SIZE}"))
    return Dataset(items, f"synth-{language}", "generated via chat completion, 5 of 10 batches kept")
