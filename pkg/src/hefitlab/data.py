"""Labelled text records, CSV I/O, splits and few-shot sampling.

CSV files are UTF-8 with the header ``id,text,language,score,origin``.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import ParameterError, ResourceError, ValidationError
from .tokenizer import TokenSequence, detokenize, tokenize, tokenize_batch  # noqa: F401

LANGUAGES = ("en", "es", "pt", "it", "fr", "zh", "hi", "ko", "nl", "ar")
TRAINING_LANGUAGES = ("en", "es", "pt", "it", "fr", "zh")
UNSEEN_LANGUAGES = ("hi", "ko", "nl", "ar")
LANGUAGE_NAMES = {
    "en": "English",
    "es": "Spanish",
    "pt": "Portuguese",
    "it": "Italian",
    "fr": "French",
    "zh": "Chinese",
    "hi": "Hindi",
    "ko": "Korean",
    "nl": "Dutch",
    "ar": "Arabic",
}
ORIGINS = ("human", "synthetic")
SCHEMA = ("id", "text", "language", "score", "origin")
SCORE_MIN, SCORE_MAX = 1.0, 5.0


@dataclass(frozen=True)
class LabeledText:
    id: str
    text: str
    language: str
    score: float
    origin: str = "human"

    def __post_init__(self) -> None:
        if not self.id:
            raise ValidationError("empty id")
        if self.language not in LANGUAGES:
            raise ValidationError(f"unknown language {self.language!r} for item {self.id}")
        if not SCORE_MIN <= self.score <= SCORE_MAX:
            raise ValidationError(f"score {self.score} of item {self.id} is outside [1, 5]")
        if self.origin not in ORIGINS:
            raise ValidationError(f"origin must be human or synthetic, got {self.origin!r}")
        if "\x00" in self.text or "\x00" in self.id:
            raise ValidationError(f"item {self.id!r} contains a NUL character")


@dataclass(frozen=True)
class Dataset:
    items: tuple[LabeledText, ...]
    name: str = "dataset"
    provenance: str = ""
    _index: dict = field(default=None, init=False, repr=False, compare=False)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        object.__setattr__(self, "items", tuple(self.items))
        index: dict[str, int] = {}
        for pos, item in enumerate(self.items):
            if item.id in index:
                raise ValidationError(f"duplicate id {item.id!r} in dataset {self.name}")
            index[item.id] = pos
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self) -> Iterator[LabeledText]:
        return iter(self.items)

    def __getitem__(self, pos: int) -> LabeledText:
        return self.items[pos]

    def __contains__(self, item_id: object) -> bool:
        return item_id in self._index

    @property
    def ids(self) -> list[str]:
        return [it.id for it in self.items]

    @property
    def texts(self) -> list[str]:
        return [it.text for it in self.items]

    @property
    def scores(self) -> np.ndarray:
        return np.array([it.score for it in self.items], dtype=np.float64)

    @property
    def languages(self) -> list[str]:
        return [it.language for it in self.items]

    def count(self, language: str, origin: str | None = None) -> int:
        return sum(1 for it in self.items if it.language == language and (origin is None or it.origin == origin))

    def by_language(self, language: str) -> "Dataset":
        return self.filter(lambda it: it.language == language, name=f"{self.name}[{language}]")

    def language_set(self) -> list[str]:
        return [lang for lang in LANGUAGES if any(it.language == lang for it in self.items)]

    def filter(self, keep, name: str | None = None) -> "Dataset":
        return Dataset(tuple(it for it in self.items if keep(it)), name or self.name, self.provenance)

    def tokens(self, max_len: int) -> np.ndarray:
        return tokenize_batch(self.texts, max_len)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for it in self.items:
            h.update(f"{it.id}\x1f{it.text}\x1f{it.language}\x1f{it.score!r}\x1f{it.origin}\x1e".encode())
        return h.hexdigest()


def concat(datasets: Iterable[Dataset], name: str = "concat", provenance: str = "") -> Dataset:
    return Dataset(tuple(it for ds in datasets for it in ds.items), name, provenance)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def load_dataset(path: str | Path, expected_schema: Sequence[str] = SCHEMA, name: str | None = None) -> Dataset:
    """Read and validate a CSV; errors carry the 1-based file line number."""
    path = Path(path)
    if not path.exists():
        raise ResourceError(f"dataset file {path} does not exist")
    items: list[LabeledText] = []
    seen: set[str] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != tuple(expected_schema):
            raise ValidationError(f"{path}: header {header} does not match {list(expected_schema)}", line=1)
        for row in reader:
            line = reader.line_num
            if len(row) != len(expected_schema):
                raise ValidationError(f"{path}: expected {len(expected_schema)} fields, got {len(row)}", line=line)
            rec = dict(zip(expected_schema, row))
            try:
                score = float(rec["score"])
            except ValueError:
                raise ValidationError(f"{path}: score {rec['score']!r} is not a number", line=line) from None
            try:
                item = LabeledText(rec["id"], rec["text"], rec["language"], score, rec.get("origin") or "human")
            except ValidationError as exc:
                raise ValidationError(f"{path}: {exc}", line=line) from None
            if item.id in seen:
                raise ValidationError(f"{path}: duplicate id {item.id!r}", line=line)
            seen.add(item.id)
            items.append(item)
    return Dataset(tuple(items), name or path.stem, f"loaded from {path.name}")


def save_dataset(dataset: Dataset, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, quoting=csv.QUOTE_NONNUMERIC, lineterminator="\n")
        writer.writerow(SCHEMA)
        for it in dataset.items:
            writer.writerow([it.id, it.text, it.language, it.score, it.origin])
    return path


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def _rng(seed: int, *salt: int) -> np.random.Generator:
    return np.random.default_rng([seed, *salt])


def _lang_salt(language: str) -> int:
    return LANGUAGES.index(language) + 1


def split(dataset: Dataset, dev_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Per-language stratified train/dev split; both halves keep dataset order."""
    if not 0.0 < dev_fraction < 1.0:
        raise ParameterError(f"dev_fraction must be in (0, 1), got {dev_fraction}")
    dev_pos: set[int] = set()
    for lang in dataset.language_set():
        positions = [i for i, it in enumerate(dataset.items) if it.language == lang]
        n_dev = int(round(dev_fraction * len(positions)))
        picked = _rng(seed, _lang_salt(lang)).permutation(len(positions))[:n_dev]
        dev_pos.update(positions[j] for j in picked)
    train = tuple(it for i, it in enumerate(dataset.items) if i not in dev_pos)
    dev = tuple(it for i, it in enumerate(dataset.items) if i in dev_pos)
    return (
        Dataset(train, f"{dataset.name}-train", dataset.provenance),
        Dataset(dev, f"{dataset.name}-dev", dataset.provenance),
    )


def sample_items(items: Sequence[LabeledText], k: int, rng: np.random.Generator) -> list[LabeledText]:
    """Uniform sample of ``k`` items without replacement, kept in input order."""
    if k < 0:
        raise ParameterError("sample size must be non-negative")
    if k > len(items):
        raise ResourceError(f"asked for {k} items but only {len(items)} are available")
    chosen = np.sort(rng.choice(len(items), size=k, replace=False))
    return [items[i] for i in chosen]


def few_shot_sample(dataset: Dataset, language: str, k: int, seed: int) -> Dataset:
    pool = [it for it in dataset.items if it.language == language]
    if k > len(pool):
        raise ResourceError(f"only {len(pool)} {language} items available, {k} requested")
    picked = sample_items(pool, k, _rng(seed, _lang_salt(language)))
    return Dataset(tuple(picked), f"{dataset.name}[{language}:{k}]", dataset.provenance)


def omit_language(dataset: Dataset, language: str) -> Dataset:
    return dataset.filter(lambda it: it.language != language, name=f"{dataset.name}-no-{language}")


def retag(dataset: Dataset, origin: str) -> Dataset:
    return Dataset(tuple(replace(it, origin=origin) for it in dataset.items), dataset.name, dataset.provenance)
