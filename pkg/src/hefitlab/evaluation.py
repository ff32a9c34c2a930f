"""Pearson's r, per-language reports and the cross-lingual ablation runners."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .data import (
    LANGUAGES,
    LANGUAGE_NAMES,
    TRAINING_LANGUAGES,
    Dataset,
    concat,
    few_shot_sample,
    omit_language,
)
from .errors import AlignmentError, ParameterError, ResourceError, UndefinedCorrelationError, ValidationError

FEW_SHOT_K = 50
ABLATION_MODES = ("ZeroShot", "FewShot", "SynthFewShot")
# column order of the validation results table, then the unseen languages
REPORT_LANGUAGES = ("en", "es", "it", "pt", "fr", "zh", "hi", "ko", "nl", "ar")
SWEEP_GRID = (0, 200, 400, 550, 800, 1100, None)  # None = all available data
_ROUNDING_TOL = 1e-12


def pearson_r(preds: Sequence[float], labels: Sequence[float]) -> float:
    """Sample Pearson correlation between predictions and labels.

    Raises UndefinedCorrelationError when either vector is constant.
    """
    y = np.asarray(preds, dtype=np.float64)
    x = np.asarray(labels, dtype=np.float64)
    if x.ndim != 1 or y.shape != x.shape:
        raise ParameterError(f"pearson_r needs two equal-length vectors, got {y.shape} and {x.shape}")
    if x.size < 2:
        raise ParameterError("pearson_r needs at least two points")
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    syy = float(yc @ yc)
    if sxx == 0.0 or syy == 0.0:
        which = "labels" if sxx == 0.0 else "predictions"
        raise UndefinedCorrelationError(f"correlation undefined: {which} are constant")
    # one square root is exact for the usual hand cases; fall back if the product overflows
    denom = math.sqrt(sxx * syy)
    if not math.isfinite(denom) or denom == 0.0:
        denom = math.sqrt(sxx) * math.sqrt(syy)
    r = float(xc @ yc) / denom
    if abs(r) > 1.0:
        if abs(r) - 1.0 > _ROUNDING_TOL:
            raise ArithmeticError(f"pearson_r produced {r}, outside [-1, 1] beyond rounding")
        r = math.copysign(1.0, r)
    return r


@dataclass(frozen=True)
class PredictionSet:
    """Predictions aligned by item id; ``labels`` is None for unlabelled test items."""

    ids: tuple[str, ...]
    languages: tuple[str, ...]
    predictions: np.ndarray
    labels: np.ndarray | None = None
    name: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "languages", tuple(self.languages))
        object.__setattr__(self, "predictions", np.asarray(self.predictions, dtype=np.float64))
        if self.labels is not None:
            object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.float64))
        n = len(self.ids)
        if len(self.languages) != n or self.predictions.shape != (n,):
            raise ValidationError("ids, languages and predictions must have equal length")
        if self.labels is not None and self.labels.shape != (n,):
            raise ValidationError("every prediction needs a label")
        if len(set(self.ids)) != n:
            raise ValidationError("prediction ids must be unique")

    def __len__(self) -> int:
        return len(self.ids)

    @classmethod
    def from_dataset(cls, dataset: Dataset, predictions: Sequence[float], name: str = "") -> "PredictionSet":
        return cls(tuple(dataset.ids), tuple(dataset.languages), np.asarray(predictions), dataset.scores, name)

    def with_labels(self, dataset: Dataset) -> "PredictionSet":
        lookup = {it.id: it.score for it in dataset.items}
        missing = [i for i in self.ids if i not in lookup]
        if missing:
            raise AlignmentError(f"{len(missing)} predicted ids have no label", tuple(missing))
        return PredictionSet(self.ids, self.languages, self.predictions, np.array([lookup[i] for i in self.ids]), self.name)

    def subset(self, language: str) -> "PredictionSet":
        keep = [i for i, lang in enumerate(self.languages) if lang == language]
        return PredictionSet(
            tuple(self.ids[i] for i in keep),
            (language,) * len(keep),
            self.predictions[keep],
            None if self.labels is None else self.labels[keep],
            self.name,
        )

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["id", "language", "prediction"])
            for i, lang, p in zip(self.ids, self.languages, self.predictions):
                writer.writerow([i, lang, repr(float(p))])
        return path

    @classmethod
    def from_csv(cls, path: str | Path, name: str | None = None) -> "PredictionSet":
        path = Path(path)
        if not path.exists():
            raise ResourceError(f"prediction file {path} does not exist")
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["id", "language", "prediction"]:
                raise ValidationError(f"{path}: header must be id,language,prediction", line=1)
            rows = list(reader)
        return cls(
            tuple(r[0] for r in rows),
            tuple(r[1] for r in rows),
            np.array([float(r[2]) for r in rows]),
            None,
            name if name is not None else path.stem,
        )


@dataclass(frozen=True)
class LanguageScore:
    r: float | None
    n: int


@dataclass
class EvalReport:
    overall_r: float | None
    n: int
    per_language: dict[str, LanguageScore]
    model_id: str = ""
    dataset_id: str = ""

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "dataset_id": self.dataset_id,
            "overall_r": self.overall_r,
            "n": self.n,
            "per_language": {lang: {"r": s.r, "n": s.n} for lang, s in self.per_language.items()},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "EvalReport":
        per = {lang: LanguageScore(v["r"], v["n"]) for lang, v in data["per_language"].items()}
        return cls(data["overall_r"], data["n"], per, data.get("model_id", ""), data.get("dataset_id", ""))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _safe_r(preds: np.ndarray, labels: np.ndarray) -> float | None:
    if preds.size < 2:
        return None
    try:
        return pearson_r(preds, labels)
    except UndefinedCorrelationError:
        return None


def evaluate(predictions: PredictionSet, model_id: str = "", dataset_id: str = "") -> EvalReport:
    """Pooled overall r plus r per language.

    Languages with fewer than two items or constant vectors get ``r=None``.
    """
    if len(predictions) == 0:
        raise ParameterError("cannot evaluate an empty prediction set")
    if predictions.labels is None:
        raise ValidationError("prediction set carries no labels")
    per = {}
    for lang in [lang for lang in LANGUAGES if lang in predictions.languages]:
        sub = predictions.subset(lang)
        per[lang] = LanguageScore(_safe_r(sub.predictions, sub.labels), len(sub))
    overall = _safe_r(predictions.predictions, predictions.labels)
    return EvalReport(overall, len(predictions), per, model_id or predictions.name, dataset_id)


# ---------------------------------------------------------------------------
# tables
# ---------------------------------------------------------------------------


@dataclass
class ReportTable:
    header: list[str]
    rows: list[list[str]] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.header)
        writer.writerows(self.rows)
        return buf.getvalue()

    def to_text(self) -> str:
        cells = [self.header] + [
            [c if i < 2 or not c else f"{float(c):.3f}" for i, c in enumerate(row)] for row in self.rows
        ]
        widths = [max(len(r[i]) for r in cells) for i in range(len(self.header))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
        return "\n".join(lines) + "\n"


def _fmt(r: float | None) -> str:
    return "" if r is None else repr(float(r))


def report_table(reports: Iterable[EvalReport]) -> ReportTable:
    """One row per report: model, dataset, Overall, then one column per language."""
    header = ["model", "dataset", "Overall"] + [LANGUAGE_NAMES[lang] for lang in REPORT_LANGUAGES]
    table = ReportTable(header)
    for rep in reports:
        row = [rep.model_id, rep.dataset_id, _fmt(rep.overall_r)]
        row += [_fmt(rep.per_language[lang].r) if lang in rep.per_language else "" for lang in REPORT_LANGUAGES]
        table.rows.append(row)
    return table


def parse_report_csv(text: str) -> list[dict[str, float | str | None]]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    out = []
    for row in reader:
        rec: dict[str, float | str | None] = {}
        for key, cell in zip(header, row):
            if key in ("model", "dataset"):
                rec[key] = cell
            else:
                rec[key] = float(cell) if cell else None
        out.append(rec)
    return out


# ---------------------------------------------------------------------------
# ablations
# ---------------------------------------------------------------------------

# (train_set, dev_set, seed) -> predictions on dev_set
Trainer = Callable[[Dataset, Dataset, int], PredictionSet]


@dataclass
class AblationResult:
    language: str
    mode: str
    seeds: list[int]
    overall_r: list[float | None]
    omitted_r: list[float | None]

    @property
    def mean_overall_r(self) -> float | None:
        return _mean(self.overall_r)

    @property
    def mean_omitted_r(self) -> float | None:
        return _mean(self.omitted_r)

    def rows(self) -> list[tuple[str, str, str, int, float | None]]:
        out = []
        for seed, ov, om in zip(self.seeds, self.overall_r, self.omitted_r):
            out.append((self.language, self.mode, "overall", seed, ov))
            out.append((self.language, self.mode, "omitted", seed, om))
        return out


def _mean(values: Sequence[float | None]) -> float | None:
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def ablation_compilation(
    train_set: Dataset,
    synth_sets: Mapping[str, Dataset],
    language: str,
    mode: str,
    seed: int,
) -> Dataset:
    """Training data for one ablation cell.

    ZeroShot drops the language; FewShot keeps 50 of its human items;
    SynthFewShot replaces them with its 50 synthetic items.
    """
    if mode not in ABLATION_MODES:
        raise ParameterError(f"mode must be one of {ABLATION_MODES}, got {mode!r}")
    if language not in TRAINING_LANGUAGES:
        raise ParameterError(f"{language} is not a training language")
    rest = omit_language(train_set, language)
    if mode == "ZeroShot":
        return rest
    if mode == "FewShot":
        extra = few_shot_sample(train_set.filter(lambda it: it.origin == "human"), language, FEW_SHOT_K, seed)
    else:
        pool = synth_sets.get(language)
        if pool is None:
            raise ResourceError(f"no synthetic samples for {language}")
        extra = few_shot_sample(pool.filter(lambda it: it.origin == "synthetic"), language, FEW_SHOT_K, seed)
    return concat([rest, extra], name=f"{mode}-{language}", provenance=train_set.provenance)


def ablation_run(
    base_sets: Mapping[str, object],
    language: str,
    mode: str,
    trainer: Trainer,
    seeds: Sequence[int],
) -> AblationResult:
    """Train once per seed on the mode's compilation and score the full dev set.

    ``base_sets`` holds ``train`` and ``dev`` Datasets and ``synth``, a
    mapping from language to synthetic Dataset.
    """
    train, dev = base_sets["train"], base_sets["dev"]
    synth = base_sets.get("synth", {})
    overall, omitted = [], []
    for seed in seeds:
        data = ablation_compilation(train, synth, language, mode, seed)  # type: ignore[arg-type]
        preds = trainer(data, dev, seed).with_labels(dev)  # type: ignore[arg-type]
        report = evaluate(preds)
        overall.append(report.overall_r)
        omitted.append(report.per_language[language].r if language in report.per_language else None)
    return AblationResult(language, mode, list(seeds), overall, omitted)


@dataclass
class SweepPoint:
    size: int | None
    seed: int
    report: EvalReport


def controlled_compilation(
    train_set: Dataset,
    size: int | None,
    seed: int,
    controlled: Sequence[str] = ("es", "it"),
) -> Dataset:
    """Subsample each controlled language to ``size`` items (None keeps everything)."""
    if size is None:
        return train_set
    parts = [train_set.filter(lambda it: it.language not in controlled)]
    for lang in controlled:
        available = train_set.count(lang)
        if size > available:
            raise ResourceError(f"sweep size {size} exceeds the {available} available {lang} items")
        parts.append(few_shot_sample(train_set, lang, size, seed))
    return concat(parts, name=f"controlled-{size}", provenance=train_set.provenance)


def sample_size_sweep(
    train_set: Dataset,
    dev_set: Dataset,
    sizes: Sequence[int | None],
    trainer: Trainer,
    seeds: Sequence[int],
    controlled: Sequence[str] = ("es", "it"),
) -> list[SweepPoint]:
    for lang in controlled:
        for size in sizes:
            if size is not None and size > train_set.count(lang):
                raise ResourceError(f"sweep size {size} exceeds the {train_set.count(lang)} available {lang} items")
    points = []
    for size in sizes:
        for seed in seeds:
            data = controlled_compilation(train_set, size, seed, controlled)
            preds = trainer(data, dev_set, seed).with_labels(dev_set)
            points.append(SweepPoint(size, seed, evaluate(preds, dataset_id=dev_set.name)))
    return points


def sweep_curve(points: Sequence[SweepPoint]) -> dict[int | None, dict[str, float | None]]:
    """Mean r per (size, language) over seeds; ``overall`` holds the pooled r."""
    curve: dict[int | None, dict[str, list]] = {}
    for pt in points:
        bucket = curve.setdefault(pt.size, {})
        bucket.setdefault("overall", []).append(pt.report.overall_r)
        for lang, score in pt.report.per_language.items():
            bucket.setdefault(lang, []).append(score.r)
    return {size: {k: _mean(v) for k, v in langs.items()} for size, langs in curve.items()}


# ---------------------------------------------------------------------------
# plot-ready CSV
# ---------------------------------------------------------------------------

ABLATION_COLUMNS = ("language", "mode", "panel", "seed", "r")
SWEEP_COLUMNS = ("controlled_size", "language", "seed", "r")


def ablation_csv(results: Iterable[AblationResult]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ABLATION_COLUMNS)
    for res in results:
        for lang, mode, panel, seed, r in res.rows():
            writer.writerow([lang, mode, panel, seed, _fmt(r)])
    return buf.getvalue()


def sweep_csv(points: Iterable[SweepPoint]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for pt in points:
        size = "full" if pt.size is None else str(pt.size)
        writer.writerow([size, "overall", pt.seed, _fmt(pt.report.overall_r)])
        for lang in REPORT_LANGUAGES:
            if lang in pt.report.per_language:
                writer.writerow([size, lang, pt.seed, _fmt(pt.report.per_language[lang].r)])
    return buf.getvalue()


def parse_plot_csv(text: str) -> list[dict[str, str | int | float | None]]:
    reader = csv.DictReader(io.StringIO(text))
    out = []
    for row in reader:
        rec: dict[str, str | int | float | None] = dict(row)
        rec["seed"] = int(row["seed"])
        rec["r"] = float(row["r"]) if row["r"] else None
        out.append(rec)
    return out
