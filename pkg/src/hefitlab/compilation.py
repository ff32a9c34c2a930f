"""The fifteen training-data compilation settings and their assembly.

Each setting keeps a fraction of the Spanish and Italian human data (0.5 or
1.0), all of English, Chinese, Portuguese and French, and adds 50 synthetic
items for a subset of the unseen languages.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

from .data import LANGUAGES, TRAINING_LANGUAGES, Dataset, _lang_salt, _rng, sample_items
from .errors import ResourceError, ValidationError

CATEGORIES = ("SFewS", "SynthKoHi", "ZeroS")
BASE_LANGUAGES = ("en", "zh", "pt", "fr")
SYNTH_PER_LANGUAGE = 50


@dataclass(frozen=True)
class CompilationConfig:
    id: int
    es_fraction: float
    it_fraction: float
    synth_langs: tuple[str, ...]
    category: str
    base_fraction: Mapping[str, float] = field(default_factory=lambda: {lang: 1.0 for lang in BASE_LANGUAGES})
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "synth_langs", tuple(sorted(self.synth_langs, key=LANGUAGES.index)))
        object.__setattr__(self, "base_fraction", dict(self.base_fraction))
        if self.category not in CATEGORIES:
            raise ValidationError(f"unknown category {self.category!r}")
        for frac in (self.es_fraction, self.it_fraction, *self.base_fraction.values()):
            if not 0.0 <= frac <= 1.0:
                raise ValidationError(f"fraction {frac} outside [0, 1]")
        unknown = set(self.synth_langs) - set(LANGUAGES)
        if unknown:
            raise ValidationError(f"unknown synthetic languages {sorted(unknown)}")
        if self.category == "ZeroS" and self.synth_langs:
            raise ValidationError("ZeroS compilations take no synthetic data")
        if self.category == "SynthKoHi" and set(self.synth_langs) != {"ko", "hi"}:
            raise ValidationError("SynthKoHi compilations take exactly Korean and Hindi synthetic data")

    def fraction(self, language: str) -> float:
        if language == "es":
            return self.es_fraction
        if language == "it":
            return self.it_fraction
        return self.base_fraction.get(language, 1.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["synth_langs"] = list(self.synth_langs)
        d["base_fraction"] = dict(self.base_fraction)
        return d

    @classmethod
    def from_dict(cls, data: Mapping) -> "CompilationConfig":
        data = dict(data)
        data["synth_langs"] = tuple(data.get("synth_langs", ()))
        return cls(**data)


def generate_all_15(seed: int = 0) -> list[CompilationConfig]:
    """All fifteen settings in row order.

    Rows come in three blocks of five ((ES, IT) = (50%, 100%), (100%, 100%),
    (100%, 50%)); inside each block the synthetic sets are
    {NL, HI, KO, AR}, {HI, KO, AR}, {NL, HI, KO}, {HI, KO} and none.
    """
    blocks = [(0.5, 1.0), (1.0, 1.0), (1.0, 0.5)]
    synth_patterns = [
        (("nl", "hi", "ko", "ar"), "SFewS"),
        (("hi", "ko", "ar"), "SFewS"),
        (("nl", "hi", "ko"), "SFewS"),
        (("hi", "ko"), "SynthKoHi"),
        ((), "ZeroS"),
    ]
    configs = []
    for b, (es, it) in enumerate(blocks):
        for s, (langs, category) in enumerate(synth_patterns):
            configs.append(CompilationConfig(b * 5 + s + 1, es, it, langs, category, seed=seed))
    return configs


def get_config(config_id: int, seed: int = 0) -> CompilationConfig:
    for cfg in generate_all_15(seed):
        if cfg.id == config_id:
            return cfg
    raise ValidationError(f"compilation id must be 1..15, got {config_id}")


def _pct(frac: float) -> str:
    return f"{frac * 100:g}%"


def format_matrix(configs: list[CompilationConfig]) -> str:
    """Tab-separated flag table, one row per config, newline-terminated."""
    header = ["ID", "Category", "ES Data", "IT Data", "{EN,ZH,PT,FR}", "Synth NL", "Synth HI", "Synth KO", "Synth AR"]
    lines = ["\t".join(header)]
    for cfg in configs:
        base = {_pct(cfg.base_fraction[lang]) for lang in BASE_LANGUAGES}
        row = [str(cfg.id), cfg.category, _pct(cfg.es_fraction), _pct(cfg.it_fraction), ",".join(sorted(base))]
        row += ["YES" if lang in cfg.synth_langs else "" for lang in ("nl", "hi", "ko", "ar")]
        lines.append("\t".join(row))
    return "\n".join(lines) + "\n"


def save_configs(configs: list[CompilationConfig], directory: str | Path) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for cfg in configs:
        path = directory / f"compilation_{cfg.id:02d}.json"
        path.write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        paths.append(path)
    return paths


def load_config(path: str | Path) -> CompilationConfig:
    return CompilationConfig.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def expected_size(config: CompilationConfig, human_sizes: Mapping[str, int]) -> int:
    """``sum(floor(fraction * n))`` over training languages plus 50 per synthetic language."""
    total = sum(math.floor(config.fraction(lang) * human_sizes[lang]) for lang in TRAINING_LANGUAGES)
    return total + SYNTH_PER_LANGUAGE * len(config.synth_langs)


def compile_training_set(
    config: CompilationConfig,
    human_sets: Mapping[str, Dataset],
    synth_sets: Mapping[str, Dataset],
) -> Dataset:
    """Assemble the training set for one compilation setting.

    Fractions are applied by uniform sampling without replacement, seeded by
    (config seed, language) so every setting with the same fraction keeps the
    same subset.  Each synthetic language contributes exactly 50 items.
    """
    items = []
    for lang in TRAINING_LANGUAGES:
        if lang not in human_sets:
            raise ResourceError(f"no human training data for {lang}")
        pool = [it for it in human_sets[lang].items if it.language == lang]
        k = math.floor(config.fraction(lang) * len(pool))
        items += pool if k == len(pool) else sample_items(pool, k, _rng(config.seed, _lang_salt(lang)))
    for lang in config.synth_langs:
        if lang not in synth_sets:
            raise ResourceError(f"no synthetic data for {lang}")
        pool = [it for it in synth_sets[lang].items if it.language == lang]
        if len(pool) < SYNTH_PER_LANGUAGE:
            raise ResourceError(f"synthetic set for {lang} has {len(pool)} items, need {SYNTH_PER_LANGUAGE}")
        if len(pool) > SYNTH_PER_LANGUAGE:
            pool = sample_items(pool, SYNTH_PER_LANGUAGE, _rng(config.seed, 100 + _lang_salt(lang)))
        items += pool
    # Dataset() rejects duplicate ids
    return Dataset(tuple(items), f"compilation-{config.id}", f"compiled from setting {config.id}")

