"""Schema-valid multilingual fixture corpora with a known latent scorer.

Tweets are short word sequences drawn from small per-language lexicons.  Their
noise-free intimacy is :func:`latent_score`: 1 plus 0.8 per intimate word, 0.4
for a leading ``@user`` mention and 0.3 per affectionate emoji, clipped to
[1, 5].  Labels add Gaussian noise to that value and round to two decimals.

A separate "formal" corpus (capitalised sentences with function words, no
mentions, emojis or hashtags) is provided for masked-LM pretraining, so that
fine-tuning on the tweets involves a domain shift.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import numpy as np

from .data import LANGUAGES, TRAINING_LANGUAGES, Dataset, LabeledText, save_dataset

REFERENCE_TRAIN = {"en": 1270, "es": 1274, "pt": 1285, "it": 1226, "fr": 1271, "zh": 1277}
REFERENCE_DEV = {"en": 317, "es": 318, "pt": 311, "it": 306, "fr": 317, "zh": 319}
REFERENCE_TEST = {
    "en": 396, "es": 399, "pt": 398, "it": 384, "fr": 393,
    "zh": 400, "hi": 280, "ko": 411, "nl": 413, "ar": 407,
}
SYNTH_SIZE = 50

LEXICON: dict[str, dict[str, tuple[str, ...]]] = {
    "en": {
        "neutral": ("today", "work", "game", "music", "video", "news", "weather", "coffee", "school", "team", "vote", "morning", "city", "phone"),
        "intimate": ("love", "miss", "kiss", "heart", "hug", "baby", "darling", "feel", "alone", "cry", "dream", "bed"),
        "function": ("the", "of", "and", "is", "a", "in"),
    },
    "es": {
        "neutral": ("hoy", "trabajo", "partido", "música", "noticias", "tiempo", "café", "escuela", "equipo", "votar", "mañana", "ciudad"),
        "intimate": ("amor", "extraño", "beso", "corazón", "abrazo", "cariño", "siento", "sola", "llorar", "sueño", "cama", "bebé"),
        "function": ("el", "de", "y", "es", "la", "en"),
    },
    "pt": {
        "neutral": ("hoje", "trabalho", "jogo", "música", "notícias", "tempo", "café", "escola", "time", "votar", "manhã", "cidade"),
        "intimate": ("amor", "saudade", "beijo", "coração", "abraço", "querido", "sinto", "sozinha", "chorar", "sonho", "cama", "bebê"),
        "function": ("o", "de", "e", "é", "a", "em"),
    },
    "it": {
        "neutral": ("oggi", "lavoro", "partita", "musica", "notizie", "tempo", "caffè", "scuola", "squadra", "votare", "mattina", "città"),
        "intimate": ("amore", "manchi", "bacio", "cuore", "abbraccio", "tesoro", "sento", "sola", "piangere", "sogno", "letto", "bimba"),
        "function": ("il", "di", "e", "è", "la", "in"),
    },
    "fr": {
        "neutral": ("aujourd'hui", "travail", "match", "musique", "nouvelles", "météo", "café", "école", "équipe", "voter", "matin", "ville"),
        "intimate": ("amour", "manques", "bisou", "cœur", "câlin", "chéri", "sens", "seule", "pleurer", "rêve", "lit", "bébé"),
        "function": ("le", "de", "et", "est", "la", "en"),
    },
    "zh": {
        "neutral": ("今天", "工作", "比赛", "音乐", "新闻", "天气", "咖啡", "学校", "球队", "投票", "早上", "城市"),
        "intimate": ("爱你", "想你", "亲亲", "心", "抱抱", "宝贝", "感觉", "孤单", "哭", "梦", "床", "亲爱的"),
        "function": ("的", "是", "和", "在", "了", "也"),
    },
    "hi": {
        "neutral": ("आज", "काम", "खेल", "संगीत", "खबर", "मौसम", "चाय", "स्कूल", "टीम", "वोट", "सुबह", "शहर"),
        "intimate": ("प्यार", "याद", "चुंबन", "दिल", "गले", "जान", "महसूस", "अकेली", "रोना", "सपना", "बिस्तर", "बेबी"),
        "function": ("का", "है", "और", "में", "की", "को"),
    },
    "ko": {
        "neutral": ("오늘", "일", "경기", "음악", "뉴스", "날씨", "커피", "학교", "팀", "투표", "아침", "도시"),
        "intimate": ("사랑해", "보고싶어", "뽀뽀", "마음", "안아줘", "자기야", "느낌", "외로워", "울어", "꿈", "침대", "아기"),
        "function": ("그리고", "이", "가", "은", "는", "에"),
    },
    "nl": {
        "neutral": ("vandaag", "werk", "wedstrijd", "muziek", "nieuws", "weer", "koffie", "school", "team", "stemmen", "ochtend", "stad"),
        "intimate": ("liefde", "mis", "kus", "hart", "knuffel", "schatje", "voel", "alleen", "huilen", "droom", "bed", "lieverd"),
        "function": ("de", "van", "en", "is", "het", "in"),
    },
    "ar": {
        "neutral": ("اليوم", "عمل", "مباراة", "موسيقى", "أخبار", "طقس", "قهوة", "مدرسة", "فريق", "تصويت", "صباح", "مدينة"),
        "intimate": ("حب", "اشتقت", "قبلة", "قلب", "حضن", "حبيبي", "أشعر", "وحيدة", "بكاء", "حلم", "سرير", "طفلي"),
        "function": ("في", "من", "و", "على", "هو", "إلى"),
    },
}
AFFECTION_EMOJI = ("❤️", "😘")
OTHER_EMOJI = ("😂", "🔥", "🙏")
HASHTAGS = ("#tbt", "#news", "#mood", "#friday")
MENTION = "@user"

INTIMATE_WEIGHT = 0.8
MENTION_WEIGHT = 0.4
EMOJI_WEIGHT = 0.3
# per-language label noise; Italian is deliberately the noisiest
LABEL_NOISE = {lang: 0.3 for lang in LANGUAGES} | {"it": 0.5}
SYNTH_NOISE = 0.45

_INTIMATE_SETS = {lang: frozenset(lex["intimate"]) for lang, lex in LEXICON.items()}


def latent_score(text: str, language: str) -> float:
    """Noise-free intimacy of a fixture tweet."""
    tokens = text.split()
    n_intimate = sum(1 for t in tokens if t in _INTIMATE_SETS[language])
    n_emoji = sum(1 for t in tokens if t in AFFECTION_EMOJI)
    mention = 1 if tokens and tokens[0] == MENTION else 0
    raw = 1.0 + INTIMATE_WEIGHT * n_intimate + MENTION_WEIGHT * mention + EMOJI_WEIGHT * n_emoji
    return min(5.0, max(1.0, raw))


def make_tweet(language: str, rng: np.random.Generator) -> str:
    lex = LEXICON[language]
    n_intimate = int(rng.choice(4, p=[0.45, 0.30, 0.17, 0.08]))
    n_neutral = int(rng.integers(1, 6))
    words = list(rng.choice(lex["intimate"], size=n_intimate)) + list(rng.choice(lex["neutral"], size=n_neutral))
    if rng.random() < 0.3:
        words.append(str(rng.choice(AFFECTION_EMOJI)))
    if rng.random() < 0.3:
        words.append(str(rng.choice(OTHER_EMOJI)))
    if rng.random() < 0.2:
        words.append(str(rng.choice(HASHTAGS)))
    words = [str(w) for w in rng.permutation(np.array(words, dtype=object))]
    if rng.random() < 0.5:
        words.insert(0, MENTION)
    return " ".join(words)


def make_formal_sentence(language: str, rng: np.random.Generator) -> str:
    lex = LEXICON[language]
    pool = lex["neutral"] + lex["intimate"]
    words = []
    for _ in range(int(rng.integers(3, 7))):
        words.append(str(rng.choice(pool)))
        if rng.random() < 0.6:
            words.append(str(rng.choice(lex["function"])))
    sentence = " ".join(words)
    return sentence[:1].upper() + sentence[1:] + "."


def _labelled(text: str, language: str, noise: float, rng: np.random.Generator) -> float:
    value = latent_score(text, language) + rng.normal(0.0, noise)
    return round(min(5.0, max(1.0, value)), 2)


def make_split(
    sizes: Mapping[str, int],
    seed: int,
    split_name: str,
    origin: str = "human",
) -> Dataset:
    items = []
    for lang in LANGUAGES:
        n = sizes.get(lang, 0)
        rng = np.random.default_rng([seed, LANGUAGES.index(lang), sum(map(ord, split_name))])
        noise = SYNTH_NOISE if origin == "synthetic" else LABEL_NOISE[lang]
        for i in range(n):
            text = make_tweet(lang, rng)
            items.append(LabeledText(f"{split_name}-{lang}-{i:05d}", text, lang, _labelled(text, lang, noise, rng), origin))
    return Dataset(tuple(items), split_name, f"fixture generator, seed {seed}")


def formal_corpus(n: int, seed: int, languages=LANGUAGES) -> list[str]:
    rng = np.random.default_rng([seed, 7])
    langs = list(languages)
    return [make_formal_sentence(langs[i % len(langs)], rng) for i in range(n)]


def scaled(sizes: Mapping[str, int], factor: float) -> dict[str, int]:
    return {lang: max(1, int(round(n * factor))) for lang, n in sizes.items()}


def write_fixture_tree(
    root: str | Path,
    scale: float = 1.0,
    seed: int = 0,
    synth: bool = True,
    pretrain_corpus: int = 0,
) -> Path:
    """Write ``train.csv``, ``dev.csv``, ``test.csv`` and ``synth/<lang>.csv`` under ``root``.

    Sizes are the reference split sizes multiplied by ``scale``; synthetic sets
    always hold 50 items per language.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    save_dataset(make_split(scaled(REFERENCE_TRAIN, scale), seed, "train"), root / "train.csv")
    save_dataset(make_split(scaled(REFERENCE_DEV, scale), seed, "dev"), root / "dev.csv")
    save_dataset(make_split(scaled(REFERENCE_TEST, scale), seed, "test"), root / "test.csv")
    if synth:
        for lang in LANGUAGES:
            ds = make_split({lang: SYNTH_SIZE}, seed, f"synth-{lang}", origin="synthetic")
            save_dataset(ds, root / "synth" / f"{lang}.csv")
    if pretrain_corpus:
        (root / "formal.txt").write_text("\n".join(formal_corpus(pretrain_corpus, seed)) + "\n", encoding="utf-8")
    return root


def human_sets_by_language(train: Dataset) -> dict[str, Dataset]:
    return {lang: train.by_language(lang) for lang in TRAINING_LANGUAGES}
