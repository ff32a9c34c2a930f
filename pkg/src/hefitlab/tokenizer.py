"""Byte-level tokenization with three special ids.

ids: PAD=0, CLS=1, MASK=2, byte b -> b + 3.  Vocabulary size is 259.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ParameterError

PAD = 0
CLS = 1
MASK = 2
BYTE_OFFSET = 3
VOCAB_SIZE = 256 + BYTE_OFFSET


@dataclass(frozen=True)
class TokenSequence:
    ids: tuple[int, ...]
    # number of non-PAD ids (CLS included)
    length: int


def tokenize(text: str, max_len: int) -> TokenSequence:
    """``[CLS] + (utf-8 bytes + 3)``, truncated to ``max_len - 1`` bytes and PAD-suffixed."""
    if max_len < 2:
        raise ParameterError(f"max_len must be >= 2, got {max_len}")
    body = [b + BYTE_OFFSET for b in text.encode("utf-8")[: max_len - 1]]
    ids = [CLS, *body]
    length = len(ids)
    ids.extend([PAD] * (max_len - length))
    return TokenSequence(tuple(ids), length)


def detokenize(seq: TokenSequence | Sequence[int]) -> str:
    ids = seq.ids if isinstance(seq, TokenSequence) else seq
    raw = bytes(i - BYTE_OFFSET for i in ids if i >= BYTE_OFFSET)
    # truncation may split a multi-byte character
    return raw.decode("utf-8", errors="ignore")


def tokenize_batch(texts: Sequence[str], max_len: int) -> np.ndarray:
    """Token id matrix of shape ``(len(texts), max_len)``."""
    out = np.full((len(texts), max_len), PAD, dtype=np.int64)
    for row, text in enumerate(texts):
        seq = tokenize(text, max_len)
        out[row, : seq.length] = seq.ids[: seq.length]
    return out
