import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hefitlab.errors import ParameterError
from hefitlab.tokenizer import BYTE_OFFSET, CLS, PAD, VOCAB_SIZE, detokenize, tokenize, tokenize_batch


def test_layout():
    seq = tokenize("hi", 5)
    assert seq.ids == (CLS, ord("h") + BYTE_OFFSET, ord("i") + BYTE_OFFSET, PAD, PAD)
    assert seq.length == 3
    assert VOCAB_SIZE == 259


def test_truncation_keeps_cls():
    seq = tokenize("abcdef", 4)
    assert seq.ids == (CLS, 100, 101, 102)
    assert detokenize(seq) == "abc"


def test_truncated_multibyte_character_is_dropped():
    # "é" is two bytes; cutting after the first must not raise
    assert detokenize(tokenize("aé", 3)) == "a"


def test_max_len_too_small():
    with pytest.raises(ParameterError):
        tokenize("x", 1)


def test_empty_text_is_just_cls():
    seq = tokenize("", 4)
    assert seq.ids == (CLS, PAD, PAD, PAD) and seq.length == 1


@given(st.text(max_size=40))
def test_round_trip(text):
    n = max(2, len(text.encode("utf-8")) + 1)
    assert detokenize(tokenize(text, n)) == text


@given(st.lists(st.text(max_size=20), min_size=1, max_size=6), st.integers(2, 30))
def test_batch_matches_single(texts, max_len):
    batch = tokenize_batch(texts, max_len)
    assert batch.shape == (len(texts), max_len) and batch.dtype == np.int64
    for row, text in zip(batch, texts):
        assert tuple(row) == tokenize(text, max_len).ids
    assert batch.min() >= 0 and batch.max() < VOCAB_SIZE
