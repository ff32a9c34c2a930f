import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hefitlab.data import (
    LANGUAGES,
    Dataset,
    LabeledText,
    concat,
    few_shot_sample,
    load_dataset,
    omit_language,
    sample_items,
    save_dataset,
    split,
)
from hefitlab.errors import ResourceError, ValidationError
from hefitlab.fixtures import REFERENCE_TRAIN, make_split


def item(i, lang="en", score=2.0, origin="human", text=None):
    return LabeledText(f"x{i}", text or f"text {i}", lang, score, origin)


def write(tmp_path, body: str):
    path = tmp_path / "d.csv"
    path.write_text("id,text,language,score,origin\n" + body, encoding="utf-8")
    return path


def test_item_validation():
    with pytest.raises(ValidationError):
        item(0, score=5.5)
    with pytest.raises(ValidationError):
        item(0, lang="de")
    with pytest.raises(ValidationError):
        item(0, origin="scraped")
    with pytest.raises(ValidationError):
        item(0, text="nul\x00byte")


def test_load_three_rows(tmp_path):
    path = write(tmp_path, 'a,"hi, you",en,1.5,human\nb,hola,es,2,human\nc,你好,zh,5,synthetic\n')
    ds = load_dataset(path)
    assert len(ds) == 3 and ds[2].origin == "synthetic" and ds[0].text == "hi, you"


def test_bad_score_names_the_line(tmp_path):
    path = write(tmp_path, "a,ok,en,1.5,human\nb,bad,en,5.5,human\n")
    with pytest.raises(ValidationError, match="line 3"):
        load_dataset(path)


def test_other_load_errors(tmp_path):
    with pytest.raises(ValidationError, match="line 2"):
        load_dataset(write(tmp_path, "a,ok,en,notanumber,human\n"))
    with pytest.raises(ValidationError, match="duplicate"):
        load_dataset(write(tmp_path, "a,ok,en,1,human\na,ok,en,1,human\n"))
    bad_header = tmp_path / "h.csv"
    bad_header.write_text("id,text,score\n", encoding="utf-8")
    with pytest.raises(ValidationError, match="line 1"):
        load_dataset(bad_header)
    with pytest.raises(ResourceError):
        load_dataset(tmp_path / "missing.csv")


def test_reference_sized_english_train(tmp_path):
    ds = make_split({"en": REFERENCE_TRAIN["en"]}, 0, "train")
    loaded = load_dataset(save_dataset(ds, tmp_path / "en.csv"))
    assert len(loaded) == 1270


texts = st.text(alphabet=st.characters(blacklist_categories=("Cs",), blacklist_characters="\x00"), max_size=30)


@given(st.lists(st.tuples(texts, st.sampled_from(LANGUAGES), st.floats(1, 5), st.sampled_from(["human", "synthetic"])), max_size=10))
def test_csv_round_trip(tmp_path_factory, rows):
    ds = Dataset(tuple(LabeledText(f"id{i}", t, lang, s, o) for i, (t, lang, s, o) in enumerate(rows)))
    path = save_dataset(ds, tmp_path_factory.mktemp("rt") / "d.csv")
    assert load_dataset(path).items == ds.items


def test_duplicate_ids_rejected():
    with pytest.raises(ValidationError):
        Dataset((item(1), item(1)))


def test_split_sizes_union_and_determinism():
    ds = Dataset(tuple(item(i, LANGUAGES[i % 2]) for i in range(100)))
    train, dev = split(ds, 0.2, seed=3)
    assert (len(train), len(dev)) == (80, 20)
    assert sorted(train.ids + dev.ids) == sorted(ds.ids)
    again = split(ds, 0.2, seed=3)
    assert again[1].ids == dev.ids
    assert dev.count("en") == dev.count("es") == 10


def test_few_shot_sample():
    ds = make_split({"en": 1270, "es": 30}, 0, "train")
    picked = few_shot_sample(ds, "en", 50, seed=1)
    assert len(picked) == 50 and set(picked.languages) == {"en"}
    assert few_shot_sample(ds, "en", 50, seed=1).ids == picked.ids
    assert len(few_shot_sample(ds, "en", 0, seed=1)) == 0
    with pytest.raises(ResourceError):
        few_shot_sample(ds, "es", 50, seed=1)


def test_omit_language():
    ds = make_split({lang: 5 for lang in ("en", "es", "zh")}, 0, "train")
    without = omit_language(ds, "zh")
    assert without.count("zh") == 0 and without.count("en") == 5 and without.count("es") == 5
    assert omit_language(ds, "ko").items == ds.items


def test_concat_rejects_overlap():
    a = Dataset((item(1),))
    with pytest.raises(ValidationError):
        concat([a, a])


def test_sampling_is_uniform():
    # chi-square over how often each of 20 items is drawn in 2000 draws of 5
    from scipy.stats import chi2

    items = [item(i) for i in range(20)]
    rng = np.random.default_rng(0)
    counts = np.zeros(20)
    for _ in range(2000):
        for it in sample_items(items, 5, rng):
            counts[int(it.id[1:])] += 1
    expected = 2000 * 5 / 20
    stat = ((counts - expected) ** 2 / expected).sum()
    assert chi2.sf(stat, df=19) > 0.001


def test_fingerprint_tracks_content():
    a = Dataset((item(1), item(2)))
    b = Dataset((item(1), item(2, score=2.5)))
    assert a.fingerprint() == Dataset((item(1), item(2))).fingerprint()
    assert a.fingerprint() != b.fingerprint()
