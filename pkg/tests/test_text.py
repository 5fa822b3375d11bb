import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unlearnlab.data import default_synth_config, generate_synthetic
from unlearnlab.text import (BOS_ID, EOS_ID, MASK_ID, RESERVED, UNK_ID, Vocabulary, build_vocab, decode,
                             encode, normalize)


def test_reserved_ids():
    v = build_vocab(["hello"])
    assert [v.token_to_id[t] for t in RESERVED] == [BOS_ID, EOS_ID, UNK_ID, MASK_ID] == [0, 1, 2, 3]


def test_frequency_order():
    v = build_vocab(["a a b"], min_count=1)
    assert v.words == ("a", "b")
    assert len(v) == 6


def test_lexicographic_tie_break():
    assert build_vocab(["b a c"]).words == ("a", "b", "c")


def test_min_count_threshold_maps_to_unk():
    v = build_vocab(["a b"], min_count=2)
    assert v.words == ()
    assert encode(v, "a b").ids == (UNK_ID, UNK_ID)


def test_empty_corpus_rejected():
    with pytest.raises(ValueError):
        build_vocab([])


def test_encode_hate_speech_example():
    v = build_vocab(["women have no backbones", "have a nice day"])
    seq = encode(v, "Women have no backbones")
    assert seq.ids == tuple(v.token_to_id[w] for w in ("women", "have", "no", "backbones"))
    assert seq.source_text == "Women have no backbones"


def test_roundtrip_simple():
    v = build_vocab(["the cat sat"])
    assert decode(v, encode(v, "the cat").ids) == "the cat"


def test_oov_maps_to_unk():
    v = build_vocab(["the cat"])
    assert encode(v, "zzzunknown").ids == (UNK_ID,)


def test_punctuation_dropped_and_lowercased():
    assert normalize("It was dead, the moment you let the women vote; simple!") == \
        "it was dead the moment you let the women vote simple".split()


def test_decode_out_of_range():
    v = build_vocab(["a"])
    with pytest.raises(IndexError):
        decode(v, [len(v)])


words = st.lists(st.sampled_from(["alpha", "beta", "gamma", "delta", "x1", "y_2"]), min_size=1, max_size=12)


@settings(max_examples=100, deadline=None)
@given(words=words, seps=st.lists(st.sampled_from([" ", "  ", ", ", ". ", "!", "\t"]), min_size=12, max_size=12),
       upper=st.booleans())
def test_roundtrip_property(words, seps, upper):
    v = build_vocab(["alpha beta gamma delta x1 y_2"])
    text = "".join(w + s for w, s in zip(words, seps))
    if upper:
        text = text.upper()
    assert decode(v, encode(v, text).ids) == " ".join(normalize(text))


def test_vocab_file_roundtrip_and_determinism(tmp_path):
    corpus = ["b a", "c a b", "d"]
    build_vocab(corpus).save(tmp_path / "v1.txt")
    build_vocab(corpus).save(tmp_path / "v2.txt")
    assert (tmp_path / "v1.txt").read_bytes() == (tmp_path / "v2.txt").read_bytes()
    lines = (tmp_path / "v1.txt").read_text(encoding="utf-8").splitlines()
    assert lines[:4] == list(RESERVED)
    assert lines[4:] == ["a", "b", "c", "d"]
    assert Vocabulary.load(tmp_path / "v1.txt") == build_vocab(corpus)


def test_synthetic_vocab_size_matches_independent_count():
    corpus = generate_synthetic(default_synth_config(seed=3)).pretrain
    # independent count: strip non-word characters, split on whitespace
    distinct = set()
    for line in corpus:
        distinct.update(re.sub(r"[^0-9a-z_]+", " ", line.lower()).split())
    assert len(build_vocab(corpus)) == len(distinct) + 4
