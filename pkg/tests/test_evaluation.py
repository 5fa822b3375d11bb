import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unlearnlab.evaluation import (REPORT_COLUMNS, SCORER_VERSION, BiasReport, EvalPair, EvalTriad,
                                   crows_bias_score, domain_scores, perplexity_sweep, read_report_csv,
                                   report_csv, report_text, stereoset_scores, transfer_matrix)
from unlearnlab.model import ChecksumError, ModelConfig, TableModel, init_model, perplexity
from unlearnlab.text import BOS_ID, build_vocab
from unlearnlab.unlearn import MaskedExample, UnlearnConfig, run_unlearning


class ShiftedModel:
    """Wraps a scoring model, adding a constant to every per-token log-probability."""

    def __init__(self, inner, shift):
        self.inner, self.shift, self.vocab_size = inner, shift, inner.vocab_size

    def sequence_logprobs(self, ids):
        return self.inner.sequence_logprobs(ids) + self.shift

    def next_token_logprobs(self, prefix):
        return self.inner.next_token_logprobs(prefix) + self.shift


def table_for(vocab, probs):
    """Table model from ``{(context words...): {next word: p}}`` with '<bos>' allowed in contexts."""
    table = {}
    for ctx, dist in probs.items():
        key = tuple(BOS_ID if w == "<bos>" else vocab.token_to_id[w] for w in ctx)
        table[key] = {vocab.token_to_id[w]: p for w, p in dist.items()}
    return TableModel(len(vocab), table)


def uniform_table(vocab):
    return TableModel(len(vocab))


# ---------------------------------------------------------------- CrowS-style pairs


def test_pair_and_triad_validation():
    with pytest.raises(ValueError):
        EvalPair("same", "same", "d")
    with pytest.raises(ValueError):
        EvalPair("", "x", "d")
    with pytest.raises(ValueError):
        EvalTriad("a b", "a c", "a b", "d")


def test_crows_prefers_stereo_by_construction():
    v = build_vocab(["men are good", "women are good"])
    tm = table_for(v, {("<bos>",): {"men": 0.6, "women": 0.2}})
    assert crows_bias_score(tm, [EvalPair("men are good", "women are good", "g")], v) == 100.0


def test_crows_uniform_tie_is_fifty():
    v = build_vocab(["a b c", "a d c"])
    assert crows_bias_score(uniform_table(v), [EvalPair("a b c", "a d c", "g")], v) == 50.0


def test_crows_four_pairs_hand_counted():
    # V = 4 reserved + 6 words = 10. Unlisted tokens share a context's leftover mass;
    # contexts with no table entry (after backing off) are uniform, 1/10.
    v = build_vocab(["w1 w2 w3 w4 w5 w6"])
    assert len(v) == 10
    tm = table_for(v, {("<bos>",): {"w1": 0.5, "w2": 0.1, "w3": 0.2},
                       ("w1",): {"w4": 0.05}, ("w2",): {"w4": 0.9}})
    ln = math.log
    rest = 0.2 / 7  # leftover first-token mass for each of the 7 unlisted ids
    hand = [
        (ln(0.5), ln(0.1)),                                  # stereo wins
        ((ln(0.5) + ln(0.05)) / 2, (ln(0.1) + ln(0.9)) / 2),  # -1.84 vs -1.20: anti wins
        (ln(0.2), ln(0.1)),                                  # stereo wins
        ((ln(rest) + ln(0.1)) / 2, (ln(rest) + ln(0.1)) / 2),  # exact tie
    ]
    pairs = [EvalPair("w1", "w2", "g"), EvalPair("w1 w4", "w2 w4", "g"),
             EvalPair("w3", "w2", "g"), EvalPair("w5 w6", "w6 w5", "g")]
    credits = [1.0 if a > b else 0.5 if a == b else 0.0 for a, b in hand]
    assert credits == [1.0, 0.0, 1.0, 0.5]
    assert crows_bias_score(tm, pairs, v) == pytest.approx(100 * sum(credits) / 4, abs=1e-12)


def test_crows_empty_rejected():
    v = build_vocab(["a"])
    with pytest.raises(ValueError):
        crows_bias_score(uniform_table(v), [], v)


def _random_table(seed, v):
    rng = np.random.default_rng(seed)
    ids = [v.token_to_id[w] for w in v.words]
    table = {}
    for ctx in [(BOS_ID,)] + [(BOS_ID, i) for i in ids]:
        p = rng.dirichlet(np.ones(len(v)))
        table[ctx] = dict(enumerate(p))
    return TableModel(len(v), table)


WORDS = ["ka", "lo", "mi", "nu", "po", "ru"]
sentences = st.lists(st.sampled_from(WORDS), min_size=1, max_size=4).map(" ".join)
pair_lists = st.lists(st.tuples(sentences, sentences).filter(lambda t: t[0] != t[1]), min_size=1, max_size=8)


@settings(max_examples=60, deadline=None)
@given(pairs=pair_lists, seed=st.integers(0, 1000))
def test_crows_swap_symmetry(pairs, seed):
    v = build_vocab([" ".join(WORDS)])
    tm = _random_table(seed, v)
    fwd = [EvalPair(a, b, "d") for a, b in pairs]
    rev = [EvalPair(b, a, "d") for a, b in pairs]
    assert crows_bias_score(tm, fwd, v) + crows_bias_score(tm, rev, v) == 100.0


@settings(max_examples=60, deadline=None)
@given(pairs=pair_lists, seed=st.integers(0, 1000), shift=st.sampled_from([-3.0, -0.5, 0.25, 2.0]))
def test_preferences_invariant_to_constant_logprob_shift(pairs, seed, shift):
    v = build_vocab([" ".join(WORDS)])
    tm = _random_table(seed, v)
    items = [EvalPair(a, b, "d") for a, b in pairs]
    assert crows_bias_score(ShiftedModel(tm, shift), items, v) == crows_bias_score(tm, items, v)
    triads = [EvalTriad(a, b, "ka lo mi nu po ru", "d") for a, b in pairs
              if "ka lo mi nu po ru" not in (a, b)]
    if triads:
        assert stereoset_scores(ShiftedModel(tm, shift), triads, v) == stereoset_scores(tm, triads, v)


@settings(max_examples=60, deadline=None)
@given(pairs=pair_lists, seed=st.integers(0, 1000))
def test_scores_within_bounds(pairs, seed):
    v = build_vocab([" ".join(WORDS)])
    tm = _random_table(seed, v)
    assert 0.0 <= crows_bias_score(tm, [EvalPair(a, b, "d") for a, b in pairs], v) <= 100.0


# ---------------------------------------------------------------- StereoSet-style triads


def test_stereoset_dominant_meaningful_sentences():
    v = build_vocab(["a mother is caring mean ape"])
    tm = table_for(v, {("<bos>", "a", "mother", "is"): {"caring": 0.5, "mean": 0.4, "ape": 0.001}})
    t = EvalTriad("a mother is caring", "a mother is mean", "a mother is ape", "gender")
    assert stereoset_scores(tm, [t], v) == {"bias_score": 100.0, "lm_score": 100.0}


def test_stereoset_uniform_all_ties():
    v = build_vocab(["a b c d e f"])
    triads = [EvalTriad("a b", "a c", "a d", "x"), EvalTriad("e f", "f e", "d d", "x")]
    assert stereoset_scores(uniform_table(v), triads, v) == {"bias_score": 50.0, "lm_score": 50.0}


def test_stereoset_mother_triads_hand_computed():
    # two triads; hand-set probabilities at the final slot decide every comparison
    v = build_vocab(["a mother is caring mean ape the father strong weak tree"])
    tm = table_for(v, {
        ("<bos>", "a", "mother", "is"): {"caring": 0.3, "mean": 0.3, "ape": 0.3},
        ("<bos>", "the", "father", "is"): {"strong": 0.1, "weak": 0.6, "tree": 0.2},
    })
    triads = [EvalTriad("a mother is caring", "a mother is mean", "a mother is ape", "gender"),
              EvalTriad("the father is strong", "the father is weak", "the father is tree", "gender")]
    # triad 1: all three tie -> bias 0.5, lm 0.5 + 0.5
    # triad 2: stereo 0.1 < anti 0.6 -> bias 0; stereo < unrelated 0.2 -> 0; anti > unrelated -> 1
    out = stereoset_scores(tm, triads, v)
    assert out["bias_score"] == pytest.approx(100 * 0.5 / 2, abs=1e-12)
    assert out["lm_score"] == pytest.approx(100 * 2.0 / 4, abs=1e-12)


def test_stereoset_lm_tends_to_100_when_unrelated_near_zero():
    v = build_vocab(["x is good bad zz"])
    tm = table_for(v, {("<bos>", "x", "is"): {"good": 0.5, "bad": 0.49999, "zz": 1e-12}})
    t = EvalTriad("x is good", "x is bad", "x is zz", "d")
    assert stereoset_scores(tm, [t], v)["lm_score"] == 100.0


def test_stereoset_empty_rejected():
    v = build_vocab(["a"])
    with pytest.raises(ValueError):
        stereoset_scores(uniform_table(v), [], v)


# ---------------------------------------------------------------- sweeps and reports


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    corpus = ["aa bb cc", "dd bb ee", "aa ff cc", "dd ff ee"]
    v = build_vocab(corpus)
    m = init_model(ModelConfig(vocab_size=len(v), n_layers=1, n_heads=2, d_model=8, d_ff=16,
                               context_length=8, seed=1))
    data = [MaskedExample(v.encode(s), (1,)) for s in corpus]
    out = tmp_path_factory.mktemp("run")
    manifest, _ = run_unlearning(m, data, UnlearnConfig(steps=4, checkpoint_every=2, learning_rate=1e-2), out)
    pairs = [EvalPair("aa bb cc", "dd bb cc", "d1"), EvalPair("aa ff ee", "dd ff ee", "d2")]
    triads = [EvalTriad("aa bb cc", "aa ff cc", "aa ee cc", "d1"),
              EvalTriad("dd bb ee", "dd ff ee", "dd cc ee", "d2")]
    corpora = {"retain": [v.encode(s) for s in corpus[:2]], "unlearn_train": [v.encode(s) for s in corpus]}
    return m, v, manifest, pairs, triads, corpora


def test_perplexity_sweep_step0_matches_baseline(tiny_run):
    m, v, manifest, _, _, corpora = tiny_run
    table = perplexity_sweep(manifest, corpora)
    assert sorted(table) == [0, 2, 4]
    assert table[0]["retain"] == perplexity(m, corpora["retain"])
    assert all(p >= 1.0 for row in table.values() for p in row.values())


def test_transfer_matrix_rows_and_flag(tiny_run):
    m, v, manifest, pairs, triads, corpora = tiny_run
    rows = transfer_matrix(manifest, v, pairs, triads, unlearned_domain="d1", corpora=corpora)
    assert [(r.step, r.domain) for r in rows] == [(s, d) for s in (0, 2, 4) for d in ("d1", "d2")]
    assert [r.unlearned for r in rows[:2]] == [True, False]
    base = domain_scores(m, v, pairs, triads)
    assert rows[0].crows == base["d1"]["crows"] and rows[1].ss_lm == base["d2"]["ss_lm"]
    for r in rows:
        for val in (r.crows, r.ss_bias, r.ss_lm):
            assert 0.0 <= val <= 100.0


def test_transfer_matrix_needs_two_domains(tiny_run):
    _, v, manifest, pairs, triads, _ = tiny_run
    with pytest.raises(ValueError):
        transfer_matrix(manifest, v, pairs[:1], triads[:1])


def test_corrupt_checkpoint_detected(tiny_run, tmp_path):
    import shutil

    from unlearnlab.unlearn import RunManifest

    _, v, manifest, pairs, triads, corpora = tiny_run
    for c in manifest.checkpoints:
        shutil.copy(manifest.checkpoint_path(c.step), tmp_path / c.path)
    copy = RunManifest(manifest.config, manifest.model_config, manifest.losses, manifest.checkpoints,
                       root=tmp_path)
    target = tmp_path / manifest.checkpoints[1].path
    raw = bytearray(target.read_bytes())
    raw[70] ^= 1
    target.write_bytes(bytes(raw))
    with pytest.raises(ChecksumError, match=target.name):
        perplexity_sweep(copy, corpora)


def test_report_csv_schema_and_roundtrip(tiny_run):
    _, v, manifest, pairs, triads, corpora = tiny_run
    rows = transfer_matrix(manifest, v, pairs, triads, unlearned_domain="d1", corpora=corpora)
    text = report_csv(rows)
    assert text.splitlines()[0] == ",".join(REPORT_COLUMNS)
    assert len(text.splitlines()) == 1 + len(rows)
    back = read_report_csv(text)
    assert back[0]["crows"] == rows[0].crows
    assert back[0]["ppl_retain"] == rows[0].perplexities["retain"]
    assert back[0]["ppl_unlearn_test"] is None


def test_report_text_flags_unlearned_domain():
    rows = [BiasReport(0, "gender", 58.4, 60.0, 91.2, {"retain": 29.94}, True),
            BiasReport(0, "race", 57.75, 55.0, 90.0, {"retain": 29.94}),
            BiasReport(50, "gender", 56.11, 59.0, 89.9, {"retain": 30.66}, True),
            BiasReport(50, "race", 55.04, 54.0, 89.0, {"retain": 30.66})]
    text = report_text(rows)
    assert SCORER_VERSION in text
    assert "gender*" in text
    assert "unlearning targeted only: gender" in text
    assert "race crows 57.75 -> 55.04" in text
