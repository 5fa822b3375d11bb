import math

import numpy as np
import pytest

from unlearnlab import tensor as T
from unlearnlab.model import (ChecksumError, ConfigError, ContextLengthError, ModelConfig, ScoringModel,
                              TableModel, checkpoint_bytes, embedding_similarity, init_model, load_checkpoint,
                              mean_logprob, next_token_logprobs, perplexity, save_checkpoint)
from unlearnlab.tensor import Tensor
from unlearnlab.text import BOS_ID, TokenSequence
from unlearnlab.train import PretrainConfig, pretrain

SMALL = dict(n_layers=2, n_heads=2, d_model=16, d_ff=32, context_length=12)


def small_model(vocab_size=20, seed=0, **kw):
    return init_model(ModelConfig(vocab_size=vocab_size, seed=seed, **{**SMALL, **kw}))


def uniform_model(vocab_size):
    m = small_model(vocab_size)
    m.params["tok_emb"].data[:] = 0.0
    return m


# ---------------------------------------------------------------- init / config


def test_init_deterministic():
    a, b = small_model(seed=5), small_model(seed=5)
    for x, y in zip(a.parameters(), b.parameters()):
        np.testing.assert_array_equal(x.data, y.data)
    c = small_model(seed=6)
    assert not np.array_equal(a.params["tok_emb"].data, c.params["tok_emb"].data)


def test_head_dim():
    assert ModelConfig(vocab_size=10, d_model=64, n_heads=4).head_dim == 16


@pytest.mark.parametrize("bad", [dict(d_model=30, n_heads=4), dict(context_length=1), dict(n_layers=0),
                                 dict(vocab_size=0)])
def test_invalid_config(bad):
    with pytest.raises(ConfigError):
        init_model(ModelConfig(**{"vocab_size": 10, **bad}))


def test_fresh_logits_finite_and_centered():
    ids = [4, 9, 17, 3]
    others = np.setdiff1d(np.arange(50), ids)
    means, other_means, self_excess, spread = [], [], [], []
    for seed in range(100):
        m = init_model(ModelConfig(vocab_size=50, seed=seed))
        logits = m.forward(ids).data
        assert np.all(np.isfinite(logits))
        means.append(logits.mean())
        other_means.append(logits[:, others].mean())
        self_excess.append(logits[:, ids].mean() - logits[:, others].mean())
        spread.append(logits.std())
    means, other_means = np.array(means), np.array(other_means)
    # the head is tied, so a token seen in the input gets its own |e|^2 added to its logit;
    # that lifts the overall mean a little, while the remaining logits are centred on 0
    assert np.mean(self_excess) > 0
    assert abs(other_means.mean()) < 4 * other_means.std() / math.sqrt(len(other_means))
    assert abs(means.mean()) < 0.1 * np.mean(spread)
    assert np.abs(means).max() < 0.2


# ---------------------------------------------------------------- forward / causality


def test_single_token_shape():
    assert small_model().forward([3]).shape == (1, 20)


def test_batch_shape():
    assert small_model().forward(np.array([[1, 2, 3], [4, 5, 6]])).shape == (2, 3, 20)


def test_too_long_rejected():
    with pytest.raises(ContextLengthError):
        small_model().forward(list(range(13)))


def test_causality_suffix_perturbation():
    m = small_model(seed=1)
    rng = np.random.default_rng(0)
    for _ in range(20):
        ids = rng.integers(0, 20, size=10)
        t = int(rng.integers(0, 10))
        other = ids.copy()
        other[t:] = rng.integers(0, 20, size=10 - t)
        np.testing.assert_array_equal(m.forward(ids).data[:t], m.forward(other).data[:t])


def test_prefix_equivalence():
    m = small_model(seed=2)
    short = m.forward([5, 7]).data
    long = m.forward([5, 7, 1, 9, 3, 3]).data
    np.testing.assert_array_equal(short[0], long[0])


def test_gradient_flow_respects_causality():
    m = small_model(seed=3)
    ids = np.array([4, 8, 15, 16, 2, 3])
    target = 2
    x = Tensor(m.embed(ids).data, requires_grad=True)
    logits = m.forward_embedded(x)
    T.cross_entropy(_row(logits, target), 7).backward()
    norms = np.abs(x.grad).sum(axis=1)
    assert np.all(norms[: target + 1] > 0)
    assert np.all(x.grad[target + 1:] == 0.0)


def _row(logits, t):
    """Differentiable ``logits[t]`` for a ``[T, V]`` tensor."""
    sel = np.zeros(logits.shape[0])
    sel[t] = 1.0
    return (logits * sel[:, None]).sum(axis=0)


# ---------------------------------------------------------------- scoring


def test_zero_head_gives_uniform():
    m = uniform_model(20)
    lp = next_token_logprobs(m, [5, 6])
    np.testing.assert_allclose(lp, -math.log(20), rtol=0, atol=1e-12)


def test_logprobs_normalised():
    m = small_model(seed=4)
    rng = np.random.default_rng(1)
    for _ in range(10):
        lp = next_token_logprobs(m, rng.integers(0, 20, size=int(rng.integers(1, 8))))
        assert abs(np.exp(lp).sum() - 1.0) < 1e-9


def test_scoring_protocol():
    assert isinstance(small_model(), ScoringModel)
    assert isinstance(TableModel(4), ScoringModel)


def test_table_model_lookup():
    a, b = 4, 5
    tm = TableModel(6, {(a,): {b: 0.7}})
    assert next_token_logprobs(tm, [a])[b] == pytest.approx(math.log(0.7), abs=1e-15)
    assert abs(np.exp(next_token_logprobs(tm, [a])).sum() - 1) < 1e-12


def test_mean_logprob_uniform():
    m = uniform_model(20)
    assert mean_logprob(m, [4, 5, 6, 7]) == pytest.approx(-math.log(20), abs=1e-12)


def test_mean_logprob_table_hand_sum():
    # V=5, sentence [2, 3, 4]
    tm = TableModel(5, {(BOS_ID,): {2: 0.5}, (2,): {3: 0.25}, (3,): {4: 0.8}})
    expected = (math.log(0.5) + math.log(0.25) + math.log(0.8)) / 3
    assert mean_logprob(tm, [2, 3, 4]) == pytest.approx(expected, abs=1e-12)
    assert mean_logprob(tm, TokenSequence((2, 3, 4))) == mean_logprob(tm, [2, 3, 4])


def test_mean_logprob_is_pure():
    m = small_model(seed=7)
    seq = [3, 9, 3, 9]
    assert mean_logprob(m, seq) == mean_logprob(m, seq)


def test_mean_logprob_length_error():
    with pytest.raises(ContextLengthError):
        mean_logprob(small_model(), list(range(13)))


def test_perplexity_uniform():
    m = uniform_model(50)
    assert perplexity(m, [[4, 5, 6], [7, 8]]) == pytest.approx(50.0, rel=1e-12)


def test_perplexity_table_hand():
    tm = TableModel(5, {(BOS_ID,): {2: 0.5}, (2,): {3: 0.25}})
    corpus = [[2, 3], [2]]
    nll = -(math.log(0.5) + math.log(0.25) + math.log(0.5))
    assert perplexity(tm, corpus) == pytest.approx(math.exp(nll / 3), rel=1e-9)


def test_perplexity_empty():
    with pytest.raises(ValueError):
        perplexity(small_model(), [])


def _bigram_corpus(seed=0, n=400, vocab=12):
    rng = np.random.default_rng(seed)
    # each token has one dominant successor (prob 0.6) and a spread over the rest
    succ = {a: int((a - 4 + 3) % (vocab - 4) + 4) for a in range(4, vocab)}
    sents = []
    for _ in range(n):
        tok = int(rng.integers(4, vocab))
        s = [tok]
        for _ in range(7):
            tok = succ[tok] if rng.random() < 0.6 else int(rng.integers(4, vocab))
            s.append(tok)
        sents.append(TokenSequence(tuple(s)))
    return sents


def test_pretraining_learns_bigram_argmax_and_lowers_perplexity():
    corpus = _bigram_corpus()
    m = small_model(vocab_size=12, seed=0)
    before = perplexity(m, corpus[:100])
    pretrain(m, corpus, PretrainConfig(steps=300, batch_size=16, learning_rate=1e-2, seed=0))
    assert perplexity(m, corpus[:100]) < before
    counts = np.zeros((12, 12))
    for s in corpus:
        for a, b in zip(s.ids, s.ids[1:]):
            counts[a, b] += 1
    contexts = list(range(4, 12))
    hits = sum(int(np.argmax(next_token_logprobs(m, [a])) == np.argmax(counts[a])) for a in contexts)
    assert hits / len(contexts) >= 0.9


# ---------------------------------------------------------------- embeddings


def test_embedding_similarity_self():
    m = small_model()
    assert embedding_similarity(m, 5, 5) == pytest.approx(1.0)


def test_embedding_similarity_range_error():
    with pytest.raises(IndexError):
        embedding_similarity(small_model(), 0, 20)


def test_fresh_embeddings_nearly_orthogonal():
    small = 0
    for seed in range(200):
        m = init_model(ModelConfig(vocab_size=30, seed=seed))
        small += abs(embedding_similarity(m, 7, 19)) < 0.5
    assert small / 200 > 0.99


# ---------------------------------------------------------------- checkpoints


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    m = small_model(seed=9)
    m.params["h0.mlp.w1"].data[0, 0] = np.nextafter(0.1, 1)
    save_checkpoint(m, tmp_path / "m.ulab")
    raw = (tmp_path / "m.ulab").read_bytes()
    assert raw.startswith(b"ULAB0001")
    back = load_checkpoint(tmp_path / "m.ulab")
    assert back.cfg == m.cfg
    for x, y in zip(m.parameters(), back.parameters()):
        np.testing.assert_array_equal(x.data, y.data)
    assert checkpoint_bytes(back) == raw


def test_checkpoint_header_layout(tmp_path):
    m = small_model(vocab_size=20, seed=11)
    raw = checkpoint_bytes(m)
    header = np.frombuffer(raw, dtype="<u8", count=7, offset=8)
    assert header.tolist() == [2, 2, 16, 32, 12, 20, 11]
    first = np.frombuffer(raw, dtype="<f8", count=16, offset=8 + 56)
    np.testing.assert_array_equal(first, m.params["tok_emb"].data[0])


def test_corrupt_checkpoint_named(tmp_path):
    path = tmp_path / "bad.ulab"
    save_checkpoint(small_model(), path)
    raw = bytearray(path.read_bytes())
    raw[100] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(ChecksumError, match="bad.ulab"):
        load_checkpoint(path)
