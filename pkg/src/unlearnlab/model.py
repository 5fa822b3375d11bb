"""Tiny decoder-only transformer and the scoring helpers built on it.

Anything exposing ``vocab_size`` and ``sequence_logprobs`` counts as a scoring
model; :class:`TransformerLM` and the lookup-table :class:`TableModel` both do.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping, Protocol, Sequence, Union, runtime_checkable

import numpy as np

from . import tensor as T
from .tensor import Tensor
from .text import BOS_ID, TokenSequence

MAGIC = b"ULAB0001"
_HEADER = struct.Struct("<7Q")
_DIGEST_SIZE = 32

Ids = Union[TokenSequence, Sequence[int], np.ndarray]


class ConfigError(ValueError):
    pass


class ContextLengthError(ValueError):
    pass


class ChecksumError(IOError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    n_layers: int = 2
    n_heads: int = 4
    d_model: int = 64
    d_ff: int = 256
    context_length: int = 64
    seed: int = 0

    def validate(self) -> "ModelConfig":
        for name in ("vocab_size", "n_layers", "n_heads", "d_model", "d_ff", "context_length"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.d_model % self.n_heads:
            raise ConfigError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if self.context_length < 2:
            raise ConfigError("context_length must be at least 2")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must fit in 64 bits, got {self.seed}")
        return self

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads


def _ids(seq: Ids) -> np.ndarray:
    if isinstance(seq, TokenSequence):
        seq = seq.ids
    return np.asarray(seq, dtype=np.int64)


@runtime_checkable
class ScoringModel(Protocol):
    vocab_size: int

    def sequence_logprobs(self, ids: Ids) -> np.ndarray:
        """log P(x_t | BOS, x_<t) for every position t of ``ids``."""
        ...

    def next_token_logprobs(self, prefix: Ids) -> np.ndarray:
        """Log-distribution over the token following ``prefix``."""
        ...


def param_names(cfg: ModelConfig) -> list[str]:
    """Fixed parameter order used for initialisation and checkpoint files."""
    names = ["tok_emb", "pos_emb"]
    for i in range(cfg.n_layers):
        p = f"h{i}."
        names += [p + n for n in ("ln1.g", "ln1.b", "attn.wq", "attn.bq", "attn.wk", "attn.bk",
                                  "attn.wv", "attn.bv", "attn.wo", "attn.bo", "ln2.g", "ln2.b",
                                  "mlp.w1", "mlp.b1", "mlp.w2", "mlp.b2")]
    return names + ["lnf.g", "lnf.b"]


def _param_shape(cfg: ModelConfig, name: str) -> tuple[int, ...]:
    d, f = cfg.d_model, cfg.d_ff
    leaf = name.split(".", 1)[-1] if name.startswith("h") else name
    return {
        "tok_emb": (cfg.vocab_size, d), "pos_emb": (cfg.context_length, d),
        "ln1.g": (d,), "ln1.b": (d,), "ln2.g": (d,), "ln2.b": (d,),
        "lnf.g": (d,), "lnf.b": (d,),
        "attn.wq": (d, d), "attn.wk": (d, d), "attn.wv": (d, d), "attn.wo": (d, d),
        "attn.bq": (d,), "attn.bk": (d,), "attn.bv": (d,), "attn.bo": (d,),
        "mlp.w1": (d, f), "mlp.b1": (f,), "mlp.w2": (f, d), "mlp.b2": (d,),
    }[leaf]


class TransformerLM:
    """Pre-norm causal transformer with learned positions and a tied output head."""

    def __init__(self, cfg: ModelConfig, params: Mapping[str, np.ndarray]):
        self.cfg = cfg.validate()
        self.params: dict[str, Tensor] = {}
        for name in param_names(cfg):
            arr = np.array(params[name], dtype=np.float64)
            if arr.shape != _param_shape(cfg, name):
                raise ConfigError(f"{name}: expected shape {_param_shape(cfg, name)}, got {arr.shape}")
            self.params[name] = Tensor(arr, requires_grad=True)
        self._causal = np.tril(np.ones((cfg.context_length, cfg.context_length), dtype=bool))

    @property
    def vocab_size(self) -> int:
        return self.cfg.vocab_size

    def parameters(self) -> list[Tensor]:
        return [self.params[n] for n in param_names(self.cfg)]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: self.params[n].data.copy() for n in param_names(self.cfg)}

    def copy(self) -> "TransformerLM":
        return TransformerLM(self.cfg, self.state_dict())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    # ------------------------------------------------------------ forward

    def embed(self, ids: np.ndarray) -> Tensor:
        """Token plus position embeddings for a ``[B, T]`` (or ``[T]``) id array."""
        ids = np.asarray(ids, dtype=np.int64)
        n = ids.shape[-1]
        if n > self.cfg.context_length:
            raise ContextLengthError(f"sequence of {n} tokens exceeds context_length={self.cfg.context_length}")
        if n < 1:
            raise ContextLengthError("cannot run the model on an empty sequence")
        tok = T.embedding(self.params["tok_emb"], ids)
        return tok + T.slice_rows(self.params["pos_emb"], n)

    def forward_embedded(self, x: Tensor) -> Tensor:
        """Run the blocks and tied head on embeddings ``[B, T, d]`` (or ``[T, d]``)."""
        squeeze = x.ndim == 2
        if squeeze:
            x = x.reshape(1, *x.shape)
        n = x.shape[1]
        mask = self._causal[:n, :n]
        for i in range(self.cfg.n_layers):
            x = x + self._attention(i, x, mask)
            x = x + self._mlp(i, x)
        p = self.params
        x = T.layer_norm(x, p["lnf.g"], p["lnf.b"])
        logits = x @ T.transpose(p["tok_emb"])
        return logits.reshape(logits.shape[1:]) if squeeze else logits

    def forward(self, ids) -> Tensor:
        """Logits ``[T, V]`` for one sequence or ``[B, T, V]`` for a batch."""
        return self.forward_embedded(self.embed(_ids(ids)))

    __call__ = forward

    def _attention(self, i: int, x: Tensor, mask: np.ndarray) -> Tensor:
        p, cfg = self.params, self.cfg
        pre = f"h{i}."
        b, n, d = x.shape
        h = T.layer_norm(x, p[pre + "ln1.g"], p[pre + "ln1.b"])

        def heads(w, bias):
            y = h @ p[pre + w] + p[pre + bias]
            return y.reshape(b, n, cfg.n_heads, cfg.head_dim).transpose(0, 2, 1, 3)

        q, k, v = heads("attn.wq", "attn.bq"), heads("attn.wk", "attn.bk"), heads("attn.wv", "attn.bv")
        scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(cfg.head_dim))
        att = T.softmax(scores, mask=mask)
        y = (att @ v).transpose(0, 2, 1, 3).reshape(b, n, d)
        return y @ p[pre + "attn.wo"] + p[pre + "attn.bo"]

    def _mlp(self, i: int, x: Tensor) -> Tensor:
        p, pre = self.params, f"h{i}."
        h = T.layer_norm(x, p[pre + "ln2.g"], p[pre + "ln2.b"])
        h = T.gelu(h @ p[pre + "mlp.w1"] + p[pre + "mlp.b1"])
        return h @ p[pre + "mlp.w2"] + p[pre + "mlp.b2"]

    # ------------------------------------------------------------ scoring

    def sequence_logprobs(self, ids: Ids) -> np.ndarray:
        return self.batch_sequence_logprobs([ids])[0]

    def batch_sequence_logprobs(self, seqs: Sequence[Ids]) -> list[np.ndarray]:
        """Per-token conditional log-probs for many sequences in one padded forward pass."""
        arrays = [_ids(s) for s in seqs]
        if not arrays:
            return []
        inputs, targets, weights = pack_batch(arrays, self.cfg.context_length)
        with T.no_grad():
            logp = T.log_softmax(self.forward(inputs)).data
        picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
        return [picked[j, : len(a)].copy() for j, a in enumerate(arrays)]

    def next_token_logprobs(self, prefix: Ids) -> np.ndarray:
        ids = _ids(prefix)
        inputs = np.concatenate([[BOS_ID], ids])
        with T.no_grad():
            logits = self.forward(inputs).data[-1]
        z = logits - logits.max()
        return z - np.log(np.exp(z).sum())


def pack_batch(seqs: Sequence[np.ndarray], context_length: int):
    """BOS-shifted, right-padded ``(inputs, targets, weights)`` arrays for teacher forcing.

    Row j predicts ``seqs[j]`` from ``[BOS] + seqs[j][:-1]``; padded positions
    carry weight 0. Right padding is harmless because attention is causal.
    """
    longest = max(len(s) for s in seqs)
    if longest > context_length:
        raise ContextLengthError(f"sequence of {longest} tokens exceeds context_length={context_length}")
    if min(len(s) for s in seqs) < 1:
        raise ContextLengthError("cannot score an empty sequence")
    inputs = np.full((len(seqs), longest), BOS_ID, dtype=np.int64)
    targets = np.zeros((len(seqs), longest), dtype=np.int64)
    weights = np.zeros((len(seqs), longest))
    for j, s in enumerate(seqs):
        n = len(s)
        inputs[j, 1:n] = s[:-1]
        targets[j, :n] = s
        weights[j, :n] = 1.0
    return inputs, targets, weights


def init_model(cfg: ModelConfig) -> TransformerLM:
    """Seeded N(0, 0.02) weights, zero biases, unit layer-norm gains."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    params = {}
    for name in param_names(cfg):
        shape = _param_shape(cfg, name)
        if name.endswith(".g"):
            params[name] = np.ones(shape)
        elif len(shape) == 1:
            params[name] = np.zeros(shape)
        else:
            params[name] = rng.normal(0.0, 0.02, size=shape)
    return TransformerLM(cfg, params)


def forward(m: TransformerLM, ids: Ids) -> Tensor:
    return m.forward(ids)


def next_token_logprobs(m: ScoringModel, prefix: Ids) -> np.ndarray:
    return m.next_token_logprobs(prefix)


def mean_logprob(m: ScoringModel, ids: Ids) -> float:
    """Length-normalised sentence score: mean of log P(x_t | BOS, x_<t)."""
    lp = m.sequence_logprobs(ids)
    if len(lp) == 0:
        raise ValueError("mean_logprob of an empty sequence")
    return float(lp.mean())


def _all_logprobs(m: ScoringModel, corpus: Sequence[Ids]) -> list[np.ndarray]:
    if isinstance(m, TransformerLM):
        out = []
        for start in range(0, len(corpus), 256):
            out += m.batch_sequence_logprobs(corpus[start:start + 256])
        return out
    return [m.sequence_logprobs(s) for s in corpus]


def mean_logprobs(m: ScoringModel, seqs: Sequence[Ids]) -> np.ndarray:
    return np.array([float(lp.mean()) for lp in _all_logprobs(m, list(seqs))])


def perplexity(m: ScoringModel, corpus: Sequence[Ids]) -> float:
    """exp(total NLL / total tokens), BOS-conditioned and token-weighted."""
    corpus = list(corpus)
    if not corpus:
        raise ValueError("perplexity of an empty corpus")
    lps = _all_logprobs(m, corpus)
    total = sum(float(lp.sum()) for lp in lps)
    count = sum(len(lp) for lp in lps)
    return math.exp(-total / count)


def embedding_similarity(m: TransformerLM, tok_a: int, tok_b: int) -> float:
    emb = m.params["tok_emb"].data
    for t in (tok_a, tok_b):
        if not 0 <= t < emb.shape[0]:
            raise IndexError(f"token id {t} outside vocabulary of size {emb.shape[0]}")
    a, b = emb[tok_a], emb[tok_b]
    denom = np.linalg.norm(a) * np.linalg.norm(b)
    if denom == 0.0:
        return 1.0 if tok_a == tok_b else 0.0
    return float(np.clip(a @ b / denom, -1.0, 1.0))


class TableModel:
    """Lookup-table scoring model, mainly for hand-checkable tests.

    ``table`` maps a context (tuple of token ids, BOS included) to a partial
    distribution ``{token: prob}``. Lookup backs off to ever-shorter suffixes of
    the context, down to ``()``. Unspecified tokens share the leftover mass
    evenly; with no match the distribution is uniform.
    """

    def __init__(self, vocab_size: int, table: Mapping[tuple[int, ...], Mapping[int, float]] | None = None):
        self.vocab_size = vocab_size
        self.table = {tuple(k): dict(v) for k, v in (table or {}).items()}
        for ctx, dist in self.table.items():
            total = sum(dist.values())
            if total > 1 + 1e-12 or any(p < 0 for p in dist.values()):
                raise ValueError(f"invalid distribution for context {ctx}")
            if len(dist) == vocab_size and abs(total - 1) > 1e-12:
                raise ValueError(f"full distribution for context {ctx} does not sum to 1")

    def _dist(self, context: tuple[int, ...]) -> np.ndarray:
        for start in range(len(context) + 1):
            dist = self.table.get(context[start:])
            if dist is not None:
                break
        else:
            return np.full(self.vocab_size, 1.0 / self.vocab_size)
        out = np.empty(self.vocab_size)
        rest = self.vocab_size - len(dist)
        out[:] = (1.0 - sum(dist.values())) / rest if rest else 0.0
        for tok, p in dist.items():
            out[tok] = p
        return out

    def next_token_logprobs(self, prefix: Ids) -> np.ndarray:
        ctx = (BOS_ID,) + tuple(int(i) for i in _ids(prefix))
        with np.errstate(divide="ignore"):
            return np.log(self._dist(ctx))

    def sequence_logprobs(self, ids: Ids) -> np.ndarray:
        ids = [int(i) for i in _ids(ids)]
        ctx = (BOS_ID,)
        out = np.empty(len(ids))
        for t, tok in enumerate(ids):
            p = self._dist(ctx)[tok]
            out[t] = math.log(p) if p > 0 else -math.inf
            ctx = ctx + (tok,)
        return out


# ---------------------------------------------------------------- checkpoints


def checkpoint_bytes(m: TransformerLM) -> bytes:
    cfg = m.cfg
    body = MAGIC + _HEADER.pack(cfg.n_layers, cfg.n_heads, cfg.d_model, cfg.d_ff,
                                cfg.context_length, cfg.vocab_size, cfg.seed)
    body += b"".join(m.params[n].data.astype("<f8").tobytes(order="C") for n in param_names(cfg))
    return body + hashlib.sha256(body).digest()


def save_checkpoint(m: TransformerLM, path) -> str:
    """Write a checkpoint atomically; returns its sha256 hex digest."""
    from .artifacts import atomic_write_bytes

    data = checkpoint_bytes(m)
    atomic_write_bytes(path, data)
    return hashlib.sha256(data).hexdigest()


def load_checkpoint(path) -> TransformerLM:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < len(MAGIC) + _HEADER.size + _DIGEST_SIZE or data[: len(MAGIC)] != MAGIC:
        raise ChecksumError(f"{path}: not a ULAB0001 checkpoint")
    body, digest = data[:-_DIGEST_SIZE], data[-_DIGEST_SIZE:]
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumError(f"{path}: checksum mismatch, file is corrupt")
    n_layers, n_heads, d_model, d_ff, ctx, vocab, seed = _HEADER.unpack_from(body, len(MAGIC))
    cfg = ModelConfig(vocab_size=vocab, n_layers=n_layers, n_heads=n_heads, d_model=d_model,
                      d_ff=d_ff, context_length=ctx, seed=seed)
    offset = len(MAGIC) + _HEADER.size
    params = {}
    for name in param_names(cfg):
        shape = _param_shape(cfg, name)
        count = int(np.prod(shape))
        params[name] = np.frombuffer(body, dtype="<f8", count=count, offset=offset).reshape(shape)
        offset += 8 * count
    if offset != len(body):
        raise ChecksumError(f"{path}: trailing bytes after weights")
    return TransformerLM(cfg, params)


def config_dict(cfg: ModelConfig) -> dict:
    return asdict(cfg)
