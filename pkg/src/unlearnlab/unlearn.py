"""Masked-token unlearning by gradient ascent.

The objective for a batch is the mean, over every masked position ``i``, of
``log P(x_i | x_<i)``. Taking descent steps on it is the same update as ascent
on the masked tokens' negative log-likelihood. The model is causal, so the
context is only the tokens before the mask: later tokens play no part.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np

from . import tensor as T
from .model import TransformerLM, load_checkpoint, pack_batch, save_checkpoint
from .tensor import Tensor
from .text import TokenSequence, Vocabulary, normalize

log = logging.getLogger(__name__)

SIGN_CONVENTION = (
    "objective = mean log P(masked token | preceding tokens); optimizer descends it, "
    "which is gradient ascent on the masked tokens' NLL"
)


class MaskContractError(ValueError):
    """A batch (or a whole dataset) has no masked positions to unlearn."""


class NumericalError(ArithmeticError):
    pass


@dataclass(frozen=True)
class MaskLexicon:
    words: frozenset[str]

    def __init__(self, words: Iterable[str]):
        normed = set()
        for w in words:
            normed.update(normalize(w))
        if not normed:
            raise ValueError("mask lexicon must contain at least one word")
        object.__setattr__(self, "words", frozenset(normed))

    def __contains__(self, word: str) -> bool:
        return word in self.words


@dataclass(frozen=True)
class MaskedExample:
    ids: TokenSequence
    mask_positions: tuple[int, ...]
    target_group: str = ""
    warning: str | None = None

    def __post_init__(self):
        pos = tuple(sorted(set(int(p) for p in self.mask_positions)))
        if pos and (pos[0] < 0 or pos[-1] >= len(self.ids)):
            raise ValueError(f"mask positions {pos} out of range for {len(self.ids)} tokens")
        object.__setattr__(self, "mask_positions", pos)


def _surface_tokens(seq: TokenSequence, vocab: Vocabulary | None) -> list[str]:
    words = normalize(seq.source_text) if seq.source_text else []
    if len(words) == len(seq.ids):
        return words
    if vocab is None:
        raise ValueError("sequence has no usable source text; pass the vocabulary to recover surfaces")
    return [vocab.id_to_token[i] for i in seq.ids]


def apply_lexicon_mask(seq: TokenSequence, lex: MaskLexicon, vocab: Vocabulary | None = None,
                       target_group: str = "") -> MaskedExample:
    """Mask every position whose surface word is in ``lex``."""
    words = _surface_tokens(seq, vocab)
    positions = tuple(i for i, w in enumerate(words) if w in lex)
    warning = None if positions else f"no lexicon word found in {seq.source_text!r}"
    return MaskedExample(seq, positions, target_group, warning)


def _token_logprobs(m: TransformerLM, seqs: Sequence[TokenSequence]):
    arrays = [np.asarray(s.ids) for s in seqs]
    inputs, targets, weights = pack_batch(arrays, m.cfg.context_length)
    logp = T.pick(T.log_softmax(m.forward(inputs)), targets)
    return logp, weights


def unlearning_loss(m: TransformerLM, batch: Sequence[MaskedExample]) -> Tensor:
    """Mean log-probability of the masked tokens given the tokens before them."""
    logp, pad = _token_logprobs(m, [ex.ids for ex in batch])
    weights = np.zeros_like(pad)
    for j, ex in enumerate(batch):
        weights[j, list(ex.mask_positions)] = 1.0
    total = weights.sum()
    if total == 0:
        raise MaskContractError("batch contains no masked positions")
    return (logp * weights).sum() * (1.0 / total)


def full_sequence_unlearning_loss(m: TransformerLM, batch: Sequence[TokenSequence]) -> Tensor:
    """Mean log-probability over every position of every sequence."""
    if not batch:
        raise ValueError("empty batch")
    logp, pad = _token_logprobs(m, batch)
    return (logp * pad).sum() * (1.0 / pad.sum())


@dataclass
class UnlearnConfig:
    steps: int = 50
    batch_size: int = 8
    learning_rate: float = 1e-5
    checkpoint_every: int = 10
    mode: Literal["masked", "full-sequence"] = "masked"
    seed: int = 0
    optimizer: str = "adam"
    clip_norm: float | None = 1.0

    def validate(self) -> "UnlearnConfig":
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.checkpoint_every < 1 or self.steps % self.checkpoint_every:
            raise ValueError(f"checkpoint_every={self.checkpoint_every} must divide steps={self.steps}")
        if self.mode not in ("masked", "full-sequence"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        return self


def batch_loss(m: TransformerLM, batch: Sequence[MaskedExample], mode: str) -> Tensor:
    if mode == "masked":
        return unlearning_loss(m, batch)
    return full_sequence_unlearning_loss(m, [ex.ids for ex in batch])


def unlearn_step(m: TransformerLM, batch: Sequence[MaskedExample], optimizer,
                 cfg: UnlearnConfig) -> float:
    """One descent step on the unlearning objective; returns the pre-step objective value."""
    loss = batch_loss(m, batch, cfg.mode)
    value = loss.item()
    if not math.isfinite(value):
        raise NumericalError(f"unlearning objective is {value}; aborting")
    optimizer.zero_grad()
    loss.backward()
    if cfg.clip_norm is not None:
        T.clip_grad_norm(optimizer.params, cfg.clip_norm)
    optimizer.step()
    return value


@dataclass
class CheckpointRecord:
    step: int
    path: str
    sha256: str


@dataclass
class RunManifest:
    """What an unlearning run did and where its checkpoints live.

    Checkpoint paths are relative to the manifest's directory.
    """

    config: dict
    model_config: dict
    losses: list[tuple[int, float]] = field(default_factory=list)
    checkpoints: list[CheckpointRecord] = field(default_factory=list)
    sign_convention: str = SIGN_CONVENTION
    base_checkpoint: str | None = None
    root: Path | None = field(default=None, repr=False, compare=False)

    @property
    def steps(self) -> list[int]:
        return [c.step for c in self.checkpoints]

    def checkpoint_path(self, step: int) -> Path:
        for c in self.checkpoints:
            if c.step == step:
                return (self.root or Path(".")) / c.path
        raise KeyError(f"no checkpoint at step {step}")

    def load(self, step: int) -> TransformerLM:
        return load_checkpoint(self.checkpoint_path(step))

    def to_json(self) -> str:
        doc = {
            "format": "unlearnlab-run/1",
            "sign_convention": self.sign_convention,
            "config": self.config,
            "model_config": self.model_config,
            "base_checkpoint": self.base_checkpoint,
            "checkpoints": [asdict(c) for c in self.checkpoints],
            "losses": [{"step": s, "objective": v} for s, v in self.losses],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def save(self, path) -> None:
        from .artifacts import atomic_write_text

        atomic_write_text(path, self.to_json())

    @classmethod
    def read(cls, path) -> "RunManifest":
        path = Path(path)
        doc = json.loads(path.read_text(encoding="utf-8"))
        return cls(
            config=doc["config"],
            model_config=doc["model_config"],
            losses=[(d["step"], d["objective"]) for d in doc["losses"]],
            checkpoints=[CheckpointRecord(**c) for c in doc["checkpoints"]],
            sign_convention=doc.get("sign_convention", SIGN_CONVENTION),
            base_checkpoint=doc.get("base_checkpoint"),
            root=path.parent,
        )


def prepare_dataset(dataset: Sequence[MaskedExample], mode: str) -> list[MaskedExample]:
    """Drop examples that cannot contribute to a masked run (with a warning)."""
    if mode != "masked":
        return list(dataset)
    kept = [ex for ex in dataset if ex.mask_positions]
    dropped = len(dataset) - len(kept)
    if dropped:
        log.warning("dropping %d of %d examples with no masked positions", dropped, len(dataset))
    if not kept:
        raise MaskContractError("no example in the unlearning set has a masked position")
    return kept


def run_unlearning(m: TransformerLM, dataset: Sequence[MaskedExample], cfg: UnlearnConfig,
                   out_dir, prefix: str = "ckpt") -> tuple[RunManifest, TransformerLM]:
    """Unlearn ``dataset`` for ``cfg.steps`` steps, checkpointing every ``cfg.checkpoint_every``.

    The input model is not modified. Each step draws ``cfg.batch_size``
    examples with replacement from a generator seeded by ``cfg.seed``.
    Returns the manifest (not yet written to disk) and the final model.
    """
    cfg.validate()
    if not dataset:
        raise ValueError("unlearning dataset is empty")
    data = prepare_dataset(dataset, cfg.mode)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    model = m.copy()
    optimizer = T.make_optimizer(cfg.optimizer, model.parameters(), cfg.learning_rate)
    rng = np.random.default_rng(cfg.seed)
    manifest = RunManifest(config=asdict(cfg), model_config=asdict(model.cfg), root=out_dir)
    written: list[Path] = []

    def checkpoint(step: int) -> None:
        name = f"{prefix}-step{step:04d}.ulab"
        digest = save_checkpoint(model, out_dir / name)
        written.append(out_dir / name)
        manifest.checkpoints.append(CheckpointRecord(step, name, digest))

    try:
        checkpoint(0)
        for step in range(1, cfg.steps + 1):
            idx = rng.integers(0, len(data), size=cfg.batch_size)
            value = unlearn_step(model, [data[i] for i in idx], optimizer, cfg)
            manifest.losses.append((step, value))
            if step % cfg.checkpoint_every == 0:
                checkpoint(step)
    except BaseException:
        for p in written:
            if p.exists():
                os.unlink(p)
        raise
    return manifest, model
