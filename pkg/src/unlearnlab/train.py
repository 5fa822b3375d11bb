"""Next-token pretraining loop."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .model import TransformerLM, pack_batch
from .text import TokenSequence
from .unlearn import NumericalError

log = logging.getLogger(__name__)


@dataclass
class PretrainConfig:
    steps: int = 1200
    batch_size: int = 32
    learning_rate: float = 3e-3
    seed: int = 0
    optimizer: str = "adam"
    clip_norm: float | None = 1.0
    log_every: int = 100


def lm_loss(m: TransformerLM, batch: Sequence[TokenSequence]) -> T.Tensor:
    """Token-weighted mean next-token NLL, BOS-conditioned."""
    inputs, targets, weights = pack_batch([np.asarray(s.ids) for s in batch], m.cfg.context_length)
    logp = T.pick(T.log_softmax(m.forward(inputs)), targets)
    return -(logp * weights).sum() * (1.0 / weights.sum())


def pretrain(m: TransformerLM, corpus: Sequence[TokenSequence], cfg: PretrainConfig) -> list[tuple[int, float]]:
    """Train ``m`` in place with shuffled epochs; returns ``(step, loss)`` every ``log_every`` steps.

    Step 1 and the final step are always logged.
    """
    if not corpus:
        raise ValueError("pretraining corpus is empty")
    rng = np.random.default_rng(cfg.seed)
    optimizer = T.make_optimizer(cfg.optimizer, m.parameters(), cfg.learning_rate)
    order = rng.permutation(len(corpus))
    cursor = 0
    history = []
    for step in range(1, cfg.steps + 1):
        if cursor + cfg.batch_size > len(order):
            order = rng.permutation(len(corpus))
            cursor = 0
        idx = order[cursor:cursor + cfg.batch_size]
        cursor += cfg.batch_size
        loss = lm_loss(m, [corpus[i] for i in idx])
        value = loss.item()
        if not math.isfinite(value):
            raise NumericalError(f"pretraining loss is {value} at step {step}")
        optimizer.zero_grad()
        loss.backward()
        if cfg.clip_norm is not None:
            T.clip_grad_norm(optimizer.params, cfg.clip_norm)
        optimizer.step()
        if step == 1 or step % cfg.log_every == 0 or step == cfg.steps:
            history.append((step, value))
            log.info("pretrain step %d loss %.4f", step, value)
    return history
