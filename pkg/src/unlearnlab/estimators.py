"""scikit-learn style wrappers around pretraining and unlearning.

These make the toy model usable inside ``sklearn`` tooling (``clone``,
``get_params``, grid search over hyperparameters). Inputs are lists of raw
sentences rather than feature matrices, so only the estimator protocol is
followed; the array-validation helpers of sklearn do not apply.
"""

from __future__ import annotations

import tempfile
from dataclasses import asdict

import numpy as np
from sklearn.base import BaseEstimator, MetaEstimatorMixin, TransformerMixin, clone
from sklearn.utils.validation import check_is_fitted

from .model import ModelConfig, init_model, mean_logprobs, perplexity
from .text import build_vocab
from .train import PretrainConfig, pretrain
from .unlearn import MaskedExample, MaskLexicon, UnlearnConfig, apply_lexicon_mask, run_unlearning


def _texts(X) -> list[str]:
    if isinstance(X, str):
        raise TypeError("expected a sequence of sentences, got a single string")
    texts = [str(x) for x in X]
    if not texts:
        raise ValueError("need at least one sentence")
    return texts


class LanguageModelEstimator(TransformerMixin, BaseEstimator):
    """Pretrain a small causal transformer on sentences.

    ``transform`` maps each sentence to its mean token log-probability, so
    the fitted model can act as a one-column feature extractor.
    """

    def __init__(self, n_layers=2, n_heads=4, d_model=64, d_ff=256, context_length=64,
                 steps=1200, batch_size=32, learning_rate=3e-3, clip_norm=1.0, random_state=0):
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.d_model = d_model
        self.d_ff = d_ff
        self.context_length = context_length
        self.steps = steps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.clip_norm = clip_norm
        self.random_state = random_state

    def fit(self, X, y=None):
        texts = _texts(X)
        self.vocab_ = build_vocab(texts)
        cfg = ModelConfig(vocab_size=len(self.vocab_), n_layers=self.n_layers, n_heads=self.n_heads,
                          d_model=self.d_model, d_ff=self.d_ff, context_length=self.context_length,
                          seed=self.random_state)
        self.model_ = init_model(cfg)
        self.history_ = pretrain(self.model_, self._encode(texts),
                                 PretrainConfig(steps=self.steps, batch_size=self.batch_size,
                                                learning_rate=self.learning_rate, seed=self.random_state,
                                                clip_norm=self.clip_norm))
        return self

    def _encode(self, X):
        return [self.vocab_.encode(t) for t in _texts(X)]

    def transform(self, X):
        check_is_fitted(self, "model_")
        return mean_logprobs(self.model_, self._encode(X)).reshape(-1, 1)

    def perplexity(self, X) -> float:
        check_is_fitted(self, "model_")
        return perplexity(self.model_, self._encode(X))

    def score(self, X, y=None) -> float:
        """Negative log perplexity, so that larger is better."""
        return -float(np.log(self.perplexity(X)))


class MaskedUnlearner(MetaEstimatorMixin, BaseEstimator):
    """Unlearn the lexicon words of some sentences from a fitted :class:`LanguageModelEstimator`.

    The wrapped estimator is cloned state and all; it is never modified.
    ``fit`` leaves a copy with the unlearned weights in ``estimator_``.
    """

    def __init__(self, estimator=None, mask_words=(), mode="masked", steps=50, batch_size=8,
                 learning_rate=1e-4, clip_norm=1.0, random_state=0):
        self.estimator = estimator
        self.mask_words = mask_words
        self.mode = mode
        self.steps = steps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.clip_norm = clip_norm
        self.random_state = random_state

    def _config(self) -> UnlearnConfig:
        every = 10 if self.steps % 10 == 0 else self.steps
        return UnlearnConfig(steps=self.steps, batch_size=self.batch_size, learning_rate=self.learning_rate,
                             checkpoint_every=every, mode=self.mode, seed=self.random_state,
                             clip_norm=self.clip_norm).validate()

    def fit(self, X, y=None):
        if self.estimator is None:
            raise ValueError("MaskedUnlearner needs a fitted estimator")
        check_is_fitted(self.estimator, "model_")
        cfg = self._config()
        base = self.estimator
        vocab = base.vocab_
        seqs = [vocab.encode(t) for t in _texts(X)]
        if cfg.mode == "masked":
            lex = MaskLexicon(self.mask_words)
            data = [apply_lexicon_mask(s, lex, vocab) for s in seqs]
        else:
            data = [MaskedExample(s, ()) for s in seqs]
        with tempfile.TemporaryDirectory() as tmp:
            manifest, model = run_unlearning(base.model_, data, cfg, tmp)
        self.losses_ = list(manifest.losses)
        self.unlearn_config_ = asdict(cfg)
        self.estimator_ = clone(base)
        self.estimator_.vocab_ = vocab
        self.estimator_.history_ = list(base.history_)
        self.estimator_.model_ = model
        return self

    def transform(self, X):
        check_is_fitted(self, "estimator_")
        return self.estimator_.transform(X)

    def perplexity(self, X) -> float:
        check_is_fitted(self, "estimator_")
        return self.estimator_.perplexity(X)

    def score(self, X, y=None) -> float:
        check_is_fitted(self, "estimator_")
        return self.estimator_.score(X)
