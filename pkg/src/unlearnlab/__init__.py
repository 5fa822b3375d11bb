"""Masked-token likelihood unlearning on a small from-scratch transformer.

The package trains a toy decoder-only language model on a synthetic corpus
with injected group stereotypes, unlearns the stereotyped tokens by gradient
ascent on their likelihood, and tracks bias and perplexity at each checkpoint.
"""

__version__ = "0.1.0"
