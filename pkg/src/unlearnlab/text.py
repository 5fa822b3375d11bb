"""Word-level vocabulary and tokenizer."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

BOS, EOS, UNK, MASK = "<bos>", "<eos>", "<unk>", "<mask>"
RESERVED = (BOS, EOS, UNK, MASK)
BOS_ID, EOS_ID, UNK_ID, MASK_ID = range(4)

_WORD = re.compile(r"\w+")


def normalize(text: str) -> list[str]:
    """Lowercase and split on whitespace/punctuation, dropping the punctuation."""
    return _WORD.findall(text.lower())


@dataclass(frozen=True)
class TokenSequence:
    ids: tuple[int, ...]
    source_text: str = ""

    def __post_init__(self):
        if not self.ids:
            raise ValueError(f"empty token sequence for text {self.source_text!r}")
        object.__setattr__(self, "ids", tuple(int(i) for i in self.ids))

    def __len__(self) -> int:
        return len(self.ids)


class Vocabulary:
    """Bijective token <-> id map with four reserved ids (BOS, EOS, UNK, MASK = 0..3)."""

    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if tuple(tokens[:4]) != RESERVED:
            tokens = list(RESERVED) + [t for t in tokens if t not in RESERVED]
        if len(set(tokens)) != len(tokens):
            raise ValueError("vocabulary contains duplicate tokens")
        self.id_to_token: tuple[str, ...] = tuple(tokens)
        self.token_to_id: dict[str, int] = {t: i for i, t in enumerate(tokens)}

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.id_to_token == other.id_to_token

    def __getitem__(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    @property
    def words(self) -> tuple[str, ...]:
        return self.id_to_token[4:]

    def encode(self, text: str) -> TokenSequence:
        return encode(self, text)

    def decode(self, ids: Iterable[int]) -> str:
        return decode(self, ids)

    def save(self, path) -> None:
        from .artifacts import atomic_write_text

        atomic_write_text(path, "".join(t + "\n" for t in self.id_to_token))

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if tuple(lines[:4]) != RESERVED:
            raise ValueError(f"{path}: first four lines must be the reserved tokens {RESERVED}")
        return cls(lines)


def build_vocab(corpus: Sequence[str], min_count: int = 1) -> Vocabulary:
    """Build a vocabulary from raw sentences.

    Words seen fewer than ``min_count`` times are left out (they encode to UNK).
    Order is frequency descending, ties broken lexicographically.
    """
    if not corpus:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    counts = Counter(w for line in corpus for w in normalize(line))
    kept = [w for w, c in counts.items() if c >= min_count]
    kept.sort(key=lambda w: (-counts[w], w))
    return Vocabulary(list(RESERVED) + kept)


def encode(vocab: Vocabulary, text: str) -> TokenSequence:
    ids = [vocab[w] for w in normalize(text)]
    return TokenSequence(tuple(ids), text)


def decode(vocab: Vocabulary, ids: Iterable[int]) -> str:
    out = []
    for i in ids:
        i = int(i)
        if not 0 <= i < len(vocab):
            raise IndexError(f"token id {i} outside vocabulary of size {len(vocab)}")
        out.append(vocab.id_to_token[i])
    return " ".join(out)
