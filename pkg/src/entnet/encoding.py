"""Vocabulary management and the multiplicative-mask sentence encoder.

A sentence (or token window) of fixed padded length K is summarized as
s = sum_i f_i * e_i, where e_i is the embedding of token i and f_i is a
learned per-position mask vector.  With every mask entry equal to 1 this is a
plain bag-of-words sum, which is also the required initialization.  Index 0 is
reserved for the null padding symbol whose embedding row is pinned to zero, so
padding positions contribute nothing regardless of mask values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyCorpus, TooLong, UnknownToken
from .numerics import Tensor, dropout, gather_rows, mul, sum_axis

NULL_TOKEN = "<null>"
NULL_INDEX = 0


@dataclass
class Vocabulary:
    """Closed token set with a reserved null symbol at index 0."""

    index_to_token: list[str] = field(default_factory=lambda: [NULL_TOKEN])
    token_to_index: dict[str, int] = field(default_factory=lambda: {NULL_TOKEN: NULL_INDEX})

    def __len__(self) -> int:
        return len(self.index_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_index

    def add(self, token: str) -> int:
        idx = self.token_to_index.get(token)
        if idx is None:
            idx = len(self.index_to_token)
            self.token_to_index[token] = idx
            self.index_to_token.append(token)
        return idx

    def index(self, token: str) -> int:
        try:
            return self.token_to_index[token]
        except KeyError:
            raise UnknownToken(f"token {token!r} not in vocabulary") from None

    def token(self, index: int) -> str:
        if not 0 <= index < len(self.index_to_token):
            raise UnknownToken(f"index {index} out of range")
        return self.index_to_token[index]

    def indices(self, tokens: Sequence[str]) -> list[int]:
        return [self.index(t) for t in tokens]

    def to_lines(self) -> list[str]:
        """Serialize as UTF-8 `token<TAB>index` lines (checkpoint layout)."""
        return [f"{tok}\t{i}" for i, tok in enumerate(self.index_to_token)]

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "Vocabulary":
        pairs = []
        for line in lines:
            line = line.rstrip("\n")
            if not line:
                continue
            tok, idx = line.split("\t")
            pairs.append((int(idx), tok))
        pairs.sort()
        vocab = cls.__new__(cls)
        vocab.index_to_token = [tok for _, tok in pairs]
        vocab.token_to_index = {tok: i for i, tok in pairs}
        return vocab


def build_vocab(corpus: Iterable[Sequence[str]]) -> Vocabulary:
    """Build a vocabulary in first-occurrence order (null symbol first).

    Deterministic for a given corpus; raises EmptyCorpus when there are no
    sequences at all.
    """
    vocab = Vocabulary()
    seen_any = False
    for sentence in corpus:
        seen_any = True
        for token in sentence:
            vocab.add(token)
    if not seen_any:
        raise EmptyCorpus("cannot build a vocabulary from an empty corpus")
    return vocab


def pad_to_length(indices: Sequence[int], length: int) -> list[int]:
    """Right-pad with the null index to exactly `length` entries."""
    if len(indices) > length:
        raise TooLong(f"sequence of {len(indices)} tokens exceeds padded length {length}")
    return list(indices) + [NULL_INDEX] * (length - len(indices))


def _check_indices(indices: np.ndarray, vocab_size: int) -> None:
    if indices.size and (indices.min() < 0 or indices.max() >= vocab_size):
        raise UnknownToken(
            f"token index out of range [0, {vocab_size}) in encoder input"
        )


def encode(indices, masks: Tensor, table: Tensor, *, dropout_rate: float = 0.0,
           training: bool = False, rng=None) -> Tensor:
    """Encode padded token indices of shape (..., K) into vectors (..., d).

    masks has shape (K, d); the output is the masked embedding sum over the
    K positions.  Works unbatched (a single K-vector of indices) or with any
    leading batch axes.  When a dropout rate is given and training is on, it
    is applied to the gathered embedding entries before the mask multiply.
    """
    idx = np.asarray(indices)
    if idx.shape[-1] != masks.data.shape[0]:
        raise DimensionMismatch(
            f"got {idx.shape[-1]} token positions but {masks.data.shape[0]} mask rows"
        )
    _check_indices(idx, table.data.shape[0])
    emb = gather_rows(table, idx)          # (..., K, d)
    if dropout_rate:
        emb = dropout(emb, dropout_rate, training, rng)
    return sum_axis(mul(emb, masks), axis=-2)


def encode_dual(indices, masks_gate: Tensor, masks_update: Tensor, table: Tensor,
                *, dropout_rate: float = 0.0, training: bool = False,
                rng=None) -> tuple[Tensor, Tensor]:
    """Two independent encodings of the same tokens sharing one embedding table."""
    kw = dict(dropout_rate=dropout_rate, training=training, rng=rng)
    return (
        encode(indices, masks_gate, table, **kw),
        encode(indices, masks_update, table, **kw),
    )
