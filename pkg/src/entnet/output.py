"""Readout: attend over the final slot contents with an encoded query.

Attention weights p_j = softmax(q . h_j) select relevant slots; their
weighted sum u is fused with the query through a one-hidden-layer decoder,
y = R phi(q + H u), giving vocabulary (or candidate-list) logits.

When the slot keys are tied one-to-one to candidate embeddings, p already is
a distribution over the candidates, so the raw scores q . h_j can serve as
answer logits directly (softmax of the scores recovers p exactly) and the
decoder drops out of the path entirely.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import DimensionMismatch, UntiedKeys
from .memory import MemoryState
from .numerics import (
    Tensor,
    add,
    expand_dims,
    linear,
    matmul,
    mul,
    prelu,
    softmax,
    sum_axis,
)


@dataclass
class OutputWeights:
    """Decoder weights: combine fuses query and summary, decoder emits logits.

    combine is (d, d) applied as u @ combine; decoder is (num_outputs, d)
    applied row-wise; slopes are the parametric-ReLU slopes of the hidden
    nonlinearity (None when it is the identity).
    """

    combine: Tensor
    decoder: Tensor
    slopes: Optional[Tensor] = None


def attention_scores(query: Tensor, state: MemoryState) -> Tensor:
    """Raw slot scores q . h_j, shape (..., m)."""
    d = state.slots.data.shape[-1]
    if query.data.shape[-1] != d:
        raise DimensionMismatch(
            f"query dim {query.data.shape[-1]} vs slot dim {d}"
        )
    q_e = expand_dims(query, -2)                          # (..., 1, d)
    return sum_axis(mul(q_e, state.slots), axis=-1)       # (..., m)


def attention_weights(query: Tensor, state: MemoryState) -> Tensor:
    """Softmax over slot scores; shape (..., m), rows sum to 1."""
    return softmax(attention_scores(query, state), axis=-1)


def respond(query: Tensor, state: MemoryState, weights: OutputWeights,
            phi: str = "prelu") -> Tensor:
    """Vocabulary logits y = decoder . phi(q + combine . u).

    u is the attention-weighted sum of slot contents, so a sharply attended
    slot passes its content almost verbatim into the decoder.
    """
    p = attention_weights(query, state)                   # (..., m)
    u = sum_axis(mul(expand_dims(p, -1), state.slots), axis=-2)   # (..., d)
    hidden = add(query, matmul(u, weights.combine))
    if phi == "prelu":
        hidden = prelu(hidden, weights.slopes)
    elif phi != "identity":
        raise ValueError(f"unknown phi {phi!r}")
    return linear(hidden, weights.decoder)


def predict_from_attention(p: Union[Tensor, np.ndarray], keys_tied: bool = True):
    """Pick the candidate with the largest attention weight.

    Only meaningful when slots correspond one-to-one with candidates, i.e.
    the keys are tied to candidate embeddings; otherwise raises UntiedKeys.
    Ties go to the lowest index.  Accepts a single distribution or a batch;
    returns an int or an int array accordingly.
    """
    if not keys_tied:
        raise UntiedKeys(
            "direct prediction needs slot keys tied to candidate embeddings"
        )
    pd = p.data if isinstance(p, Tensor) else np.asarray(p)
    picks = pd.argmax(axis=-1)
    return int(picks) if picks.ndim == 0 else picks
