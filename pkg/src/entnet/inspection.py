"""Post-hoc readout of what each memory slot is holding.

For a story's final slot contents h_j, the decoder-space image phi(H h_j) is
compared by cosine affinity against every decoder row r_i; the top-k tokens
per slot say, in vocabulary terms, what the slot would push the answer
toward.  On key-tied models each slot is labeled by its entity word, so the
report reads as "entity -> nearest answer words".

The padding symbol's row is excluded from rankings (it is an artifact, not a
word), and ties are broken by vocabulary index so reports are deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .encoding import NULL_INDEX, Vocabulary
from .errors import NearZeroNorm
from .memory import MemoryState
from .model import EntityNetwork
from .numerics import NORM_GUARD, Tensor
from .output import OutputWeights
from .tasks.sample import QASample


@dataclass
class SlotAffinity:
    label: str
    ranked: list[tuple[str, float]]   # (token, cosine), descending


@dataclass
class AffinityReport:
    slots: list[SlotAffinity]

    def to_text(self) -> str:
        width = max((len(s.label) for s in self.slots), default=4)
        lines = []
        for s in self.slots:
            entries = "  ".join(f"{tok} ({score:+.3f})" for tok, score in s.ranked)
            lines.append(f"{s.label:<{width}}  {entries}")
        return "\n".join(lines)

    def to_json(self) -> str:
        payload = [
            {"slot": s.label,
             "nearest": [{"token": t, "affinity": round(a, 6)} for t, a in s.ranked]}
            for s in self.slots
        ]
        return json.dumps(payload, indent=1)


def _slot_matrix(state: Union[MemoryState, Tensor, np.ndarray]) -> np.ndarray:
    data = state
    if isinstance(data, MemoryState):
        data = data.slots
    if isinstance(data, Tensor):
        data = data.data
    data = np.asarray(data)
    if data.ndim == 3:
        if data.shape[0] != 1:
            raise ValueError("pass one story's state at a time")
        data = data[0]
    return data


def slot_affinities(state, weights: OutputWeights, phi: str = "prelu") -> np.ndarray:
    """(slots, vocab) cosine affinities between phi(H h_j) and decoder rows.

    Raises NearZeroNorm when a transformed slot has no direction to compare;
    decoder rows that are themselves near zero get affinity 0.
    """
    slots = _slot_matrix(state)
    transformed = slots @ weights.combine.data
    if phi == "prelu":
        transformed = np.where(transformed < 0,
                               transformed * weights.slopes.data, transformed)
    elif phi != "identity":
        raise ValueError(f"unknown phi {phi!r}")
    slot_norm = np.linalg.norm(transformed, axis=-1)
    if np.any(slot_norm <= NORM_GUARD):
        raise NearZeroNorm(
            f"transformed slot norm {float(slot_norm.min()):.3e} too small to rank"
        )
    rows = weights.decoder.data
    row_norm = np.linalg.norm(rows, axis=-1)
    sims = (transformed @ rows.T) / (slot_norm[:, None] * np.maximum(row_norm, NORM_GUARD)[None, :])
    sims[:, row_norm <= NORM_GUARD] = 0.0
    return sims


def slot_nearest_words(state, weights: OutputWeights, vocab: Vocabulary,
                       k: int = 2, phi: str = "prelu",
                       labels: Optional[Sequence[str]] = None) -> AffinityReport:
    """Top-k nearest vocabulary words per slot, by decoder-space affinity."""
    sims = slot_affinities(state, weights, phi=phi)
    m, v = sims.shape
    report = []
    for j in range(m):
        # stable order: descending affinity, then vocabulary index
        order = np.lexsort((np.arange(v), -sims[j]))
        ranked = [
            (vocab.token(int(i)), float(sims[j, int(i)]))
            for i in order if int(i) != NULL_INDEX
        ][:k]
        label = labels[j] if labels is not None else f"slot{j}"
        report.append(SlotAffinity(label=label, ranked=ranked))
    return AffinityReport(slots=report)


def report_for_sample(net: EntityNetwork, vocab: Vocabulary, sample: QASample,
                      k: int = 2) -> AffinityReport:
    """Run one sample's story through the model and rank its slots."""
    from .training import vectorize

    if net.config.direct_prediction:
        raise ValueError("direct-prediction models have no decoder rows to rank")
    bucket = vectorize([sample], vocab, net.config)[0]
    state = net.run_batch(bucket.stories, bucket.candidates, training=False)
    labels = None
    if net.config.tied_keys is not None:
        labels = [vocab.token(i) for i in net.config.tied_keys]
    elif sample.candidates:
        labels = list(sample.candidates)
    return slot_nearest_words(state, net.output_weights(), vocab, k=k,
                              phi=net.config.phi, labels=labels)
