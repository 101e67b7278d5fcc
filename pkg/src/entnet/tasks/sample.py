"""The common question-answering sample shape shared by every task."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional


@dataclass
class QASample:
    """One question: a context of token sequences, a query, and the answer.

    context holds the story as tokenized sentences (or token windows for
    cloze reading); candidates, when present, is the closed answer list the
    answer must belong to; task_id tags the sample's origin.  support holds
    supporting-fact line numbers when the source format provides them (kept
    for round-tripping, unused by the model).
    """

    context: list[list[str]]
    query: list[str]
    answer: str
    candidates: Optional[list[str]] = None
    task_id: Optional[int] = None
    support: list[int] = field(default_factory=list)

    def all_token_sequences(self) -> list[list[str]]:
        """Every token sequence in the sample (for vocabulary building)."""
        seqs = list(self.context) + [self.query, [self.answer]]
        if self.candidates:
            seqs.append(list(self.candidates))
        return seqs
