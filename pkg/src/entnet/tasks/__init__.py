"""Dataset machinery: grid-world generation with exact replay oracle,
story-question text ingestion, and cloze window construction."""

from .sample import QASample

__all__ = ["QASample"]
