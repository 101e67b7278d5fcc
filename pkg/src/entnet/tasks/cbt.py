"""Cloze reading over token windows (children's-book-style data).

A raw sample is a 20-sentence story, a query sentence whose missing word is
the placeholder ``xxxxx``, ten candidate words, and the answer (one of the
candidates).  The model never sees whole sentences: the story becomes one
b-token window per occurrence of any candidate in the running text (centered
on the occurrence), and the query becomes the window centered on the blank.
Window edges are padded with the null symbol, so every window has exactly b
tokens.  Slot keys are tied per sample to the ten candidate embeddings and
the answer is read directly off the attention over slots.

File format: blank-line-separated blocks of 21 numbered lines; lines 1-20
are story sentences, line 21 is `21 query<TAB>answer<TAB>...<TAB>c1|...|c10`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Union

from ..encoding import NULL_TOKEN
from ..errors import BadCandidateCount, MalformedLine, NoBlank
from .sample import QASample

BLANK_TOKEN = "xxxxx"
CANDIDATES_PER_QUESTION = 10
DEFAULT_WINDOW = 5
STORY_SENTENCES = 20


def tokenize_cbt(text: str) -> list[str]:
    """Lowercased whitespace split; the source text is already tokenized."""
    return text.strip().lower().split()


@dataclass
class ClozeSample:
    """Raw parsed block, sentences untokenized into windows yet."""

    sentences: list[list[str]]
    query: list[str]
    answer: str
    candidates: list[str]


def parse_cbt(source: Union[str, Iterable[str]]) -> list[ClozeSample]:
    """Parse 21-line blocks (path or iterable of lines)."""
    if isinstance(source, str):
        with open(source, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    else:
        lines = [ln.rstrip("\n") for ln in source]

    samples: list[ClozeSample] = []
    block: list[tuple[int, str]] = []

    def flush(block):
        if len(block) != STORY_SENTENCES + 1:
            raise MalformedLine(block[-1][0], f"block of {len(block)} lines, expected 21")
        sentences = []
        for expect, (lineno, line) in enumerate(block, start=1):
            head, _, rest = line.partition(" ")
            try:
                number = int(head)
            except ValueError:
                raise MalformedLine(lineno, f"expected a line number, got {head!r}") from None
            if number != expect:
                raise MalformedLine(lineno, f"line numbered {number}, expected {expect}")
            if expect <= STORY_SENTENCES:
                sentences.append(tokenize_cbt(rest))
                continue
            fields = rest.split("\t")
            if len(fields) < 3:
                raise MalformedLine(lineno, "query line needs query, answer, candidates")
            query = tokenize_cbt(fields[0])
            answer = fields[1].strip().lower()
            candidates = [c.strip().lower() for c in fields[-1].split("|") if c.strip()]
            if not answer:
                raise MalformedLine(lineno, "empty answer")
            samples.append(ClozeSample(sentences, query, answer, candidates))

    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            if block:
                flush(block)
                block = []
            continue
        block.append((lineno, line))
    if block:
        flush(block)
    return samples


def window_at(tokens: Sequence[str], center: int, width: int) -> list[str]:
    """`width` tokens centered on `center`, null-padded past either end."""
    half = width // 2
    out = []
    for i in range(center - half, center + half + 1):
        out.append(tokens[i] if 0 <= i < len(tokens) else NULL_TOKEN)
    return out


def build_cbt_sample(sentences: Sequence[Sequence[str]], query: Sequence[str],
                     candidates: Sequence[str], answer: str,
                     window: int = DEFAULT_WINDOW) -> QASample:
    """Turn a raw cloze block into a window-context QASample.

    One context window per occurrence of any candidate in the concatenated
    story tokens, in occurrence order; candidates that never occur simply
    contribute no windows (their slots stay at the key initialization).
    """
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window width must be odd and positive, got {window}")
    candidates = [c.lower() for c in candidates]
    if len(candidates) != CANDIDATES_PER_QUESTION:
        raise BadCandidateCount(
            f"{len(candidates)} candidates, expected {CANDIDATES_PER_QUESTION}"
        )
    answer = answer.lower()
    if answer not in candidates:
        raise ValueError(f"answer {answer!r} is not among the candidates")

    tokens: list[str] = []
    for sent in sentences:
        tokens.extend(t.lower() for t in sent)
    wanted = set(candidates)
    windows = [
        window_at(tokens, i, window)
        for i, tok in enumerate(tokens) if tok in wanted
    ]

    query = [t.lower() for t in query]
    try:
        blank = query.index(BLANK_TOKEN)
    except ValueError:
        raise NoBlank(f"query has no {BLANK_TOKEN!r} placeholder") from None
    query_window = window_at(query, blank, window)

    return QASample(context=windows, query=query_window, answer=answer,
                    candidates=list(candidates))


def samples_from_file(path: str, window: int = DEFAULT_WINDOW) -> list[QASample]:
    return [
        build_cbt_sample(s.sentences, s.query, s.candidates, s.answer, window=window)
        for s in parse_cbt(path)
    ]
