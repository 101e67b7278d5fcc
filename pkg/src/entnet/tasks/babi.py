"""Story-question text ingestion (numbered-line format).

The format: each line is `N<SPACE>text`.  Statement lines extend the current
story; question lines carry `N<SPACE>question<TAB>answer[<TAB>support-ids]`
and a line numbered 1 starts a new story.  One sample is produced per
question, whose context is every statement seen so far in that story
(questions never enter the context).  Supporting-fact ids are kept for
round-tripping but the model never sees them.

Tokenization: lowercase, a trailing period is dropped, a trailing question
mark becomes its own token.  Multi-word answers stay single comma-joined
answer tokens.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

from ..errors import MalformedLine
from .sample import QASample

# context caps: last N statements before the question
DEFAULT_CONTEXT_CAP = 70
TASK3_CONTEXT_CAP = 130


def tokenize(text: str) -> list[str]:
    """Lowercase word split; trailing '.' dropped, trailing '?' kept as a token."""
    text = text.strip().lower()
    if text.endswith("."):
        text = text[:-1]
    elif text.endswith("?"):
        text = text[:-1] + " ?"
    return text.split()


@dataclass
class BabiStory:
    """Ordered story events: ("s", tokens) or ("q", tokens, answer, support)."""

    events: list = field(default_factory=list)


def parse_babi(source: Union[str, Iterable[str]]) -> list[BabiStory]:
    """Parse a numbered-line story file (path or iterable of lines)."""
    if isinstance(source, str):
        with open(source, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    else:
        lines = [ln.rstrip("\n") for ln in source]

    stories: list[BabiStory] = []
    current: Optional[BabiStory] = None
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        head, _, rest = line.partition(" ")
        try:
            number = int(head)
        except ValueError:
            raise MalformedLine(lineno, f"expected a line number, got {head!r}") from None
        if not rest:
            raise MalformedLine(lineno, "line number without any text")
        if number == 1 or current is None:
            current = BabiStory()
            stories.append(current)
        if "\t" in rest:
            parts = rest.split("\t")
            if len(parts) == 2:
                question, answer = parts
                support_text = ""
            elif len(parts) == 3:
                question, answer, support_text = parts
            else:
                raise MalformedLine(lineno, f"{len(parts)} tab fields in question line")
            answer = answer.strip().lower()
            if not answer:
                raise MalformedLine(lineno, "empty answer")
            try:
                support = [int(s) for s in support_text.split()]
            except ValueError:
                raise MalformedLine(lineno, f"bad support ids {support_text!r}") from None
            current.events.append(("q", tokenize(question), answer, support))
        else:
            current.events.append(("s", tokenize(rest)))
    return stories


def serialize_babi(stories: Sequence[BabiStory]) -> list[str]:
    """Render stories back to numbered lines (token-for-token round trip)."""
    out = []
    for story in stories:
        for number, event in enumerate(story.events, start=1):
            if event[0] == "s":
                out.append(f"{number} {' '.join(event[1])}.")
            else:
                _, tokens, answer, support = event
                if tokens and tokens[-1] == "?":
                    text = " ".join(tokens[:-1]) + "?"
                else:
                    text = " ".join(tokens)
                ids = " ".join(str(i) for i in support)
                out.append(f"{number} {text}\t{answer}\t{ids}".rstrip("\t"))
    return out


def truncate_context(sentences: Sequence[list[str]], task_id: Optional[int]) -> list[list[str]]:
    """Keep only the most recent statements (a longer window for task 3)."""
    cap = TASK3_CONTEXT_CAP if task_id == 3 else DEFAULT_CONTEXT_CAP
    return list(sentences[-cap:])


def stories_to_samples(stories: Sequence[BabiStory],
                       task_id: Optional[int] = None) -> list[QASample]:
    """One QASample per question, context capped per task."""
    samples = []
    for story in stories:
        statements: list[list[str]] = []
        for event in story.events:
            if event[0] == "s":
                statements.append(event[1])
            else:
                _, tokens, answer, support = event
                samples.append(QASample(
                    context=truncate_context(statements, task_id),
                    query=tokens,
                    answer=answer,
                    task_id=task_id,
                    support=list(support),
                ))
    return samples


def load_babi_samples(path: str, task_id: Optional[int] = None) -> list[QASample]:
    return stories_to_samples(parse_babi(path), task_id=task_id)
