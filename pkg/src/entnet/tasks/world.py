"""Two-agent grid-world stories with an exact replay oracle.

Agents live on a width x height grid of cells (1,1)..(width,height).  A story
is a fixed number of statement lines: each agent is placed and immediately
faces a direction, then random agents face or move (move proposals that would
leave the grid are rejected and resampled).  The story ends with a "where is
agentK ?" question per agent whose answer is that agent's final cell.

Generation tracks positions itself; `world_oracle` is an independent replay
over structured events, and `replay_story` re-parses the rendered text from
scratch, so a bug in either path shows up as a generator/oracle mismatch.

File format (UTF-8): `#`-prefixed header lines, stories separated by blank
lines, each story's statements followed by interleaved `Q: where is agentK ?`
/ `A: (x,y)` pairs.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from ..errors import MalformedLine, OffGrid
from .sample import QASample

# sampler index order; N advances +y, E +x, S -y, W -x
DIRECTIONS = ("N", "E", "S", "W")
DELTAS = {"N": (0, 1), "E": (1, 0), "S": (0, -1), "W": (-1, 0)}


@dataclass
class WorldConfig:
    """Grid shape and story length; `lines` counts every statement line,
    including the placement and initial-facing lines (2 per agent)."""

    width: int = 10
    height: int = 10
    agents: int = 2
    lines: int = 10
    max_move: int = 5

    def __post_init__(self):
        if min(self.width, self.height, self.agents, self.max_move) < 1:
            raise ValueError("grid sizes, agent count and move range must be >= 1")
        if self.lines < 2 * self.agents:
            raise ValueError(
                f"need at least {2 * self.agents} lines to place and face "
                f"{self.agents} agents, got {self.lines}"
            )


@dataclass
class WorldStory:
    """Rendered statement lines plus the generator's own answers."""

    lines: list[str]
    questions: list[str]
    answers: list[str]

    def blocks(self) -> list[str]:
        """Statements then interleaved Q/A pairs, as written to disk."""
        out = list(self.lines)
        for q, a in zip(self.questions, self.answers):
            out.append(f"Q: {q}")
            out.append(f"A: {a}")
        return out


def format_cell(x: int, y: int) -> str:
    return f"({x},{y})"


def generate_world_story(config: WorldConfig, rng: np.random.Generator) -> WorldStory:
    """Sample one story; all intermediate positions stay on the grid.

    Draw order per story: for each agent, placement x, placement y, initial
    facing; then per action line: agent index, then an accept-reject loop of
    (face-or-move coin, direction or step count).  Facing is always legal, so
    the loop terminates with probability one.
    """
    names = [f"agent{i + 1}" for i in range(config.agents)]
    pos: dict[str, Tuple[int, int]] = {}
    facing: dict[str, str] = {}
    lines: list[str] = []

    for name in names:
        x = int(rng.integers(1, config.width + 1))
        y = int(rng.integers(1, config.height + 1))
        pos[name] = (x, y)
        lines.append(f"{name} is at {format_cell(x, y)}")
        d = DIRECTIONS[rng.integers(len(DIRECTIONS))]
        facing[name] = d
        lines.append(f"{name} faces-{d}")

    for _ in range(config.lines - 2 * config.agents):
        name = names[rng.integers(config.agents)]
        while True:
            if rng.integers(2) == 0:
                d = DIRECTIONS[rng.integers(len(DIRECTIONS))]
                facing[name] = d
                lines.append(f"{name} faces-{d}")
                break
            k = int(rng.integers(1, config.max_move + 1))
            dx, dy = DELTAS[facing[name]]
            x, y = pos[name]
            nx, ny = x + k * dx, y + k * dy
            if 1 <= nx <= config.width and 1 <= ny <= config.height:
                pos[name] = (nx, ny)
                lines.append(f"{name} moves-{k}")
                break

    questions = [f"where is {name} ?" for name in names]
    answers = [format_cell(*pos[name]) for name in names]
    return WorldStory(lines=lines, questions=questions, answers=answers)


def generate_world_stories(config: WorldConfig, count: int, rng: np.random.Generator,
                           variable_lines: Optional[Tuple[int, int]] = None) -> list[WorldStory]:
    """Sample `count` stories; with variable_lines=(lo, hi) each story's line
    count is drawn uniformly from that range (clamped up to the minimum
    needed to place and face every agent)."""
    stories = []
    floor = 2 * config.agents
    for _ in range(count):
        cfg = config
        if variable_lines is not None:
            lo, hi = variable_lines
            t = int(rng.integers(lo, hi + 1))
            cfg = WorldConfig(config.width, config.height, config.agents,
                              max(floor, t), config.max_move)
        stories.append(generate_world_story(cfg, rng))
    return stories


# -- independent oracle -----------------------------------------------------


def world_oracle(placements: dict, actions: Iterable[tuple],
                 width: int = 10, height: int = 10) -> dict:
    """Replay structured events and return each agent's final cell.

    placements maps agent name to its starting (x, y); actions is a sequence
    of (agent, ("face", direction)) or (agent, ("move", steps)) events in
    story order.  Every cell a move passes through must lie on the grid
    (movement is along one axis, so checking the endpoint covers the path);
    violations raise OffGrid rather than clamping.
    """
    pos = {}
    for name, (x, y) in placements.items():
        if not (1 <= x <= width and 1 <= y <= height):
            raise OffGrid(f"{name} placed off-grid at ({x},{y})")
        pos[name] = (int(x), int(y))
    facing: dict[str, str] = {}
    for name, action in actions:
        if name not in pos:
            raise ValueError(f"action for unplaced agent {name!r}")
        kind, arg = action
        if kind == "face":
            if arg not in DELTAS:
                raise ValueError(f"unknown direction {arg!r}")
            facing[name] = arg
        elif kind == "move":
            if name not in facing:
                raise ValueError(f"{name} moves before facing any direction")
            dx, dy = DELTAS[facing[name]]
            x, y = pos[name]
            nx, ny = x + int(arg) * dx, y + int(arg) * dy
            if not (1 <= nx <= width and 1 <= ny <= height):
                raise OffGrid(
                    f"{name} moves-{arg} from ({x},{y}) facing {facing[name]} "
                    f"lands off-grid at ({nx},{ny})"
                )
            pos[name] = (nx, ny)
        else:
            raise ValueError(f"unknown action kind {kind!r}")
    return pos


_PLACE = re.compile(r"^(agent\d+) is at \((\d+),(\d+)\)$")
_FACE = re.compile(r"^(agent\d+) faces-([NSEW])$")
_MOVE = re.compile(r"^(agent\d+) moves-(\d+)$")
_QUESTION = re.compile(r"^Q: where is (agent\d+) \?$")
_ANSWER = re.compile(r"^A: \((\d+),(\d+)\)$")


def parse_statement_lines(lines: Sequence[str], base_lineno: int = 1):
    """Parse statement text into (placements, actions) for the oracle."""
    placements: dict[str, Tuple[int, int]] = {}
    actions: list[tuple] = []
    for offset, line in enumerate(lines):
        lineno = base_lineno + offset
        m = _PLACE.match(line)
        if m:
            name = m.group(1)
            if name in placements:
                raise MalformedLine(lineno, f"{name} placed twice")
            placements[name] = (int(m.group(2)), int(m.group(3)))
            continue
        m = _FACE.match(line)
        if m:
            actions.append((m.group(1), ("face", m.group(2))))
            continue
        m = _MOVE.match(line)
        if m:
            actions.append((m.group(1), ("move", int(m.group(2)))))
            continue
        raise MalformedLine(lineno, f"unrecognized statement {line!r}")
    return placements, actions


def replay_story(story: WorldStory, config: WorldConfig = WorldConfig()) -> dict:
    """Re-parse a story's rendered text and replay it through the oracle."""
    placements, actions = parse_statement_lines(story.lines)
    return world_oracle(placements, actions, config.width, config.height)


def story_to_samples(story: WorldStory) -> list[QASample]:
    """One QASample per question; statements tokenized by whitespace."""
    context = [line.split() for line in story.lines]
    return [
        QASample(context=context, query=q.split(), answer=a, task_id=0)
        for q, a in zip(story.questions, story.answers)
    ]


# -- file io ----------------------------------------------------------------


def write_world_file(path, stories: Sequence[WorldStory], header: str = "") -> None:
    """Write stories blank-line separated, with a `#` header comment."""
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        for i, story in enumerate(stories):
            if i or header:
                fh.write("\n")
            for line in story.blocks():
                fh.write(line + "\n")


def read_world_file(path) -> list[WorldStory]:
    """Parse a dataset file back into stories (errors carry line numbers)."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = fh.read().splitlines()

    stories: list[WorldStory] = []
    block: list[Tuple[int, str]] = []

    def flush(block):
        lines, questions, answers = [], [], []
        pending_q = None
        for lineno, line in block:
            if _QUESTION.match(line):
                if pending_q is not None:
                    raise MalformedLine(lineno, "question without an answer before it")
                pending_q = line[len("Q: "):]
                continue
            if _ANSWER.match(line):
                if pending_q is None:
                    raise MalformedLine(lineno, "answer without a question")
                questions.append(pending_q)
                answers.append(line[len("A: "):])
                pending_q = None
                continue
            if questions or pending_q is not None:
                raise MalformedLine(lineno, "statement after the first question")
            # validated as a statement (raises on garbage)
            parse_statement_lines([line], base_lineno=lineno)
            lines.append(line)
        if pending_q is not None:
            raise MalformedLine(block[-1][0], "dangling question at end of story")
        stories.append(WorldStory(lines=lines, questions=questions, answers=answers))

    for lineno, line in enumerate(raw, start=1):
        if line.startswith("#"):
            continue
        if not line.strip():
            if block:
                flush(block)
                block = []
            continue
        block.append((lineno, line))
    if block:
        flush(block)
    return stories
