"""Synthetic story generators in the numbered-line format.

These produce the two classic story-QA settings the trainer is exercised on:

* task 1 (single supporting fact): people move between locations; each
  question asks where a person is, answerable from their latest move.
* task 2 (two supporting facts): people also pick up and put down objects;
  each question asks where an object is, answerable by combining who holds
  (or last dropped) it with where that happened.

Stories come out through `serialize_babi`, so files are byte-compatible with
the parser's expectations, including tab-separated answers and supporting
line numbers.  Task 2 uses exactly ten entities (four people, two objects,
four places), which is the slot layout used for key-tied inspection runs.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .babi import BabiStory, serialize_babi

PERSONS = ("mary", "john", "daniel", "sandra")
LOCATIONS6 = ("bathroom", "hallway", "kitchen", "garden", "office", "bedroom")

MOVE_VERBS = ("moved to", "went to", "journeyed to", "travelled to", "went back to")

OBJECTS = ("milk", "football")
LOCATIONS4 = ("bathroom", "hallway", "kitchen", "garden")
TAKE_VERBS = ("took", "got", "grabbed", "picked up")
DROP_VERBS = ("dropped", "discarded", "put down")


def task2_entities() -> tuple[str, ...]:
    """The ten entity words of task 2, in fixed slot order."""
    return PERSONS + OBJECTS + LOCATIONS4


def _pick(rng: np.random.Generator, options):
    return options[rng.integers(len(options))]


def generate_task1_story(rng: np.random.Generator, rounds: int = 5) -> BabiStory:
    """`rounds` blocks of two moves plus one where-is-person question."""
    where: dict[str, Optional[str]] = {p: None for p in PERSONS}
    move_line: dict[str, int] = {}
    story = BabiStory()
    lineno = 0
    for _ in range(rounds):
        for _ in range(2):
            person = _pick(rng, PERSONS)
            choices = [loc for loc in LOCATIONS6 if loc != where[person]]
            place = _pick(rng, choices)
            verb = _pick(rng, MOVE_VERBS)
            lineno += 1
            story.events.append(("s", f"{person} {verb} the {place}".split()))
            where[person] = place
            move_line[person] = lineno
        moved = sorted(move_line)
        person = _pick(rng, moved)
        lineno += 1
        story.events.append((
            "q", f"where is {person} ?".split(),
            where[person], [move_line[person]],
        ))
    return story


def generate_task2_story(rng: np.random.Generator, rounds: int = 5) -> BabiStory:
    """`rounds` blocks of three statements plus one where-is-object question.

    Statements are moves, takes (a located person picks up a free object)
    and drops (a holder puts their object down where they stand).  The first
    block always moves someone and hands them an object, so from then on at
    least one object's place is determined and every question is answerable.
    """
    where: dict[str, Optional[str]] = {p: None for p in PERSONS}
    move_line: dict[str, int] = {}
    holder: dict[str, Optional[str]] = {o: None for o in OBJECTS}
    resting: dict[str, Optional[tuple]] = {o: None for o in OBJECTS}  # (place, lines)
    take_line: dict[str, int] = {}
    story = BabiStory()
    lineno = 0

    def do_move(person=None):
        nonlocal lineno
        person = person if person is not None else _pick(rng, PERSONS)
        choices = [loc for loc in LOCATIONS4 if loc != where[person]]
        place = _pick(rng, choices)
        lineno += 1
        story.events.append(("s", f"{person} {_pick(rng, MOVE_VERBS)} the {place}".split()))
        where[person] = place
        move_line[person] = lineno

    def do_take(person=None, obj=None):
        nonlocal lineno
        located = [p for p in PERSONS if where[p] is not None]
        free = [o for o in OBJECTS if holder[o] is None]
        person = person if person is not None else _pick(rng, located)
        obj = obj if obj is not None else _pick(rng, free)
        lineno += 1
        story.events.append(("s", f"{person} {_pick(rng, TAKE_VERBS)} the {obj}".split()))
        holder[obj] = person
        resting[obj] = None
        take_line[obj] = lineno

    def do_drop():
        nonlocal lineno
        held = [o for o in OBJECTS if holder[o] is not None]
        obj = _pick(rng, held)
        person = holder[obj]
        lineno += 1
        story.events.append(("s", f"{person} {_pick(rng, DROP_VERBS)} the {obj}".split()))
        resting[obj] = (where[person], sorted([move_line[person], lineno]))
        holder[obj] = None

    def random_statement():
        options = ["move"]
        if any(holder[o] is None for o in OBJECTS) and any(
                where[p] is not None for p in PERSONS):
            options.append("take")
        if any(holder[o] is not None for o in OBJECTS):
            options.append("drop")
        kind = _pick(rng, options)
        if kind == "move":
            do_move()
        elif kind == "take":
            do_take()
        else:
            do_drop()

    for rnd in range(rounds):
        if rnd == 0:
            person = _pick(rng, PERSONS)
            do_move(person)
            do_take(person, _pick(rng, OBJECTS))
            random_statement()
        else:
            for _ in range(3):
                random_statement()
        determinate = []
        for obj in OBJECTS:
            if holder[obj] is not None:
                person = holder[obj]
                determinate.append(
                    (obj, where[person], sorted([take_line[obj], move_line[person]])))
            elif resting[obj] is not None:
                place, lines = resting[obj]
                determinate.append((obj, place, list(lines)))
        obj, answer, support = determinate[rng.integers(len(determinate))]
        story.events.append(("q", f"where is the {obj} ?".split(), answer, support))
        lineno += 1
    return story


def generate_stories(task_id: int, count: int, rng: np.random.Generator,
                     rounds: int = 5) -> list[BabiStory]:
    gen = {1: generate_task1_story, 2: generate_task2_story}.get(task_id)
    if gen is None:
        raise ValueError(f"no synthetic generator for task {task_id}")
    return [gen(rng, rounds=rounds) for _ in range(count)]


def write_stories(path, stories) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in serialize_babi(stories):
            fh.write(line + "\n")
