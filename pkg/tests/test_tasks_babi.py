"""Numbered-line story parsing and the synthetic story generators."""

import numpy as np
import pytest

from entnet.errors import MalformedLine
from entnet.seeding import substream
from entnet.tasks.babi import (
    BabiStory,
    load_babi_samples,
    parse_babi,
    serialize_babi,
    stories_to_samples,
    tokenize,
    truncate_context,
)
from entnet.tasks.babi_synth import (
    DROP_VERBS,
    LOCATIONS4,
    LOCATIONS6,
    OBJECTS,
    PERSONS,
    generate_stories,
    task2_entities,
    write_stories,
)

FIXTURE = [
    "1 mary moved to the bathroom.",
    "2 john went to the hallway.",
    "3 where is mary?\tbathroom\t1",
    "4 daniel went back to the garden.",
    "5 where is daniel?\tgarden\t4",
    "1 sandra took the milk.",
    "2 sandra journeyed to the office.",
    "3 where is the milk?\toffice\t1 2",
]


class TestTokenize:
    def test_statement(self):
        assert tokenize("Mary moved to the bathroom.") == \
            ["mary", "moved", "to", "the", "bathroom"]

    def test_question_mark_is_a_token(self):
        assert tokenize("Where is Mary?") == ["where", "is", "mary", "?"]

    def test_no_trailing_punctuation(self):
        assert tokenize("john grabbed the football") == \
            ["john", "grabbed", "the", "football"]


class TestParse:
    def test_number_reset_starts_new_story(self):
        stories = parse_babi(FIXTURE)
        assert len(stories) == 2
        assert len(stories[0].events) == 5
        assert len(stories[1].events) == 3

    def test_question_event_fields(self):
        stories = parse_babi(FIXTURE)
        kind, tokens, answer, support = stories[0].events[2]
        assert kind == "q"
        assert tokens == ["where", "is", "mary", "?"]
        assert answer == "bathroom"
        assert support == [1]

    def test_multi_id_support(self):
        stories = parse_babi(FIXTURE)
        assert stories[1].events[2][3] == [1, 2]

    def test_comma_joined_answer_is_single_token(self):
        stories = parse_babi(["1 daniel took the milk and football.",
                              "2 what is daniel holding?\tmilk,football\t1"])
        assert stories[0].events[1][2] == "milk,football"

    def test_non_numeric_head_raises_with_lineno(self):
        with pytest.raises(MalformedLine) as err:
            parse_babi(["1 mary ran.", "oops the milk."])
        assert err.value.lineno == 2

    def test_too_many_tab_fields(self):
        with pytest.raises(MalformedLine):
            parse_babi(["1 where is mary?\tbathroom\t1\textra"])

    def test_empty_answer(self):
        with pytest.raises(MalformedLine):
            parse_babi(["1 where is mary?\t\t1"])

    def test_bad_support_ids(self):
        with pytest.raises(MalformedLine):
            parse_babi(["1 where is mary?\tbathroom\tone"])


class TestSerialize:
    def test_round_trip_token_for_token(self):
        stories = parse_babi(FIXTURE)
        assert serialize_babi(stories) == FIXTURE

    def test_reparse_identical(self):
        stories = parse_babi(FIXTURE)
        again = parse_babi(serialize_babi(stories))
        assert [s.events for s in again] == [s.events for s in stories]


class TestTruncateContext:
    def test_cap_at_seventy(self):
        sentences = [[f"s{i}"] for i in range(75)]
        kept = truncate_context(sentences, task_id=1)
        assert len(kept) == 70
        assert kept[0] == ["s5"]

    def test_under_cap_unchanged(self):
        sentences = [[f"s{i}"] for i in range(60)]
        assert truncate_context(sentences, task_id=1) == sentences

    def test_task3_cap_is_longer(self):
        sentences = [[f"s{i}"] for i in range(131)]
        kept = truncate_context(sentences, task_id=3)
        assert len(kept) == 130
        assert kept[0] == ["s1"]


class TestSamples:
    def test_context_excludes_questions(self):
        samples = stories_to_samples(parse_babi(FIXTURE), task_id=1)
        assert len(samples) == 3
        # second question of story one sees all three statements, no questions
        assert samples[1].context == [
            ["mary", "moved", "to", "the", "bathroom"],
            ["john", "went", "to", "the", "hallway"],
            ["daniel", "went", "back", "to", "the", "garden"],
        ]
        assert samples[1].answer == "garden"
        assert samples[1].support == [4]
        assert samples[1].task_id == 1


def replay_task1(story: BabiStory):
    """Independent answer derivation: a person is at their latest move target."""
    where = {}
    for event in story.events:
        if event[0] == "s":
            where[event[1][0]] = event[1][-1]
        else:
            yield event, where[event[1][2]]


def replay_task2(story: BabiStory):
    """Independent object tracking through moves, takes and drops."""
    where, holder, resting = {}, {}, {}
    for event in story.events:
        if event[0] == "s":
            person, last = event[1][0], event[1][-1]
            if last in OBJECTS:
                if event[1][1] in {v.split()[0] for v in DROP_VERBS}:
                    resting[last] = where[person]
                    holder.pop(last, None)
                else:
                    holder[last] = person
                    resting.pop(last, None)
            else:
                where[person] = last
        else:
            obj = event[1][3]
            answer = where[holder[obj]] if obj in holder else resting[obj]
            yield event, answer


class TestSyntheticTask1:
    def test_answers_match_independent_replay(self):
        rng = substream(11, "generator")
        for story in generate_stories(1, 300, rng):
            for event, expected in replay_task1(story):
                assert event[2] == expected

    def test_support_points_at_the_latest_move(self):
        rng = substream(12, "generator")
        for story in generate_stories(1, 100, rng):
            numbered = {i: ev for i, ev in enumerate(story.events, start=1)}
            for event in story.events:
                if event[0] == "q":
                    (line,) = event[3]
                    support = numbered[line]
                    person, answer = event[1][2], event[2]
                    assert support[1][0] == person
                    assert support[1][-1] == answer

    def test_vocabulary_is_closed(self):
        rng = substream(13, "generator")
        tokens = {t for story in generate_stories(1, 50, rng)
                  for ev in story.events for t in ev[1]}
        allowed = set(PERSONS) | set(LOCATIONS6) | {
            "moved", "went", "journeyed", "travelled", "back", "to", "the",
            "where", "is", "?",
        }
        assert tokens <= allowed


class TestSyntheticTask2:
    def test_answers_match_independent_replay(self):
        rng = substream(14, "generator")
        for story in generate_stories(2, 300, rng):
            for event, expected in replay_task2(story):
                assert event[2] == expected

    def test_questions_have_two_supporting_lines(self):
        rng = substream(15, "generator")
        for story in generate_stories(2, 100, rng):
            count = len(story.events)
            for event in story.events:
                if event[0] == "q":
                    assert len(event[3]) == 2
                    lo, hi = event[3]
                    assert 1 <= lo < hi <= count

    def test_entity_list_has_ten_words(self):
        entities = task2_entities()
        assert len(entities) == 10
        assert entities == PERSONS + OBJECTS + LOCATIONS4

    def test_file_round_trip(self, tmp_path):
        rng = substream(16, "generator")
        stories = generate_stories(2, 20, rng)
        path = tmp_path / "task2.txt"
        write_stories(path, stories)
        samples = load_babi_samples(str(path), task_id=2)
        direct = stories_to_samples(stories, task_id=2)
        assert len(samples) == len(direct)
        for a, b in zip(samples, direct):
            assert (a.context, a.query, a.answer, a.support) == \
                (b.context, b.query, b.answer, b.support)

    def test_unknown_task_id_rejected(self):
        with pytest.raises(ValueError):
            generate_stories(3, 1, substream(0, "generator"))
