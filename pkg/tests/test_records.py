import io
import json
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dataengine.errors import SchemaError
from dataengine.records import (
    EvalRecord,
    compute_scoreboard,
    extract_bad_cases,
    ingest_results,
    match_prediction,
    tag_round,
)


def rec(**kw):
    base = dict(
        record_id="r1",
        image_id="i1",
        question="What color is the car?",
        choices=("red", "blue", "green"),
        ground_truth=0,
        prediction=1,
        dimension_label="attribute recognition",
        benchmark="synthetic",
    )
    base.update(kw)
    return EvalRecord(**base)


class TestEvalRecord:
    def test_round_trip(self):
        r = rec()
        assert EvalRecord.from_json(r.to_json()) == r

    def test_unparseable_round_trip(self):
        r = rec(prediction=None)
        obj = r.to_json()
        assert obj["prediction"] == "unparseable"
        back = EvalRecord.from_json(obj)
        assert back.prediction is None
        assert not back.is_correct

    def test_is_correct(self):
        assert rec(prediction=0).is_correct
        assert not rec(prediction=1).is_correct

    @pytest.mark.parametrize(
        "kw",
        [
            dict(choices=("only one",)),
            dict(choices=tuple(f"c{i}" for i in range(7))),
            dict(choices=("dup", "dup", "x")),
            dict(ground_truth=3),
            dict(ground_truth=-1),
            dict(prediction=5),
            dict(round=-1),
        ],
    )
    def test_invariants(self, kw):
        with pytest.raises(SchemaError):
            rec(**kw)


class TestMatchPrediction:
    choices = ("Paris", "London", "Berlin", "Rome")

    def test_integer_index(self):
        assert match_prediction(2, self.choices) == 2
        assert match_prediction(9, self.choices) is None

    def test_letter_with_punctuation(self):
        assert match_prediction("B.", self.choices) == 1
        assert match_prediction("d)", self.choices) == 3
        assert match_prediction("a", self.choices) == 0

    def test_exact_text_casefolded(self):
        assert match_prediction("  berlin ", self.choices) == 2

    def test_garbage(self):
        assert match_prediction("the answer is Paris", self.choices) is None
        assert match_prediction("", self.choices) is None
        assert match_prediction(None, self.choices) is None
        assert match_prediction(True, self.choices) is None

    def test_letter_beyond_choices(self):
        # "E" is a valid letter but there is no 5th choice
        assert match_prediction("E", self.choices) is None


class TestIngest:
    def test_generic(self):
        row = {
            "id": 7,
            "image_id": 12,
            "question": "q?",
            "choices": ["a", "b"],
            "answer_index": 1,
            "prediction": "B",
            "dimension": "image scene",
        }
        out = ingest_results(io.StringIO(json.dumps(row)))
        assert len(out) == 1
        assert out[0].record_id == "7"
        assert out[0].prediction == 1
        assert out[0].is_correct

    def test_mmbench_like(self):
        row = {
            "index": 3,
            "question": "q?",
            "A": "x",
            "B": "y",
            "C": "z",
            "answer": "b",
            "prediction": "y",
            "category": "spatial relationship",
        }
        out = ingest_results(io.StringIO(json.dumps(row)), format="mmbench-like")
        assert out[0].choices == ("x", "y", "z")
        assert out[0].ground_truth == 1
        assert out[0].is_correct
        assert out[0].dimension_label == "spatial relationship"

    def test_aokvqa_like(self):
        row = {
            "question_id": "q9",
            "image_id": 5,
            "question": "q?",
            "choices": ["a", "b", "c", "d"],
            "correct_choice_idx": 2,
            "prediction": 0,
            "question_type": "object localization",
        }
        out = ingest_results(io.StringIO(json.dumps(row)), format="aokvqa-like")
        assert out[0].ground_truth == 2
        assert not out[0].is_correct

    def test_bad_json_names_line(self):
        src = io.StringIO('{"id": 1}\nnot json\n')
        with pytest.raises(SchemaError) as exc:
            ingest_results(src)
        # line 1 fails first (missing fields), but a pure-JSON error carries its line
        assert exc.value.line == 1

    def test_invalid_json_line_number(self):
        good = {
            "id": 1, "image_id": 1, "question": "q?", "choices": ["a", "b"],
            "answer_index": 0, "prediction": 0, "dimension": "image scene",
        }
        src = io.StringIO(json.dumps(good) + "\n{broken\n")
        with pytest.raises(SchemaError) as exc:
            ingest_results(src)
        assert exc.value.line == 2

    def test_blank_lines_skipped(self):
        good = {
            "id": 1, "image_id": 1, "question": "q?", "choices": ["a", "b"],
            "answer_index": 0, "prediction": 0, "dimension": "image scene",
        }
        src = io.StringIO("\n" + json.dumps(good) + "\n\n")
        assert len(ingest_results(src)) == 1

    def test_unknown_format(self):
        with pytest.raises(SchemaError):
            ingest_results(io.StringIO(""), format="csv")


class TestScoreboard:
    def test_hand_counts(self):
        records = [
            rec(record_id=f"a{i}", prediction=0 if i < 3 else 1,
                dimension_label="image scene")
            for i in range(4)
        ] + [
            rec(record_id=f"b{i}", prediction=0 if i < 1 else None,
                dimension_label="image style")
            for i in range(2)
        ]
        board = compute_scoreboard(records)
        assert board.entries["image scene"].correct == 3
        assert board.entries["image scene"].total == 4
        assert board.score("image scene") == Fraction(3, 4)
        assert board.score("image style") == Fraction(1, 2)

    def test_exact_fraction(self):
        records = [
            rec(record_id=str(i), prediction=0 if i < 1 else 1) for i in range(3)
        ]
        assert compute_scoreboard(records).score("attribute recognition") == Fraction(1, 3)

    def test_empty_rejected(self):
        with pytest.raises(SchemaError):
            compute_scoreboard([])

    def test_round_trip_json(self):
        from dataengine.records import AbilityScoreboard

        board = compute_scoreboard([rec()])
        back = AbilityScoreboard.from_json(board.to_json())
        assert back.entries["attribute recognition"].total == 1

    @given(
        st.lists(
            st.tuples(st.sampled_from(["d1", "d2", "d3"]), st.booleans()),
            min_size=1,
            max_size=60,
        )
    )
    def test_totals_partition_records(self, spec):
        records = [
            rec(record_id=str(i), dimension_label=dim, prediction=0 if ok else 1)
            for i, (dim, ok) in enumerate(spec)
        ]
        board = compute_scoreboard(records)
        assert sum(e.total for e in board.entries.values()) == len(records)
        for entry in board.entries.values():
            assert 0 <= entry.score <= 1


class TestBadCases:
    def test_order_preserved_and_unparseable_included(self):
        records = [
            rec(record_id="ok", prediction=0),
            rec(record_id="wrong", prediction=1),
            rec(record_id="unparsed", prediction=None),
        ]
        bad = extract_bad_cases(records)
        assert [r.record_id for r in bad] == ["wrong", "unparsed"]

    def test_tag_round(self):
        tagged = tag_round([rec()], 3)
        assert tagged[0].round == 3
