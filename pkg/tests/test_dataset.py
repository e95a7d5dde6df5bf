import json
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dataengine.dataset import (
    DatasetItem,
    build,
    build_from_rows,
    diversity,
    jaccard_distance,
    load_noun_lexicon,
    merge_rounds,
    parse_dataset,
    write_dataset,
)
from dataengine.errors import EngineError, SchemaError


def row(i=0, question=None, answer="A", rationale="it is visible", image_id=None):
    return {
        "image_id": image_id or f"img{i}",
        "question": question or f"What is item {i}?",
        "choices": [f"c{i}a", f"c{i}b", f"c{i}c", f"c{i}d"],
        "answer": answer,
        "rationale": rationale,
        "provenance": {
            "round": 1,
            "prompt_version": 2,
            "qtype": "image scene",
            "request_digest": f"{i:03d}digest",
        },
    }


class TestDatasetItem:
    def test_rejects_bbox_span_anywhere(self):
        for field, value in [
            ("question", "See [1,2,3,4]?"),
            ("choices", ["a [1,2,3,4]", "b", "c", "d"]),
            ("rationale", "Box [1,2,3,4] proves it."),
        ]:
            bad = row()
            bad[field] = value
            with pytest.raises(SchemaError):
                DatasetItem.from_json(bad)

    def test_answer_text(self):
        item = DatasetItem.from_json(row(3, answer="C"))
        assert item.answer_text == "c3c"

    def test_round_trip(self):
        item = DatasetItem.from_json(row())
        assert DatasetItem.from_json(item.to_json()) == item


class TestBuild:
    def test_sorted_by_digest_then_question(self):
        rows = [row(2), row(0), row(1)]
        items, _ = build_from_rows(rows, "QMAE")
        digests = [it.provenance["request_digest"] for it in items]
        assert digests == sorted(digests)

    def test_manifest(self):
        items, manifest = build_from_rows([row(0), row(1)], "QMAE")
        assert manifest == {
            "format": "QMAE",
            "count": 2,
            "counts_by_type": {"image scene": 2},
            "prompt_versions": [2],
        }

    def test_qma_drops_rationale(self):
        items, manifest = build_from_rows([row(0)], "QMA")
        assert items[0].rationale is None
        assert "rationale" not in items[0].to_json()

    def test_qmae_requires_rationale(self):
        with pytest.raises(EngineError):
            build_from_rows([row(0, rationale=None)], "QMAE")

    def test_unknown_format(self):
        with pytest.raises(EngineError):
            build_from_rows([row(0)], "QMAExtra")

    def test_build_refuses_non_accepted(self):
        from dataengine.validation import GeneratedQA, ValidationReport, Verdict

        qa = GeneratedQA(None, "q?", ("a", "b", "c", "d"), "A", "r")
        report = ValidationReport(qa=qa, verdict=Verdict("auto_reject"))
        with pytest.raises(EngineError):
            build([(report, {})], "QMAE")


class TestIO:
    def test_write_parse_round_trip(self, tmp_path):
        items, _ = build_from_rows([row(i) for i in range(5)], "QMAE")
        path = tmp_path / "d.qmae"
        write_dataset(items, path)
        assert parse_dataset(path) == items

    def test_corrupt_line_number(self, tmp_path):
        path = tmp_path / "d.qmae"
        items, _ = build_from_rows([row(0)], "QMAE")
        write_dataset(items, path)
        with open(path, "a", encoding="utf-8") as fh:
            fh.write('{"not": "an item"}\n')
        with pytest.raises(SchemaError) as exc:
            parse_dataset(path)
        assert exc.value.line == 2

    @given(indices=st.lists(st.integers(min_value=0, max_value=500), min_size=1,
                            max_size=30, unique=True))
    def test_round_trip_property(self, indices, tmp_path_factory):
        items, _ = build_from_rows([row(i) for i in indices], "QMAE")
        path = tmp_path_factory.mktemp("ds") / "d.qmae"
        write_dataset(items, path)
        rebuilt, _ = build_from_rows([it.to_json() for it in parse_dataset(path)], "QMAE")
        assert rebuilt == items


class TestMerge:
    def test_dedup_first_wins(self, tmp_path):
        a_items, _ = build_from_rows(
            [row(0, question="Shared question?", image_id="x"), row(1)], "QMAE"
        )
        b_items, _ = build_from_rows(
            [row(5, question="Shared question?", image_id="x"), row(2)], "QMAE"
        )
        pa, pb = tmp_path / "a.qmae", tmp_path / "b.qmae"
        write_dataset(a_items, pa)
        write_dataset(b_items, pb)
        merged = merge_rounds([pa, pb])
        assert len(merged) == 3
        shared = [it for it in merged if it.question == "Shared question?"]
        assert shared[0].provenance["request_digest"] == "000digest"

    def test_same_question_different_image_kept(self, tmp_path):
        a_items, _ = build_from_rows([row(0, question="Q?", image_id="x")], "QMAE")
        b_items, _ = build_from_rows([row(1, question="Q?", image_id="y")], "QMAE")
        pa, pb = tmp_path / "a.qmae", tmp_path / "b.qmae"
        write_dataset(a_items, pa)
        write_dataset(b_items, pb)
        assert len(merge_rounds([pa, pb])) == 2


# -- diversity ----------------------------------------------------------------

CORPUS_SPEC = [
    # (question, answer text, unused distractors are generated)
    ("what color is the dog", "red"),
    ("what color is the cat", "white"),
    ("where is the tree", "garden"),
    ("what color is the dog", "red"),
    ("is the car red", "yes"),
    ("how many dogs are there", "three"),
    ("what shape is the kite", "diamond"),
    ("where is the dog", "park"),
    ("is the sky blue", "yes"),
    ("who holds the umbrella", "a man"),
]

HAND_LEXICON = frozenset(
    {"dog", "cat", "garden", "diamond", "park", "man", "umbrella", "sky"}
)


def hand_corpus():
    items = []
    for i, (question, answer) in enumerate(CORPUS_SPEC):
        items.append(
            DatasetItem(
                image_id=f"img{i}",
                question=question,
                choices=(answer, f"w{i}a", f"w{i}b", f"w{i}c"),
                answer="A",
                rationale="it is visible",
                provenance={"request_digest": f"{i:03d}"},
            )
        )
    return items


class TestDiversity:
    def test_hand_computed_corpus(self):
        report = diversity(hand_corpus(), noun_lexicon=HAND_LEXICON)
        assert report.instance_num == 10
        assert report.unique_q == 9
        assert report.unique_q_pct == pytest.approx(0.9)
        assert report.unique_a == 8
        assert report.unique_a_pct == pytest.approx(0.8)
        assert report.avg_len_q == pytest.approx(4.5)
        # answers contribute 11 words, rationales 30 -> 41 / 10
        assert report.avg_len_a == pytest.approx(4.1)
        # nouns in answers/rationales only: garden, diamond, park, man
        assert report.unique_nouns_a == 4
        assert report.mean_q_distance == pytest.approx(float(Fraction(257, 350)), abs=1e-12)

    def test_independent_pairwise_oracle(self):
        items = hand_corpus()
        sets = [frozenset(it.question.split()) for it in items]
        total = Fraction(0)
        pairs = 0
        for i in range(len(sets)):
            for j in range(i + 1, len(sets)):
                inter = len(sets[i] & sets[j])
                union = len(sets[i] | sets[j])
                total += 1 - Fraction(inter, union)
                pairs += 1
        report = diversity(items, noun_lexicon=HAND_LEXICON)
        assert report.mean_q_distance == pytest.approx(float(total / pairs), abs=1e-12)

    def test_identical_questions_distance_zero(self):
        items = [
            DatasetItem(f"img{i}", "same question every time",
                        (f"a{i}", "b", "c", "d")[0:1] + (f"b{i}", f"c{i}", f"d{i}"),
                        "A", "r", {})
            for i in range(5)
        ]
        assert diversity(items, noun_lexicon=HAND_LEXICON).mean_q_distance == 0.0

    def test_disjoint_pair_distance_one(self):
        items = [
            DatasetItem("i1", "alpha beta gamma", ("a", "b", "c", "d"), "A", "r", {}),
            DatasetItem("i2", "delta epsilon zeta", ("e", "f", "g", "h"), "A", "r", {}),
        ]
        assert diversity(items, noun_lexicon=HAND_LEXICON).mean_q_distance == 1.0

    def test_jaccard_edge_cases(self):
        assert jaccard_distance(frozenset(), frozenset()) == 0.0
        assert jaccard_distance(frozenset({"a"}), frozenset({"a"})) == 0.0
        assert jaccard_distance(frozenset({"a"}), frozenset({"b"})) == 1.0

    def test_shipped_lexicon_loads(self):
        lex = load_noun_lexicon()
        assert len(lex) > 100
        assert all(w == w.strip() for w in lex)

    def test_empty_dataset_rejected(self):
        with pytest.raises(EngineError):
            diversity([])

    def test_tokenization_casefold_and_punctuation(self):
        items = [
            DatasetItem("i1", "Is the Dog here?", ("a", "b", "c", "d"), "A", "r", {}),
            DatasetItem("i2", "is the dog here", ("e", "f", "g", "h"), "A", "r", {}),
        ]
        assert diversity(items, noun_lexicon=HAND_LEXICON).mean_q_distance == 0.0
