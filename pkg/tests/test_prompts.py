import random

import pytest

from dataengine.errors import EngineError, SchemaError, StateError
from dataengine.pool import BadCasePool, ClassifiedBadCase
from dataengine.prompts import (
    CLASSIFICATION_TEMPLATE_ID,
    CONFLICT_CHECK_TEMPLATE_ID,
    CORRECTION_TEMPLATE_ID,
    GENERATION_TEMPLATE_ID,
    PromptStore,
    default_type_definitions,
    render,
    render_in_context_case,
    seed_default_templates,
)
from dataengine.question_types import QuestionType
from dataengine.records import EvalRecord
from dataengine.sampling import QuerySeed


def make_seed(qtype=QuestionType.IMAGE_SCENE):
    rec = EvalRecord(
        record_id="r1",
        image_id="7",
        question="What is the setting?",
        choices=("beach", "forest", "city"),
        ground_truth=1,
        prediction=0,
        dimension_label=qtype.value,
        benchmark="synthetic",
    )
    case = ClassifiedBadCase(rec, qtype, "manual")
    pool = BadCasePool([case])
    pair = pool.sample_pairs(qtype, random.Random(0))
    return QuerySeed(qtype=qtype, in_context=pair, image_id="7",
                     image_mode="random", seed_trace={"position": 0})


class TestStore:
    def test_register_versions_monotone(self, tmp_path):
        store = PromptStore(tmp_path)
        v1 = store.register("t", "body one")
        v2 = store.register("t", "body two", parent=1)
        assert (v1.version, v2.version) == (1, 2)
        assert v2.status == "draft"

    def test_activate_retires_previous(self, tmp_path):
        store = PromptStore(tmp_path)
        store.register("t", "one")
        store.register("t", "two", parent=1)
        store.activate("t", 1)
        store.activate("t", 2)
        assert store.active("t").version == 2
        assert store.get("t", 1).status == "retired"

    def test_missing_parent(self, tmp_path):
        store = PromptStore(tmp_path)
        with pytest.raises(EngineError):
            store.register("t", "body", parent=4)

    def test_unknown_placeholder_rejected(self, tmp_path):
        with pytest.raises(SchemaError):
            PromptStore(tmp_path).register("t", "hello {mystery_slot}")

    def test_persistence_round_trip(self, tmp_path):
        store = PromptStore(tmp_path)
        store.register("t", "one")
        store.activate("t", 1)
        reloaded = PromptStore(tmp_path)
        assert reloaded.active("t").body == "one"

    def test_diff(self, tmp_path):
        store = PromptStore(tmp_path)
        store.register("t", "line a\nline b")
        store.register("t", "line a\nline c", parent=1)
        diff = store.diff("t", 1, 2)
        assert any(line.startswith("-line b") for line in diff)
        assert any(line.startswith("+line c") for line in diff)

    def test_no_active_version(self, tmp_path):
        store = PromptStore(tmp_path)
        store.register("t", "draft only")
        with pytest.raises(StateError):
            store.active("t")

    def test_unknown_template(self, tmp_path):
        with pytest.raises(EngineError):
            PromptStore(tmp_path).versions("nope")


class TestSeedTemplates:
    def test_seed_set(self, tmp_path):
        store = PromptStore(tmp_path)
        seed_default_templates(store)
        assert store.template_ids() == sorted(
            [GENERATION_TEMPLATE_ID, CLASSIFICATION_TEMPLATE_ID,
             CONFLICT_CHECK_TEMPLATE_ID, CORRECTION_TEMPLATE_ID]
        )
        assert store.active(GENERATION_TEMPLATE_ID).version == 2
        assert store.get(GENERATION_TEMPLATE_ID, 1).status == "retired"

    def test_idempotent(self, tmp_path):
        store = PromptStore(tmp_path)
        seed_default_templates(store)
        seed_default_templates(store)
        assert len(store.versions(GENERATION_TEMPLATE_ID)) == 2

    def test_type_definitions_complete(self):
        defs = default_type_definitions()
        assert set(defs) == set(QuestionType)
        assert all(defs[qt] for qt in defs)


class TestRenderInContext:
    def test_shows_ground_truth(self):
        seed = make_seed()
        text = render_in_context_case(seed.in_context.cases[0])
        assert "Question: What is the setting?" in text
        assert "B. forest" in text
        assert text.endswith("Answer: B. forest")


class TestRender:
    def active_generation(self, tmp_path):
        store = PromptStore(tmp_path)
        seed_default_templates(store)
        return store, store.active(GENERATION_TEMPLATE_ID)

    def test_full_substitution(self, tmp_path):
        _, tpl = self.active_generation(tmp_path)
        out = render(tpl, make_seed(), "caption line\ndog: [1,2,3,4]",
                     default_type_definitions(), k_questions=7)
        from dataengine.prompts import ALLOWED_PLACEHOLDERS

        for name in ALLOWED_PLACEHOLDERS:
            assert "{" + name + "}" not in out.final_text
        assert "Create 7 multiple-choice questions" in out.final_text
        assert "caption line" in out.final_text
        assert "image scene:" in out.final_text  # type definition line

    def test_hash_stable(self, tmp_path):
        _, tpl = self.active_generation(tmp_path)
        a = render(tpl, make_seed(), "ann", default_type_definitions())
        b = render(tpl, make_seed(), "ann", default_type_definitions())
        assert a.content_hash == b.content_hash
        c = render(tpl, make_seed(), "other ann", default_type_definitions())
        assert a.content_hash != c.content_hash

    def test_draft_requires_flag(self, tmp_path):
        store, tpl = self.active_generation(tmp_path)
        draft = store.register(GENERATION_TEMPLATE_ID, tpl.body + "\nextra", parent=2)
        with pytest.raises(StateError):
            render(draft, make_seed(), "ann", default_type_definitions())
        out = render(draft, make_seed(), "ann", default_type_definitions(), allow_draft=True)
        assert out.version == 3

    def test_retired_never_renders(self, tmp_path):
        store, _ = self.active_generation(tmp_path)
        retired = store.get(GENERATION_TEMPLATE_ID, 1)
        with pytest.raises(StateError):
            render(retired, make_seed(), "ann", default_type_definitions(), allow_draft=True)

    def test_missing_type_definition(self, tmp_path):
        _, tpl = self.active_generation(tmp_path)
        with pytest.raises(EngineError):
            render(tpl, make_seed(), "ann", {})
