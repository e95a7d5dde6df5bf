"""Shared fixtures: a synthetic evaluation corpus over all 18 question types,
a tiny COCO-style catalog, an embedding index, and a scripted LLM transport
used to record replay cassettes."""

from __future__ import annotations

import hashlib
import json
import random
import re

import pytest

from dataengine.engine import EngineConfig, EngineState, TrainerConfig, run_round
from dataengine.question_types import QuestionType

CANON_DIMS = [qt.value for qt in QuestionType]

PER_DIM_RECORDS = 10


def spread_scores() -> dict[str, float]:
    """18 initial scores evenly spread over [0.2, 0.9], keyed by dimension."""
    return {dim: 0.2 + 0.7 * i / 17 for i, dim in enumerate(CANON_DIMS)}


def make_eval_rows(scores: dict[str, float], per_dim: int = PER_DIM_RECORDS,
                   image_ids=None) -> list[dict]:
    rows = []
    k = 0
    for dim in sorted(scores):
        n_correct = round(scores[dim] * per_dim)
        for j in range(per_dim):
            image = image_ids[k % len(image_ids)] if image_ids else f"ev{k:04d}"
            rows.append(
                {
                    "id": f"{dim}-{j}",
                    "image_id": image,
                    "question": f"Benchmark item {j} probing {dim}?",
                    "choices": ["alpha", "beta", "gamma"],
                    "answer_index": 0,
                    "prediction": 0 if j < n_correct else 1,
                    "dimension": dim,
                    "benchmark": "synthetic",
                }
            )
            k += 1
    return rows


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


N_IMAGES = 80  # catalog image ids are the stringified ints "0".."79"


def coco_fixture_objs() -> tuple[dict, dict]:
    """Captions + instances dicts for N_IMAGES 100x100 images, 1-2 captions and
    one 40x40 object each."""
    images = [{"id": i, "width": 100, "height": 100} for i in range(N_IMAGES)]
    cap_anns = []
    inst_anns = []
    for i in range(N_IMAGES):
        cap_anns.append({"image_id": i, "caption": f"A scene number {i} with a box."})
        if i % 2 == 0:
            cap_anns.append({"image_id": i, "caption": f"Another view of scene {i}."})
        inst_anns.append({"image_id": i, "category_id": 1 + i % 3,
                          "bbox": [10.0, 10.0, 40.0, 40.0]})
    categories = [{"id": 1, "name": "dog"}, {"id": 2, "name": "car"}, {"id": 3, "name": "tree"}]
    captions = {"images": images, "annotations": cap_anns}
    instances = {"images": images, "annotations": inst_anns, "categories": categories}
    return captions, instances


def write_coco(tmp_path):
    captions, instances = coco_fixture_objs()
    cap_path = tmp_path / "captions.json"
    inst_path = tmp_path / "instances.json"
    cap_path.write_text(json.dumps(captions), encoding="utf-8")
    inst_path.write_text(json.dumps(instances), encoding="utf-8")
    return cap_path, inst_path


def write_embeddings(tmp_path, dim: int = 8, seed: int = 42):
    rng = random.Random(seed)
    path = tmp_path / "embeddings.tsv"
    with open(path, "w", encoding="utf-8") as fh:
        # note: COCO image ids are stringified ints; embed those same ids
        for i in range(N_IMAGES):
            vec = [rng.uniform(-1, 1) for _ in range(dim)]
            fh.write(f"{i}\t" + ",".join(f"{v:.6f}" for v in vec) + "\n")
    return path


def scripted_transport(req) -> tuple[str, int, int]:
    """Deterministic stand-in for the chat provider.

    Replies are a pure function of the request, so recording a cassette against
    this transport and replaying it later is exact.
    """
    content = req.messages[-1]["content"]
    system = req.messages[0]["content"] if req.messages[0]["role"] == "system" else ""

    if "no confusion or conflict" in system:  # conflict-check instruction
        body = re.search(r"BEGIN PROMPT\n(.*)\nEND PROMPT", content, re.S).group(1)
        revised = body + "\nKeep every rationale to at most two sentences."
        return (
            "Problem: the rationale length requirement is ambiguous.\n\n"
            "```\n" + revised + "\n```",
            60,
            40,
        )
    if "rejected by human reviewers" in system:  # failure-correction instruction
        body = re.search(r"BEGIN PROMPT\n(.*)\nEND PROMPT", content, re.S).group(1)
        revised = body + "\nOnly reference objects that appear in the annotation."
        return (
            "Root cause: items referenced objects missing from the annotation.\n\n"
            "```\n" + revised + "\n```",
            80,
            50,
        )
    match = re.search(r"Create (\d+) multiple-choice", content)
    k = int(match.group(1)) if match else 1
    tag = hashlib.sha256(content.encode("utf-8")).hexdigest()[:10]
    blocks = []
    for i in range(k):
        blocks.append(
            f"Question: Which detail {tag}{i} best matches the annotated scene?\n"
            f"A. detail {tag}{i} alpha\n"
            f"B. detail {tag}{i} beta\n"
            f"C. detail {tag}{i} gamma\n"
            f"D. detail {tag}{i} delta\n"
            f"Answer: A\n"
            f"Rationale: The captions support detail {tag}{i} alpha."
        )
    return "\n\n".join(blocks), 120, 90


def make_config(tmp_path, run_name="run", rounds=2, targets=(8, 8),
                gateway_mode="replay", cassette="cassette.jsonl") -> EngineConfig:
    cap_path, inst_path = write_coco(tmp_path)
    emb_path = write_embeddings(tmp_path)
    eval_path = tmp_path / "eval.jsonl"
    if not eval_path.exists():
        write_jsonl(eval_path, make_eval_rows(spread_scores(), image_ids=[str(i) for i in range(40)]))
    return EngineConfig(
        rounds=rounds,
        per_round_targets=list(targets),
        run_dir=str(tmp_path / run_name),
        eval_file=str(eval_path),
        captions_path=str(cap_path),
        instances_path=str(inst_path),
        embeddings_path=str(emb_path),
        cassette_path=str(tmp_path / cassette),
        gateway_mode=gateway_mode,
        trainer=TrainerConfig(kind="simulated", alpha=0.3, kappa=200.0, sigma=0.0),
    )


def record_run(tmp_path, rounds=2, targets=(8, 8)) -> EngineConfig:
    """Record a cassette by running the engine once against the scripted
    transport; returns a config whose cassette replays that run."""
    config = make_config(tmp_path, run_name="run_record", rounds=rounds,
                         targets=targets, gateway_mode="record")
    state = EngineState(config)
    state.gateway.transport = scripted_transport
    for r in range(1, rounds + 1):
        run_round(state, r)
    replay = make_config(tmp_path, run_name="run_replay", rounds=rounds,
                         targets=targets, gateway_mode="replay")
    return replay


def make_seed(qtype=QuestionType.IMAGE_SCENE, image_id="7"):
    from dataengine.pool import BadCasePool, ClassifiedBadCase
    from dataengine.records import EvalRecord
    from dataengine.sampling import QuerySeed

    rec = EvalRecord(
        record_id="r1",
        image_id=image_id,
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
    return QuerySeed(qtype=qtype, in_context=pair, image_id=image_id,
                     image_mode="random", seed_trace={"position": 0})


def validator_corpus():
    """50 generated-QA fixtures over one annotated image: 10 bbox faults,
    5 structural faults, 5 wrong-type items, 30 clean. Returns
    (items, annotation, classify) where items are (qa, expected_verdict,
    expected_failure) triples."""
    from dataengine.catalog import ImageAnnotation, ObjectBox
    from dataengine.validation import GeneratedQA

    ann = ImageAnnotation(
        image_id="7", width=100, height=100,
        captions=("A dog next to a tree.",),
        objects=(ObjectBox("dog", (10.0, 10.0, 40.0, 40.0)),),
    )
    seed = make_seed(QuestionType.IMAGE_SCENE, "7")

    def qa(question, choices=None, answer="A", rationale="Because the caption says so."):
        return GeneratedQA(
            seed=seed,
            question=question,
            choices=tuple(choices or ("one", "two", "three", "four")),
            answer=answer,
            rationale=rationale,
        )

    items = []
    # 10 bbox faults: 5 out of bounds, 5 low IoU against the one annotated box
    for i in range(5):
        items.append(
            (qa(f"Is the dog [90,90,2{i},20] out of frame?"),
             "auto_reject", "incorrect_bounding_box")
        )
    for i in range(5):
        items.append(
            (qa(f"Is the dog [60,6{i},10,10] sitting?"),
             "auto_reject", "incorrect_bounding_box")
        )
    # 5 structural faults
    items.append((qa("Duplicate choices?", choices=("x", "x", "y", "z")),
                  "auto_reject", "illogical_question"))
    items.append((qa("Duplicate choices again?", choices=("p", "q", "p", "r")),
                  "auto_reject", "illogical_question"))
    items.append((qa("Bad answer letter?", answer="E"),
                  "auto_reject", "illogical_question"))
    items.append((qa("No rationale given?", rationale=None),
                  "auto_reject", "illogical_question"))
    items.append((qa("Also missing a rationale?", rationale=None),
                  "auto_reject", "illogical_question"))
    # 5 wrong-type: the scripted classifier maps "style" questions elsewhere
    for i in range(5):
        items.append(
            (qa(f"Which artistic style {i} does this use?"),
             "auto_reject", "wrong_question_type")
        )
    # 30 clean, half mentioning the valid annotated box
    for i in range(30):
        if i % 2 == 0:
            q = f"What scene {i} surrounds the dog [10,10,40,40] here?"
        else:
            q = f"What scene {i} is shown overall?"
        items.append((qa(q), "accept", None))

    def classify(question, choices):
        if "style" in question:
            return QuestionType.IMAGE_STYLE
        return QuestionType.IMAGE_SCENE

    return items, ann, classify


REVIEW_COUNTS_BEFORE = {
    "incorrect_bounding_box": 24,
    "illusion": 20,
    "incorrect_3d_perception": 15,
    "wrong_question_type": 8,
    "illogical_question": 8,
}
REVIEW_COUNTS_AFTER = {
    "incorrect_bounding_box": 0,
    "illusion": 2,
    "incorrect_3d_perception": 3,
    "wrong_question_type": 0,
    "illogical_question": 0,
}


def review_ledger(path=None):
    """Failure ledger transcribing the reference review tallies: the 'before'
    counts at prompt version 1, the 'after' counts at version 2."""
    from dataengine.ipo import FailureCase, FailureLedger
    from dataengine.validation import FailureType

    ledger = FailureLedger(path)
    n = 0
    for version, counts in ((1, REVIEW_COUNTS_BEFORE), (2, REVIEW_COUNTS_AFTER)):
        for ftype_value, count in counts.items():
            for _ in range(count):
                ledger.append(
                    FailureCase(
                        qa_ref=f"case-{n:04d}",
                        failure_type=FailureType(ftype_value),
                        explanation="reviewer note",
                        tagger="reviewer-1",
                        prompt_version=version,
                        timestamp=float(n),
                    )
                )
                n += 1
    return ledger


@pytest.fixture
def coco_files(tmp_path):
    return write_coco(tmp_path)


@pytest.fixture
def eval_rows():
    return make_eval_rows(spread_scores())
