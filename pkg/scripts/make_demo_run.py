#!/usr/bin/env python3
"""Build a self-contained demo workspace and run the closed loop in it.

Creates a synthetic evaluation file over all 18 question types, a small
COCO-style catalog with embeddings, records an LLM cassette against a
deterministic scripted transport, and runs two engine rounds. The resulting
directory works with `engine round --resume`, `engine serve --config`, and the
review console.

Usage: python3 scripts/make_demo_run.py [--workspace DIR] [--rounds N]
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import random
import re
from pathlib import Path

import yaml

from dataengine.engine import EngineConfig, EngineState, TrainerConfig, run_round
from dataengine.question_types import QuestionType

N_IMAGES = 80


def scripted_transport(req):
    """Deterministic stand-in for the chat provider (pure function of the
    request), so the recorded cassette replays exactly."""
    content = req.messages[-1]["content"]
    system = req.messages[0]["content"] if req.messages[0]["role"] == "system" else ""

    def revised_body(suffix):
        body = re.search(r"BEGIN PROMPT\n(.*)\nEND PROMPT", content, re.S).group(1)
        return body + "\n" + suffix

    if "no confusion or conflict" in system:
        return (
            "Problem: the rationale length requirement is ambiguous.\n\n"
            "```\n" + revised_body("Keep every rationale to at most two sentences.") + "\n```",
            60, 40,
        )
    if "rejected by human reviewers" in system:
        return (
            "Root cause: items referenced objects missing from the annotation.\n\n"
            "```\n" + revised_body("Only reference objects that appear in the annotation.") + "\n```",
            80, 50,
        )
    match = re.search(r"Create (\d+) multiple-choice", content)
    k = int(match.group(1)) if match else 1
    tag = hashlib.sha256(content.encode("utf-8")).hexdigest()[:10]
    blocks = [
        f"Question: Which detail {tag}{i} best matches the annotated scene?\n"
        f"A. detail {tag}{i} alpha\n"
        f"B. detail {tag}{i} beta\n"
        f"C. detail {tag}{i} gamma\n"
        f"D. detail {tag}{i} delta\n"
        f"Answer: A\n"
        f"Rationale: The captions support detail {tag}{i} alpha."
        for i in range(k)
    ]
    return "\n\n".join(blocks), 120, 90


def write_eval_file(path: Path) -> None:
    dims = [qt.value for qt in QuestionType]
    with open(path, "w", encoding="utf-8") as fh:
        k = 0
        for i, dim in enumerate(sorted(dims)):
            score = 0.2 + 0.7 * i / (len(dims) - 1)
            n_correct = round(score * 10)
            for j in range(10):
                fh.write(json.dumps({
                    "id": f"{dim}-{j}",
                    "image_id": str(k % 40),
                    "question": f"Benchmark item {j} probing {dim}?",
                    "choices": ["alpha", "beta", "gamma"],
                    "answer_index": 0,
                    "prediction": 0 if j < n_correct else 1,
                    "dimension": dim,
                    "benchmark": "synthetic",
                }, sort_keys=True) + "\n")
                k += 1


def write_catalog(captions_path: Path, instances_path: Path) -> None:
    images = [{"id": i, "width": 100, "height": 100} for i in range(N_IMAGES)]
    cap_anns = [{"image_id": i, "caption": f"A scene number {i} with a box."}
                for i in range(N_IMAGES)]
    inst_anns = [{"image_id": i, "category_id": 1 + i % 3,
                  "bbox": [10.0, 10.0, 40.0, 40.0]} for i in range(N_IMAGES)]
    categories = [{"id": 1, "name": "dog"}, {"id": 2, "name": "car"},
                  {"id": 3, "name": "tree"}]
    captions_path.write_text(
        json.dumps({"images": images, "annotations": cap_anns}), encoding="utf-8")
    instances_path.write_text(
        json.dumps({"images": images, "annotations": inst_anns,
                    "categories": categories}), encoding="utf-8")


def write_embeddings(path: Path, dim: int = 8, seed: int = 42) -> None:
    rng = random.Random(seed)
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(N_IMAGES):
            vec = [rng.uniform(-1, 1) for _ in range(dim)]
            fh.write(f"{i}\t" + ",".join(f"{v:.6f}" for v in vec) + "\n")


def build_workspace(workspace: Path, rounds: int, target: int) -> EngineConfig:
    workspace.mkdir(parents=True, exist_ok=True)
    write_eval_file(workspace / "eval.jsonl")
    write_catalog(workspace / "captions.json", workspace / "instances.json")
    write_embeddings(workspace / "embeddings.tsv")
    return EngineConfig(
        rounds=rounds,
        per_round_targets=[target] * rounds,
        run_dir=str(workspace / "run"),
        eval_file=str(workspace / "eval.jsonl"),
        captions_path=str(workspace / "captions.json"),
        instances_path=str(workspace / "instances.json"),
        embeddings_path=str(workspace / "embeddings.tsv"),
        cassette_path=str(workspace / "cassette.jsonl"),
        gateway_mode="record",
        trainer=TrainerConfig(kind="simulated", alpha=0.3, kappa=200.0, sigma=0.0),
    )


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workspace", default="demo", type=Path)
    parser.add_argument("--rounds", default=2, type=int)
    parser.add_argument("--target", default=8, type=int,
                        help="query seeds per round")
    args = parser.parse_args()

    config = build_workspace(args.workspace, args.rounds, args.target)
    state = EngineState(config)
    state.gateway.transport = scripted_transport
    for round in range(1, args.rounds + 1):
        manifest = run_round(state, round)
        print(f"round {round}: seeds={manifest.seeds_built} "
              f"generated={manifest.generated} accepted={manifest.accepted} "
              f"cost=${manifest.cost:.4f}")

    # save a config copy so `engine round --resume` and `engine serve` work;
    # replay mode keeps later invocations hermetic
    config.gateway_mode = "replay"
    (Path(config.run_dir) / "config.yaml").write_text(
        yaml.safe_dump(dataclasses.asdict(config)), encoding="utf-8")
    (args.workspace / "config.yaml").write_text(
        yaml.safe_dump(dataclasses.asdict(config)), encoding="utf-8")
    print(f"workspace ready: {args.workspace}/config.yaml")


if __name__ == "__main__":
    main()
