"""Round orchestration: the evaluate -> pool -> sample -> generate -> validate
-> build -> train loop, run-directory resumability, and the simulated trainer
that lets the closed loop run at desk scale with no GPU and no network.

Each stage writes its artifact plus a completion marker under
run_dir/round_N/; a failed round resumes from the last completed stage.
Manifests contain only deterministic fields; wall time goes to a sidecar.
"""

from __future__ import annotations

import json
import random
import shutil
import subprocess
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

import yaml

from . import prompts as prompts_mod
from .catalog import Catalog, load_catalog
from .dataset import build_from_rows, merge_rounds, write_dataset
from .errors import ConfigError, EngineError, SchemaError
from .gateway import ChatRequest, Gateway, cost_report, request_digest
from .pool import (
    BadCasePool,
    classify_label_map,
    classify_llm,
    load_type_mapping,
    parse_type_mapping,
)
from .prompts import PromptStore, default_type_definitions, render, seed_default_templates
from .question_types import QuestionType
from .records import (
    AbilityScoreboard,
    DimensionScore,
    EvalRecord,
    compute_scoreboard,
    extract_bad_cases,
    ingest_results,
    tag_round,
)
from .sampling import build_query_seeds, load_embeddings, type_weights
from .validation import ParseStub, parse_output, validate

SCORE_SCALE = 10**9  # fixed denominator for simulated fractional scores

DEFAULT_PRICE_TABLE = {"gpt-4": {"prompt": 0.03, "completion": 0.06}}


@dataclass
class TrainerConfig:
    kind: str = "simulated"  # simulated | external
    alpha: float = 0.3
    kappa: float = 200.0
    sigma: float = 0.0
    command: Optional[str] = None
    timeout_s: float = 600.0

    def validate(self):
        if self.kind not in ("simulated", "external"):
            raise ConfigError(f"unknown trainer kind {self.kind!r}")
        if self.kind == "simulated":
            if not 0 < self.alpha < 1:
                raise ConfigError("trainer alpha must be in (0, 1)")
            if self.kappa <= 0:
                raise ConfigError("trainer kappa must be > 0")
            if self.sigma < 0:
                raise ConfigError("trainer sigma must be >= 0")
        elif not self.command:
            raise ConfigError("external trainer needs a command")


@dataclass
class EngineConfig:
    rounds: int = 2
    per_round_targets: list[int] = field(default_factory=lambda: [5000, 18000])
    eps: float = 0.05
    theta: float = 0.10
    iou_threshold: float = 0.5
    k_questions: int = 5
    sampling_seed: int = 0
    simulation_seed: int = 1
    dataset_format: str = "QMAE"
    weight_mode: str = "inverse"
    eval_format: str = "generic"
    gateway_mode: str = "replay"
    run_dir: str = "run"
    eval_file: Optional[str] = None
    pool_path: Optional[str] = None
    embeddings_path: Optional[str] = None
    captions_path: Optional[str] = None
    instances_path: Optional[str] = None
    mapping_path: Optional[str] = None
    prompt_store_dir: Optional[str] = None
    cassette_path: Optional[str] = None
    images_dir: Optional[str] = None
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    price_table: dict = field(default_factory=lambda: dict(DEFAULT_PRICE_TABLE))
    model: str = "gpt-4"

    def validate(self):
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        if not self.per_round_targets:
            raise ConfigError("per_round_targets must not be empty")
        if not 0 < self.eps <= 1:
            raise ConfigError("eps out of range")
        if not 0 < self.theta <= 1:
            raise ConfigError("theta out of range")
        if not 0 < self.iou_threshold <= 1:
            raise ConfigError("iou_threshold out of range")
        if self.dataset_format not in ("QMAE", "QMA"):
            raise ConfigError(f"unknown dataset format {self.dataset_format!r}")
        self.trainer.validate()

    def target_for_round(self, round: int) -> int:
        targets = self.per_round_targets
        return targets[round - 1] if round <= len(targets) else targets[-1]

    @classmethod
    def from_file(cls, path) -> "EngineConfig":
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        trainer = TrainerConfig(**raw.pop("trainer", {}))
        config = cls(trainer=trainer, **raw)
        config.validate()
        return config


def _score_from_float(value: float) -> DimensionScore:
    value = min(max(value, 0.0), 1.0)
    return DimensionScore(correct=round(value * SCORE_SCALE), total=SCORE_SCALE)


def simulate_trainer(
    scoreboard: AbilityScoreboard,
    added: dict[str, int],
    alpha: float,
    kappa: float,
    sigma: float,
    rng: random.Random,
) -> AbilityScoreboard:
    """Synthetic training response: per dimension,
    s' = clamp(s + alpha * (1 - s) * n / (n + kappa) + noise(0, sigma), 0, 1).

    With sigma = 0 the update is monotone non-decreasing in n and never lowers
    a score.
    """
    if not 0 < alpha < 1:
        raise ConfigError("alpha must be in (0, 1)")
    if kappa <= 0:
        raise ConfigError("kappa must be > 0")
    if sigma < 0:
        raise ConfigError("sigma must be >= 0")
    out = AbilityScoreboard(round=scoreboard.round + 1)
    for dim in sorted(scoreboard.entries):
        s = float(scoreboard.entries[dim].score)
        n = added.get(dim, 0)
        gain = alpha * (1.0 - s) * (n / (n + kappa)) if n > 0 else 0.0
        noise = rng.gauss(0.0, sigma) if sigma > 0 else 0.0
        out.entries[dim] = _score_from_float(s + gain + noise)
    return out


def external_trainer_hook(
    command: str,
    dataset_path,
    eval_output_path,
    timeout_s: float = 600.0,
    eval_format: str = "generic",
) -> list[EvalRecord]:
    """Run the external trainer command with {dataset} and {output} substituted,
    then ingest the evaluation file it produces."""
    cmd = command.format(dataset=str(dataset_path), output=str(eval_output_path))
    try:
        result = subprocess.run(cmd, shell=True, timeout=timeout_s, capture_output=True)
    except subprocess.TimeoutExpired as exc:
        raise EngineError(f"external trainer timed out after {timeout_s}s") from exc
    if result.returncode != 0:
        raise EngineError(
            f"external trainer exited {result.returncode}: {result.stderr.decode()[:300]}"
        )
    out = Path(eval_output_path)
    if not out.exists():
        raise EngineError(f"external trainer produced no output file at {out}")
    with open(out, encoding="utf-8") as fh:
        return ingest_results(fh, format=eval_format)


def synthesize_eval_records(
    records: list[EvalRecord],
    target: AbilityScoreboard,
    rng: random.Random,
) -> list[EvalRecord]:
    """Rewrite predictions so per-dimension accuracy matches the target
    scoreboard; the stand-in for re-running a benchmark after simulated
    training."""
    from dataclasses import replace

    by_dim: dict[str, list[int]] = {}
    for i, rec in enumerate(records):
        by_dim.setdefault(rec.dimension_label, []).append(i)
    out = list(records)
    for dim in sorted(by_dim):
        indices = by_dim[dim]
        if dim not in target.entries:
            continue
        score = float(target.entries[dim].score)
        n_correct = round(score * len(indices))
        correct_set = set(rng.sample(indices, n_correct))
        for i in indices:
            rec = out[i]
            if i in correct_set:
                out[i] = replace(rec, prediction=rec.ground_truth)
            else:
                wrong = (rec.ground_truth + 1) % len(rec.choices)
                out[i] = replace(rec, prediction=wrong)
    return out


@dataclass
class RoundManifest:
    round: int
    scoreboard_before: dict
    scoreboard_after: dict
    seeds_built: int
    generated: int
    parse_failures: int
    accepted: int
    rejected_by_type: dict
    dataset_path: str
    merged_dataset_path: str
    active_prompt_version: int
    cost: float

    def to_json(self) -> dict:
        return {
            "round": self.round,
            "scoreboard_before": self.scoreboard_before,
            "scoreboard_after": self.scoreboard_after,
            "seeds_built": self.seeds_built,
            "generated": self.generated,
            "parse_failures": self.parse_failures,
            "accepted": self.accepted,
            "rejected_by_type": self.rejected_by_type,
            "dataset_path": self.dataset_path,
            "merged_dataset_path": self.merged_dataset_path,
            "active_prompt_version": self.active_prompt_version,
            "cost": self.cost,
        }


class EngineState:
    """Shared immutable-ish resources loaded once per engine run."""

    def __init__(self, config: EngineConfig):
        config.validate()
        self.config = config
        self.run_dir = Path(config.run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)

        store_dir = config.prompt_store_dir or str(self.run_dir / "prompt_store")
        self.prompt_store = PromptStore(store_dir)
        seed_default_templates(self.prompt_store)
        self.type_defs = default_type_definitions()

        if config.mapping_path:
            self.type_map = load_type_mapping(config.mapping_path)
        else:
            self.type_map = parse_type_mapping(prompts_mod.load_asset("type_mapping.txt"))

        self.catalog: Optional[Catalog] = None
        if config.captions_path and config.instances_path:
            with open(config.captions_path, encoding="utf-8") as caps, open(
                config.instances_path, encoding="utf-8"
            ) as inst:
                self.catalog = load_catalog(caps, inst)

        self.index = None
        if config.embeddings_path:
            with open(config.embeddings_path, encoding="utf-8") as fh:
                self.index = load_embeddings(fh)

        self.gateway = Gateway(
            mode=config.gateway_mode,
            cassette_path=config.cassette_path,
        )

        self.pool_path = Path(config.pool_path or (self.run_dir / "pool.jsonl"))
        if self.pool_path.exists():
            self.pool = BadCasePool.load(self.pool_path)
        else:
            self.pool = BadCasePool()


def _marker(round_dir: Path, stage: str) -> Path:
    return round_dir / f".{stage}.done"


def _stage_done(round_dir: Path, stage: str) -> bool:
    return _marker(round_dir, stage).exists()


def _mark(round_dir: Path, stage: str) -> None:
    _marker(round_dir, stage).write_text("done", encoding="utf-8")


def run_round(state: EngineState, round: int, until: Optional[str] = None) -> Optional[RoundManifest]:
    """Execute (or resume) one full round; all artifacts land in
    run_dir/round_N/. ``until`` stops after the named stage (eval, scoreboard,
    pool, seeds, generate, validate, dataset, train) and returns None."""
    config = state.config
    round_dir = state.run_dir / f"round_{round}"
    round_dir.mkdir(parents=True, exist_ok=True)
    started = time.monotonic()
    usage_start = len(state.gateway.usages)

    # -- stage: eval input ---------------------------------------------------
    eval_in = round_dir / "eval.in"
    if not _stage_done(round_dir, "eval"):
        if round == 1:
            if not config.eval_file:
                raise ConfigError("round 1 needs an initial evaluation file")
            shutil.copyfile(config.eval_file, eval_in)
        else:
            prev = state.run_dir / f"round_{round - 1}" / "eval.out"
            if not prev.exists():
                raise EngineError(f"round {round - 1} produced no eval.out")
            shutil.copyfile(prev, eval_in)
        _mark(round_dir, "eval")
    with open(eval_in, encoding="utf-8") as fh:
        records = tag_round(ingest_results(fh, format=config.eval_format), round)
    if until == "eval":
        return None

    # -- stage: scoreboard ---------------------------------------------------
    scoreboard_path = round_dir / "scoreboard.json"
    if not _stage_done(round_dir, "scoreboard"):
        board = compute_scoreboard(records, round=round)
        scoreboard_path.write_text(
            json.dumps(board.to_json(), indent=2, sort_keys=True), encoding="utf-8"
        )
        _mark(round_dir, "scoreboard")
    board = AbilityScoreboard.from_json(json.loads(scoreboard_path.read_text()))
    if until == "scoreboard":
        return None

    # -- stage: bad-case pool ------------------------------------------------
    pool_delta_path = round_dir / "pool.delta"
    if not _stage_done(round_dir, "pool"):
        bad = extract_bad_cases(records)
        classified = []
        classification_prompt = None
        for case in bad:
            try:
                classified.append(classify_label_map(case, state.type_map))
            except Exception:
                if classification_prompt is None:
                    classification_prompt = state.prompt_store.active(
                        prompts_mod.CLASSIFICATION_TEMPLATE_ID
                    ).body
                classified.append(
                    classify_llm(case, state.gateway, classification_prompt,
                                 model=config.model)
                )
        delta_pool = BadCasePool(classified)
        delta_pool.save(pool_delta_path)
        state.pool.append(state.pool_path, classified)
        _mark(round_dir, "pool")
    else:
        # pool file already holds this round's delta
        pass
    if until == "pool":
        return None

    # -- stage: query seeds --------------------------------------------------
    seeds_path = round_dir / "seeds.jsonl"
    rng = random.Random(f"sampling:{config.sampling_seed}:{round}")
    if not _stage_done(round_dir, "seeds"):
        if state.catalog is None:
            raise ConfigError("generation rounds need a COCO catalog")
        seeds = build_query_seeds(
            board,
            state.pool,
            state.catalog,
            state.index,
            n=config.target_for_round(round),
            type_map=state.type_map,
            rng=rng,
            eps=config.eps,
            weight_mode=config.weight_mode,
        )
        with open(seeds_path, "w", encoding="utf-8") as fh:
            for seed in seeds:
                fh.write(json.dumps(seed.to_json(), sort_keys=True) + "\n")
        _mark(round_dir, "seeds")
        state._seeds_cache = seeds
    else:
        seeds = getattr(state, "_seeds_cache", None)
        if seeds is None:
            seeds = _load_seeds(seeds_path)
    # keep the rng stream identical whether or not the stage was resumed
    state._seeds_cache = seeds
    if until == "seeds":
        return None

    # -- stage: generation ---------------------------------------------------
    prompts_dir = round_dir / "prompts"
    responses_dir = round_dir / "raw_responses"
    parsed_path = round_dir / "parsed.jsonl"
    reports_path = round_dir / "reports.jsonl"
    failures_path = round_dir / "failures.jsonl"
    active_tpl = state.prompt_store.active(prompts_mod.GENERATION_TEMPLATE_ID)

    if not _stage_done(round_dir, "generate"):
        prompts_dir.mkdir(exist_ok=True)
        responses_dir.mkdir(exist_ok=True)
        for i, seed in enumerate(seeds):
            response_file = responses_dir / f"{i:05d}.txt"
            if response_file.exists():
                continue  # resumability within the stage
            ann = state.catalog.get(seed.image_id)
            from .catalog import render_annotation_text

            rendered = render(
                active_tpl,
                seed,
                render_annotation_text(ann),
                state.type_defs,
                k_questions=config.k_questions,
            )
            (prompts_dir / f"{i:05d}.txt").write_text(rendered.final_text, encoding="utf-8")
            req = ChatRequest(
                model_name=config.model,
                messages=({"role": "user", "content": rendered.final_text},),
                temperature=0.7,
                max_tokens=2048,
            )
            reply = state.gateway.complete(req)
            response_file.write_text(reply.text, encoding="utf-8")
            (responses_dir / f"{i:05d}.digest").write_text(
                request_digest(req), encoding="utf-8"
            )
        _mark(round_dir, "generate")
    if until == "generate":
        return None

    # -- stage: validation ---------------------------------------------------
    accepted_path = round_dir / "accepted.jsonl"
    if not _stage_done(round_dir, "validate"):
        parsed_lines = []
        report_lines = []
        failure_lines = []
        accepted_lines = []
        counts = {"generated": 0, "parse_failures": 0, "accepted": 0}
        rejected_by_type: dict[str, int] = {}
        for i, seed in enumerate(seeds):
            reply_text = (responses_dir / f"{i:05d}.txt").read_text(encoding="utf-8")
            digest = (responses_dir / f"{i:05d}.digest").read_text(encoding="utf-8")
            for parsed in parse_output(reply_text, seed):
                if isinstance(parsed, ParseStub):
                    counts["parse_failures"] += 1
                    parsed_lines.append({"parse_failure": parsed.reason, "raw": parsed.raw})
                    continue
                counts["generated"] += 1
                parsed_lines.append(
                    {
                        "question": parsed.question,
                        "choices": list(parsed.choices),
                        "answer": parsed.answer,
                        "rationale": parsed.rationale,
                        "image_id": seed.image_id,
                    }
                )
                report = validate(
                    parsed,
                    state.catalog.get(seed.image_id),
                    format=config.dataset_format,
                    iou_threshold=config.iou_threshold,
                    ipo_review=False,
                )
                report_lines.append(report.to_json())
                if report.verdict.kind == "accept":
                    counts["accepted"] += 1
                    accepted_lines.append(
                        {
                            "image_id": seed.image_id,
                            "question": report.cleaned_question,
                            "choices": list(report.cleaned_choices),
                            "answer": report.qa.answer,
                            "rationale": report.cleaned_rationale,
                            "provenance": {
                                "round": round,
                                "prompt_version": active_tpl.version,
                                "qtype": seed.qtype.value,
                                "request_digest": digest,
                            },
                        }
                    )
                else:
                    key = report.verdict.failure_type.value
                    rejected_by_type[key] = rejected_by_type.get(key, 0) + 1
                    failure_lines.append(report.to_json())
        _write_jsonl(parsed_path, parsed_lines)
        _write_jsonl(reports_path, report_lines)
        _write_jsonl(failures_path, failure_lines)
        _write_jsonl(accepted_path, accepted_lines)
        (round_dir / "validate_counts.json").write_text(
            json.dumps({**counts, "rejected_by_type": rejected_by_type}, sort_keys=True),
            encoding="utf-8",
        )
        _mark(round_dir, "validate")
    counts_obj = json.loads((round_dir / "validate_counts.json").read_text())
    if until == "validate":
        return None

    # -- stage: dataset ------------------------------------------------------
    ext = config.dataset_format.lower()
    dataset_path = round_dir / f"dataset.{ext}"
    merged_path = round_dir / f"dataset.merged.{ext}"
    if not _stage_done(round_dir, "dataset"):
        accepted_rows = [
            json.loads(line)
            for line in accepted_path.read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        items, manifest = build_from_rows(accepted_rows, config.dataset_format)
        write_dataset(items, dataset_path)
        (round_dir / "dataset.manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8"
        )
        prior = [
            state.run_dir / f"round_{r}" / f"dataset.{ext}" for r in range(1, round)
        ]
        merged = merge_rounds([*prior, dataset_path])
        write_dataset(merged, merged_path)
        _mark(round_dir, "dataset")
    if until == "dataset":
        return None

    # -- stage: training -----------------------------------------------------
    eval_out = round_dir / "eval.out"
    after_path = round_dir / "scoreboard.after.json"
    if not _stage_done(round_dir, "train"):
        if config.trainer.kind == "simulated":
            added_by_type: dict[str, int] = {}
            for seed in seeds:
                added_by_type[seed.qtype.value] = added_by_type.get(seed.qtype.value, 0) + 1
            added_by_dim = {
                dim: added_by_type.get(state.type_map[dim].value, 0)
                if dim in state.type_map
                else 0
                for dim in board.entries
            }
            sim_rng = random.Random(f"simulation:{config.simulation_seed}:{round}")
            after = simulate_trainer(
                board,
                added_by_dim,
                config.trainer.alpha,
                config.trainer.kappa,
                config.trainer.sigma,
                sim_rng,
            )
            new_records = synthesize_eval_records(records, after, sim_rng)
            with open(eval_out, "w", encoding="utf-8") as fh:
                for rec in new_records:
                    fh.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")
            after_real = compute_scoreboard(
                tag_round(new_records, round + 1), round=round + 1
            )
            after_path.write_text(
                json.dumps(after_real.to_json(), indent=2, sort_keys=True),
                encoding="utf-8",
            )
        else:
            new_records = external_trainer_hook(
                config.trainer.command,
                merged_path,
                eval_out,
                timeout_s=config.trainer.timeout_s,
                eval_format=config.eval_format,
            )
            after_real = compute_scoreboard(
                tag_round(new_records, round + 1), round=round + 1
            )
            after_path.write_text(
                json.dumps(after_real.to_json(), indent=2, sort_keys=True),
                encoding="utf-8",
            )
        _mark(round_dir, "train")
    after_board = AbilityScoreboard.from_json(json.loads(after_path.read_text()))
    if until == "train":
        return None

    # -- manifest ------------------------------------------------------------
    round_usages = state.gateway.usages[usage_start:]
    cost = cost_report(round_usages, state.config.price_table) if round_usages else 0.0
    manifest = RoundManifest(
        round=round,
        scoreboard_before=board.to_json(),
        scoreboard_after=after_board.to_json(),
        seeds_built=len(seeds),
        generated=counts_obj["generated"],
        parse_failures=counts_obj["parse_failures"],
        accepted=counts_obj["accepted"],
        rejected_by_type=counts_obj["rejected_by_type"],
        dataset_path=str(dataset_path.relative_to(state.run_dir)),
        merged_dataset_path=str(merged_path.relative_to(state.run_dir)),
        active_prompt_version=active_tpl.version,
        cost=cost,
    )
    (round_dir / "manifest.json").write_text(
        json.dumps(manifest.to_json(), indent=2, sort_keys=True), encoding="utf-8"
    )
    (round_dir / "manifest.meta.json").write_text(
        json.dumps({"wall_time_s": time.monotonic() - started}), encoding="utf-8"
    )
    return manifest


def _write_jsonl(path: Path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def _load_seeds(path: Path):
    from .pool import ClassifiedBadCase, SampledPair
    from .question_types import parse_question_type
    from .sampling import QuerySeed

    seeds = []
    for raw in path.read_text(encoding="utf-8").splitlines():
        if not raw.strip():
            continue
        obj = json.loads(raw)
        cases = tuple(ClassifiedBadCase.from_json(c) for c in obj["in_context"])
        seeds.append(
            QuerySeed(
                qtype=parse_question_type(obj["qtype"]),
                in_context=SampledPair(cases=cases, duplicated=obj["in_context_duplicated"]),
                image_id=obj["image_id"],
                image_mode=obj["image_mode"],
                seed_trace=obj["seed_trace"],
            )
        )
    return seeds


def run_engine(config: EngineConfig) -> list[RoundManifest]:
    """Run R rounds; each round's before-scoreboard is the previous round's
    after-scoreboard (continuity is asserted)."""
    state = EngineState(config)
    manifests = []
    for round in range(1, config.rounds + 1):
        manifest = run_round(state, round)
        if manifests:
            prev_after = manifests[-1].scoreboard_after["entries"]
            cur_before = manifest.scoreboard_before["entries"]
            if prev_after != cur_before:
                raise EngineError(f"scoreboard chain broken entering round {round}")
        manifests.append(manifest)
    return manifests


# -- policy simulation harness (ABS vs uniform, no generation) ----------------


@dataclass
class SimulatedRound:
    scoreboard: dict  # dimension -> float score at round start
    weights: dict  # qtype value -> sampling weight used
    allocation: dict  # dimension -> items allocated


def run_policy_simulation(
    initial_scores: dict[str, float],
    rounds: int,
    items_per_round: int,
    policy: str,
    type_map: dict[str, QuestionType],
    alpha: float = 0.3,
    kappa: float = 200.0,
    sigma: float = 0.0,
    eps: float = 0.05,
    seed: int = 0,
) -> list[SimulatedRound]:
    """Closed loop without generation: score -> weights -> allocation ->
    simulated training -> new scores. ``policy`` is "abs" or "uniform"."""
    if policy not in ("abs", "uniform"):
        raise ConfigError(f"unknown policy {policy!r}")
    rng = random.Random(seed)
    board = AbilityScoreboard(round=0)
    for dim, score in initial_scores.items():
        board.entries[dim] = _score_from_float(score)

    inverse = {}
    for dim, qtype in type_map.items():
        inverse.setdefault(qtype, []).append(dim)

    history = []
    for _ in range(rounds):
        if policy == "abs":
            dist = type_weights(board, type_map, eps=eps)
            weights = {qt.value: w for qt, w in dist.weights.items()}
        else:
            present = sorted({type_map[d] for d in board.entries if d in type_map},
                             key=lambda qt: qt.value)
            weights = {qt.value: 1.0 / len(present) for qt in present}

        ordered = sorted(weights.items())
        names = [name for name, _ in ordered]
        probs = [w for _, w in ordered]
        allocation_by_type = {name: 0 for name in names}
        for _ in range(items_per_round):
            pick = rng.choices(names, weights=probs, k=1)[0]
            allocation_by_type[pick] += 1

        added_by_dim = {
            dim: allocation_by_type.get(type_map[dim].value, 0) if dim in type_map else 0
            for dim in board.entries
        }
        history.append(
            SimulatedRound(
                scoreboard={d: float(e.score) for d, e in sorted(board.entries.items())},
                weights=dict(weights),
                allocation=dict(added_by_dim),
            )
        )
        board = simulate_trainer(board, added_by_dim, alpha, kappa, sigma, rng)

    history.append(
        SimulatedRound(
            scoreboard={d: float(e.score) for d, e in sorted(board.entries.items())},
            weights={},
            allocation={},
        )
    )
    return history
