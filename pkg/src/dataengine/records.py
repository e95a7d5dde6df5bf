"""Benchmark evaluation ingest: records, per-ability scoreboard, bad-case extraction.

Input files are UTF-8 JSON lines, one evaluation item per line. Three schemas
are supported: the engine's own generic schema, an MMBench-style schema with
lettered option columns, and an A-OKVQA-style schema. All of them normalize to
:class:`EvalRecord`. Predictions that cannot be matched to a choice letter or
to an exact choice text are kept and marked unparseable (``prediction=None``);
they count as wrong everywhere downstream.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import IO, Iterable, Optional

from .errors import SchemaError

LETTERS = string.ascii_uppercase

FORMATS = ("generic", "mmbench-like", "aokvqa-like")


@dataclass(frozen=True)
class EvalRecord:
    """One benchmark item together with the model's answer."""

    record_id: str
    image_id: str
    question: str
    choices: tuple[str, ...]
    ground_truth: int
    prediction: Optional[int]  # None = unparseable model output
    dimension_label: str
    benchmark: str
    round: int = 0

    def __post_init__(self):
        if not (2 <= len(self.choices) <= 6):
            raise SchemaError(f"expected 2-6 choices, got {len(self.choices)}")
        if len(set(self.choices)) != len(self.choices):
            raise SchemaError("choices must be pairwise distinct")
        if not 0 <= self.ground_truth < len(self.choices):
            raise SchemaError(f"ground_truth {self.ground_truth} out of range")
        if self.prediction is not None and not 0 <= self.prediction < len(self.choices):
            raise SchemaError(f"prediction {self.prediction} out of range")
        if self.round < 0:
            raise SchemaError("round must be non-negative")

    @property
    def is_correct(self) -> bool:
        return self.prediction is not None and self.prediction == self.ground_truth

    def to_json(self) -> dict:
        return {
            "id": self.record_id,
            "image_id": self.image_id,
            "question": self.question,
            "choices": list(self.choices),
            "answer_index": self.ground_truth,
            "prediction": self.prediction if self.prediction is not None else "unparseable",
            "dimension": self.dimension_label,
            "benchmark": self.benchmark,
            "round": self.round,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "EvalRecord":
        pred = obj["prediction"]
        if pred == "unparseable":
            pred = None
        return cls(
            record_id=str(obj["id"]),
            image_id=str(obj["image_id"]),
            question=obj["question"],
            choices=tuple(obj["choices"]),
            ground_truth=int(obj["answer_index"]),
            prediction=pred if pred is None else int(pred),
            dimension_label=obj["dimension"],
            benchmark=obj["benchmark"],
            round=int(obj.get("round", 0)),
        )


@dataclass
class DimensionScore:
    correct: int
    total: int

    @property
    def score(self) -> Fraction:
        # exact rational, rendered as float only at output time
        return Fraction(self.correct, self.total)


@dataclass
class AbilityScoreboard:
    """Per-dimension accuracy table for one evaluation round."""

    round: int
    entries: dict[str, DimensionScore] = field(default_factory=dict)

    def score(self, dimension: str) -> Fraction:
        return self.entries[dimension].score

    def to_json(self) -> dict:
        return {
            "round": self.round,
            "entries": {
                dim: {"correct": e.correct, "total": e.total, "score": float(e.score)}
                for dim, e in sorted(self.entries.items())
            },
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AbilityScoreboard":
        return cls(
            round=int(obj["round"]),
            entries={
                dim: DimensionScore(int(e["correct"]), int(e["total"]))
                for dim, e in obj["entries"].items()
            },
        )


def match_prediction(raw, choices: tuple[str, ...]) -> Optional[int]:
    """Match a raw model answer to a choice index.

    Accepts an integer index, a single choice letter (optionally with trailing
    punctuation, e.g. ``"B."``), or the exact choice text (case-folded, trimmed).
    Anything else is unparseable.
    """
    if raw is None:
        return None
    if isinstance(raw, bool):
        return None
    if isinstance(raw, int):
        return raw if 0 <= raw < len(choices) else None
    text = str(raw).strip()
    if not text:
        return None
    stripped = text.rstrip(".):")
    if len(stripped) == 1 and stripped.upper() in LETTERS[: len(choices)]:
        return LETTERS.index(stripped.upper())
    folded = text.casefold()
    for i, choice in enumerate(choices):
        if folded == choice.strip().casefold():
            return i
    return None


def _parse_generic(obj: dict, line: int) -> EvalRecord:
    try:
        choices = tuple(obj["choices"])
        return EvalRecord(
            record_id=str(obj["id"]),
            image_id=str(obj["image_id"]),
            question=obj["question"],
            choices=choices,
            ground_truth=int(obj["answer_index"]),
            prediction=match_prediction(obj.get("prediction"), choices),
            dimension_label=obj["dimension"],
            benchmark=obj.get("benchmark", "generic"),
            round=int(obj.get("round", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad generic record: {exc}", line=line) from exc


def _parse_mmbench(obj: dict, line: int) -> EvalRecord:
    try:
        choices = tuple(obj[letter] for letter in LETTERS if obj.get(letter))
        answer = str(obj["answer"]).strip().upper()
        if answer not in LETTERS[: len(choices)]:
            raise SchemaError(f"answer letter {answer!r} out of range", line=line)
        return EvalRecord(
            record_id=str(obj["index"]),
            image_id=str(obj.get("image", obj["index"])),
            question=obj["question"],
            choices=choices,
            ground_truth=LETTERS.index(answer),
            prediction=match_prediction(obj.get("prediction"), choices),
            dimension_label=obj["category"],
            benchmark=obj.get("benchmark", "mmbench"),
            round=int(obj.get("round", 0)),
        )
    except SchemaError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad mmbench-like record: {exc}", line=line) from exc


def _parse_aokvqa(obj: dict, line: int) -> EvalRecord:
    try:
        choices = tuple(obj["choices"])
        return EvalRecord(
            record_id=str(obj["question_id"]),
            image_id=str(obj["image_id"]),
            question=obj["question"],
            choices=choices,
            ground_truth=int(obj["correct_choice_idx"]),
            prediction=match_prediction(obj.get("prediction"), choices),
            dimension_label=obj.get("question_type", "a-okvqa"),
            benchmark=obj.get("benchmark", "a-okvqa"),
            round=int(obj.get("round", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad aokvqa-like record: {exc}", line=line) from exc


_PARSERS = {
    "generic": _parse_generic,
    "mmbench-like": _parse_mmbench,
    "aokvqa-like": _parse_aokvqa,
}


def ingest_results(source: IO, format: str = "generic") -> list[EvalRecord]:
    """Parse a line-delimited evaluation file into records, preserving row order."""
    if format not in _PARSERS:
        raise SchemaError(f"unknown format {format!r}; expected one of {FORMATS}")
    parse = _PARSERS[format]
    out = []
    for lineno, raw in enumerate(source, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        raw = raw.strip()
        if not raw:
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}", line=lineno) from exc
        if not isinstance(obj, dict):
            raise SchemaError("expected a JSON object", line=lineno)
        out.append(parse(obj, lineno))
    return out


def compute_scoreboard(records: Iterable[EvalRecord], round: Optional[int] = None) -> AbilityScoreboard:
    """Aggregate records into per-dimension correct/total counts.

    Unparseable predictions count as incorrect.
    """
    records = list(records)
    if not records:
        raise SchemaError("cannot compute a scoreboard from zero records")
    if round is None:
        round = records[0].round
    board = AbilityScoreboard(round=round)
    for rec in records:
        entry = board.entries.setdefault(rec.dimension_label, DimensionScore(0, 0))
        entry.total += 1
        if rec.is_correct:
            entry.correct += 1
    return board


def extract_bad_cases(records: Iterable[EvalRecord]) -> list[EvalRecord]:
    """Records the model got wrong (including unparseable answers), order preserved."""
    return [rec for rec in records if not rec.is_correct]


def tag_round(records: Iterable[EvalRecord], round: int) -> list[EvalRecord]:
    return [replace(rec, round=round) for rec in records]
