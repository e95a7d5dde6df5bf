"""Bad-case pool: classification into the 18 question types and persistence.

Classification prefers the cheap deterministic label-map path; dimensions the
map does not cover go through the LLM classifier. The pool file is append-only
JSON lines, one classified case per line, and survives across rounds.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import ClassificationError, SchemaError
from .gateway import ChatRequest, Gateway
from .question_types import QuestionType, find_question_types, parse_question_type
from .records import EvalRecord


@dataclass(frozen=True)
class ClassifiedBadCase:
    base: EvalRecord
    qtype: QuestionType
    source: str  # llm | label-map | manual
    classifier_note: Optional[str] = None

    def to_json(self) -> dict:
        return {
            "base": self.base.to_json(),
            "qtype": self.qtype.value,
            "source": self.source,
            "classifier_note": self.classifier_note,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ClassifiedBadCase":
        qtype = parse_question_type(obj["qtype"])
        if qtype is None:
            raise SchemaError(f"unknown question type {obj['qtype']!r}")
        return cls(
            base=EvalRecord.from_json(obj["base"]),
            qtype=qtype,
            source=obj["source"],
            classifier_note=obj.get("classifier_note"),
        )


def load_type_mapping(path) -> dict[str, QuestionType]:
    """Two-column table: dimension label, tab or multi-space, question type."""
    return parse_type_mapping(Path(path).read_text(encoding="utf-8"))


def parse_type_mapping(text: str) -> dict[str, QuestionType]:
    mapping = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "\t" in line:
            label, _, type_name = line.partition("\t")
        else:
            label, _, type_name = line.partition("  ")
        qtype = parse_question_type(type_name.strip())
        if qtype is None:
            raise SchemaError(f"unknown question type {type_name.strip()!r}", line=lineno)
        mapping[label.strip()] = qtype
    return mapping


def classify_label_map(case: EvalRecord, mapping: dict[str, QuestionType]) -> ClassifiedBadCase:
    qtype = mapping.get(case.dimension_label)
    if qtype is None:
        # also accept labels that already are canonical type names
        qtype = parse_question_type(case.dimension_label)
    if qtype is None:
        raise ClassificationError(
            f"dimension {case.dimension_label!r} not in mapping; use the LLM classifier"
        )
    return ClassifiedBadCase(base=case, qtype=qtype, source="label-map")


def classify_llm(
    case: EvalRecord,
    gateway: Gateway,
    prompt: str,
    model: str = "gpt-4",
) -> ClassifiedBadCase:
    """Classify one bad case via the chat gateway, retrying the call once.

    The reply must contain exactly one canonical type name (after case-fold and
    separator normalization); two attempts with no unambiguous name is an error.
    """
    missing = [qt.value for qt in QuestionType if qt.value not in prompt.casefold()]
    if missing:
        raise ClassificationError(f"classification prompt lacks type definitions: {missing[:3]}")
    user = f"Question: {case.question}\nChoices: {' / '.join(case.choices)}"
    req = ChatRequest(
        model_name=model,
        messages=(
            {"role": "system", "content": prompt},
            {"role": "user", "content": user},
        ),
        temperature=0.0,
        max_tokens=64,
    )
    last_reply = None
    for _ in range(2):
        result = gateway.complete(req)
        last_reply = result.text
        exact = parse_question_type(result.text)
        if exact is not None:
            return ClassifiedBadCase(base=case, qtype=exact, source="llm",
                                     classifier_note=result.text.strip())
        found = find_question_types(result.text)
        if len(found) == 1:
            return ClassifiedBadCase(base=case, qtype=found[0], source="llm",
                                     classifier_note=result.text.strip())
    raise ClassificationError(
        f"classifier reply matched no single question type after retry: {last_reply!r}"
    )


@dataclass(frozen=True)
class SampledPair:
    cases: tuple[ClassifiedBadCase, ClassifiedBadCase]
    duplicated: bool  # True when the pool held only one case of the type


@dataclass
class BadCasePool:
    cases: list[ClassifiedBadCase] = field(default_factory=list)

    def add(self, case: ClassifiedBadCase) -> None:
        self.cases.append(case)

    def of_type(self, qtype: QuestionType) -> list[ClassifiedBadCase]:
        return [c for c in self.cases if c.qtype == qtype]

    def stats(self) -> dict[QuestionType, int]:
        counts = {qt: 0 for qt in QuestionType}
        for case in self.cases:
            counts[case.qtype] += 1
        return counts

    def sample_pairs(self, qtype: QuestionType, rng: random.Random) -> SampledPair:
        candidates = self.of_type(qtype)
        if not candidates:
            raise ClassificationError(f"no pooled cases of type {qtype.value!r}")
        if len(candidates) == 1:
            return SampledPair(cases=(candidates[0], candidates[0]), duplicated=True)
        pair = rng.sample(candidates, 2)
        return SampledPair(cases=(pair[0], pair[1]), duplicated=False)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for case in self.cases:
                fh.write(json.dumps(case.to_json(), sort_keys=True) + "\n")

    def append(self, path, new_cases: list[ClassifiedBadCase]) -> None:
        with open(path, "a", encoding="utf-8") as fh:
            for case in new_cases:
                fh.write(json.dumps(case.to_json(), sort_keys=True) + "\n")
        self.cases.extend(new_cases)

    @classmethod
    def load(cls, path) -> "BadCasePool":
        pool = cls()
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line:
                    continue
                try:
                    pool.add(ClassifiedBadCase.from_json(json.loads(line)))
                except (json.JSONDecodeError, KeyError, SchemaError) as exc:
                    raise SchemaError(f"corrupt pool entry: {exc}", line=lineno) from exc
        return pool
