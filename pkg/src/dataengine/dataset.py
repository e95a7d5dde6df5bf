"""Dataset assembly: QMAE/QMA emission, round merging, and diversity metrics.

Emitted text never contains bracketed bbox spans; the cleaned form produced by
the removability check is what enters the dataset, while raw text stays in the
validation reports for provenance.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from .errors import EngineError, SchemaError
from .prompts import load_asset
from .validation import BBOX_RE, ValidationReport

FORMATS = ("QMAE", "QMA")

_TOKEN_RE = re.compile(r"[a-z0-9']+")


@dataclass(frozen=True)
class DatasetItem:
    image_id: str
    question: str
    choices: tuple[str, str, str, str]
    answer: str  # letter A-D
    rationale: Optional[str]  # present iff format == QMAE
    provenance: dict  # round, prompt_version, qtype, request_digest

    def __post_init__(self):
        for text in (self.question, *self.choices, self.rationale or ""):
            if BBOX_RE.search(text):
                raise SchemaError(f"emitted text still contains a bbox span: {text!r}")

    @property
    def answer_text(self) -> str:
        return self.choices["ABCD".index(self.answer)]

    def to_json(self) -> dict:
        obj = {
            "image_id": self.image_id,
            "question": self.question,
            "choices": list(self.choices),
            "answer": self.answer,
            "provenance": self.provenance,
        }
        if self.rationale is not None:
            obj["rationale"] = self.rationale
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "DatasetItem":
        return cls(
            image_id=obj["image_id"],
            question=obj["question"],
            choices=tuple(obj["choices"]),
            answer=obj["answer"],
            rationale=obj.get("rationale"),
            provenance=obj["provenance"],
        )


def build(
    accepted: Iterable[tuple[ValidationReport, dict]],
    format: str,
) -> tuple[list[DatasetItem], dict]:
    """Turn accepted validation reports into dataset items plus a manifest.

    Item order is deterministic: sorted by provenance request digest, then by
    question text. QMA builds drop rationales.
    """
    rows = []
    for report, provenance in accepted:
        if report.verdict is None or report.verdict.kind != "accept":
            raise EngineError(
                f"refusing non-accepted item (verdict={report.verdict and report.verdict.kind})"
            )
        rows.append(
            {
                "image_id": report.qa.seed.image_id if report.qa.seed else "",
                "question": report.cleaned_question,
                "choices": list(report.cleaned_choices),
                "answer": report.qa.answer,
                "rationale": report.cleaned_rationale,
                "provenance": dict(provenance),
            }
        )
    return build_from_rows(rows, format)


def build_from_rows(rows: Iterable[dict], format: str) -> tuple[list[DatasetItem], dict]:
    """Same as build(), starting from already-cleaned accepted rows (the
    persisted accepted.jsonl form)."""
    if format not in FORMATS:
        raise EngineError(f"unknown dataset format {format!r}")
    items = []
    for row in rows:
        rationale = row.get("rationale") if format == "QMAE" else None
        if format == "QMAE" and not rationale:
            raise EngineError("QMAE build requires a rationale on every item")
        items.append(
            DatasetItem(
                image_id=row["image_id"],
                question=row["question"],
                choices=tuple(row["choices"]),
                answer=row["answer"],
                rationale=rationale,
                provenance=dict(row["provenance"]),
            )
        )
    items.sort(key=lambda it: (it.provenance.get("request_digest", ""), it.question))
    by_type: dict[str, int] = {}
    versions = set()
    for item in items:
        qtype = item.provenance.get("qtype", "unknown")
        by_type[qtype] = by_type.get(qtype, 0) + 1
        if "prompt_version" in item.provenance:
            versions.add(item.provenance["prompt_version"])
    manifest = {
        "format": format,
        "count": len(items),
        "counts_by_type": dict(sorted(by_type.items())),
        "prompt_versions": sorted(versions),
    }
    return items, manifest


def write_dataset(items: list[DatasetItem], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item in items:
            fh.write(json.dumps(item.to_json(), sort_keys=True) + "\n")


def parse_dataset(path) -> list[DatasetItem]:
    items = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            items.append(DatasetItem.from_json(json.loads(raw)))
        except (json.JSONDecodeError, KeyError) as exc:
            raise SchemaError(f"corrupt dataset line: {exc}", line=lineno) from exc
    return items


def merge_rounds(paths: Iterable) -> list[DatasetItem]:
    """Concatenate round datasets, deduplicating exact (image_id, question)
    pairs; the first occurrence wins."""
    seen: set[tuple[str, str]] = set()
    merged = []
    for path in paths:
        for item in parse_dataset(path):
            key = (item.image_id, item.question)
            if key in seen:
                continue
            seen.add(key)
            merged.append(item)
    return merged


@dataclass(frozen=True)
class DiversityReport:
    instance_num: int
    unique_q: int
    unique_q_pct: float
    unique_a: int
    unique_a_pct: float
    avg_len_q: float
    avg_len_a: float
    unique_nouns_a: int
    mean_q_distance: float

    def to_json(self) -> dict:
        return {
            "instance_num": self.instance_num,
            "unique_q": self.unique_q,
            "unique_q_pct": self.unique_q_pct,
            "unique_a": self.unique_a,
            "unique_a_pct": self.unique_a_pct,
            "avg_len_q": self.avg_len_q,
            "avg_len_a": self.avg_len_a,
            "unique_nouns_a": self.unique_nouns_a,
            "mean_q_distance": self.mean_q_distance,
        }


def load_noun_lexicon() -> frozenset[str]:
    return frozenset(
        w.strip() for w in load_asset("noun_lexicon.txt").splitlines() if w.strip()
    )


def _question_tokens(text: str) -> frozenset[str]:
    return frozenset(_TOKEN_RE.findall(text.casefold()))


def jaccard_distance(a: frozenset[str], b: frozenset[str]) -> float:
    if not a and not b:
        return 0.0
    union = a | b
    return 1.0 - len(a & b) / len(union)


EXHAUSTIVE_PAIR_LIMIT = 1000
SAMPLED_PAIRS = 200_000


def diversity(
    items: list[DatasetItem],
    noun_lexicon: Optional[frozenset] = None,
    seed: int = 0,
) -> DiversityReport:
    """Diversity metrics over a dataset.

    Mean question distance is mean pairwise Jaccard distance over lowercase
    question token sets, exhaustive up to 1000 questions and over 200k seeded
    random pairs beyond that.
    """
    if not items:
        raise EngineError("diversity needs a non-empty dataset")
    if noun_lexicon is None:
        noun_lexicon = load_noun_lexicon()

    questions = [it.question for it in items]
    answers = [it.answer_text for it in items]
    unique_q = len({q.strip().casefold() for q in questions})
    unique_a = len({a.strip().casefold() for a in answers})

    avg_len_q = sum(len(q.split()) for q in questions) / len(items)
    answer_blobs = [
        it.answer_text + (" " + it.rationale if it.rationale else "") for it in items
    ]
    avg_len_a = sum(len(b.split()) for b in answer_blobs) / len(items)

    nouns = set()
    for blob in answer_blobs:
        nouns.update(tok for tok in _TOKEN_RE.findall(blob.casefold()) if tok in noun_lexicon)

    token_sets = [_question_tokens(q) for q in questions]
    n = len(token_sets)
    if n < 2:
        mean_dist = 0.0
    elif n <= EXHAUSTIVE_PAIR_LIMIT:
        total = 0.0
        pairs = 0
        for i in range(n):
            for j in range(i + 1, n):
                total += jaccard_distance(token_sets[i], token_sets[j])
                pairs += 1
        mean_dist = total / pairs
    else:
        rng = random.Random(seed)
        total = 0.0
        for _ in range(SAMPLED_PAIRS):
            i = rng.randrange(n)
            j = rng.randrange(n - 1)
            if j >= i:
                j += 1
            total += jaccard_distance(token_sets[i], token_sets[j])
        mean_dist = total / SAMPLED_PAIRS

    return DiversityReport(
        instance_num=len(items),
        unique_q=unique_q,
        unique_q_pct=unique_q / len(items),
        unique_a=unique_a,
        unique_a_pct=unique_a / len(items),
        avg_len_q=avg_len_q,
        avg_len_a=avg_len_a,
        unique_nouns_a=len(nouns),
        mean_q_distance=mean_dist,
    )
