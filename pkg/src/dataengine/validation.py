"""Parsing of LLM generation output and mechanical validity checks.

Checks can pass, fail, or be skipped; the triage verdict is a pure function of
the check results and of whether the batch is an IPO review batch (where every
mechanically clean item still goes to a human, since illusion and 3D-perception
failures cannot be caught mechanically).
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Callable, Optional

from .catalog import ImageAnnotation
from .question_types import QuestionType
from .sampling import QuerySeed

DEFAULT_IOU_THRESHOLD = 0.5

BBOX_RE = re.compile(r"\[\s*\d+(?:\.\d+)?(?:\s*,\s*\d+(?:\.\d+)?){3}\s*\]")
_BBOX_REMOVE_RE = re.compile(r" ?\[\s*\d+(?:\.\d+)?(?:\s*,\s*\d+(?:\.\d+)?){3}\s*\]")

ANSWER_LETTERS = "ABCD"


class FailureType(enum.Enum):
    INCORRECT_BOUNDING_BOX = "incorrect_bounding_box"
    ILLUSION = "illusion"
    INCORRECT_3D_PERCEPTION = "incorrect_3d_perception"
    WRONG_QUESTION_TYPE = "wrong_question_type"
    ILLOGICAL_QUESTION = "illogical_question"


@dataclass(frozen=True)
class BboxMention:
    surface_span: str
    bbox: tuple[float, float, float, float]
    location: str  # question | choice | rationale


@dataclass(frozen=True)
class GeneratedQA:
    seed: Optional[QuerySeed]
    question: str
    choices: tuple[str, str, str, str]
    answer: str  # letter A-D
    rationale: Optional[str] = None

    @property
    def bbox_mentions(self) -> tuple[BboxMention, ...]:
        mentions = []
        fields = [("question", self.question)]
        fields += [("choice", c) for c in self.choices]
        if self.rationale:
            fields.append(("rationale", self.rationale))
        for location, text in fields:
            for match in BBOX_RE.finditer(text):
                numbers = tuple(float(v) for v in re.findall(r"\d+(?:\.\d+)?", match.group(0)))
                mentions.append(BboxMention(match.group(0), numbers, location))
        return tuple(mentions)

    def all_text(self) -> str:
        parts = [self.question, *self.choices]
        if self.rationale:
            parts.append(self.rationale)
        return "\n".join(parts)


@dataclass(frozen=True)
class ParseStub:
    """A block that failed structural extraction; kept so nothing is dropped."""

    seed: Optional[QuerySeed]
    reason: str
    raw: str


_QUESTION_LINE = re.compile(r"^\s*(?:\d+[.)]\s*)?Question(?:\s*\d+)?\s*[:.]\s*(.*)$", re.I)
_CHOICE_LINE = re.compile(r"^\s*([A-F])[.)]\s*(.+)$")
_ANSWER_LINE = re.compile(r"^\s*Answer\s*[:.]?\s*([A-Za-z])\b", re.I)
_RATIONALE_LINE = re.compile(r"^\s*(?:Rationale|Explanation)\s*[:.]?\s*(.*)$", re.I)


def parse_output(text: str, seed: Optional[QuerySeed] = None) -> list:
    """Parse generation output into GeneratedQA items and ParseStubs.

    Blocks start at a "Question:" line. No content is silently dropped:
    len(result) equals the number of detected blocks.
    """
    lines = text.splitlines()
    starts = [i for i, line in enumerate(lines) if _QUESTION_LINE.match(line)]
    out: list = []
    for bi, start in enumerate(starts):
        end = starts[bi + 1] if bi + 1 < len(starts) else len(lines)
        block = lines[start:end]
        out.append(_parse_block(block, seed))
    return out


def _parse_block(block: list[str], seed):
    raw = "\n".join(block)
    question_parts = [_QUESTION_LINE.match(block[0]).group(1).strip()]
    choices: list[str] = []
    answer = None
    rationale_parts: list[str] = []
    section = "question"
    for line in block[1:]:
        choice = _CHOICE_LINE.match(line)
        ans = _ANSWER_LINE.match(line)
        rat = _RATIONALE_LINE.match(line)
        if choice:
            choices.append(choice.group(2).strip())
            section = "choices"
        elif ans and section in ("choices", "question"):
            answer = ans.group(1).upper()
            section = "answer"
        elif rat:
            rationale_parts.append(rat.group(1).strip())
            section = "rationale"
        elif section == "question" and line.strip():
            question_parts.append(line.strip())
        elif section == "rationale" and line.strip():
            rationale_parts.append(line.strip())
    question = " ".join(p for p in question_parts if p).strip()
    if not question:
        return ParseStub(seed, "empty question", raw)
    if len(choices) != 4:
        return ParseStub(seed, f"choice count: expected 4, got {len(choices)}", raw)
    if answer is None:
        return ParseStub(seed, "missing answer", raw)
    if answer not in ANSWER_LETTERS:
        return ParseStub(seed, f"answer letter {answer!r} out of range", raw)
    rationale = " ".join(rationale_parts).strip() or None
    return GeneratedQA(
        seed=seed,
        question=question,
        choices=(choices[0], choices[1], choices[2], choices[3]),
        answer=answer,
        rationale=rationale,
    )


def iou(a: tuple[float, float, float, float], b: tuple[float, float, float, float]) -> float:
    """Intersection-over-union of two [x, y, w, h] boxes."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    ix = max(ax, bx)
    iy = max(ay, by)
    ix2 = min(ax + aw, bx + bw)
    iy2 = min(ay + ah, by + bh)
    inter = max(0.0, ix2 - ix) * max(0.0, iy2 - iy)
    union = aw * ah + bw * bh - inter
    return inter / union if union > 0 else 0.0


def check_bbox(
    qa: GeneratedQA,
    ann: ImageAnnotation,
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
) -> tuple[bool, list[str]]:
    """Every mentioned box must lie inside the image and overlap some annotated
    object with IoU >= threshold. Returns (ok, offending surface spans)."""
    offending = []
    for mention in qa.bbox_mentions:
        x, y, w, h = mention.bbox
        if x < 0 or y < 0 or x + w > ann.width or y + h > ann.height:
            offending.append(mention.surface_span)
            continue
        if not any(iou(mention.bbox, obj.bbox) >= iou_threshold for obj in ann.objects):
            offending.append(mention.surface_span)
    return (not offending, offending)


def check_removability(text: str) -> tuple[bool, str, Optional[str]]:
    """Strip every bracketed bbox span (plus one adjacent space) and verify the
    sentence survives. Returns (ok, cleaned_text, failure_reason)."""
    cleaned = _BBOX_REMOVE_RE.sub("", text)
    if "  " in cleaned:
        return False, cleaned, "doubled spaces after bbox removal"
    if re.search(r"\(\s*\)", cleaned):
        return False, cleaned, "empty parentheses after bbox removal"
    if not re.search(r"\w", cleaned):
        return False, cleaned, "empty remainder after bbox removal"
    return True, cleaned, None


def check_structure(qa: GeneratedQA, format: str) -> tuple[bool, Optional[str]]:
    """QMAE/QMA structural discipline: 4 distinct choices, valid answer letter,
    and (QMAE only) a non-empty rationale."""
    if format not in ("QMAE", "QMA"):
        raise ValueError(f"unknown format {format!r}")
    if len(set(qa.choices)) != 4:
        return False, "duplicate choices"
    if qa.answer not in ANSWER_LETTERS:
        return False, f"invalid answer letter {qa.answer!r}"
    if format == "QMAE" and not (qa.rationale and qa.rationale.strip()):
        return False, "QMAE item without rationale"
    return True, None


def check_type_adherence(
    qa: GeneratedQA,
    expected: QuestionType,
    classify: Optional[Callable[[str, tuple[str, ...]], QuestionType]] = None,
) -> str:
    """Re-classify the generated question; pass/fail/skip."""
    if classify is None:
        return "skip"
    got = classify(qa.question, qa.choices)
    return "pass" if got == expected else "fail"


@dataclass(frozen=True)
class Verdict:
    kind: str  # accept | auto_reject | needs_human
    failure_type: Optional[FailureType] = None


@dataclass
class ValidationReport:
    qa: GeneratedQA
    checks: dict[str, str] = field(default_factory=dict)  # name -> pass|fail|skip
    verdict: Optional[Verdict] = None
    offending_spans: list[str] = field(default_factory=list)
    cleaned_question: str = ""
    cleaned_choices: tuple[str, ...] = ()
    cleaned_rationale: Optional[str] = None

    def to_json(self) -> dict:
        return {
            "question": self.qa.question,
            "answer": self.qa.answer,
            "checks": dict(self.checks),
            "verdict": self.verdict.kind,
            "failure_type": self.verdict.failure_type.value if self.verdict.failure_type else None,
            "offending_spans": list(self.offending_spans),
        }


def triage(checks: dict[str, str], ipo_review: bool) -> Verdict:
    """Map mechanical check results to a verdict.

    bbox/removability failures map to incorrect bounding box, structure failures
    to illogical question, type failures to wrong question type. Mechanically
    clean items go to a human during IPO review batches, otherwise accept.
    """
    if checks.get("bbox") == "fail" or checks.get("removability") == "fail":
        return Verdict("auto_reject", FailureType.INCORRECT_BOUNDING_BOX)
    if checks.get("structure") == "fail":
        return Verdict("auto_reject", FailureType.ILLOGICAL_QUESTION)
    if checks.get("type") == "fail":
        return Verdict("auto_reject", FailureType.WRONG_QUESTION_TYPE)
    if ipo_review:
        return Verdict("needs_human")
    return Verdict("accept")


def validate(
    qa: GeneratedQA,
    ann: Optional[ImageAnnotation],
    format: str = "QMAE",
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
    classify: Optional[Callable[[str, tuple[str, ...]], QuestionType]] = None,
    ipo_review: bool = False,
) -> ValidationReport:
    """Run all mechanical checks on one parsed item and compute its verdict."""
    report = ValidationReport(qa=qa)

    if ann is not None:
        ok, offending = check_bbox(qa, ann, iou_threshold)
        report.checks["bbox"] = "pass" if ok else "fail"
        report.offending_spans = offending
    else:
        report.checks["bbox"] = "skip"

    rem_ok = True
    ok, cleaned_q, _ = check_removability(qa.question)
    rem_ok &= ok
    report.cleaned_question = cleaned_q.strip()
    cleaned_choices = []
    for choice in qa.choices:
        ok, cleaned, _ = check_removability(choice)
        rem_ok &= ok
        cleaned_choices.append(cleaned.strip())
    report.cleaned_choices = tuple(cleaned_choices)
    if qa.rationale:
        ok, cleaned_r, _ = check_removability(qa.rationale)
        rem_ok &= ok
        report.cleaned_rationale = cleaned_r.strip()
    report.checks["removability"] = "pass" if rem_ok else "fail"

    ok, _reason = check_structure(qa, format)
    report.checks["structure"] = "pass" if ok else "fail"

    if qa.seed is not None:
        report.checks["type"] = check_type_adherence(qa, qa.seed.qtype, classify)
    else:
        report.checks["type"] = "skip"

    report.verdict = triage(report.checks, ipo_review)
    return report
