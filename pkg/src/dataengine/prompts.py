"""Versioned prompt templates and final prompt assembly.

One file per template_id, line-delimited version records. Exactly one version
per template may be active; IPO batches are allowed to render drafts.
"""

from __future__ import annotations

import difflib
import hashlib
import json
import re
import string
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Optional

from .errors import EngineError, SchemaError, StateError
from .pool import ClassifiedBadCase
from .question_types import QuestionType
from .sampling import QuerySeed

ALLOWED_PLACEHOLDERS = frozenset(
    {
        "question_type_definition",
        "few_shot_examples",
        "bbox_insert_example",
        "image_annotation",
        "n_questions",
    }
)

_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")

DEFAULT_K_QUESTIONS = 5

GENERATION_TEMPLATE_ID = "generation"
CLASSIFICATION_TEMPLATE_ID = "classification"
CONFLICT_CHECK_TEMPLATE_ID = "conflict-check"
CORRECTION_TEMPLATE_ID = "failure-correction"


def load_asset(name: str) -> str:
    return resources.files("dataengine.assets").joinpath(name).read_text(encoding="utf-8")


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    version: int
    body: str
    status: str = "draft"  # draft | active | retired
    parent_version: Optional[int] = None
    changelog: str = ""
    proposal_id: Optional[str] = None  # IPO audit link; None for seed versions

    def to_json(self) -> dict:
        return {
            "template_id": self.template_id,
            "version": self.version,
            "body": self.body,
            "status": self.status,
            "parent_version": self.parent_version,
            "changelog": self.changelog,
            "proposal_id": self.proposal_id,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PromptTemplate":
        return cls(**{k: obj[k] for k in (
            "template_id", "version", "body", "status",
            "parent_version", "changelog", "proposal_id")})


@dataclass(frozen=True)
class RenderedPrompt:
    template_id: str
    version: int
    seed: QuerySeed
    final_text: str
    content_hash: str


def _check_placeholders(body: str) -> None:
    unknown = set(_PLACEHOLDER_RE.findall(body)) - ALLOWED_PLACEHOLDERS
    if unknown:
        raise SchemaError(f"unknown placeholders: {sorted(unknown)}")


class PromptStore:
    """In-memory store with an optional backing directory (one file per template)."""

    def __init__(self, root=None):
        self.root = Path(root) if root else None
        self._templates: dict[str, list[PromptTemplate]] = {}
        if self.root and self.root.exists():
            for path in sorted(self.root.glob("*.jsonl")):
                versions = [
                    PromptTemplate.from_json(json.loads(line))
                    for line in path.read_text(encoding="utf-8").splitlines()
                    if line.strip()
                ]
                if versions:
                    self._templates[versions[0].template_id] = versions

    def _persist(self, template_id: str) -> None:
        if not self.root:
            return
        self.root.mkdir(parents=True, exist_ok=True)
        path = self.root / f"{template_id}.jsonl"
        with open(path, "w", encoding="utf-8") as fh:
            for tpl in self._templates[template_id]:
                fh.write(json.dumps(tpl.to_json(), sort_keys=True) + "\n")

    def template_ids(self) -> list[str]:
        return sorted(self._templates)

    def versions(self, template_id: str) -> list[PromptTemplate]:
        if template_id not in self._templates:
            raise EngineError(f"unknown template {template_id!r}")
        return list(self._templates[template_id])

    def get(self, template_id: str, version: int) -> PromptTemplate:
        for tpl in self.versions(template_id):
            if tpl.version == version:
                return tpl
        raise EngineError(f"template {template_id!r} has no version {version}")

    def active(self, template_id: str) -> PromptTemplate:
        for tpl in self.versions(template_id):
            if tpl.status == "active":
                return tpl
        raise StateError(f"template {template_id!r} has no active version")

    def register(
        self,
        template_id: str,
        body: str,
        parent: Optional[int] = None,
        changelog: str = "",
        proposal_id: Optional[str] = None,
    ) -> PromptTemplate:
        _check_placeholders(body)
        existing = self._templates.get(template_id, [])
        if parent is not None and all(t.version != parent for t in existing):
            raise EngineError(f"parent version {parent} does not exist")
        version = max((t.version for t in existing), default=0) + 1
        tpl = PromptTemplate(
            template_id=template_id,
            version=version,
            body=body,
            status="draft",
            parent_version=parent,
            changelog=changelog,
            proposal_id=proposal_id,
        )
        self._templates.setdefault(template_id, []).append(tpl)
        self._persist(template_id)
        return tpl

    def activate(self, template_id: str, version: int) -> None:
        versions = self.versions(template_id)
        if all(t.version != version for t in versions):
            raise EngineError(f"template {template_id!r} has no version {version}")
        updated = []
        for tpl in versions:
            if tpl.version == version:
                updated.append(replace(tpl, status="active"))
            elif tpl.status == "active":
                updated.append(replace(tpl, status="retired"))
            else:
                updated.append(tpl)
        self._templates[template_id] = updated
        self._persist(template_id)

    def diff(self, template_id: str, v_a: int, v_b: int) -> list[str]:
        a = self.get(template_id, v_a)
        b = self.get(template_id, v_b)
        return list(
            difflib.unified_diff(
                a.body.splitlines(),
                b.body.splitlines(),
                fromfile=f"{template_id}/v{v_a}",
                tofile=f"{template_id}/v{v_b}",
                lineterm="",
            )
        )


def render_in_context_case(case: ClassifiedBadCase) -> str:
    """In-context examples show the question with its ground-truth answer."""
    rec = case.base
    lines = [f"Question: {rec.question}"]
    for i, choice in enumerate(rec.choices):
        lines.append(f"{string.ascii_uppercase[i]}. {choice}")
    letter = string.ascii_uppercase[rec.ground_truth]
    lines.append(f"Answer: {letter}. {rec.choices[rec.ground_truth]}")
    return "\n".join(lines)


def default_type_definitions() -> dict[QuestionType, str]:
    """Type definitions parsed out of the shipped classification template."""
    defs = {}
    for line in load_asset("classification.txt").splitlines():
        name, sep, definition = line.partition(":")
        if not sep:
            continue
        from .question_types import parse_question_type

        qtype = parse_question_type(name.strip())
        if qtype is not None:
            defs[qtype] = definition.strip()
    return defs


def render(
    template: PromptTemplate,
    seed: QuerySeed,
    ann_text: str,
    type_defs: dict[QuestionType, str],
    k_questions: int = DEFAULT_K_QUESTIONS,
    allow_draft: bool = False,
) -> RenderedPrompt:
    """Substitute every placeholder; rendering is deterministic and hash-stable."""
    if template.status == "retired" or (template.status == "draft" and not allow_draft):
        raise StateError(
            f"template {template.template_id} v{template.version} is {template.status}"
        )
    if "{question_type_definition}" in template.body and seed.qtype not in type_defs:
        raise EngineError(f"no type definition for {seed.qtype.value!r}")

    few_shot = "\n\n".join(render_in_context_case(c) for c in seed.in_context.cases)
    values = {
        "question_type_definition": f"{seed.qtype.value}: {type_defs.get(seed.qtype, '')}",
        "few_shot_examples": few_shot,
        "bbox_insert_example": load_asset("bbox_insert_example.txt").strip(),
        "image_annotation": ann_text,
        "n_questions": str(k_questions),
    }
    text = _PLACEHOLDER_RE.sub(lambda m: values.get(m.group(1), m.group(0)), template.body)
    leftover = _PLACEHOLDER_RE.findall(text)
    leftover = [name for name in leftover if name in ALLOWED_PLACEHOLDERS]
    if leftover:
        raise EngineError(f"unresolved placeholders after render: {leftover}")
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return RenderedPrompt(
        template_id=template.template_id,
        version=template.version,
        seed=seed,
        final_text=text,
        content_hash=digest,
    )


def seed_default_templates(store: PromptStore) -> None:
    """Install the shipped prompt assets as seed versions.

    The generation template ships its original body as v1 and the refined body
    as v2 (active). Idempotent: does nothing for templates that already exist.
    """
    if GENERATION_TEMPLATE_ID not in store.template_ids():
        store.register(GENERATION_TEMPLATE_ID, load_asset("generation_original.txt"),
                       changelog="initial hand-written prompt")
        store.register(GENERATION_TEMPLATE_ID, load_asset("generation_final.txt"),
                       parent=1, changelog="refined: type definitions, bbox rules")
        store.activate(GENERATION_TEMPLATE_ID, 1)  # v1 ends up retired, not draft
        store.activate(GENERATION_TEMPLATE_ID, 2)
    for template_id, asset in (
        (CLASSIFICATION_TEMPLATE_ID, "classification.txt"),
        (CONFLICT_CHECK_TEMPLATE_ID, "conflict_check.txt"),
        (CORRECTION_TEMPLATE_ID, "failure_correction.txt"),
    ):
        if template_id not in store.template_ids():
            store.register(template_id, load_asset(asset), changelog="shipped asset")
            store.activate(template_id, 1)
