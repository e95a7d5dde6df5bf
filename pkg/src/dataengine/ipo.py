"""Interactive Prompt Optimization: conflict check, human failure review,
LLM-proposed correction, convergence test, and the failure-case ledger.

The session state machine admits exactly these edges:
ConflictCheck -> BatchReview, BatchReview -> Converged, BatchReview ->
Correction, Correction -> ConflictCheck (proposal approved), Correction ->
BatchReview (proposal rejected). Converged is terminal. Every version created
inside a session links back to an approved proposal.
"""

from __future__ import annotations

import enum
import json
import re
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .errors import EngineError, StateError
from .gateway import ChatRequest, Gateway
from .prompts import (
    CONFLICT_CHECK_TEMPLATE_ID,
    CORRECTION_TEMPLATE_ID,
    PromptStore,
)
from .validation import FailureType, ParseStub, ValidationReport, parse_output, validate


class IPOState(enum.Enum):
    CONFLICT_CHECK = "ConflictCheck"
    BATCH_REVIEW = "BatchReview"
    CORRECTION = "Correction"
    CONVERGED = "Converged"


ALLOWED_TRANSITIONS = frozenset(
    {
        (IPOState.CONFLICT_CHECK, IPOState.BATCH_REVIEW),
        (IPOState.BATCH_REVIEW, IPOState.CONVERGED),
        (IPOState.BATCH_REVIEW, IPOState.CORRECTION),
        (IPOState.CORRECTION, IPOState.CONFLICT_CHECK),
        (IPOState.CORRECTION, IPOState.BATCH_REVIEW),
    }
)

_FENCED_BODY_RE = re.compile(r"```[a-z]*\n(.*?)```", re.S)


@dataclass
class FailureCase:
    qa_ref: str
    failure_type: FailureType
    explanation: str
    tagger: str  # user id or "auto"
    prompt_version: int
    timestamp: float
    session_id: Optional[str] = None

    def to_json(self) -> dict:
        return {
            "qa_ref": self.qa_ref,
            "failure_type": self.failure_type.value,
            "explanation": self.explanation,
            "tagger": self.tagger,
            "prompt_version": self.prompt_version,
            "timestamp": self.timestamp,
            "session_id": self.session_id,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FailureCase":
        return cls(
            qa_ref=obj["qa_ref"],
            failure_type=FailureType(obj["failure_type"]),
            explanation=obj["explanation"],
            tagger=obj["tagger"],
            prompt_version=int(obj["prompt_version"]),
            timestamp=float(obj["timestamp"]),
            session_id=obj.get("session_id"),
        )


class FailureLedger:
    """Append-only failure-case log, optionally backed by a JSONL file."""

    def __init__(self, path=None):
        self.path = Path(path) if path else None
        self.entries: list[FailureCase] = []
        if self.path and self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    self.entries.append(FailureCase.from_json(json.loads(line)))

    def append(self, case: FailureCase) -> None:
        self.entries.append(case)
        if self.path:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(case.to_json(), sort_keys=True) + "\n")

    def find(self, qa_ref: str, tagger: str) -> Optional[FailureCase]:
        for case in self.entries:
            if case.qa_ref == qa_ref and case.tagger == tagger:
                return case
        return None


def ledger_stats(
    ledger: FailureLedger,
    version_range: Optional[tuple[int, int]] = None,
) -> dict[FailureType, int]:
    """Failure counts per type, optionally restricted to an inclusive
    prompt-version range."""
    counts = {ftype: 0 for ftype in FailureType}
    for case in ledger.entries:
        if version_range is not None:
            lo, hi = version_range
            if not lo <= case.prompt_version <= hi:
                continue
        counts[case.failure_type] += 1
    return counts


@dataclass
class PromptProposal:
    proposal_id: str
    kind: str  # conflict | correction
    base_version: int
    suggested_body: Optional[str]
    llm_rationale: str
    status: str = "pending"  # pending | approved | rejected | unparseable
    decider: Optional[str] = None
    session_id: Optional[str] = None

    def to_json(self) -> dict:
        return {
            "proposal_id": self.proposal_id,
            "kind": self.kind,
            "base_version": self.base_version,
            "suggested_body": self.suggested_body,
            "llm_rationale": self.llm_rationale,
            "status": self.status,
            "decider": self.decider,
            "session_id": self.session_id,
        }


@dataclass
class ReviewItem:
    item_id: str
    qa: object  # GeneratedQA or ParseStub
    report: Optional[ValidationReport]
    status: str  # auto_rejected | needs_human | reviewed_ok | tagged

    def to_json(self) -> dict:
        from .validation import GeneratedQA

        if isinstance(self.qa, GeneratedQA):
            qa_json = {
                "question": self.qa.question,
                "choices": list(self.qa.choices),
                "answer": self.qa.answer,
                "rationale": self.qa.rationale,
                "image_id": self.qa.seed.image_id if self.qa.seed else None,
            }
        else:
            qa_json = {"parse_failure": self.qa.reason, "raw": self.qa.raw}
        return {
            "item_id": self.item_id,
            "qa": qa_json,
            "checks": dict(self.report.checks) if self.report else {},
            "status": self.status,
        }


@dataclass
class IPOSession:
    session_id: str
    template_id: str
    current_version: int
    starting_version: int
    state: IPOState
    batch_size: int
    threshold: float
    history: list[dict] = field(default_factory=list)
    batch: list[ReviewItem] = field(default_factory=list)
    pending_seeds: list = field(default_factory=list)
    pending_proposal_id: Optional[str] = None

    def to_json(self) -> dict:
        return {
            "session_id": self.session_id,
            "template_id": self.template_id,
            "current_version": self.current_version,
            "starting_version": self.starting_version,
            "state": self.state.value,
            "batch_size": self.batch_size,
            "threshold": self.threshold,
            "history": list(self.history),
            "batch": [item.to_json() for item in self.batch],
            "pending_proposal_id": self.pending_proposal_id,
        }


def _transition(session: IPOSession, new_state: IPOState) -> None:
    if (session.state, new_state) not in ALLOWED_TRANSITIONS:
        raise StateError(
            f"illegal transition {session.state.value} -> {new_state.value}"
        )
    session.state = new_state


class IPOEngine:
    """Owns sessions, proposals, and the failure ledger for one prompt store."""

    def __init__(
        self,
        store: PromptStore,
        ledger: Optional[FailureLedger] = None,
        clock: Callable[[], float] = time.time,
    ):
        self.store = store
        self.ledger = ledger or FailureLedger()
        self.clock = clock
        self.sessions: dict[str, IPOSession] = {}
        self.proposals: dict[str, PromptProposal] = {}

    # -- session lifecycle ---------------------------------------------------

    def start_session(
        self,
        template_id: str,
        version: int,
        batch_size: int = 20,
        threshold: float = 0.10,
        session_id: Optional[str] = None,
    ) -> IPOSession:
        if not 0 < threshold <= 1:
            raise EngineError(f"threshold must be in (0, 1], got {threshold}")
        if batch_size < 1:
            raise EngineError("batch_size must be >= 1")
        self.store.get(template_id, version)  # existence check
        session = IPOSession(
            session_id=session_id or f"ipo-{uuid.uuid4().hex[:8]}",
            template_id=template_id,
            current_version=version,
            starting_version=version,
            state=IPOState.CONFLICT_CHECK,
            batch_size=batch_size,
            threshold=threshold,
        )
        self.sessions[session.session_id] = session
        return session

    # -- step 1: conflict check ----------------------------------------------

    def run_conflict_check(self, session: IPOSession, gateway: Gateway,
                           model: str = "gpt-4") -> PromptProposal:
        if session.state is not IPOState.CONFLICT_CHECK:
            raise StateError(f"conflict check not allowed in state {session.state.value}")
        body = self.store.get(session.template_id, session.current_version).body
        instruction = self.store.active(CONFLICT_CHECK_TEMPLATE_ID).body
        req = ChatRequest(
            model_name=model,
            messages=(
                {"role": "system", "content": instruction},
                {"role": "user", "content": f"BEGIN PROMPT\n{body}\nEND PROMPT"},
            ),
            temperature=0.0,
            max_tokens=2048,
        )
        reply = gateway.complete(req).text
        proposal = PromptProposal(
            proposal_id=f"prop-{uuid.uuid4().hex[:8]}",
            kind="conflict",
            base_version=session.current_version,
            suggested_body=None,
            llm_rationale=reply.strip(),
            session_id=session.session_id,
        )
        if "no conflicts found" in reply.casefold():
            proposal.status = "approved"
            proposal.decider = "auto"
            proposal.suggested_body = body  # no change
            self.proposals[proposal.proposal_id] = proposal
            _transition(session, IPOState.BATCH_REVIEW)
            return proposal
        match = _FENCED_BODY_RE.search(reply)
        if match is None:
            proposal.status = "unparseable"
            self.proposals[proposal.proposal_id] = proposal
            _transition(session, IPOState.BATCH_REVIEW)
            return proposal
        proposal.suggested_body = match.group(1).strip("\n")
        self.proposals[proposal.proposal_id] = proposal
        session.pending_proposal_id = proposal.proposal_id
        return proposal

    # -- step 2: review batch ------------------------------------------------

    def generate_review_batch(
        self,
        session: IPOSession,
        build_seeds: Callable[[int], list],
        render_prompt: Callable[[object, int], str],
        gateway: Gateway,
        lookup_annotation: Callable[[str], object],
        format: str = "QMAE",
        iou_threshold: float = 0.5,
        classify=None,
        model: str = "gpt-4",
    ) -> list[ReviewItem]:
        """Generate and mechanically validate one review batch.

        ``build_seeds`` produces query seeds; ``render_prompt(seed, version)``
        returns the final prompt text for the session's current version. A
        gateway failure leaves the partial batch in place; re-invoking resumes
        from the remaining seeds.
        """
        if session.state is not IPOState.BATCH_REVIEW:
            raise StateError(f"batch generation not allowed in state {session.state.value}")
        if not session.pending_seeds and not session.batch:
            session.pending_seeds = list(build_seeds(session.batch_size))
        elif not session.pending_seeds:
            # fresh batch for a new review round
            session.batch = []
            session.pending_seeds = list(build_seeds(session.batch_size))

        while session.pending_seeds:
            seed = session.pending_seeds[0]
            prompt_text = render_prompt(seed, session.current_version)
            req = ChatRequest(
                model_name=model,
                messages=({"role": "user", "content": prompt_text},),
                temperature=0.7,
                max_tokens=2048,
            )
            reply = gateway.complete(req).text  # GatewayError leaves batch resumable
            session.pending_seeds.pop(0)
            for parsed in parse_output(reply, seed):
                item_id = f"{session.session_id}-item-{len(session.batch):04d}"
                if isinstance(parsed, ParseStub):
                    item = ReviewItem(item_id, parsed, None, "auto_rejected")
                    self._auto_tag(session, item_id, FailureType.ILLOGICAL_QUESTION,
                                   f"parse failure: {parsed.reason}")
                else:
                    report = validate(
                        parsed,
                        lookup_annotation(seed.image_id),
                        format=format,
                        iou_threshold=iou_threshold,
                        classify=classify,
                        ipo_review=True,
                    )
                    if report.verdict.kind == "auto_reject":
                        item = ReviewItem(item_id, parsed, report, "auto_rejected")
                        self._auto_tag(session, item_id, report.verdict.failure_type,
                                       "mechanical check failed: "
                                       + ", ".join(k for k, v in report.checks.items()
                                                   if v == "fail"))
                    else:
                        item = ReviewItem(item_id, parsed, report, "needs_human")
                session.batch.append(item)
        return session.batch

    def _auto_tag(self, session, qa_ref, failure_type, explanation):
        self.ledger.append(
            FailureCase(
                qa_ref=qa_ref,
                failure_type=failure_type,
                explanation=explanation,
                tagger="auto",
                prompt_version=session.current_version,
                timestamp=self.clock(),
                session_id=session.session_id,
            )
        )

    def _find_item(self, session: IPOSession, qa_ref: str) -> ReviewItem:
        for item in session.batch:
            if item.item_id == qa_ref:
                return item
        raise EngineError(f"unknown review item {qa_ref!r}")

    def record_failure(
        self,
        session: IPOSession,
        qa_ref: str,
        failure_type: FailureType,
        explanation: str,
        tagger: str,
        override: bool = False,
    ) -> FailureCase:
        if not explanation or not explanation.strip():
            raise EngineError("a human failure tag needs a non-empty explanation")
        item = self._find_item(session, qa_ref)
        if item.status not in ("needs_human", "reviewed_ok") and not override:
            raise StateError(f"item {qa_ref} is {item.status}, not awaiting review")
        existing = self.ledger.find(qa_ref, tagger)
        if existing is not None:
            return existing  # idempotent per (qa, tagger)
        case = FailureCase(
            qa_ref=qa_ref,
            failure_type=failure_type,
            explanation=explanation,
            tagger=tagger,
            prompt_version=session.current_version,
            timestamp=self.clock(),
            session_id=session.session_id,
        )
        self.ledger.append(case)
        item.status = "tagged"
        return case

    def clear_case(self, session: IPOSession, qa_ref: str, tagger: str) -> None:
        item = self._find_item(session, qa_ref)
        if item.status == "auto_rejected":
            raise StateError(f"item {qa_ref} was auto-rejected; it cannot be cleared")
        item.status = "reviewed_ok"

    def failure_rate(self, session: IPOSession) -> float:
        if not session.batch:
            raise StateError("no review batch has been generated")
        unreviewed = [i.item_id for i in session.batch if i.status == "needs_human"]
        if unreviewed:
            raise StateError(f"{len(unreviewed)} items still await review")
        failures = sum(1 for i in session.batch if i.status in ("auto_rejected", "tagged"))
        return failures / len(session.batch)

    # -- step 3: correction --------------------------------------------------

    def propose_correction(
        self,
        session: IPOSession,
        gateway: Gateway,
        k_examples: int = 5,
        model: str = "gpt-4",
    ) -> PromptProposal:
        if session.state is not IPOState.CORRECTION:
            raise StateError(f"correction not allowed in state {session.state.value}")
        if k_examples < 1:
            raise EngineError("k_examples must be >= 1")
        failures = [
            case for case in self.ledger.entries
            if case.session_id == session.session_id
            and case.prompt_version == session.current_version
        ]
        if not failures:
            raise EngineError("no ledgered failures for the current version")
        body = self.store.get(session.template_id, session.current_version).body
        instruction = self.store.active(CORRECTION_TEMPLATE_ID).body
        examples = "\n\n".join(
            f"Failure case ({case.failure_type.value}): {case.qa_ref}\n"
            f"Explanation: {case.explanation}"
            for case in failures[:k_examples]
        )
        req = ChatRequest(
            model_name=model,
            messages=(
                {"role": "system", "content": instruction},
                {
                    "role": "user",
                    "content": f"BEGIN PROMPT\n{body}\nEND PROMPT\n\n{examples}",
                },
            ),
            temperature=0.0,
            max_tokens=2048,
        )
        reply = gateway.complete(req).text
        match = _FENCED_BODY_RE.search(reply)
        proposal = PromptProposal(
            proposal_id=f"prop-{uuid.uuid4().hex[:8]}",
            kind="correction",
            base_version=session.current_version,
            suggested_body=match.group(1).strip("\n") if match else None,
            llm_rationale=reply.strip(),
            session_id=session.session_id,
        )
        self.proposals[proposal.proposal_id] = proposal
        session.pending_proposal_id = proposal.proposal_id
        return proposal

    # -- decisions and convergence -------------------------------------------

    def decide_proposal(self, proposal_id: str, approve: bool, decider: str) -> PromptProposal:
        proposal = self.proposals.get(proposal_id)
        if proposal is None:
            raise EngineError(f"unknown proposal {proposal_id!r}")
        if proposal.status != "pending":
            raise StateError(f"proposal {proposal_id} already {proposal.status}")
        session = self.sessions.get(proposal.session_id)
        proposal.status = "approved" if approve else "rejected"
        proposal.decider = decider
        if session is not None and session.pending_proposal_id == proposal_id:
            session.pending_proposal_id = None
            if approve and proposal.suggested_body is not None:
                new = self.store.register(
                    session.template_id,
                    proposal.suggested_body,
                    parent=session.current_version,
                    changelog=f"IPO {proposal.kind} proposal {proposal_id}",
                    proposal_id=proposal_id,
                )
                session.current_version = new.version
            if proposal.kind == "conflict":
                _transition(session, IPOState.BATCH_REVIEW)
            elif proposal.kind == "correction":
                if approve:
                    _transition(session, IPOState.CONFLICT_CHECK)
                    session.batch = []
                    session.pending_seeds = []
                else:
                    _transition(session, IPOState.BATCH_REVIEW)
        return proposal

    def step(self, session: IPOSession) -> IPOState:
        """Convergence test after a fully reviewed batch."""
        if session.state is not IPOState.BATCH_REVIEW:
            raise StateError(f"step not allowed in state {session.state.value}")
        rate = self.failure_rate(session)
        session.history.append(
            {
                "version": session.current_version,
                "batch_size": len(session.batch),
                "failure_rate": rate,
            }
        )
        if rate <= session.threshold:
            _transition(session, IPOState.CONVERGED)
            self.store.activate(session.template_id, session.current_version)
        else:
            _transition(session, IPOState.CORRECTION)
        return session.state

    # -- audits ----------------------------------------------------------------

    def audit_version_lineage(self, session: IPOSession) -> None:
        """Walk current -> starting version; every step must link an approved
        proposal. Raises on violation."""
        version = session.current_version
        while version != session.starting_version:
            tpl = self.store.get(session.template_id, version)
            if tpl.proposal_id is None:
                raise EngineError(f"version {version} has no proposal link")
            proposal = self.proposals.get(tpl.proposal_id)
            if proposal is None or proposal.status != "approved":
                raise EngineError(f"version {version} not backed by an approved proposal")
            if tpl.parent_version is None:
                raise EngineError(f"version {version} lineage broken before root")
            version = tpl.parent_version

    def save_session(self, session: IPOSession, path) -> None:
        Path(path).write_text(
            json.dumps(session.to_json(), indent=2, sort_keys=True), encoding="utf-8"
        )

    # -- persistence across CLI invocations ------------------------------------

    def save_state(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for session in self.sessions.values():
            self.save_session(session, directory / f"{session.session_id}.session.json")
        (directory / "proposals.json").write_text(
            json.dumps(
                {pid: p.to_json() for pid, p in self.proposals.items()},
                indent=2,
                sort_keys=True,
            ),
            encoding="utf-8",
        )

    def load_state(self, directory) -> None:
        directory = Path(directory)
        proposals_path = directory / "proposals.json"
        if proposals_path.exists():
            for pid, obj in json.loads(proposals_path.read_text(encoding="utf-8")).items():
                self.proposals[pid] = PromptProposal(**obj)
        for path in sorted(directory.glob("*.session.json")):
            session = _session_from_json(json.loads(path.read_text(encoding="utf-8")))
            self.sessions[session.session_id] = session


def _session_from_json(obj: dict) -> IPOSession:
    from .validation import GeneratedQA

    batch = []
    for item_obj in obj.get("batch", []):
        qa_obj = item_obj["qa"]
        if "parse_failure" in qa_obj:
            qa = ParseStub(None, qa_obj["parse_failure"], qa_obj.get("raw", ""))
            report = None
        else:
            qa = GeneratedQA(
                seed=None,
                question=qa_obj["question"],
                choices=tuple(qa_obj["choices"]),
                answer=qa_obj["answer"],
                rationale=qa_obj.get("rationale"),
            )
            report = ValidationReport(qa=qa, checks=dict(item_obj.get("checks", {})))
        batch.append(ReviewItem(item_obj["item_id"], qa, report, item_obj["status"]))
    return IPOSession(
        session_id=obj["session_id"],
        template_id=obj["template_id"],
        current_version=obj["current_version"],
        starting_version=obj["starting_version"],
        state=IPOState(obj["state"]),
        batch_size=obj["batch_size"],
        threshold=obj["threshold"],
        history=list(obj.get("history", [])),
        batch=batch,
        pending_proposal_id=obj.get("pending_proposal_id"),
    )
