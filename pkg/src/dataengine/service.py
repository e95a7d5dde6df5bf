"""HTTP service backing the review console.

All routes live under /api and require a bearer token (ENGINE_API_TOKEN).
Reads are concurrent; mutations are serialized through one lock, which is
plenty at console scale and gives per-session serialization for free.
"""

from __future__ import annotations

import json
import random
import threading
from pathlib import Path

from fastapi import Depends, FastAPI, HTTPException, Query, Request
from fastapi.responses import FileResponse, JSONResponse
from pydantic import BaseModel

from . import prompts as prompts_mod
from .catalog import render_annotation_text
from .engine import EngineConfig, EngineState
from .errors import EngineError, StateError
from .gateway import Gateway
from .ipo import FailureLedger, IPOEngine, IPOState, ledger_stats
from .prompts import render
from .sampling import build_query_seeds
from .records import AbilityScoreboard, compute_scoreboard, ingest_results
from .validation import FailureType

import os


class ServiceContext:
    def __init__(self, config: EngineConfig):
        self.config = config
        self.state = EngineState(config)
        self.ipo = IPOEngine(
            self.state.prompt_store,
            FailureLedger(self.state.run_dir / "ledger.jsonl"),
        )
        self.mutate_lock = threading.Lock()

    # -- helpers -------------------------------------------------------------

    def round_dirs(self) -> list[int]:
        rounds = []
        for path in sorted(self.state.run_dir.glob("round_*")):
            if (path / "manifest.json").exists():
                rounds.append(int(path.name.split("_")[1]))
        return sorted(rounds)

    def manifest(self, round: int) -> dict:
        path = self.state.run_dir / f"round_{round}" / "manifest.json"
        if not path.exists():
            raise HTTPException(404, f"no manifest for round {round}")
        return json.loads(path.read_text(encoding="utf-8"))

    def scoreboard(self, round: int) -> dict:
        path = self.state.run_dir / f"round_{round}" / "scoreboard.json"
        if not path.exists():
            raise HTTPException(404, f"no scoreboard for round {round}")
        return json.loads(path.read_text(encoding="utf-8"))

    def latest_scoreboard(self) -> AbilityScoreboard:
        rounds = self.round_dirs()
        if rounds:
            return AbilityScoreboard.from_json(self.scoreboard(rounds[-1]))
        if self.config.eval_file:
            with open(self.config.eval_file, encoding="utf-8") as fh:
                return compute_scoreboard(
                    ingest_results(fh, format=self.config.eval_format)
                )
        raise HTTPException(409, "no scoreboard available; run a round first")

    def generate_ipo_batch(self, session) -> list:
        state = self.state
        board = self.latest_scoreboard()
        rng = random.Random(
            f"ipo:{self.config.sampling_seed}:{session.session_id}:{session.current_version}"
        )

        def build_seeds(n):
            return build_query_seeds(
                board,
                state.pool,
                state.catalog,
                state.index,
                n=n,
                type_map=state.type_map,
                rng=rng,
                eps=self.config.eps,
                weight_mode=self.config.weight_mode,
            )

        def render_prompt(seed, version):
            tpl = state.prompt_store.get(session.template_id, version)
            ann = state.catalog.get(seed.image_id)
            return render(
                tpl,
                seed,
                render_annotation_text(ann),
                state.type_defs,
                k_questions=self.config.k_questions,
                allow_draft=True,
            ).final_text

        return self.ipo.generate_review_batch(
            session,
            build_seeds,
            render_prompt,
            state.gateway,
            lookup_annotation=state.catalog.get,
            format=self.config.dataset_format,
            iou_threshold=self.config.iou_threshold,
            model=self.config.model,
        )


class SessionCreate(BaseModel):
    template_id: str = prompts_mod.GENERATION_TEMPLATE_ID
    version: int | None = None
    batch_size: int = 20
    threshold: float = 0.10
    session_id: str | None = None
    run_conflict_check: bool = True


class FailureTag(BaseModel):
    qa_ref: str
    failure_type: str
    explanation: str
    tagger: str


class ClearTag(BaseModel):
    qa_ref: str
    tagger: str


class Decision(BaseModel):
    approve: bool
    decider: str


def create_app(config: EngineConfig) -> FastAPI:
    ctx = ServiceContext(config)
    app = FastAPI(title="data engine console API")
    app.state.ctx = ctx

    def require_token(request: Request):
        expected = os.environ.get("ENGINE_API_TOKEN")
        if not expected:
            raise HTTPException(500, "ENGINE_API_TOKEN is not configured")
        header = request.headers.get("authorization", "")
        if header != f"Bearer {expected}":
            raise HTTPException(401, "missing or invalid bearer token")

    auth = Depends(require_token)

    @app.exception_handler(EngineError)
    async def engine_error_handler(request, exc):
        status = 409 if isinstance(exc, StateError) else 400
        return JSONResponse(status_code=status, content={"detail": str(exc)})

    # -- rounds and scoreboards ----------------------------------------------

    @app.get("/api/rounds", dependencies=[auth])
    def rounds():
        return ctx.round_dirs()

    @app.get("/api/rounds/{n}/manifest", dependencies=[auth])
    def round_manifest(n: int):
        return ctx.manifest(n)

    @app.get("/api/scoreboard/{n}", dependencies=[auth])
    def scoreboard(n: int):
        return ctx.scoreboard(n)

    # -- prompts -------------------------------------------------------------

    @app.get("/api/prompts", dependencies=[auth])
    def prompts():
        return ctx.state.prompt_store.template_ids()

    @app.get("/api/prompts/{template_id}/versions", dependencies=[auth])
    def prompt_versions(template_id: str):
        return [tpl.to_json() for tpl in ctx.state.prompt_store.versions(template_id)]

    @app.get("/api/prompts/{template_id}/diff", dependencies=[auth])
    def prompt_diff(template_id: str, from_: int = Query(alias="from"), to: int = Query()):
        return {"diff": ctx.state.prompt_store.diff(template_id, from_, to)}

    # -- IPO sessions --------------------------------------------------------

    @app.get("/api/ipo/sessions", dependencies=[auth])
    def sessions():
        return [s.to_json() for s in ctx.ipo.sessions.values()]

    @app.post("/api/ipo/sessions", dependencies=[auth])
    def create_session(body: SessionCreate):
        with ctx.mutate_lock:
            version = body.version
            if version is None:
                version = ctx.state.prompt_store.active(body.template_id).version
            session = ctx.ipo.start_session(
                body.template_id,
                version,
                batch_size=body.batch_size,
                threshold=body.threshold,
                session_id=body.session_id,
            )
            proposal = None
            if body.run_conflict_check:
                proposal = ctx.ipo.run_conflict_check(
                    session, ctx.state.gateway, model=config.model
                )
            return {
                "session": session.to_json(),
                "proposal": proposal.to_json() if proposal else None,
            }

    @app.get("/api/ipo/sessions/{session_id}/batch", dependencies=[auth])
    def session_batch(session_id: str):
        session = ctx.ipo.sessions.get(session_id)
        if session is None:
            raise HTTPException(404, f"unknown session {session_id}")
        with ctx.mutate_lock:
            if session.state is IPOState.BATCH_REVIEW and not session.batch:
                ctx.generate_ipo_batch(session)
        return [item.to_json() for item in session.batch]

    @app.post("/api/ipo/sessions/{session_id}/failures", dependencies=[auth])
    def tag_failure(session_id: str, body: FailureTag):
        session = ctx.ipo.sessions.get(session_id)
        if session is None:
            raise HTTPException(404, f"unknown session {session_id}")
        try:
            ftype = FailureType(body.failure_type)
        except ValueError:
            raise HTTPException(422, f"unknown failure type {body.failure_type!r}")
        with ctx.mutate_lock:
            case = ctx.ipo.record_failure(
                session, body.qa_ref, ftype, body.explanation, body.tagger
            )
        return case.to_json()

    @app.post("/api/ipo/sessions/{session_id}/clear", dependencies=[auth])
    def clear_item(session_id: str, body: ClearTag):
        session = ctx.ipo.sessions.get(session_id)
        if session is None:
            raise HTTPException(404, f"unknown session {session_id}")
        with ctx.mutate_lock:
            ctx.ipo.clear_case(session, body.qa_ref, body.tagger)
        return {"ok": True}

    @app.post("/api/ipo/sessions/{session_id}/step", dependencies=[auth])
    def step_session(session_id: str):
        session = ctx.ipo.sessions.get(session_id)
        if session is None:
            raise HTTPException(404, f"unknown session {session_id}")
        with ctx.mutate_lock:
            new_state = ctx.ipo.step(session)
            proposal = None
            if new_state is IPOState.CORRECTION:
                proposal = ctx.ipo.propose_correction(
                    session, ctx.state.gateway, model=config.model
                )
        return {
            "state": new_state.value,
            "failure_rate": session.history[-1]["failure_rate"],
            "proposal": proposal.to_json() if proposal else None,
        }

    # -- proposals -----------------------------------------------------------

    @app.get("/api/proposals", dependencies=[auth])
    def proposals():
        return [p.to_json() for p in ctx.ipo.proposals.values()]

    @app.post("/api/proposals/{proposal_id}/decision", dependencies=[auth])
    def decide(proposal_id: str, body: Decision):
        with ctx.mutate_lock:
            proposal = ctx.ipo.decide_proposal(proposal_id, body.approve, body.decider)
        return proposal.to_json()

    # -- images and annotations ----------------------------------------------

    @app.get("/api/images/{image_id}", dependencies=[auth])
    def image_bytes(image_id: str):
        if not config.images_dir:
            raise HTTPException(404, "no images directory configured")
        for ext in ("jpg", "jpeg", "png"):
            path = Path(config.images_dir) / f"{image_id}.{ext}"
            if path.exists():
                return FileResponse(path)
        raise HTTPException(404, f"no image file for {image_id}")

    @app.get("/api/images/{image_id}/annotation", dependencies=[auth])
    def image_annotation(image_id: str):
        if ctx.state.catalog is None:
            raise HTTPException(404, "no catalog configured")
        ann = ctx.state.catalog.get(image_id)
        if ann is None:
            raise HTTPException(404, f"no annotation for {image_id}")
        return {
            "image_id": ann.image_id,
            "width": ann.width,
            "height": ann.height,
            "captions": list(ann.captions),
            "objects": [{"category": o.category, "bbox": list(o.bbox)} for o in ann.objects],
            "rendered": render_annotation_text(ann),
        }

    # -- ledger --------------------------------------------------------------

    @app.get("/api/ledger/stats", dependencies=[auth])
    def ledger_statistics():
        stats = ledger_stats(ctx.ipo.ledger)
        return {ftype.value: count for ftype, count in stats.items()}

    return app


def serve(config: EngineConfig, address: str = "127.0.0.1:8080") -> None:
    import uvicorn

    host, _, port = address.partition(":")
    uvicorn.run(create_app(config), host=host or "127.0.0.1", port=int(port or 8080))
