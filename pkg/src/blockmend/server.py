"""Local HTTP API over run sessions; the frontend's only backend.

Endpoints mirror the interactive loop one to one: upload, trace, diagnose,
reject-with-hint, select-fix, status, frame images, and the repaired
download.  Illegal state transitions return 409; unknown sessions 404;
malformed bodies 422 (FastAPI validation).  When BLOCKMEND_TOKEN is set,
every request must carry it as a bearer token.
"""

import json
import os

from fastapi import Depends, FastAPI, File, Form, HTTPException, Request, UploadFile
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel

from .diagnose import BackendUnavailable, FormatViolation, NoEvidence
from .scenario import Scenario, ScenarioError
from .sb3 import Sb3Error
from .session import IllegalTransition, SessionStore


class HintBody(BaseModel):
    hint: str = ""


class SelectBody(BaseModel):
    label: str
    k: int = 5


def _auth(request: Request):
    token = os.environ.get("BLOCKMEND_TOKEN", "")
    if not token:
        return
    supplied = request.headers.get("Authorization", "")
    if supplied != "Bearer " + token:
        raise HTTPException(status_code=401, detail="missing or wrong bearer token")


def create_app(store=None):
    store = store or SessionStore()
    app = FastAPI(title="blockmend", dependencies=[Depends(_auth)])
    app.state.store = store

    def _session(session_id):
        session = store.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return session

    @app.exception_handler(IllegalTransition)
    async def _illegal(request, exc):
        return JSONResponse(status_code=409, content={"detail": str(exc)})

    @app.exception_handler(NoEvidence)
    async def _no_evidence(request, exc):
        return JSONResponse(status_code=409,
                            content={"detail": "NoEvidence: %s" % exc})

    @app.exception_handler(BackendUnavailable)
    async def _backend_down(request, exc):
        return JSONResponse(status_code=502, content={"detail": str(exc)})

    @app.exception_handler(FormatViolation)
    async def _format_violation(request, exc):
        return JSONResponse(status_code=502,
                            content={"detail": "FormatViolation: %s" % exc})

    @app.post("/sessions")
    async def create_session(project: UploadFile = File(...),
                             scenario: UploadFile = File(...),
                             meta: UploadFile = File(None),
                             backend: str = Form(None)):
        archive = await project.read()
        try:
            scenario_doc = json.loads((await scenario.read()).decode("utf-8"))
            scenario_obj = Scenario.from_dict(scenario_doc).require_assertions()
            meta_doc = None
            if meta is not None:
                meta_doc = json.loads((await meta.read()).decode("utf-8"))
            session = store.create(archive, scenario_obj, meta=meta_doc, backend=backend)
        except (ValueError, ScenarioError, Sb3Error) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return {"session_id": session.session_id, "state": session.state,
                "warnings": session.project.load_warnings}

    @app.post("/sessions/{session_id}/trace")
    async def trace(session_id: str, budget: int = 6):
        session = _session(session_id)
        trace_obj = session.do_trace(keyframe_budget=budget)
        return {
            "state": session.state,
            "frames": len(trace_obj.frames),
            "keyframes": ["/sessions/%s/frames/%d.png" % (session_id, t)
                          for t in session.keyframe_ticks],
        }

    @app.get("/sessions/{session_id}/frames/{tick}.png")
    async def frame(session_id: str, tick: int):
        session = _session(session_id)
        data = session.frame_png(tick)
        if data is None:
            raise HTTPException(status_code=404, detail="no such frame")
        return Response(content=data, media_type="image/png")

    @app.get("/sessions/{session_id}/trace.jsonl")
    async def trace_lines(session_id: str, start: int = 0, count: int = 200):
        session = _session(session_id)
        if session.trace is None:
            raise HTTPException(status_code=409, detail="session has no trace yet")
        frames = session.trace.frames[start:start + count]
        lines = [json.dumps({"kind": "frame", **f.to_dict()}, sort_keys=True)
                 for f in frames]
        return {"start": start, "count": len(lines), "total": len(session.trace.frames),
                "lines": lines}

    @app.post("/sessions/{session_id}/diagnose")
    async def diagnose_endpoint(session_id: str, body: HintBody = None):
        session = _session(session_id)
        diagnosis = session.do_diagnose(hint_text=body.hint if body else None)
        return {"state": session.state, "diagnosis": diagnosis.to_dict()}

    @app.post("/sessions/{session_id}/reject")
    async def reject(session_id: str, body: HintBody):
        session = _session(session_id)
        diagnosis = session.do_reject(body.hint)
        return {"state": session.state, "diagnosis": diagnosis.to_dict(),
                "history_length": len(session.history)}

    @app.post("/sessions/{session_id}/select")
    async def select(session_id: str, body: SelectBody):
        session = _session(session_id)
        if body.label not in ("A", "B", "C"):
            raise HTTPException(status_code=422, detail="label must be A, B, or C")
        pass_at = session.do_select(body.label, k=body.k)
        return {"state": session.state, "pass_at": pass_at,
                "history_length": len(session.history)}

    @app.get("/sessions/{session_id}/status")
    async def status(session_id: str):
        return _session(session_id).status()

    @app.get("/sessions/{session_id}/fixed.sb3")
    async def fixed(session_id: str):
        session = _session(session_id)
        data = session.fixed_bytes()
        return Response(content=data, media_type="application/octet-stream",
                        headers={"Content-Disposition":
                                 "attachment; filename=fixed.sb3"})

    return app


def serve(host="127.0.0.1", port=8765, workdir=None, backend="oracle",
          backend_config=None):
    import uvicorn

    store = SessionStore(workdir=workdir, backend=backend,
                         backend_config=backend_config)
    app = create_app(store)
    uvicorn.run(app, host=host, port=port, log_level="warning")
