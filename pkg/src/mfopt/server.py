"""HTTP surface over SessionManager.

Routes (all payloads JSON unless noted):
  POST /sessions                      body = campaign config document
  GET  /sessions/{id}                 current snapshot
  POST /sessions/{id}/advance?steps=n snapshots of the completed steps
  POST /sessions/{id}/policy          body = {"changes": [PolicyChange...]}
  GET  /sessions/{id}/events          SSE: IterationCompleted | PolicyPrompt
                                      | Stopped | Converged
  GET  /sessions/{id}/export          campaign JSON document
  GET  /sessions/{id}/observations.csv

Handlers are sync (FastAPI runs them on a thread pool); the manager's
locks provide the per-session serialization. The event stream replays the
logged wire events, then follows live ones, and closes itself after a
terminal event.
"""

from __future__ import annotations

import json
import os

from fastapi import Body, FastAPI, HTTPException, Query
from fastapi.responses import PlainTextResponse, StreamingResponse

from .campaign import CampaignConfig, PolicyChange, PolicyRejected, SchemaVersionError
from .session_service import (
    AdvanceInProgress,
    InvalidSessionState,
    SessionManager,
    SessionNotFound,
)

TERMINAL_EVENT_TYPES = ("Stopped", "Converged")
_STREAM_POLL_S = 15.0


def _sse(ev) -> str:
    return f"id: {ev.seq}\nevent: {ev.type}\ndata: {json.dumps(ev.payload)}\n\n"


def create_app(
    manager: SessionManager | None = None,
    data_dir: str | None = None,
    static_dir: str | None = None,
) -> FastAPI:
    manager = manager or SessionManager(data_dir=data_dir)
    app = FastAPI(title="mfopt session service")
    app.state.manager = manager

    def _manager_call(fn, *args):
        try:
            return fn(*args)
        except SessionNotFound as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except AdvanceInProgress as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except InvalidSessionState as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except (PolicyRejected, SchemaVersionError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

    @app.post("/sessions", status_code=201)
    def create_session(config: dict = Body(...)):
        try:
            cfg = CampaignConfig.from_dict(config)
        except (KeyError, TypeError, ValueError) as exc:
            raise HTTPException(
                status_code=422, detail=f"invalid config: {exc}"
            ) from exc
        try:
            sid = manager.create_session(cfg)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return {"session_id": sid, "snapshot": manager.snapshot(sid)}

    @app.get("/sessions/{sid}")
    def get_snapshot(sid: str):
        return _manager_call(manager.snapshot, sid)

    @app.post("/sessions/{sid}/advance")
    def advance(sid: str, steps: int = Query(default=1, ge=1)):
        return {"snapshots": _manager_call(manager.advance, sid, steps)}

    @app.post("/sessions/{sid}/policy")
    def submit_policy(sid: str, body: dict = Body(...)):
        raw = body.get("changes")
        if not isinstance(raw, list):
            raise HTTPException(
                status_code=422, detail="body must contain a 'changes' list"
            )
        try:
            changes = [PolicyChange.from_dict(d) for d in raw]
        except (KeyError, TypeError, ValueError) as exc:
            raise HTTPException(
                status_code=422, detail=f"invalid policy change: {exc}"
            ) from exc
        return {"snapshot": _manager_call(manager.submit_policy, sid, changes)}

    @app.get("/sessions/{sid}/events")
    def events(sid: str):
        backlog, live, sess = _manager_call(manager.open_event_stream, sid)

        def gen():
            import queue as _queue

            last_seq = -1
            terminal = False
            try:
                for ev in backlog:
                    yield _sse(ev)
                    last_seq = ev.seq
                    if ev.type in TERMINAL_EVENT_TYPES:
                        terminal = True
                while not terminal:
                    try:
                        ev = live.get(timeout=_STREAM_POLL_S)
                    except _queue.Empty:
                        yield ": keep-alive\n\n"
                        continue
                    if ev.seq <= last_seq:
                        continue
                    yield _sse(ev)
                    last_seq = ev.seq
                    if ev.type in TERMINAL_EVENT_TYPES:
                        terminal = True
            finally:
                manager.close_event_stream(sess, live)

        return StreamingResponse(gen(), media_type="text/event-stream")

    @app.get("/sessions/{sid}/export")
    def export(sid: str):
        return _manager_call(manager.export, sid)

    @app.get("/sessions/{sid}/observations.csv")
    def observations(sid: str):
        return PlainTextResponse(
            _manager_call(manager.observations_csv, sid), media_type="text/csv"
        )

    if static_dir is not None and os.path.isdir(static_dir):
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
