"""Session host for interactive campaigns.

Each session wraps one CampaignState plus an append-only event log. Four
event types cross the wire (IterationCompleted, PolicyPrompt, Stopped,
Converged); the log also records session creation and policy applications
so every snapshot a client ever saw can be rebuilt from the log alone.

Concurrency: one advance at a time per session (a second concurrent call
is rejected, not queued); the per-session state lock is taken at every
step boundary, so policy submissions arriving mid-advance block until the
current step finishes and then apply at the boundary. Sessions are
otherwise independent.

Persistence (when a data dir is set): sessions/<id>/state.json holds the
campaign document plus any pending prompt, rewritten after each mutation;
events.jsonl is appended per event. Restoring a session and advancing it
produces the exact trajectory the original would have produced, because
all campaign randomness is derived from (seed, purpose, counter).
"""

from __future__ import annotations

import json
import os
import queue
import threading
import uuid
from dataclasses import dataclass, field

import numpy as np

from . import SCHEMA_VERSION
from .campaign import (
    MODE_INTERACTIVE,
    STATUS_AWAITING_POLICY,
    STATUS_CONVERGED,
    STATUS_RUNNING,
    STATUS_STOPPED,
    CampaignConfig,
    CampaignState,
    PolicyChange,
    SchemaVersionError,
    apply_policy_change,
    build_grid,
    observations_csv,
    should_prompt,
    state_from_dict,
    state_to_dict,
    step,
)

__all__ = [
    "WIRE_EVENT_TYPES",
    "PROMPT_OPTIONS",
    "SessionNotFound",
    "AdvanceInProgress",
    "InvalidSessionState",
    "SessionEvent",
    "SessionManager",
]

WIRE_EVENT_TYPES = ("IterationCompleted", "PolicyPrompt", "Stopped", "Converged")

# The four policy areas offered by a stall prompt.
PROMPT_OPTIONS = (
    "parameter space",
    "surrogate model",
    "acquisition function",
    "convergence criteria",
)


class SessionNotFound(KeyError):
    pass


class AdvanceInProgress(RuntimeError):
    pass


class InvalidSessionState(RuntimeError):
    pass


@dataclass(frozen=True)
class SessionEvent:
    seq: int
    type: str
    payload: dict

    def to_dict(self) -> dict:
        return {"seq": self.seq, "type": self.type, "payload": self.payload}

    @classmethod
    def from_dict(cls, d: dict) -> "SessionEvent":
        return cls(seq=d["seq"], type=d["type"], payload=d["payload"])


@dataclass
class _Session:
    id: str
    state: CampaignState
    dir: str | None = None
    pending_prompt: dict | None = None
    events: list[SessionEvent] = field(default_factory=list)
    subscribers: list[queue.SimpleQueue] = field(default_factory=list)
    state_lock: threading.RLock = field(default_factory=threading.RLock)
    advance_lock: threading.Lock = field(default_factory=threading.Lock)

    def emit(self, event_type: str, payload: dict) -> SessionEvent:
        """Append an event; wire events fan out to live subscribers.
        Caller holds state_lock."""
        ev = SessionEvent(seq=len(self.events), type=event_type, payload=payload)
        self.events.append(ev)
        if self.dir is not None:
            with open(os.path.join(self.dir, "events.jsonl"), "a") as fh:
                fh.write(json.dumps(ev.to_dict(), sort_keys=True) + "\n")
        if event_type in WIRE_EVENT_TYPES:
            for q in list(self.subscribers):
                q.put(ev)
        return ev

    def persist(self) -> None:
        if self.dir is None:
            return
        doc = {
            "schema_version": SCHEMA_VERSION,
            "session_id": self.id,
            "campaign": state_to_dict(self.state),
            "pending_prompt": self.pending_prompt,
        }
        tmp = os.path.join(self.dir, "state.json.tmp")
        with open(tmp, "w") as fh:
            json.dump(doc, fh, sort_keys=True, indent=2)
            fh.write("\n")
        os.replace(tmp, os.path.join(self.dir, "state.json"))


def build_snapshot(session: _Session) -> dict:
    """Client view of the session; pure function of session state."""
    st = session.state
    cfg = st.config
    grid = build_grid(cfg)[:, 0]
    x = st.dataset.x_matrix
    f = st.dataset.f_vector
    y = st.dataset.outputs
    observations = [
        [*(float(v) for v in x[i]), int(f[i]), float(y[i])] for i in range(len(y))
    ]
    posterior = None
    acquisition = None
    pred = st.last_prediction
    if pred is not None:
        pgrid = np.asarray(pred.grid).reshape(-1)
        # A parameter-space change since the last step invalidates the
        # cached grids; the snapshot then simply omits them.
        if pgrid.shape == grid.shape and np.array_equal(pgrid, grid):
            posterior = {
                "mu_high": [float(v) for v in pred.mu_hf],
                "var_high": [float(v) for v in pred.var_hf],
                "mu_low": [float(v) for v in pred.mu_lf],
                "var_low": [float(v) for v in pred.var_lf],
            }
            acq = st.last_acquisition
            if acq is not None:
                acquisition = {
                    "u_high": [float(v) for v in acq.u_high],
                    "u_low": [float(v) for v in acq.u_low],
                }
    lo, hi = cfg.domain[0]
    return {
        "schema_version": SCHEMA_VERSION,
        "session_id": session.id,
        "iteration": st.iteration,
        "status": st.status,
        "grid_spec": {"lo": lo, "hi": hi, "resolution": cfg.grid_resolution},
        "grid": [float(v) for v in grid],
        "observations": observations,
        "best": {"x": list(st.best_x), "fidelity": st.best_f, "y": st.best_y},
        "posterior": posterior,
        "acquisition": acquisition,
        "pending_prompt": session.pending_prompt,
        "policy_log": [r.to_dict() for r in st.policy_log],
        "config": cfg.to_dict(),
        "diagnostic": st.diagnostic,
    }


def _copy_state(st: CampaignState) -> CampaignState:
    """Shallow copy with fresh log lists, for atomic policy batches."""
    return CampaignState(
        config=st.config,
        initial_config=st.initial_config,
        dataset=st.dataset,
        iteration=st.iteration,
        best_x=st.best_x,
        best_f=st.best_f,
        best_y=st.best_y,
        history=list(st.history),
        policy_log=list(st.policy_log),
        status=st.status,
        eval_count=st.eval_count,
        force_final_high_fidelity=st.force_final_high_fidelity,
        last_prompt_iteration=st.last_prompt_iteration,
        diagnostic=st.diagnostic,
        last_prediction=st.last_prediction,
        last_acquisition=st.last_acquisition,
    )


class SessionManager:
    """Owns all sessions; all service operations go through here."""

    def __init__(self, data_dir: str | None = None) -> None:
        self.data_dir = data_dir
        if data_dir is not None:
            os.makedirs(data_dir, exist_ok=True)
        self._sessions: dict[str, _Session] = {}
        self._lock = threading.Lock()

    # -- lifecycle -----------------------------------------------------

    def create_session(self, cfg: CampaignConfig) -> str:
        from .campaign import initialize

        if cfg.mode != MODE_INTERACTIVE:
            raise ValueError(
                f"mode: sessions require mode {MODE_INTERACTIVE!r}, got {cfg.mode!r}"
            )
        state = initialize(cfg)
        sid = uuid.uuid4().hex[:12]
        sess_dir = None
        if self.data_dir is not None:
            sess_dir = os.path.join(self.data_dir, sid)
            os.makedirs(sess_dir, exist_ok=True)
        sess = _Session(id=sid, state=state, dir=sess_dir)
        with self._lock:
            self._sessions[sid] = sess
        with sess.state_lock:
            sess.emit("SessionCreated", {"config": cfg.to_dict()})
            sess.persist()
        return sid

    def _get(self, sid: str) -> _Session:
        with self._lock:
            if sid in self._sessions:
                return self._sessions[sid]
        restored = self._restore(sid)
        if restored is None:
            raise SessionNotFound(f"unknown session {sid!r}")
        with self._lock:
            return self._sessions.setdefault(sid, restored)

    def _restore(self, sid: str) -> _Session | None:
        if self.data_dir is None:
            return None
        sess_dir = os.path.join(self.data_dir, sid)
        state_path = os.path.join(sess_dir, "state.json")
        if not os.path.exists(state_path):
            return None
        with open(state_path) as fh:
            doc = json.load(fh)
        version = doc.get("schema_version")
        if not isinstance(version, int) or version > SCHEMA_VERSION:
            raise SchemaVersionError(
                f"session document schema_version {version!r} is newer than the "
                f"supported version {SCHEMA_VERSION}"
            )
        sess = _Session(
            id=sid,
            state=state_from_dict(doc["campaign"]),
            dir=sess_dir,
            pending_prompt=doc.get("pending_prompt"),
        )
        events_path = os.path.join(sess_dir, "events.jsonl")
        if os.path.exists(events_path):
            with open(events_path) as fh:
                sess.events = [
                    SessionEvent.from_dict(json.loads(line))
                    for line in fh
                    if line.strip()
                ]
        return sess

    # -- reads ---------------------------------------------------------

    def snapshot(self, sid: str) -> dict:
        sess = self._get(sid)
        with sess.state_lock:
            return build_snapshot(sess)

    def export(self, sid: str) -> dict:
        sess = self._get(sid)
        with sess.state_lock:
            return state_to_dict(sess.state)

    def observations_csv(self, sid: str) -> str:
        sess = self._get(sid)
        with sess.state_lock:
            return observations_csv(sess.state)

    # -- advance -------------------------------------------------------

    def advance(self, sid: str, steps: int) -> list[dict]:
        """Run up to `steps` iterations; a snapshot per completed step.
        Halts early on a stall prompt, a fit failure, or termination."""
        if steps < 1:
            raise ValueError(f"steps must be >= 1, got {steps}")
        sess = self._get(sid)
        if not sess.advance_lock.acquire(blocking=False):
            raise AdvanceInProgress(
                f"an advance is already in flight for session {sid}"
            )
        try:
            with sess.state_lock:
                status = sess.state.status
                if status == STATUS_AWAITING_POLICY:
                    raise InvalidSessionState(
                        "session awaits a policy response; submit one first"
                    )
                if status in (STATUS_CONVERGED, STATUS_STOPPED):
                    raise InvalidSessionState(f"session is {status}")
            snapshots = []
            for _ in range(steps):
                with sess.state_lock:
                    if not self._advance_one(sess, snapshots):
                        break
            return snapshots
        finally:
            sess.advance_lock.release()

    def _advance_one(self, sess: _Session, snapshots: list[dict]) -> bool:
        """One step at the boundary; returns False when the loop must stop.
        Caller holds state_lock."""
        st = sess.state
        if st.status != STATUS_RUNNING:
            return False
        if st.iteration >= st.config.max_iterations:
            st.status = STATUS_CONVERGED
            sess.emit("Converged", {"iteration": st.iteration})
            sess.persist()
            return False
        step(st)
        if st.status == STATUS_AWAITING_POLICY:
            # Fit failure: no iteration completed.
            sess.pending_prompt = {
                "message": st.diagnostic,
                "options": list(PROMPT_OPTIONS),
            }
            sess.emit(
                "PolicyPrompt",
                {"iteration": st.iteration, "prompt": sess.pending_prompt},
            )
            sess.persist()
            return False
        snap = build_snapshot(sess)
        snapshots.append(snap)
        sess.emit("IterationCompleted", {"iteration": st.iteration, "snapshot": snap})
        if st.status == STATUS_CONVERGED:
            sess.emit("Converged", {"iteration": st.iteration})
            sess.persist()
            return False
        if st.status == STATUS_STOPPED:
            sess.emit("Stopped", {"iteration": st.iteration, "reason": "policy"})
            sess.persist()
            return False
        if should_prompt(st):
            st.last_prompt_iteration = st.iteration
            st.status = STATUS_AWAITING_POLICY
            sess.pending_prompt = {
                "message": (
                    f"no improvement of the current best in the last "
                    f"{st.config.stall_window} iterations"
                ),
                "options": list(PROMPT_OPTIONS),
            }
            sess.emit(
                "PolicyPrompt",
                {"iteration": st.iteration, "prompt": sess.pending_prompt},
            )
            sess.persist()
            return False
        sess.persist()
        return True

    # -- policy --------------------------------------------------------

    def submit_policy(self, sid: str, changes: list[PolicyChange]) -> dict:
        """Apply a batch atomically: all changes validate or none apply."""
        sess = self._get(sid)
        with sess.state_lock:
            st = sess.state
            if st.status in (STATUS_CONVERGED, STATUS_STOPPED):
                raise InvalidSessionState(f"session is {st.status}")
            trial = _copy_state(st)
            for change in changes:
                apply_policy_change(trial, change)
            sess.state = trial
            sess.pending_prompt = None
            sess.emit(
                "PolicyApplied",
                {
                    "iteration": trial.iteration,
                    "changes": [c.to_dict() for c in changes],
                },
            )
            if trial.status == STATUS_STOPPED:
                sess.emit(
                    "Stopped", {"iteration": trial.iteration, "reason": "policy"}
                )
            sess.persist()
            return build_snapshot(sess)

    # -- events --------------------------------------------------------

    def open_event_stream(
        self, sid: str
    ) -> tuple[list[SessionEvent], queue.SimpleQueue, _Session]:
        """Atomically snapshot the wire-event backlog and subscribe for
        live events; no event is lost or duplicated across the seam."""
        sess = self._get(sid)
        with sess.state_lock:
            backlog = [ev for ev in sess.events if ev.type in WIRE_EVENT_TYPES]
            q: queue.SimpleQueue = queue.SimpleQueue()
            sess.subscribers.append(q)
        return backlog, q, sess

    def close_event_stream(self, sess: _Session, q: queue.SimpleQueue) -> None:
        with sess.state_lock:
            if q in sess.subscribers:
                sess.subscribers.remove(q)
