"""HTTP annotation service wrapped around one labeling session.

The engine proposes, a human disposes: POST /api/next computes the next
instance to label and parks it as the pending proposal; POST /api/label
commits the answer.  Every committed event is appended to a JSONL log and
fsynced before the response goes out, so a crashed process can be restarted
and will rebuild the exact same session by replaying the log through the
deterministic propose/commit path (any divergence is reported instead of
silently accepted).
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import Response
from pydantic import BaseModel

from . import selection
from .baselines import STRATEGY_COLDSELECT
from .clustering import Clustering
from .errors import ClozeSelectError, DataError, IoFailure, NoEligibleCluster, ProviderFailure
from .geometry import SharedSpace
from .selection import Proposal, SelectionEvent, SessionConfig, canonical_label


class PendingExists(ClozeSelectError):
    """A proposal is already waiting for its label."""


class BudgetExhausted(ClozeSelectError):
    """No further proposal can be made: budget spent or nothing left to label."""


class NotPending(ClozeSelectError):
    """The labeled instance is not the pending proposal."""


class UnknownClass(ClozeSelectError):
    """The submitted class is outside the session's label space."""


class LabelRequest(BaseModel):
    instance_id: str
    label: str


class SessionService:
    def __init__(self, space: SharedSpace, clustering: Clustering, config: SessionConfig,
                 texts: dict[str, str] | None = None, event_log_path=None):
        self.space = space
        self.clustering = clustering
        self.config = config
        self.texts = dict(texts or {})
        self.state = selection.init_state(config)
        self.pending: Proposal | None = None
        self.state_version = 0
        self._log_path = Path(event_log_path) if event_log_path is not None else None
        self._log_fh = None

    # --- lifecycle ------------------------------------------------------------

    def start(self) -> int:
        """Replay an existing event log, then open it for appending."""
        replayed = 0
        if self._log_path is not None:
            if self._log_path.exists():
                replayed = self._replay(self._log_path)
            try:
                self._log_fh = open(self._log_path, "a", encoding="utf-8")
            except OSError as exc:
                raise IoFailure(f"cannot open event log {self._log_path}: {exc}") from exc
        return replayed

    def discard_log(self) -> None:
        if self._log_path is not None and self._log_path.exists():
            self._log_path.unlink()

    def close(self) -> None:
        if self._log_fh is not None:
            self._log_fh.close()
            self._log_fh = None

    def _replay(self, path: Path) -> int:
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise IoFailure(f"cannot read event log {path}: {exc}") from exc

        count = 0
        for lineno, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc

            proposal = selection.propose(self.state, self.clustering, self.space, self.config)
            if proposal.instance_id != doc.get("instance_id") \
                    or proposal.cluster_id != doc.get("cluster_id"):
                raise DataError(
                    f"{path}:{lineno}: event does not replay; the session would propose "
                    f"instance {proposal.instance_id!r} in cluster {proposal.cluster_id}")
            try:
                event = selection.commit(self.state, proposal, doc["label"],
                                         self.clustering, self.space, self.config)
            except (KeyError, ProviderFailure) as exc:
                raise DataError(f"{path}:{lineno}: bad label in event log: {exc}") from exc
            if event.token_id != doc.get("token_id") or event.timestamp != doc.get("timestamp"):
                raise DataError(f"{path}:{lineno}: event does not replay; committed "
                                f"token {event.token_id!r} at step {event.timestamp}")
            count += 1
            self.state_version += 1
        return count

    # --- operations -------------------------------------------------------------

    def next_proposal(self) -> dict:
        if self.pending is not None:
            raise PendingExists("a proposal is already awaiting its label")
        if self.state.remaining_budget < 1:
            raise BudgetExhausted("the labeling budget is spent")
        try:
            proposal = selection.propose(self.state, self.clustering, self.space, self.config)
        except NoEligibleCluster as exc:
            raise BudgetExhausted(str(exc)) from exc
        self.pending = proposal
        self.state_version += 1
        card = dict(self._pending_card())
        card["state_version"] = self.state_version
        return card

    def label_pending(self, instance_id: str, label: str) -> dict:
        if self.pending is None or self.pending.instance_id != instance_id:
            raise NotPending(f"instance {instance_id!r} is not awaiting a label")
        cls = canonical_label(label)
        if cls not in self.config.label_space:
            raise UnknownClass(f"class {label!r} is outside the label space")
        event = selection.commit(self.state, self.pending, cls,
                                 self.clustering, self.space, self.config)
        self._append_event(event)  # durable before we answer
        self.pending = None
        self.state_version += 1
        return self.snapshot()

    def _pending_card(self) -> dict | None:
        if self.pending is None:
            return None
        p = self.pending
        return {
            "instance_id": p.instance_id,
            "text": self.texts.get(p.instance_id, ""),
            "cluster_id": p.cluster_id,
            "cluster_scores": {
                "cohesion": p.scores[0],
                "separation": p.scores[1],
                "impurity": p.scores[2],
            },
        }

    def snapshot(self) -> dict:
        return {
            "state_version": self.state_version,
            "strategy": STRATEGY_COLDSELECT,
            "timestamp": self.state.timestamp,
            "remaining_budget": self.state.remaining_budget,
            "budget": self.config.budget,
            "label_space": list(self.config.label_space),
            "pending": self._pending_card(),
            "labeled_count": len(self.state.labels),
            "labeled": dict(sorted(self.state.labels.items())),
            "verbalizers": [
                {"token_id": e.token_id, "class": e.class_name, "acquired_at": e.acquired_at}
                for e in self.state.verbalizers.entries
            ],
            "cluster_summary": self.clusters_view(),
            "done": self.is_done(),
        }

    def is_done(self) -> bool:
        if self.pending is not None:
            return False
        if self.state.remaining_budget < 1:
            return True
        # Instances are never discarded, so eligibility ends only when all are labeled.
        return len(self.state.labels) >= len(self.space.instance_rows)

    def clusters_view(self) -> list[dict]:
        out = []
        for c in self.clustering.clusters:
            members = set(int(r) for r in c.member_indices)
            cached = self.state.cluster_metrics.get(c.id)
            out.append({
                "cluster_id": c.id,
                "size": int(c.member_indices.size),
                "token_count": c.token_count,
                "instance_count": c.instance_count,
                "labeled_count": sum(1 for r in self.state.labeled_rows if r in members),
                "last_score": None if cached is None else cached["score"],
            })
        return out

    def export_bytes(self) -> bytes:
        doc = selection.export_session(self.state, self.config, STRATEGY_COLDSELECT,
                                       self.clustering, self.space)
        return selection.canonical_json(doc)

    # --- persistence --------------------------------------------------------------

    def _append_event(self, event: SelectionEvent) -> None:
        if self._log_fh is None:
            return
        doc = {
            "timestamp": event.timestamp,
            "cluster_id": event.cluster_id,
            "instance_id": event.instance_id,
            "label": event.label,
            "token_id": event.token_id,
            "scores": list(event.scores) if event.scores is not None else None,
        }
        try:
            self._log_fh.write(json.dumps(doc, ensure_ascii=True, sort_keys=True) + "\n")
            self._log_fh.flush()
            os.fsync(self._log_fh.fileno())
        except OSError as exc:
            raise IoFailure(f"cannot append to event log {self._log_path}: {exc}") from exc


def create_app(service: SessionService | None = None) -> FastAPI:
    app = FastAPI(title="clozeselect annotation service")
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    app.state.service = service

    def current() -> SessionService:
        svc = app.state.service
        if svc is None:
            raise HTTPException(status_code=503, detail="session not ready")
        return svc

    @app.get("/api/state")
    def get_state():
        return current().snapshot()

    @app.post("/api/next")
    def post_next():
        try:
            return current().next_proposal()
        except PendingExists as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except BudgetExhausted as exc:
            raise HTTPException(status_code=410, detail=str(exc)) from exc

    @app.post("/api/label")
    def post_label(request: LabelRequest):
        try:
            return current().label_pending(request.instance_id, request.label)
        except NotPending as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except UnknownClass as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

    @app.get("/api/clusters")
    def get_clusters():
        return {"clusters": current().clusters_view()}

    @app.get("/api/export")
    def get_export():
        return Response(content=current().export_bytes(), media_type="application/json")

    return app
