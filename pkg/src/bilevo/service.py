"""Embedded HTTP API over run directories: lifecycle, live state, approval
gates, and incremental events.

The service is a view over the persisted run directories plus a thin
mutation layer: run creation, gate resolution, and aborts are forwarded to
per-run worker threads that drive the orchestrator. Anything readable over
HTTP is reconstructable from the run directory alone.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from pathlib import Path
from typing import Optional

from fastapi import Depends, FastAPI, HTTPException, Query, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .core import EngineError, ValidationError
from .orchestrator import (
    EventLog,
    GateResolution,
    Orchestrator,
    OrchestratorError,
    QueueChannel,
    RunConfig,
    list_gates,
    resolve_gate,
    validate_analysis_payload,
    validate_plan_payload,
)
from .scorers import default_registry

logger = logging.getLogger(__name__)

POPULATION_PAGE_CAP = 500


class RunHandle:
    def __init__(self, run_id: str, run_dir: Path):
        self.run_id = run_id
        self.run_dir = run_dir
        self.channel = QueueChannel()
        self.thread: Optional[threading.Thread] = None
        self.orchestrator: Optional[Orchestrator] = None

    @property
    def alive(self) -> bool:
        return self.thread is not None and self.thread.is_alive()


class RunManager:
    """Owns worker threads; all mutations funnel through per-run queues."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.handles: dict[str, RunHandle] = {}
        self.lock = threading.Lock()

    # -- lookups -----------------------------------------------------------

    def run_dir(self, run_id: str) -> Path:
        return self.root / run_id

    def state(self, run_id: str) -> dict:
        path = self.run_dir(run_id) / "state.json"
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"unknown run {run_id!r}")
        return json.loads(path.read_text())

    def summary(self, run_id: str) -> dict:
        state = self.state(run_id)
        config = json.loads((self.run_dir(run_id) / "config.json").read_text())
        return {
            "run_id": state["run_id"],
            "mode": config.get("mode", "autopilot"),
            "status": state["status"],
            "iteration": state["iteration"],
            "best_aggregate": state.get("best_aggregate"),
            "started_at": state.get("started_at"),
            "updated_at": state.get("updated_at"),
        }

    def list_runs(self) -> list[dict]:
        out = []
        for state_path in sorted(self.root.glob("*/state.json")):
            out.append(self.summary(state_path.parent.name))
        return out

    # -- mutations ---------------------------------------------------------

    def create_run(self, config: dict) -> dict:
        try:
            cfg = RunConfig.from_dict(config)
        except (KeyError, ValueError, ValidationError, EngineError) as exc:
            raise HTTPException(status_code=400, detail=f"malformed config: {exc}") from exc
        run_id = cfg.resolved_run_id()
        with self.lock:
            if run_id in self.handles or self.run_dir(run_id).exists():
                raise HTTPException(status_code=400, detail=f"run {run_id!r} already exists")
            handle = RunHandle(run_id, self.run_dir(run_id))
            self.handles[run_id] = handle

        def worker():
            try:
                orch = Orchestrator.create(handle.run_dir, cfg, channel=handle.channel)
                handle.orchestrator = orch
                orch.advance()
            except Exception:  # noqa: BLE001 - worker must not kill the server
                logger.exception("run %s worker crashed", run_id)

        handle.thread = threading.Thread(target=worker, name=f"run-{run_id}", daemon=True)
        handle.thread.start()
        # wait for state.json so an immediate GET sees the run
        deadline = time.monotonic() + 5.0
        while time.monotonic() < deadline and not (handle.run_dir / "state.json").exists():
            time.sleep(0.01)
        return self.summary(run_id)

    def resolve(self, run_id: str, gate_id: str, body: dict) -> dict:
        run_dir = self.run_dir(run_id)
        if not (run_dir / "state.json").exists():
            raise HTTPException(status_code=404, detail=f"unknown run {run_id!r}")
        gates = {g["gate_id"]: g for g in list_gates(run_dir)}
        if gate_id not in gates:
            raise HTTPException(status_code=404, detail=f"unknown gate {gate_id!r}")
        gate = gates[gate_id]
        if gate.get("resolution") is not None or (run_dir / "gates" / f"{gate_id}.resolution.json").exists():
            raise HTTPException(status_code=409, detail=f"gate {gate_id!r} already resolved")

        resolution = GateResolution(
            action=body.get("action", "accept"),
            payload=body.get("payload"),
            resolver=body.get("resolver", "api"),
        )
        self._validate_resolution(run_dir, gate, resolution)

        with self.lock:
            handle = self.handles.get(run_id)
        if handle is not None and handle.alive:
            # only hand the resolution to a worker that is blocked on this gate
            deadline = time.monotonic() + 2.0
            while time.monotonic() < deadline:
                waiting = handle.channel.waiting_gate
                if waiting is not None and waiting["gate_id"] == gate_id:
                    handle.channel.submit(resolution)
                    return {"gate_id": gate_id, "status": "submitted"}
                if not handle.alive:
                    break
                time.sleep(0.02)
            raise HTTPException(
                status_code=409, detail=f"gate {gate_id!r} is not awaiting resolution"
            )
        # parked run: record the resolution and resume in a worker
        try:
            resolve_gate(run_dir, gate_id, resolution)
        except OrchestratorError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        self._spawn_resume(run_id)
        return {"gate_id": gate_id, "status": "recorded"}

    def _validate_resolution(self, run_dir: Path, gate: dict, resolution: GateResolution) -> None:
        if resolution.action == "accept":
            return
        if resolution.action != "revise":
            raise HTTPException(status_code=400, detail=f"unknown action {resolution.action!r}")
        merged = dict(gate["proposed_payload"])
        merged.update(resolution.payload or {})
        try:
            if gate["stage"] == "plan":
                cfg = RunConfig.from_dict(json.loads((run_dir / "config.json").read_text()))
                validate_plan_payload(merged, cfg.max_objectives)
            else:
                validate_analysis_payload(merged)
        except (ValidationError, EngineError, KeyError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=f"invalid revision: {exc}") from exc

    def _spawn_resume(self, run_id: str) -> None:
        handle = RunHandle(run_id, self.run_dir(run_id))
        with self.lock:
            self.handles[run_id] = handle

        def worker():
            try:
                orch = Orchestrator.resume(handle.run_dir, channel=handle.channel)
                handle.orchestrator = orch
                orch.advance()
            except Exception:  # noqa: BLE001
                logger.exception("run %s resume worker crashed", run_id)

        handle.thread = threading.Thread(target=worker, name=f"run-{run_id}-resume", daemon=True)
        handle.thread.start()

    def abort(self, run_id: str) -> None:
        self.state(run_id)  # 404 if unknown
        with self.lock:
            handle = self.handles.get(run_id)
        if handle is not None and handle.orchestrator is not None and handle.alive:
            handle.orchestrator.abort_flag.set()
            handle.channel.submit(None)  # wake a blocked gate wait


def create_app(
    root: Path,
    auth_token: Optional[str] = None,
    long_poll_timeout: float = 30.0,
    poll_interval: float = 0.1,
    ui_dir: Optional[Path] = None,
) -> FastAPI:
    app = FastAPI(title="bilevo service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    manager = RunManager(root)
    app.state.manager = manager
    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    def authorized(request: Request) -> None:
        if auth_token is None:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {auth_token}":
            raise HTTPException(status_code=401, detail="unauthorized")

    @app.exception_handler(HTTPException)
    async def http_error(request: Request, exc: HTTPException):
        return JSONResponse(
            status_code=exc.status_code,
            content={"code": exc.status_code, "message": str(exc.detail), "details": {}},
        )

    @app.get("/registry")
    def registry(_: None = Depends(authorized)) -> list[dict]:
        return [d.to_dict() for d in default_registry().descriptors()]

    @app.post("/runs", status_code=201)
    def create_run(config: dict, _: None = Depends(authorized)) -> dict:
        return manager.create_run(config)

    @app.get("/runs")
    def list_runs(_: None = Depends(authorized)) -> list[dict]:
        return manager.list_runs()

    @app.get("/runs/{run_id}")
    def get_run(run_id: str, _: None = Depends(authorized)) -> dict:
        return manager.summary(run_id)

    @app.get("/runs/{run_id}/iterations/{k}")
    def get_iteration(run_id: str, k: int, _: None = Depends(authorized)) -> dict:
        manager.state(run_id)
        path = manager.run_dir(run_id) / "iterations" / f"iter_{k}.json"
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"no iteration {k} for run {run_id!r}")
        return json.loads(path.read_text())

    @app.get("/runs/{run_id}/iterations/{k}/population")
    def get_population(
        run_id: str,
        k: int,
        limit: int = Query(default=100, ge=1),
        offset: int = Query(default=0, ge=0),
        sort: Optional[str] = Query(default=None),
        _: None = Depends(authorized),
    ) -> dict:
        manager.state(run_id)
        path = manager.run_dir(run_id) / "populations" / f"iter_{k}.json"
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"no population for iteration {k}")
        pop = json.loads(path.read_text())
        candidates = pop["candidates"]
        if sort == "aggregate":
            candidates = sorted(
                candidates, key=lambda c: (-(c.get("aggregate") or 0.0), c["id"])
            )
        elif sort:  # sort by a named objective score
            candidates = sorted(
                candidates, key=lambda c: (-(c["scores"].get(sort, 0.0)), c["id"])
            )
        limit = min(limit, POPULATION_PAGE_CAP)
        page = candidates[offset : offset + limit]
        return {
            "iteration": pop["iteration"],
            "total": len(candidates),
            "offset": offset,
            "limit": limit,
            "stats": pop.get("stats", {}),
            "candidates": page,
        }

    @app.get("/runs/{run_id}/gates")
    def get_gates(
        run_id: str, status: Optional[str] = None, _: None = Depends(authorized)
    ) -> list[dict]:
        manager.state(run_id)
        return list_gates(manager.run_dir(run_id), status=status)

    @app.post("/runs/{run_id}/gates/{gate_id}")
    def post_gate(run_id: str, gate_id: str, body: dict, _: None = Depends(authorized)) -> dict:
        return manager.resolve(run_id, gate_id, body)

    @app.get("/runs/{run_id}/events")
    def get_events(
        run_id: str, since: int = Query(default=0, ge=0), _: None = Depends(authorized)
    ) -> dict:
        manager.state(run_id)
        events_path = manager.run_dir(run_id) / "events.log"
        deadline = time.monotonic() + long_poll_timeout
        while True:
            events = EventLog.read(events_path, since=since)
            if events or time.monotonic() >= deadline:
                return {"events": events, "latest_seq": events[-1]["seq"] if events else since}
            time.sleep(poll_interval)

    @app.post("/runs/{run_id}/abort", status_code=202)
    def abort(run_id: str, _: None = Depends(authorized)) -> dict:
        manager.abort(run_id)
        return {"run_id": run_id, "status": "abort_requested"}

    return app


def serve(addr: str, root: Path, auth_token: Optional[str] = None, ui_dir: Optional[Path] = None) -> None:
    """Run the service with uvicorn on host:port."""
    import uvicorn

    host, _, port = addr.rpartition(":")
    uvicorn.run(
        create_app(root, auth_token, ui_dir=ui_dir), host=host or "127.0.0.1", port=int(port)
    )
