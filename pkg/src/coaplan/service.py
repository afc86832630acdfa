"""HTTP service: upload scenarios/KB segments, run planning jobs, fetch
plans, post edits.

Plans are immutable once published; every edit spawns a replan job whose
result is a new plan with a parent link. Single process, in-memory store,
optional directory-backed persistence keyed by digest. No authentication:
this is a deployment-local tool.
"""

from __future__ import annotations

import hashlib
import json
import queue
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import Body, FastAPI, HTTPException, Query, Request, Response

from . import engine, kb as kbmod, syncmatrix
from .plan import EditCommand, Overlay, Plan, PlanConfig, PlanningError, config_from_dict
from .scenario import ScenarioError, Scenario, load_scenario, scenario_digest, validate_scenario


@dataclass
class JobRecord:
    id: str
    state: str  # queued | running | done | failed
    scenario_digest: str
    kb_digest: str
    config: dict
    plan_id: str | None = None
    error: str | None = None
    parent_plan_id: str | None = None
    timings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "id": self.id, "state": self.state,
            "scenario_digest": self.scenario_digest, "kb_digest": self.kb_digest,
            "config": self.config, "plan_id": self.plan_id, "error": self.error,
            "parent_plan_id": self.parent_plan_id, "timings": self.timings,
        }


@dataclass
class StoredPlan:
    id: str
    export: str
    content_digest: str
    parent_id: str | None
    scenario_digest: str
    kb_segment_ids: list[str]
    config: dict
    overlay: dict
    wargame: bool = False
    plan_obj: Plan | None = None  # in-memory handle; rebuilt on demand


class Store:
    """Serialized access to scenarios, KB segments, plans and jobs."""

    def __init__(self, store_dir: str | None = None):
        self.lock = threading.RLock()
        self.scenarios: dict[str, tuple[str, Scenario]] = {}
        self.kb_segments: dict[str, str] = {}  # digest -> raw text
        self.plans: dict[str, StoredPlan] = {}
        self.jobs: dict[str, JobRecord] = {}
        self._job_seq = 0
        self._plan_seq = 0
        self.dir = Path(store_dir) if store_dir else None
        if self.dir:
            self._recover()

    def _recover(self):
        for sub in ("scenarios", "kbs", "plans"):
            (self.dir / sub).mkdir(parents=True, exist_ok=True)
        for f in sorted((self.dir / "scenarios").glob("*.txt")):
            text = f.read_text(encoding="utf-8")
            try:
                s = load_scenario(text, source=f.name)
            except ScenarioError:
                continue
            self.scenarios[scenario_digest(s)] = (text, s)
        for f in sorted((self.dir / "kbs").glob("*.txt")):
            self.kb_segments[f.stem] = f.read_text(encoding="utf-8")
        for f in sorted((self.dir / "plans").glob("*.meta.json")):
            meta = json.loads(f.read_text(encoding="utf-8"))
            export_file = self.dir / "plans" / f"{meta['id']}.json"
            if not export_file.exists():
                continue
            sp = StoredPlan(
                id=meta["id"], export=export_file.read_text(encoding="utf-8"),
                content_digest=meta["content_digest"], parent_id=meta.get("parent_id"),
                scenario_digest=meta["scenario_digest"],
                kb_segment_ids=meta["kb_segment_ids"], config=meta["config"],
                overlay=meta["overlay"], wargame=meta.get("wargame", False))
            self.plans[sp.id] = sp
            self._plan_seq = max(self._plan_seq, int(sp.id[1:]))

    def next_job_id(self) -> str:
        self._job_seq += 1
        return f"J{self._job_seq:04d}"

    def next_plan_id(self) -> str:
        self._plan_seq += 1
        return f"P{self._plan_seq:04d}"

    def persist_scenario(self, digest: str, text: str):
        if self.dir:
            (self.dir / "scenarios" / f"{digest}.txt").write_text(text, encoding="utf-8")

    def persist_kb(self, digest: str, text: str):
        if self.dir:
            (self.dir / "kbs" / f"{digest}.txt").write_text(text, encoding="utf-8")

    def persist_plan(self, sp: StoredPlan):
        if self.dir:
            (self.dir / "plans" / f"{sp.id}.json").write_text(sp.export, encoding="utf-8")
            meta = {
                "id": sp.id, "content_digest": sp.content_digest,
                "parent_id": sp.parent_id, "scenario_digest": sp.scenario_digest,
                "kb_segment_ids": sp.kb_segment_ids, "config": sp.config,
                "overlay": sp.overlay, "wargame": sp.wargame,
            }
            (self.dir / "plans" / f"{sp.id}.meta.json").write_text(
                json.dumps(meta, sort_keys=True), encoding="utf-8")


def create_app(store_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="coaplan", version="0.1.0")
    store = Store(store_dir)
    jobs_queue: "queue.Queue[tuple[JobRecord, dict]]" = queue.Queue()

    def worker():
        while True:
            job, payload = jobs_queue.get()
            _run_job(store, job, payload)
            jobs_queue.task_done()

    threading.Thread(target=worker, daemon=True).start()
    app.state.store = store

    # -- uploads -----------------------------------------------------------

    @app.post("/scenarios")
    async def upload_scenario(request: Request):
        text = (await request.body()).decode("utf-8")
        try:
            s = load_scenario(text, source="<upload>")
        except ScenarioError as exc:
            raise HTTPException(422, detail=str(exc))
        diags = validate_scenario(s)
        errors = [d for d in diags if d.severity == "error"]
        if errors:
            raise HTTPException(422, detail=[
                {"severity": d.severity, "path": d.path, "message": d.message}
                for d in diags])
        digest = scenario_digest(s)
        with store.lock:
            store.scenarios[digest] = (text, s)
            store.persist_scenario(digest, text)
        return {"digest": digest,
                "warnings": [{"path": d.path, "message": d.message}
                             for d in diags if d.severity == "warning"]}

    @app.post("/kbs")
    async def upload_kb_segment(request: Request):
        text = (await request.body()).decode("utf-8")
        try:
            kbmod.load_kb([(text, "<upload>")])
        except kbmod.KBError as exc:
            raise HTTPException(422, detail=str(exc))
        digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
        with store.lock:
            store.kb_segments[digest] = text
            store.persist_kb(digest, text)
        return {"digest": digest}

    # -- jobs ----------------------------------------------------------------

    @app.post("/jobs")
    def submit_job(body: dict = Body(...)):
        with store.lock:
            sd = str(body.get("scenario", ""))
            if sd not in store.scenarios:
                raise HTTPException(404, detail=f"unknown scenario {sd!r}")
            kb_ids = [str(k) for k in body.get("kb", [])]
            for k in kb_ids:
                if k not in store.kb_segments:
                    raise HTTPException(404, detail=f"unknown kb segment {k!r}")
            if not kb_ids:
                raise HTTPException(422, detail="at least one kb segment required")
            try:
                config = config_from_dict(body.get("config", {}) or {})
            except (ValueError, KeyError) as exc:
                raise HTTPException(422, detail=f"bad config: {exc}")
            job = JobRecord(
                id=store.next_job_id(), state="queued", scenario_digest=sd,
                kb_digest="", config=config.to_dict(),
                timings={"queued_at": time.time()})
            store.jobs[job.id] = job
        jobs_queue.put((job, {"kind": "plan", "scenario": sd, "kb": kb_ids,
                              "config": config, "overlay": Overlay(),
                              "wargame": bool(body.get("wargame", False))}))
        return {"job_id": job.id}

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        with store.lock:
            job = store.jobs.get(job_id)
            if job is None:
                raise HTTPException(404, detail=f"unknown job {job_id!r}")
            return job.to_dict()

    # -- plans ----------------------------------------------------------------

    def _plan_or_404(plan_id: str) -> StoredPlan:
        sp = store.plans.get(plan_id)
        if sp is None:
            raise HTTPException(404, detail=f"unknown plan {plan_id!r}")
        return sp

    @app.get("/plans/{plan_id}")
    def get_plan(plan_id: str):
        with store.lock:
            sp = _plan_or_404(plan_id)
            return Response(content=sp.export, media_type="application/json")

    @app.get("/plans/{plan_id}/matrix")
    def get_matrix(plan_id: str, period: int = Query(default=None),
                   format: str = Query(default="csv")):
        with store.lock:
            sp = _plan_or_404(plan_id)
            doc = json.loads(sp.export)
            kb = _load_kb_for(store, sp)
        matrix = syncmatrix.build_matrix(doc, period, kb=kb)
        if format == "csv":
            return Response(content=syncmatrix.matrix_to_csv(matrix),
                            media_type="text/csv; charset=utf-8")
        return {
            "rows": list(matrix.rows),
            "columns": [list(c) for c in matrix.columns],
            "cells": [
                {"row": row, "column": k,
                 "entries": [{"activity": c.activity_id, "unit": c.unit_id,
                              "label": c.label, "questionable": c.questionable}
                             for c in matrix.cell(row, k)]}
                for row in matrix.rows
                for k in range(len(matrix.columns))
                if matrix.cell(row, k)
            ],
        }

    @app.get("/plans/{plan_id}/flags")
    def get_flags(plan_id: str):
        with store.lock:
            sp = _plan_or_404(plan_id)
            return json.loads(sp.export)["flags"]

    @app.get("/plans/{plan_id}/utilization")
    def get_utilization(plan_id: str):
        with store.lock:
            sp = _plan_or_404(plan_id)
            plan_obj = _materialize(store, sp)
            return engine.utilization_report(plan_obj)

    @app.get("/plans/{plan_id}/events")
    def get_events(plan_id: str):
        with store.lock:
            sp = _plan_or_404(plan_id)
            return json.loads(sp.export)["events"]

    @app.post("/plans/{plan_id}/edits")
    def post_edits(plan_id: str, body: dict = Body(...)):
        with store.lock:
            sp = _plan_or_404(plan_id)
            expected = body.get("expected_digest")
            if expected is not None and expected != sp.content_digest:
                raise HTTPException(
                    409, detail=f"plan {plan_id} digest {sp.content_digest} "
                                f"does not match expected {expected}")
            edits = []
            for e in body.get("edits", []):
                try:
                    edits.append(EditCommand(kind=str(e["kind"]),
                                             target=str(e["target"]),
                                             payload=dict(e.get("payload", {}))))
                except (KeyError, TypeError) as exc:
                    raise HTTPException(422, detail=f"bad edit: {exc}")
            old = _materialize(store, sp)
            try:
                overlay = engine._merge_edits(old, edits)
            except PlanningError as exc:
                raise HTTPException(422, detail=str(exc))
            config = config_from_dict(sp.config)
            job = JobRecord(
                id=store.next_job_id(), state="queued",
                scenario_digest=sp.scenario_digest, kb_digest="",
                config=sp.config, parent_plan_id=plan_id,
                timings={"queued_at": time.time()})
            store.jobs[job.id] = job
        jobs_queue.put((job, {"kind": "plan", "scenario": sp.scenario_digest,
                              "kb": sp.kb_segment_ids, "config": config,
                              "overlay": overlay, "wargame": sp.wargame,
                              "parent": plan_id}))
        return {"job_id": job.id}

    return app


def _load_kb_for(store: Store, sp: StoredPlan):
    texts = [(store.kb_segments[k], k) for k in sp.kb_segment_ids
             if k in store.kb_segments]
    return kbmod.load_kb(texts) if texts else None


def _materialize(store: Store, sp: StoredPlan) -> Plan:
    """Plan object for a stored plan, rebuilt deterministically if needed."""
    if sp.plan_obj is not None:
        return sp.plan_obj
    _, scenario = store.scenarios[sp.scenario_digest]
    kb = _load_kb_for(store, sp)
    config = config_from_dict(sp.config)
    sp.plan_obj = engine.plan(scenario, kb, config, Overlay.from_dict(sp.overlay),
                              wargame=sp.wargame)
    return sp.plan_obj


def _run_job(store: Store, job: JobRecord, payload: dict) -> None:
    with store.lock:
        job.state = "running"
        job.timings["started_at"] = time.time()
    try:
        with store.lock:
            _, scenario = store.scenarios[payload["scenario"]]
            texts = [(store.kb_segments[k], k) for k in payload["kb"]]
        kb = kbmod.load_kb(texts)
        config = payload["config"]
        result = engine.plan(scenario, kb, config, payload["overlay"],
                             wargame=bool(payload.get("wargame", False)))
        export = syncmatrix.export_plan(result)
        content_digest = json.loads(export)["plan_digest"]
        with store.lock:
            sp = StoredPlan(
                id=store.next_plan_id(), export=export,
                content_digest=content_digest,
                parent_id=payload.get("parent"),
                scenario_digest=payload["scenario"],
                kb_segment_ids=list(payload["kb"]),
                config=config.to_dict(),
                overlay=payload["overlay"].to_dict(),
                wargame=bool(payload.get("wargame", False)),
                plan_obj=result)
            store.plans[sp.id] = sp
            store.persist_plan(sp)
            job.kb_digest = result.kb_digest
            job.plan_id = sp.id
            job.state = "done"
            job.timings["finished_at"] = time.time()
            job.timings["wall_ms"] = round(
                (job.timings["finished_at"] - job.timings["started_at"]) * 1000, 3)
    except (PlanningError, kbmod.KBError, ScenarioError, KeyError) as exc:
        with store.lock:
            job.state = "failed"
            job.error = str(exc)
            job.timings["finished_at"] = time.time()
