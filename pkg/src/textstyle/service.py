"""HTTP service: synchronous retrieval plus asynchronous style-transfer jobs.

Jobs persist as one JSON file (plus one result PNG) each under a jobs/
directory, so completed work survives restarts; jobs that were queued or
running when the process died reload as failed ("interrupted"). Model
artifacts are immutable shared state; job-store mutations serialize
through one lock, and transfers run on a small worker pool (default 1,
which keeps output ordering deterministic).
"""

from __future__ import annotations

import json
import os
import queue
import threading
import uuid
from contextlib import asynccontextmanager
from datetime import datetime, timezone

from fastapi import FastAPI, Form, Request, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from . import corpus, embedding, textenc
from .cli import RunConfig, apply_overrides, run_pipeline
from .errors import TextStyleError, ValidationError

MAX_UPLOAD_BYTES = 10 * 1024 * 1024
_TERMINAL = {"done", "failed"}


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


class JobStore:
    """Disk-backed job records guarded by a single writer lock."""

    def __init__(self, directory: str):
        self.directory = directory
        os.makedirs(directory, exist_ok=True)
        self._lock = threading.Lock()
        self._jobs: dict[str, dict] = {}
        self._load_existing()

    def _path(self, job_id: str) -> str:
        return os.path.join(self.directory, f"{job_id}.json")

    def result_path(self, job_id: str) -> str:
        return os.path.join(self.directory, f"{job_id}.png")

    def upload_path(self, job_id: str) -> str:
        return os.path.join(self.directory, f"{job_id}-content.img")

    def _load_existing(self) -> None:
        for name in sorted(os.listdir(self.directory)):
            if not name.endswith(".json"):
                continue
            path = os.path.join(self.directory, name)
            try:
                with open(path, "r", encoding="utf-8") as fh:
                    job = json.load(fh)
            except (OSError, json.JSONDecodeError):
                continue
            if job.get("status") not in _TERMINAL:
                job["status"] = "failed"
                job["error"] = "interrupted by restart"
                job["updated"] = _now()
                self._write(job)
            self._jobs[job["id"]] = job

    def _write(self, job: dict) -> None:
        with open(self._path(job["id"]), "w", encoding="utf-8") as fh:
            json.dump(job, fh)

    def create(self, kind: str, payload: dict, total: int) -> dict:
        job = {
            "id": str(uuid.uuid4()),
            "kind": kind,
            "status": "queued",
            "progress": {"iteration": 0, "total": total},
            "result": None,
            "error": None,
            "payload": payload,
            "created": _now(),
            "updated": _now(),
        }
        with self._lock:
            self._jobs[job["id"]] = job
            self._write(job)
        return dict(job)

    def get(self, job_id: str) -> dict | None:
        with self._lock:
            job = self._jobs.get(job_id)
            return dict(job) if job else None

    def _update(self, job_id: str, persist: bool = True, **changes) -> None:
        with self._lock:
            job = self._jobs[job_id]
            job.update(changes)
            job["updated"] = _now()
            if persist:
                self._write(job)

    def mark_running(self, job_id: str) -> None:
        self._update(job_id, status="running")

    def set_progress(self, job_id: str, iteration: int, total: int) -> None:
        # in-memory only: polling reads memory, restarts mark the job failed
        self._update(job_id, persist=False,
                     progress={"iteration": iteration, "total": total})

    def mark_done(self, job_id: str, result: dict, total: int) -> None:
        self._update(job_id, status="done", result=result,
                     progress={"iteration": total, "total": total})

    def mark_failed(self, job_id: str, message: str) -> None:
        self._update(job_id, status="failed", error=message)


def _public_view(job: dict) -> dict:
    return {k: v for k, v in job.items() if k != "payload"}


def create_app(data_dir: str, manifest: str | None = None,
               run_config: RunConfig | None = None, ui_dir: str | None = None,
               worker_count: int = 1, jobs_dir: str | None = None) -> FastAPI:
    cfg = run_config or RunConfig(data_dir=data_dir)
    if not cfg.data_dir:
        cfg.data_dir = data_dir
    manifest_path = manifest or os.path.join(data_dir, "manifest.jsonl")
    jobs_dir = jobs_dir or os.path.join(data_dir, "jobs")

    state: dict = {"model": None, "index": None, "samples": None, "error": None}
    try:
        text_model = textenc.load_text_encoder(os.path.join(data_dir, "vocab.json"))
        state["model"] = embedding.load_heads(os.path.join(data_dir, "heads.bin"), text_model)
        state["index"] = embedding.load_index(os.path.join(data_dir, "index.bin"))
        state["samples"] = {s.id: s for s in corpus.load_manifest(manifest_path)}
    except (OSError, TextStyleError) as exc:
        state["error"] = str(exc)

    store = JobStore(jobs_dir)
    work: queue.Queue = queue.Queue()

    def run_job(job_id: str) -> None:
        job = store.get(job_id)
        payload = job["payload"] if job else {}
        store.mark_running(job_id)
        try:
            job_cfg = apply_overrides(cfg, payload.get("overrides", {}))
            total = job_cfg.iterations

            def on_progress(iteration, _record):
                store.set_progress(job_id, iteration + 1, total)

            best_id, image, history = run_pipeline(
                job_cfg, manifest_path, payload["content_path"],
                payload.get("title", ""), payload.get("description", ""),
                on_progress=on_progress,
            )
            corpus.save_png(image, store.result_path(job_id))
            last = history[-1] if history else None
            store.mark_done(job_id, {
                "image_url": f"/api/jobs/{job_id}/result",
                "retrieved_id": best_id,
                "losses": {
                    "content": last.content, "style": last.style,
                    "tv": last.tv, "total": last.total,
                } if last else None,
                "history": [[r.content, r.style, r.tv, r.total] for r in history],
            }, total)
        except Exception as exc:  # job failures must not kill the worker
            store.mark_failed(job_id, str(exc))

    def worker_loop() -> None:
        while True:
            job_id = work.get()
            if job_id is None:
                return
            run_job(job_id)

    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        threads = [threading.Thread(target=worker_loop, daemon=True)
                   for _ in range(max(1, worker_count))]
        for t in threads:
            t.start()
        yield
        for _ in threads:
            work.put(None)
        for t in threads:
            t.join(timeout=5)

    app = FastAPI(title="textstyle", lifespan=lifespan)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"],
    )

    def index_ready() -> bool:
        return state["index"] is not None and state["model"] is not None

    @app.get("/api/health")
    def health():
        size = len(state["index"]) if state["index"] is not None else 0
        return {"status": "ok" if index_ready() else "no-index", "index_size": size}

    @app.post("/api/retrieve")
    async def retrieve(request: Request):
        try:
            body = await request.json()
        except json.JSONDecodeError:
            body = {}
        title = (body.get("title") or "").strip()
        description = (body.get("description") or "").strip()
        k = int(body.get("k") or 5)
        if not title and not description:
            return JSONResponse(
                {"detail": {"title": "title and description cannot both be empty",
                            "description": "title and description cannot both be empty"}},
                status_code=400,
            )
        if not index_ready():
            return JSONResponse(
                {"detail": f"index not loaded: {state['error']}"}, status_code=503
            )
        try:
            results = embedding.rank(title, description, state["index"],
                                     state["model"], k)
        except ValidationError as exc:
            return JSONResponse({"detail": str(exc)}, status_code=503)
        return {"results": [
            {"id": sid, "score": score, "image_url": f"/images/{sid}"}
            for sid, score in results
        ]}

    @app.post("/api/pipeline", status_code=202)
    async def submit_pipeline(file: UploadFile, title: str = Form(""),
                              description: str = Form(""),
                              overrides: str = Form("")):
        if not title.strip() and not description.strip():
            return JSONResponse(
                {"detail": "title and description cannot both be empty"},
                status_code=400,
            )
        if not index_ready():
            return JSONResponse(
                {"detail": f"index not loaded: {state['error']}"}, status_code=503
            )
        data = await file.read()
        if len(data) > MAX_UPLOAD_BYTES:
            return JSONResponse(
                {"detail": f"upload exceeds {MAX_UPLOAD_BYTES} bytes"}, status_code=415
            )
        try:
            parsed_overrides = json.loads(overrides) if overrides.strip() else {}
            if not isinstance(parsed_overrides, dict):
                raise ValidationError("overrides must be a JSON object")
        except json.JSONDecodeError:
            return JSONResponse({"detail": "overrides is not valid JSON"}, status_code=400)
        try:
            apply_overrides(cfg, parsed_overrides)  # reject unknown fields up front
        except ValidationError as exc:
            return JSONResponse({"detail": str(exc)}, status_code=400)

        job = store.create("pipeline", {
            "title": title, "description": description,
            "overrides": parsed_overrides, "content_path": "",
        }, total=apply_overrides(cfg, parsed_overrides).iterations)
        content_path = store.upload_path(job["id"])
        with open(content_path, "wb") as fh:
            fh.write(data)
        try:
            corpus.load_image(content_path, cfg.max_side)
        except TextStyleError as exc:
            store.mark_failed(job["id"], f"bad image: {exc}")
            os.remove(content_path)
            return JSONResponse({"detail": f"bad image: {exc}"}, status_code=415)
        job["payload"]["content_path"] = content_path
        store._update(job["id"], payload=job["payload"])  # noqa: SLF001 - same module
        work.put(job["id"])
        return {"job_id": job["id"]}

    @app.get("/api/jobs/{job_id}")
    def get_job(job_id: str):
        job = store.get(job_id)
        if job is None:
            return JSONResponse({"detail": "unknown job"}, status_code=404)
        return _public_view(job)

    @app.get("/api/jobs/{job_id}/result")
    def get_result(job_id: str):
        job = store.get(job_id)
        if job is None:
            return JSONResponse({"detail": "unknown job"}, status_code=404)
        if job["status"] != "done":
            return JSONResponse(
                {"detail": f"job is {job['status']}, result not available"},
                status_code=409,
            )
        return FileResponse(store.result_path(job_id), media_type="image/png")

    @app.get("/images/{sample_id}")
    def get_image(sample_id: str):
        samples = state["samples"] or {}
        if sample_id not in samples:
            return JSONResponse({"detail": "unknown image id"}, status_code=404)
        root = os.path.dirname(os.path.abspath(manifest_path))
        image = corpus.load_image(os.path.join(root, samples[sample_id].image_path),
                                  max_side=min(cfg.max_side, 256))
        return Response(content=corpus.encode_png_bytes(image), media_type="image/png")

    if ui_dir and os.path.isdir(ui_dir):
        app.mount("/app", StaticFiles(directory=ui_dir, html=True), name="app")

    return app
