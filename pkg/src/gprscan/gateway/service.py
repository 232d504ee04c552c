"""HTTP service exposing the pipeline under /api/v1.

Endpoints:
    POST /api/v1/volumes                 upload a GPRVOL1 container, returns volume id
    GET  /api/v1/volumes                 list volume ids
    POST /api/v1/jobs                    {volume_id, config?} -> job id; runs the pipeline
    GET  /api/v1/jobs/{id}               job state
    GET  /api/v1/findings                filter by volume_id / cls / review
    GET  /api/v1/findings/{id}/slice     PNG of B/C/D slice through the finding center;
                                         2D box coordinates in the X-Box header
    POST /api/v1/findings/{id}/review    append a review verdict
    GET  /api/v1/report                  counts per class and review state + timing
"""

from __future__ import annotations

import io
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from fastapi import FastAPI, Query, Request, Response
from fastapi.responses import JSONResponse, PlainTextResponse
from PIL import Image

from ..detect import PipelineConfig, run_detectors
from ..fuse import (FINDING_CLASSES, Finding, Thresholds, cross_verify,
                    finding_to_dict)
from ..volume import GprVolume, VolumeError, WindowSpec, b_scan, c_scan, d_scan
from .store import (VERDICT_STATE, VERDICTS, ReviewVerdict, Store, StoreError)

REVIEW_CLASSES = ("manhole", "void", "loose")


def _config_from_body(body: dict) -> dict:
    """Normalize a job config request into a persisted config snapshot."""
    cfg = body.get("config") or {}
    if not isinstance(cfg, dict):
        raise ValueError("config must be an object")
    allowed = {"tau_h", "tau_m", "tau_assoc", "window_len", "window_stride"}
    unknown = set(cfg) - allowed
    if unknown:
        raise ValueError(f"unknown config fields: {sorted(unknown)}")
    out = {
        "tau_h": float(cfg.get("tau_h", 0.5)),
        "tau_m": float(cfg.get("tau_m", 0.5)),
        "tau_assoc": float(cfg.get("tau_assoc", 0.1)),
        "window_len": int(cfg.get("window_len", 64)),
        "window_stride": int(cfg.get("window_stride", 32)),
    }
    Thresholds(tau_h=out["tau_h"], tau_m=out["tau_m"], tau_assoc=out["tau_assoc"])
    WindowSpec(out["window_len"], out["window_stride"]).validate(out["window_len"])
    return out


def run_pipeline(v: GprVolume, config: dict) -> list[Finding]:
    """The deterministic detect + cross-verify composition used by jobs and the CLI."""
    pipe = PipelineConfig(window=WindowSpec(config["window_len"], config["window_stride"]))
    thresholds = Thresholds(tau_h=config["tau_h"], tau_m=config["tau_m"],
                            tau_assoc=config["tau_assoc"])
    dets = run_detectors(v, pipe)
    return cross_verify(dets, v.shape, thresholds)


def _finding_record(job_id: str, volume_id: str, f: Finding) -> dict:
    rec = finding_to_dict(f)
    rec["job_id"] = job_id
    rec["volume_id"] = volume_id
    return rec


def _slice_and_box(v: GprVolume, f: Finding, view: str):
    """Grayscale slice through the finding's center plus its 2D box in that view."""
    c0, c1, x0, x1, k0, k1 = f.voxel_box.as_tuple()
    cc, cx, ck = f.voxel_box.center()
    if view == "B":
        img = b_scan(v, min(cc, v.n_channels - 1))
        box = (k0, x0, k1, x1)
    elif view == "C":
        img = c_scan(v, min(ck, v.n_samples - 1))
        box = (c0, x0, c1, x1)
    elif view == "D":
        img = d_scan(v, min(cx, v.n_traces - 1))
        box = (k0, c0, k1, c1)
    else:
        raise ValueError(f"unknown view {view!r}")
    px = img.pixels
    lo, hi = float(px.min()), float(px.max())
    if hi - lo <= 0:
        gray = np.zeros(px.shape, dtype=np.uint8)
    else:
        gray = np.round((px - lo) / (hi - lo) * 255.0).astype(np.uint8)
    h, w = gray.shape
    box = (max(0, box[0]), max(0, box[1]), min(h, box[2]), min(w, box[3]))
    return gray, img.index, box


def create_app(data_dir, workers: int = 2) -> FastAPI:
    store = Store(data_dir)
    pool = ThreadPoolExecutor(max_workers=workers)
    app = FastAPI(title="gprscan gateway")
    app.state.store = store

    def error(status: int, msg: str) -> JSONResponse:
        return JSONResponse({"error": msg}, status_code=status)

    def _execute(job_id: str) -> None:
        store.set_job_state(job_id, "running")
        job = store.get_job(job_id)
        try:
            v = store.get_volume(job.volume_id)
            findings = run_pipeline(v, job.config)
            store.put_findings(job_id, findings)
            store.set_job_state(job_id, "done")
        except Exception as e:  # persisted as a failed job, not a 500
            store.set_job_state(job_id, "failed", error=str(e))

    @app.post("/api/v1/volumes")
    async def upload_volume(request: Request):
        data = await request.body()
        try:
            vid = store.put_volume(data)
        except VolumeError as e:
            return error(422, f"invalid volume container: {e}")
        return {"volume_id": vid}

    @app.get("/api/v1/volumes")
    def list_volumes():
        return {"volumes": store.list_volumes()}

    @app.post("/api/v1/jobs")
    async def create_job(request: Request):
        try:
            body = await request.json()
        except Exception:
            return error(422, "body must be a JSON object")
        if not isinstance(body, dict) or "volume_id" not in body:
            return error(422, "volume_id is required")
        try:
            config = _config_from_body(body)
        except (ValueError, VolumeError) as e:
            return error(422, f"invalid config: {e}")
        try:
            job = store.create_job(body["volume_id"], config)
        except KeyError:
            return error(404, f"unknown volume {body['volume_id']}")
        pool.submit(_execute, job.id)
        return {"job_id": job.id, "state": "queued"}

    @app.get("/api/v1/jobs/{job_id}")
    def get_job(job_id: str):
        try:
            return store.get_job(job_id).to_dict()
        except KeyError:
            return error(404, f"unknown job {job_id}")

    @app.get("/api/v1/findings")
    def list_findings(volume_id: str | None = None, cls: str | None = None,
                      review: str | None = None):
        rows = store.list_findings(volume_id=volume_id, cls=cls, review=review)
        return {
            "findings": [
                _finding_record(job_id, store.get_job(job_id).volume_id, f)
                for job_id, f in rows
            ]
        }

    @app.get("/api/v1/findings/{finding_id}/slice")
    def get_slice_render(finding_id: str, view: str = Query("C")):
        if view not in ("B", "C", "D"):
            return error(422, f"view must be B, C or D, got {view!r}")
        try:
            job_id, f = store.get_finding(finding_id)
        except KeyError:
            return error(404, f"unknown finding {finding_id}")
        v = store.get_volume(store.get_job(job_id).volume_id)
        gray, index, box = _slice_and_box(v, f, view)
        buf = io.BytesIO()
        Image.fromarray(gray, mode="L").save(buf, format="PNG")
        return Response(
            content=buf.getvalue(),
            media_type="image/png",
            headers={
                "X-View": view,
                "X-Slice-Index": str(index),
                "X-Box": ",".join(str(b) for b in box),
            },
        )

    @app.post("/api/v1/findings/{finding_id}/review")
    async def post_review(request: Request, finding_id: str):
        try:
            body = await request.json()
        except Exception:
            return error(422, "body must be a JSON object")
        if not isinstance(body, dict) or body.get("verdict") not in VERDICTS:
            return error(422, f"verdict must be one of {list(VERDICTS)}")
        corrected = body.get("corrected_class")
        if body["verdict"] == "reclassify":
            if corrected not in REVIEW_CLASSES:
                return error(422, f"reclassify requires corrected_class "
                                  f"in {list(REVIEW_CLASSES)}")
        elif corrected is not None:
            return error(422, "corrected_class only valid with reclassify")
        try:
            store.get_finding(finding_id)
        except KeyError:
            # review on a finding of a job that exists but has not finished
            job_id = finding_id.split(":", 1)[0]
            if job_id in store.jobs and store.jobs[job_id].state in ("queued", "running"):
                return error(409, f"job {job_id} has not finished")
            return error(404, f"unknown finding {finding_id}")
        verdict = ReviewVerdict(
            finding_id=finding_id,
            verdict=body["verdict"],
            corrected_class=corrected,
            reviewer=request.headers.get("X-Reviewer", "anonymous"),
            timestamp=time.time(),
        )
        store.add_verdict(verdict)
        _, f = store.get_finding(finding_id)
        return _finding_record(finding_id.split(":", 1)[0],
                               store.get_job(finding_id.split(":", 1)[0]).volume_id, f)

    @app.get("/api/v1/report")
    def export_report(volume_id: str | None = None, format: str = "json"):
        rows = store.list_findings(volume_id=volume_id)
        by_class = {c: 0 for c in FINDING_CLASSES}
        by_review = {s: 0 for s in ("pending", *VERDICT_STATE.values())}
        for _, f in rows:
            by_class[f.cls] += 1
            by_review[f.review] += 1
        jobs = [j for j in store.jobs.values()
                if volume_id is None or j.volume_id == volume_id]
        timing = {
            "jobs_total": len(jobs),
            "jobs_done": sum(j.state == "done" for j in jobs),
            "jobs_failed": sum(j.state == "failed" for j in jobs),
            "total_processing_s": round(
                sum(j.updated_at - j.created_at for j in jobs
                    if j.state in ("done", "failed")), 6),
        }
        if format == "text":
            lines = [f"{'class':<22}{'count':>7}"]
            lines += [f"{c:<22}{n:>7}" for c, n in by_class.items()]
            lines.append(f"{'total':<22}{len(rows):>7}")
            lines.append("")
            lines += [f"{s:<22}{n:>7}" for s, n in by_review.items()]
            return PlainTextResponse("\n".join(lines) + "\n")
        return {
            "total_findings": len(rows),
            "by_class": by_class,
            "by_review": by_review,
            "timing": timing,
        }

    return app
