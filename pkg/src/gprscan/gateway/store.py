"""Crash-safe local persistence for volumes, jobs, findings and verdicts.

Layout under the data directory:

    volumes/<volume_id>.gpr     container files (GPRVOL1)
    jobs.jsonl                  append-only job event log (latest state wins)
    findings/<job_id>.jsonl     findings written once at job completion
    verdicts.jsonl              append-only review verdict log

Every write goes to a ``*.tmp`` sibling first and is renamed into place, so
a crash between the two steps never corrupts committed records. ``*.tmp``
leftovers are ignored on startup; malformed committed records make the store
refuse to open.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from ..fuse import Finding, finding_from_dict, finding_to_dict
from ..volume import GprVolume, load_volume, save_volume

JOB_STATES = ("queued", "running", "done", "failed")
VERDICTS = ("confirm", "reclassify", "reject")
# verdict -> review state shown on the finding
VERDICT_STATE = {"confirm": "confirmed", "reclassify": "reclassified", "reject": "rejected"}


class StoreError(Exception):
    pass


@dataclass
class Job:
    id: str
    volume_id: str
    state: str
    config: dict
    created_at: float
    updated_at: float
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "volume_id": self.volume_id,
            "state": self.state,
            "config": self.config,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
            "error": self.error,
        }


@dataclass(frozen=True)
class ReviewVerdict:
    finding_id: str
    verdict: str
    corrected_class: str | None
    reviewer: str
    timestamp: float

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise StoreError(f"unknown verdict {self.verdict!r}")
        if (self.verdict == "reclassify") != (self.corrected_class is not None):
            raise StoreError("corrected_class is required iff verdict is reclassify")

    def to_dict(self) -> dict:
        return {
            "finding_id": self.finding_id,
            "verdict": self.verdict,
            "corrected_class": self.corrected_class,
            "reviewer": self.reviewer,
            "timestamp": self.timestamp,
        }


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(data)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)


def _read_jsonl(path: Path) -> list[dict]:
    if not path.exists():
        return []
    out = []
    with open(path, encoding="utf-8") as f:
        for i, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise StoreError(f"{path}:{i}: corrupt record: {e}") from None
            if not isinstance(rec, dict):
                raise StoreError(f"{path}:{i}: corrupt record: not an object")
            out.append(rec)
    return out


class Store:
    """Single-writer, multi-reader persistence index over the data directory."""

    def __init__(self, data_dir):
        self.root = Path(data_dir)
        self._lock = threading.RLock()
        try:
            (self.root / "volumes").mkdir(parents=True, exist_ok=True)
            (self.root / "findings").mkdir(parents=True, exist_ok=True)
            probe = self.root / ".write_probe.tmp"
            probe.write_bytes(b"")
            probe.unlink()
        except OSError as e:
            raise StoreError(f"data directory {self.root} is not writable: {e}") from None
        self._load()

    # --------------------------------------------------------- index build

    def _load(self) -> None:
        self.jobs: dict[str, Job] = {}
        for rec in _read_jsonl(self.root / "jobs.jsonl"):
            try:
                job = Job(**rec)
            except TypeError as e:
                raise StoreError(f"jobs.jsonl: bad job record: {e}") from None
            if job.state not in JOB_STATES:
                raise StoreError(f"jobs.jsonl: bad job state {job.state!r}")
            prev = self.jobs.get(job.id)
            if prev is not None and not self._transition_ok(prev.state, job.state):
                raise StoreError(
                    f"jobs.jsonl: illegal transition {prev.state} -> {job.state} for {job.id}"
                )
            self.jobs[job.id] = job

        self.verdicts: list[ReviewVerdict] = []
        for rec in _read_jsonl(self.root / "verdicts.jsonl"):
            try:
                self.verdicts.append(ReviewVerdict(**rec))
            except (TypeError, StoreError) as e:
                raise StoreError(f"verdicts.jsonl: bad verdict record: {e}") from None

        self.findings: dict[str, tuple[str, Finding]] = {}  # finding id -> (job id, finding)
        for path in sorted((self.root / "findings").glob("*.jsonl")):
            job_id = path.stem
            if job_id not in self.jobs:
                raise StoreError(f"{path}: findings for unknown job {job_id}")
            for rec in _read_jsonl(path):
                try:
                    f = finding_from_dict(rec)
                except ValueError as e:
                    raise StoreError(f"{path}: bad finding record: {e}") from None
                self.findings[f.id] = (job_id, f)

        for v in self.verdicts:
            if v.finding_id not in self.findings:
                raise StoreError(f"verdicts.jsonl: verdict for unknown finding {v.finding_id}")

    @staticmethod
    def _transition_ok(old: str, new: str) -> bool:
        return (old, new) in {
            ("queued", "queued"), ("queued", "running"),
            ("running", "done"), ("running", "failed"),
        }

    # -------------------------------------------------------------- volumes

    def put_volume(self, data: bytes) -> str:
        from ..volume import volume_from_bytes

        volume_from_bytes(data)  # validate before committing
        vid = "v" + hashlib.sha256(data).hexdigest()[:12]
        with self._lock:
            _atomic_write(self.root / "volumes" / f"{vid}.gpr", data)
        return vid

    def has_volume(self, vid: str) -> bool:
        return (self.root / "volumes" / f"{vid}.gpr").exists()

    def get_volume(self, vid: str) -> GprVolume:
        path = self.root / "volumes" / f"{vid}.gpr"
        if not path.exists():
            raise KeyError(vid)
        return load_volume(path)

    def list_volumes(self) -> list[str]:
        return sorted(p.stem for p in (self.root / "volumes").glob("*.gpr"))

    # ----------------------------------------------------------------- jobs

    def _append_log(self, name: str, rec: dict) -> None:
        """Append one record by atomically rewriting the log."""
        path = self.root / name
        old = path.read_bytes() if path.exists() else b""
        _atomic_write(path, old + json.dumps(rec).encode("utf-8") + b"\n")

    def create_job(self, volume_id: str, config: dict) -> Job:
        with self._lock:
            if not self.has_volume(volume_id):
                raise KeyError(volume_id)
            now = time.time()
            jid = f"j{len(self.jobs):04d}"
            job = Job(jid, volume_id, "queued", config, now, now)
            self._append_log("jobs.jsonl", job.to_dict())
            self.jobs[jid] = job
            return job

    def set_job_state(self, job_id: str, state: str, error: str | None = None) -> Job:
        with self._lock:
            job = self.jobs.get(job_id)
            if job is None:
                raise KeyError(job_id)
            if not self._transition_ok(job.state, state):
                raise StoreError(f"illegal transition {job.state} -> {state}")
            job = Job(job.id, job.volume_id, state, job.config,
                      job.created_at, time.time(), error)
            self._append_log("jobs.jsonl", job.to_dict())
            self.jobs[job_id] = job
            return job

    def get_job(self, job_id: str) -> Job:
        job = self.jobs.get(job_id)
        if job is None:
            raise KeyError(job_id)
        return job

    # ------------------------------------------------------------- findings

    def put_findings(self, job_id: str, findings: list[Finding]) -> list[Finding]:
        """Persist a completed job's findings under globally unique ids."""
        with self._lock:
            if job_id not in self.jobs:
                raise KeyError(job_id)
            from dataclasses import replace

            named = [replace(f, id=f"{job_id}:{f.id}") for f in findings]
            body = "".join(json.dumps(finding_to_dict(f)) + "\n" for f in named)
            _atomic_write(self.root / "findings" / f"{job_id}.jsonl", body.encode("utf-8"))
            for f in named:
                self.findings[f.id] = (job_id, f)
            return named

    def get_finding(self, finding_id: str) -> tuple[str, Finding]:
        if finding_id not in self.findings:
            raise KeyError(finding_id)
        job_id, f = self.findings[finding_id]
        return job_id, self._with_review(f)

    def _with_review(self, f: Finding) -> Finding:
        from dataclasses import replace

        latest = None
        for v in self.verdicts:
            if v.finding_id == f.id:
                latest = v
        if latest is None:
            return f
        return replace(f, review=VERDICT_STATE[latest.verdict],
                       corrected_class=latest.corrected_class)

    def list_findings(self, volume_id: str | None = None, cls: str | None = None,
                      review: str | None = None) -> list[tuple[str, Finding]]:
        out = []
        for fid in sorted(self.findings):
            job_id, f = self.findings[fid]
            f = self._with_review(f)
            if volume_id is not None and self.jobs[job_id].volume_id != volume_id:
                continue
            if cls is not None and f.cls != cls:
                continue
            if review is not None and f.review != review:
                continue
            out.append((job_id, f))
        return out

    # ------------------------------------------------------------- verdicts

    def add_verdict(self, v: ReviewVerdict) -> None:
        with self._lock:
            if v.finding_id not in self.findings:
                raise KeyError(v.finding_id)
            self._append_log("verdicts.jsonl", v.to_dict())
            self.verdicts.append(v)
