"""In-process job queue: queued -> running -> done | failed.

One worker pool; execution is serialized per concept (single writer), and a
second train job on a concept that already has one active is rejected.
"""
from __future__ import annotations

import threading
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable

from ..errors import ConceptBusy
from .store import Store

JOB_KINDS = ("train", "gair", "eval")


@dataclass
class Job:
    id: str
    kind: str
    state: str = "queued"
    progress: float = 0.0
    concept_id: str | None = None
    result_ref: str | None = None
    result: dict | None = None
    error: str | None = None

    def to_doc(self) -> dict:
        return asdict(self)


class JobQueue:
    def __init__(self, store: Store, max_workers: int = 2) -> None:
        self.store = store
        self._executor = ThreadPoolExecutor(max_workers=max_workers)
        self._jobs: dict[str, Job] = {}
        self._lock = threading.Lock()
        self._concept_locks: dict[str, threading.Lock] = {}

    def submit(
        self,
        kind: str,
        fn: Callable[[Callable[[float], None]], tuple[str | None, dict | None]],
        concept_id: str | None = None,
    ) -> Job:
        """Queue `fn`; it receives a progress callback and returns
        (result_ref, result_payload)."""
        if kind not in JOB_KINDS:
            raise ValueError(f"unknown job kind {kind!r}")
        with self._lock:
            if kind == "train" and concept_id is not None:
                for job in self._jobs.values():
                    if (
                        job.concept_id == concept_id
                        and job.kind == "train"
                        and job.state in ("queued", "running")
                    ):
                        raise ConceptBusy(f"concept {concept_id!r} already has an active train job")
            job = Job(id=self.store.new_job_id(), kind=kind, concept_id=concept_id)
            self._jobs[job.id] = job
            self.store.write_job(job.to_doc())
        self._executor.submit(self._run, job, fn)
        return job

    def get(self, job_id: str) -> Job:
        with self._lock:
            if job_id in self._jobs:
                return self._jobs[job_id]
        doc = self.store.read_job(job_id)
        return Job(**doc)

    def _concept_lock(self, concept_id: str | None) -> threading.Lock:
        key = concept_id or "__global__"
        with self._lock:
            return self._concept_locks.setdefault(key, threading.Lock())

    def _run(self, job: Job, fn) -> None:
        with self._concept_lock(job.concept_id):
            self._transition(job, state="running")

            def progress(fraction: float) -> None:
                self._transition(job, progress=min(max(fraction, 0.0), 1.0))

            try:
                result_ref, result = fn(progress)
            except Exception as exc:  # jobs must fail, not crash the worker
                self._transition(
                    job,
                    state="failed",
                    error=f"{type(exc).__name__}: {exc}",
                    progress=1.0,
                )
                traceback.print_exc()
                return
            self._transition(
                job, state="done", progress=1.0, result_ref=result_ref, result=result
            )

    def _transition(self, job: Job, **changes) -> None:
        with self._lock:
            for key, value in changes.items():
                setattr(job, key, value)
            self.store.write_job(job.to_doc())

    def shutdown(self) -> None:
        self._executor.shutdown(wait=True)
