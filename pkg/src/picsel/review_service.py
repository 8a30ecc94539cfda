"""Manual triage of a sampled selection over HTTP.

Reviewers pull batches of pending items under short exclusive leases,
post keep/remove verdicts (removals carry a reason), and a finalize call
turns the accumulated log into the kept manifest plus a removal report.
The verdict log is append-only JSON lines; the latest verdict per image
wins and earlier ones remain as history. Leases live in memory only, so
a restart simply returns undecided items to the pending pool.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, JSONResponse
from pydantic import BaseModel

REMOVAL_REASONS = (
    "inappropriate",
    "text_screenshot",
    "under_exposed",
    "duplicate",
    "other",
)
STATUSES = ("kept", "removed")
DEFAULT_LEASE_SECONDS = 600.0
DEFAULT_BATCH_SIZE = 20


@dataclass(frozen=True)
class Verdict:
    seq: int
    image_id: str
    status: str
    reason: str | None
    reviewer: str
    timestamp: float


@dataclass
class ReviewItem:
    image_id: str
    path: str | None = None


@dataclass
class _Lease:
    reviewer: str
    expires_at: float


class ReviewError(ValueError):
    def __init__(self, message: str, code: int = 400):
        super().__init__(message)
        self.code = code


class ReviewQueue:
    """Lease-based work queue with an append-only last-write-wins log."""

    def __init__(
        self,
        items: list[ReviewItem],
        log_path: Path | str | None = None,
        lease_seconds: float = DEFAULT_LEASE_SECONDS,
        now_fn: Callable[[], float] = time.time,
    ):
        ids = [it.image_id for it in items]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate image ids in review queue")
        self._items: dict[str, ReviewItem] = {it.image_id: it for it in items}
        self._order = ids
        self._history: dict[str, list[Verdict]] = {}
        self._leases: dict[str, _Lease] = {}
        self._seq = 0
        self._lease_seconds = lease_seconds
        self._now = now_fn
        self._lock = threading.Lock()
        self._log_path = Path(log_path) if log_path else None
        if self._log_path and self._log_path.exists():
            self._replay()

    def _replay(self) -> None:
        with open(self._log_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                v = Verdict(
                    seq=rec["seq"],
                    image_id=rec["image_id"],
                    status=rec["status"],
                    reason=rec.get("reason"),
                    reviewer=rec.get("reviewer", ""),
                    timestamp=rec.get("timestamp", 0.0),
                )
                if v.image_id in self._items:
                    self._history.setdefault(v.image_id, []).append(v)
                    self._seq = max(self._seq, v.seq)

    def _append_log(self, v: Verdict) -> None:
        if not self._log_path:
            return
        self._log_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self._log_path, "a", encoding="utf-8") as fh:
            fh.write(
                json.dumps(
                    {
                        "seq": v.seq,
                        "image_id": v.image_id,
                        "status": v.status,
                        "reason": v.reason,
                        "reviewer": v.reviewer,
                        "timestamp": v.timestamp,
                    },
                    sort_keys=True,
                )
                + "\n"
            )

    def latest(self, image_id: str) -> Optional[Verdict]:
        hist = self._history.get(image_id)
        return hist[-1] if hist else None

    def history(self, image_id: str) -> tuple[Verdict, ...]:
        return tuple(self._history.get(image_id, ()))

    def _lease_active(self, image_id: str, now: float) -> Optional[_Lease]:
        lease = self._leases.get(image_id)
        if lease and lease.expires_at > now:
            return lease
        return None

    def next_batch(self, reviewer: str, n: int = DEFAULT_BATCH_SIZE) -> list[ReviewItem]:
        """Lease up to n pending, unleased items to the reviewer, in queue order."""
        if not reviewer:
            raise ReviewError("reviewer must be non-empty", 422)
        if n < 1:
            raise ReviewError(f"batch size must be >= 1, got {n}", 422)
        n = min(n, DEFAULT_BATCH_SIZE)
        with self._lock:
            now = self._now()
            batch = []
            for image_id in self._order:
                if len(batch) >= n:
                    break
                if self.latest(image_id) is not None:
                    continue
                if self._lease_active(image_id, now) is not None:
                    continue
                self._leases[image_id] = _Lease(reviewer, now + self._lease_seconds)
                batch.append(self._items[image_id])
            return batch

    def submit(
        self,
        image_id: str,
        status: str,
        reason: str | None = None,
        reviewer: str = "anonymous",
    ) -> Verdict:
        if image_id not in self._items:
            raise ReviewError(f"unknown image id {image_id!r}", 404)
        if status not in STATUSES:
            raise ReviewError(f"status must be one of {STATUSES}, got {status!r}", 422)
        if status == "removed":
            if reason not in REMOVAL_REASONS:
                raise ReviewError(
                    f"removal reason must be one of {REMOVAL_REASONS}, got {reason!r}", 422
                )
        elif reason is not None:
            raise ReviewError("kept verdicts carry no reason", 422)
        with self._lock:
            now = self._now()
            lease = self._lease_active(image_id, now)
            if lease is not None and lease.reviewer != reviewer:
                raise ReviewError(
                    f"image {image_id!r} is leased to another reviewer", 409
                )
            self._seq += 1
            v = Verdict(
                seq=self._seq,
                image_id=image_id,
                status=status,
                reason=reason,
                reviewer=reviewer,
                timestamp=now,
            )
            self._history.setdefault(image_id, []).append(v)
            self._leases.pop(image_id, None)
            self._append_log(v)
            return v

    def stats(self) -> dict:
        with self._lock:
            now = self._now()
            kept = removed = leased = 0
            by_reason = {r: 0 for r in REMOVAL_REASONS}
            for image_id in self._order:
                latest = self.latest(image_id)
                if latest is None:
                    if self._lease_active(image_id, now):
                        leased += 1
                elif latest.status == "kept":
                    kept += 1
                else:
                    removed += 1
                    by_reason[latest.reason] += 1
            total = len(self._order)
            return {
                "total": total,
                "pending": total - kept - removed,
                "leased": leased,
                "kept": kept,
                "removed": removed,
                "by_reason": by_reason,
            }

    def finalize(self, force: bool = False) -> dict:
        """Resolve the queue into kept ids plus a removal report.

        Requires every item decided unless force, which defaults pending
        items to kept. Pure over the latest verdicts: replaying the same
        log always finalizes identically.
        """
        with self._lock:
            pending = [i for i in self._order if self.latest(i) is None]
            if pending and not force:
                raise ReviewError(
                    f"{len(pending)} items still pending; pass force to keep them", 409
                )
            kept, removed = [], {r: [] for r in REMOVAL_REASONS}
            for image_id in self._order:
                latest = self.latest(image_id)
                if latest is None or latest.status == "kept":
                    kept.append(image_id)
                else:
                    removed[latest.reason].append(image_id)
            return {
                "kept": kept,
                "removed": removed,
                "counts": {
                    "total": len(self._order),
                    "kept": len(kept),
                    "removed": sum(len(v) for v in removed.values()),
                    "forced_keep": len(pending),
                },
            }


class VerdictBody(BaseModel):
    image_id: str
    status: str
    reason: str | None = None
    reviewer: str = "anonymous"

    model_config = {"extra": "ignore"}


class FinalizeBody(BaseModel):
    force: bool = False

    model_config = {"extra": "ignore"}


def create_app(queue: ReviewQueue) -> FastAPI:
    app = FastAPI(title="picsel review service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.queue = queue

    @app.get("/queue/next")
    def queue_next(reviewer: str = "", n: int = DEFAULT_BATCH_SIZE):
        try:
            batch = queue.next_batch(reviewer, n)
        except ReviewError as exc:
            raise HTTPException(exc.code, str(exc))
        return {
            "items": [
                {"image_id": it.image_id, "url": f"/image/{it.image_id}"}
                for it in batch
            ],
            "lease_seconds": queue._lease_seconds,
        }

    @app.post("/verdict")
    def post_verdict(body: VerdictBody):
        try:
            v = queue.submit(body.image_id, body.status, body.reason, body.reviewer)
        except ReviewError as exc:
            raise HTTPException(exc.code, str(exc))
        return {"ok": True, "seq": v.seq, "image_id": v.image_id}

    @app.get("/stats")
    def get_stats():
        return queue.stats()

    @app.get("/image/{image_id}")
    def get_image(image_id: str):
        item = queue._items.get(image_id)
        if item is None or not item.path or not Path(item.path).exists():
            raise HTTPException(404, f"no image file for {image_id!r}")
        return FileResponse(item.path)

    @app.post("/finalize")
    def post_finalize(body: FinalizeBody):
        try:
            return JSONResponse(queue.finalize(force=body.force))
        except ReviewError as exc:
            raise HTTPException(exc.code, str(exc))

    return app


def serve(queue: ReviewQueue, host: str = "127.0.0.1", port: int = 8765) -> None:
    import uvicorn

    uvicorn.run(create_app(queue), host=host, port=port, log_level="warning")
