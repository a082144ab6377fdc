"""Gateway routing logic, transport-free.

The core owns worker registration, heartbeat liveness, frame fan-out
bookkeeping, per-worker deadlines, and result aggregation.  It never
touches sockets or threads of its own: callers inject a clock and
per-peer send callbacks, which makes every deadline and eviction rule
testable with fake time.  All methods are thread-safe.

Aggregation rules:
  - a worker's result counts only if it arrives within that worker's
    deadline, measured from dispatch;
  - an AnnotationSet is emitted exactly once per accepted frame, either
    early (all expected workers replied) or when the last deadline
    passes;
  - status is complete when every worker that was live at dispatch
    replied in time, failed when the frame could not be fanned out at
    all, and partial otherwise (timeouts included).

Frames arriving while every live worker is saturated (at its in-flight
cap) are dropped and counted, never queued: a stale frame is worthless
in AR, so freshness beats completeness.
"""
from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field
from typing import Callable, Optional

from ..errors import AI4ARError
from ..protocol import (AnnotationSet, AnnotationStatus, Frame, Message,
                        WorkerRegister, WorkerResult)
from ..util import percentile


class GatewayError(AI4ARError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass(frozen=True)
class GatewayConfig:
    default_deadline_ms: int = 100
    heartbeat_interval_s: float = 1.0
    missed_heartbeats: int = 3
    max_in_flight: int = 64
    latency_window: int = 100_000

    def __post_init__(self):
        if self.default_deadline_ms <= 0:
            raise GatewayError("InvalidConfig", "default_deadline_ms must be > 0")
        if self.heartbeat_interval_s <= 0:
            raise GatewayError("InvalidConfig", "heartbeat_interval_s must be > 0")
        if self.missed_heartbeats < 1 or self.max_in_flight < 1:
            raise GatewayError("InvalidConfig",
                               "missed_heartbeats and max_in_flight must be >= 1")


@dataclass(frozen=True)
class WorkerLatencyStats:
    count: int
    p50_ns: int
    p90_ns: int
    p99_ns: int

    def to_dict(self) -> dict:
        return {"count": self.count, "p50_ns": self.p50_ns,
                "p90_ns": self.p90_ns, "p99_ns": self.p99_ns}


@dataclass(frozen=True)
class GatewayStats:
    frames_routed: int
    dropped_frames: int
    timeouts: int
    live_workers: int
    statuses: dict[str, int]
    per_worker: dict[str, WorkerLatencyStats]

    def to_dict(self) -> dict:
        return {"frames_routed": self.frames_routed,
                "dropped_frames": self.dropped_frames,
                "timeouts": self.timeouts,
                "live_workers": self.live_workers,
                "statuses": dict(self.statuses),
                "per_worker": {w: s.to_dict()
                               for w, s in self.per_worker.items()}}


class _Worker:
    __slots__ = ("descriptor", "send", "last_seen", "in_flight", "session_id",
                 "registered_at")

    def __init__(self, descriptor: WorkerRegister, send, now: float):
        self.descriptor = descriptor
        self.send = send
        self.last_seen = now
        self.in_flight: set[int] = set()
        self.session_id = uuid.uuid4().hex
        self.registered_at = now


class _Pending:
    __slots__ = ("frame_id", "reply", "dispatched_at", "deadlines",
                 "live_at_dispatch", "results", "finalize_at", "done")

    def __init__(self, frame_id, reply, dispatched_at, deadlines,
                 live_at_dispatch):
        self.frame_id = frame_id
        self.reply = reply
        self.dispatched_at = dispatched_at
        self.deadlines = deadlines            # worker_id -> seconds
        self.live_at_dispatch = live_at_dispatch
        self.results: dict[str, tuple[WorkerResult, int]] = {}
        self.finalize_at = dispatched_at + (max(deadlines.values())
                                            if deadlines else 0.0)
        self.done = False


class GatewayCore:
    def __init__(self, config: GatewayConfig = GatewayConfig(),
                 clock: Callable[[], float] = time.monotonic):
        self.config = config
        self.clock = clock
        self._lock = threading.RLock()
        self._workers: dict[str, _Worker] = {}
        self._order: list[str] = []           # registration order
        self._pending: dict[int, _Pending] = {}
        self._frames_routed = 0
        self._dropped = 0
        self._timeouts = 0
        self._statuses = {s.value: 0 for s in AnnotationStatus}
        self._latencies: dict[str, list[int]] = {}

    # -- worker lifecycle ------------------------------------------------

    def register_worker(self, descriptor: WorkerRegister,
                        send: Callable[[Message], None]) -> WorkerRegister:
        """Admit a worker; returns the ack to send back (descriptor echoed
        with a session id)."""
        with self._lock:
            self._evict_stale_locked()
            if descriptor.worker_id in self._workers:
                raise GatewayError("DuplicateWorker",
                                   f"worker {descriptor.worker_id!r} is "
                                   f"already registered")
            worker = _Worker(descriptor, send, self.clock())
            self._workers[descriptor.worker_id] = worker
            self._order.append(descriptor.worker_id)
            self._latencies.setdefault(descriptor.worker_id, [])
            return WorkerRegister(worker_id=descriptor.worker_id,
                                  kind=descriptor.kind,
                                  deadline_ms=descriptor.deadline_ms,
                                  session_id=worker.session_id)

    def heartbeat(self, worker_id: str) -> None:
        with self._lock:
            worker = self._workers.get(worker_id)
            if worker is not None:
                worker.last_seen = self.clock()

    def worker_gone(self, worker_id: str) -> None:
        """Forget a worker whose connection dropped."""
        with self._lock:
            self._remove_worker_locked(worker_id)

    def _remove_worker_locked(self, worker_id: str) -> None:
        if self._workers.pop(worker_id, None) is not None:
            self._order.remove(worker_id)

    def evict_stale(self) -> list[str]:
        with self._lock:
            return self._evict_stale_locked()

    def _evict_stale_locked(self) -> list[str]:
        horizon = (self.clock()
                   - self.config.heartbeat_interval_s * self.config.missed_heartbeats)
        stale = [wid for wid, w in self._workers.items()
                 if w.last_seen < horizon]
        for wid in stale:
            self._remove_worker_locked(wid)
        return stale

    def live_workers(self) -> list[str]:
        with self._lock:
            self._evict_stale_locked()
            return list(self._order)

    # -- frame path ------------------------------------------------------

    def submit_frame(self, frame: Frame,
                     reply: Callable[[AnnotationSet], None]) -> bool:
        """Fan a frame out.  Returns False when the frame was dropped
        because every live worker is saturated.  Raises NoWorkers when
        nothing is registered."""
        with self._lock:
            self._evict_stale_locked()
            if not self._workers:
                raise GatewayError("NoWorkers", "no live workers registered")
            if frame.frame_id in self._pending:
                self._dropped += 1
                return False
            live = list(self._order)
            targets = [wid for wid in live
                       if len(self._workers[wid].in_flight) < self.config.max_in_flight]
            if not targets:
                self._dropped += 1
                return False
            now = self.clock()
            deadlines = {wid: self._workers[wid].descriptor.deadline_ms / 1000.0
                         for wid in targets}
            pending = _Pending(frame.frame_id, reply, now, deadlines,
                               tuple(live))
            self._pending[frame.frame_id] = pending
            self._frames_routed += 1
            sends = []
            for wid in targets:
                self._workers[wid].in_flight.add(frame.frame_id)
                sends.append((wid, self._workers[wid].send))
        delivered = 0
        for wid, send in sends:
            try:
                send(frame)
                delivered += 1
            except Exception:
                self.worker_gone(wid)
        if delivered == 0:
            # Fan-out failed entirely; the frame was accepted, so it still
            # gets its one AnnotationSet, marked failed.
            self._finalize(frame.frame_id, force_failed=True)
        return True

    def submit_result(self, result: WorkerResult,
                      at: Optional[float] = None) -> None:
        """Route a worker result to its pending frame.  Late or unknown
        results are discarded; in-time results may finalize the frame."""
        now = self.clock() if at is None else at
        finalize = False
        with self._lock:
            worker = self._workers.get(result.worker_id)
            if worker is not None:
                worker.last_seen = now
                worker.in_flight.discard(result.frame_id)
            pending = self._pending.get(result.frame_id)
            if pending is None or pending.done:
                return
            deadline = pending.deadlines.get(result.worker_id)
            if deadline is None:
                return
            latency = now - pending.dispatched_at
            if latency > deadline or result.worker_id in pending.results:
                return
            pending.results[result.worker_id] = (result,
                                                 round(latency * 1e9))
            if set(pending.results) >= set(pending.live_at_dispatch):
                finalize = True
        if finalize:
            self._finalize(result.frame_id)

    def due_time(self) -> Optional[float]:
        with self._lock:
            pending = [p.finalize_at for p in self._pending.values()
                       if not p.done]
            return min(pending) if pending else None

    def finalize_due(self) -> None:
        now = self.clock()
        with self._lock:
            due = [p.frame_id for p in self._pending.values()
                   if not p.done and now >= p.finalize_at]
        for frame_id in due:
            self._finalize(frame_id)

    def _finalize(self, frame_id: int, force_failed: bool = False) -> None:
        with self._lock:
            pending = self._pending.get(frame_id)
            if pending is None or pending.done:
                return
            pending.done = True
            del self._pending[frame_id]
            detections = []
            poses = []
            readings = []
            timings = []
            for wid in pending.live_at_dispatch:
                if wid in self._workers:
                    self._workers[wid].in_flight.discard(frame_id)
                entry = pending.results.get(wid)
                if entry is None:
                    if wid in pending.deadlines:
                        self._timeouts += 1
                    continue
                result, latency_ns = entry
                detections.extend(result.detections)
                poses.extend(result.poses)
                readings.extend(result.readings)
                timings.append((wid, latency_ns))
                self._record_latency_locked(wid, latency_ns)
            if force_failed:
                status = AnnotationStatus.FAILED
            elif set(pending.results) >= set(pending.live_at_dispatch):
                status = AnnotationStatus.COMPLETE
            else:
                status = AnnotationStatus.PARTIAL
            self._statuses[status.value] += 1
            annotation = AnnotationSet(frame_id=frame_id,
                                       detections=tuple(detections),
                                       poses=tuple(poses),
                                       readings=tuple(readings),
                                       worker_timings=tuple(timings),
                                       status=status)
            reply = pending.reply
        try:
            reply(annotation)
        except Exception:
            with self._lock:
                self._dropped += 1

    def _record_latency_locked(self, worker_id: str, latency_ns: int) -> None:
        window = self._latencies.setdefault(worker_id, [])
        window.append(latency_ns)
        if len(window) > self.config.latency_window:
            del window[:len(window) - self.config.latency_window]

    # -- stats -----------------------------------------------------------

    def stats_snapshot(self) -> GatewayStats:
        with self._lock:
            per_worker = {}
            for wid, lats in self._latencies.items():
                if lats:
                    per_worker[wid] = WorkerLatencyStats(
                        count=len(lats),
                        p50_ns=int(percentile(lats, 50)),
                        p90_ns=int(percentile(lats, 90)),
                        p99_ns=int(percentile(lats, 99)))
                else:
                    per_worker[wid] = WorkerLatencyStats(0, 0, 0, 0)
            return GatewayStats(frames_routed=self._frames_routed,
                                dropped_frames=self._dropped,
                                timeouts=self._timeouts,
                                live_workers=len(self._workers),
                                statuses=dict(self._statuses),
                                per_worker=per_worker)
