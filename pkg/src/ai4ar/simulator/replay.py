"""Headset replay: stream a recorded sequence to the gateway at a
fixed frame rate and measure the round trip.

Pacing uses an absolute schedule (frame i leaves at t0 + i/fps) rather
than per-frame sleeps, so timing error does not accumulate.  Frames are
read from disk and encoded before the clock starts; the paced loop only
writes bytes.  A receiver thread collects AnnotationSets and timestamps
them against the matching send.

The reported wall time always covers the full schedule window
(n frames at fps take at least n/fps seconds), so achieved_fps can
never exceed the configured rate.
"""
from __future__ import annotations

import json
import logging
import select
import socket
import threading
import time
from dataclasses import dataclass, field
from typing import Optional

from ..errors import InvariantError
from ..manifest import SequenceManifest
from ..netio import ConnectionClosed, read_message, write_message
from ..protocol import (AnnotationSet, AnnotationStatus, ErrorMessage,
                        encode_message)
from ..util import percentile

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ReplayConfig:
    fps: float = 30.0
    max_frames: Optional[int] = None
    drain_timeout_s: float = 5.0
    connect_timeout_s: float = 10.0

    def __post_init__(self):
        if self.fps <= 0:
            raise InvariantError("fps must be > 0")
        if self.max_frames is not None and self.max_frames <= 0:
            raise InvariantError("max_frames must be > 0 when set")
        if self.drain_timeout_s < 0:
            raise InvariantError("drain_timeout_s must be >= 0")


@dataclass(frozen=True)
class LatencyReport:
    frames_sent: int
    frames_answered: int
    frames_unanswered: int
    wall_time_s: float
    achieved_fps: float
    p50_ns: int
    p90_ns: int
    p99_ns: int
    statuses: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"frames_sent": self.frames_sent,
                "frames_answered": self.frames_answered,
                "frames_unanswered": self.frames_unanswered,
                "wall_time_s": self.wall_time_s,
                "achieved_fps": self.achieved_fps,
                "p50_ns": self.p50_ns,
                "p90_ns": self.p90_ns,
                "p99_ns": self.p99_ns,
                "statuses": dict(self.statuses)}


class _Receiver(threading.Thread):
    def __init__(self, sock: socket.socket):
        super().__init__(name="replay-recv", daemon=True)
        self.sock = sock
        self.annotations: dict[int, AnnotationSet] = {}
        self.recv_times: dict[int, float] = {}
        self.errors: list[ErrorMessage] = []
        self.lock = threading.Lock()
        self.got_one = threading.Event()

    def run(self) -> None:
        while True:
            try:
                readable, _, _ = select.select([self.sock], [], [], 0.2)
                if not readable:
                    continue
                message = read_message(self.sock)
            except (ConnectionClosed, OSError, ValueError):
                return
            now = time.monotonic()
            if isinstance(message, AnnotationSet):
                with self.lock:
                    # First annotation per frame wins; the gateway emits
                    # exactly once, so duplicates would be a peer bug.
                    if message.frame_id not in self.annotations:
                        self.annotations[message.frame_id] = message
                        self.recv_times[message.frame_id] = now
                self.got_one.set()
            elif isinstance(message, ErrorMessage):
                with self.lock:
                    self.errors.append(message)
                self.got_one.set()

    def answered_count(self) -> int:
        with self.lock:
            return len(self.annotations)


def replay_sequence(manifest: SequenceManifest, host: str, port: int,
                    config: ReplayConfig = ReplayConfig(),
                    annotations_out: Optional[str] = None) -> LatencyReport:
    """Stream the sequence and return round-trip statistics.

    annotations_out, when given, receives a JSON dump of every
    AnnotationSet keyed by frame id, suitable for offline evaluation.
    """
    frames = manifest.frames
    if config.max_frames is not None:
        frames = frames[:config.max_frames]
    if not frames:
        raise InvariantError("manifest holds no frames to replay")

    payloads = []
    for record in frames:
        message = manifest.load_frame_message(record)
        payloads.append((record.frame_id, encode_message(message)))

    sock = socket.create_connection((host, port),
                                    timeout=config.connect_timeout_s)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    sock.settimeout(None)
    receiver = _Receiver(sock)
    receiver.start()

    period = 1.0 / config.fps
    send_times: dict[int, float] = {}
    t0 = time.monotonic()
    try:
        for i, (frame_id, payload) in enumerate(payloads):
            due = t0 + i * period
            delay = due - time.monotonic()
            if delay > 0:
                time.sleep(delay)
            send_times[frame_id] = time.monotonic()
            sock.sendall(payload)
        schedule_end = t0 + len(payloads) * period
        deadline = max(schedule_end, time.monotonic()) + config.drain_timeout_s
        while (receiver.answered_count() < len(payloads)
               and time.monotonic() < deadline):
            receiver.got_one.wait(timeout=0.05)
            receiver.got_one.clear()
        end = max(time.monotonic(), schedule_end)
    finally:
        try:
            sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        sock.close()
        receiver.join(timeout=5)

    with receiver.lock:
        annotations = dict(receiver.annotations)
        recv_times = dict(receiver.recv_times)
        errors = list(receiver.errors)
    for err in errors:
        log.warning("gateway error during replay: %s: %s",
                    err.code, err.message)

    latencies_ns = sorted(
        int((recv_times[fid] - send_times[fid]) * 1e9)
        for fid in annotations if fid in send_times)
    statuses = {status.value: 0 for status in AnnotationStatus}
    for annotation in annotations.values():
        statuses[annotation.status.value] += 1

    wall = end - t0
    report = LatencyReport(
        frames_sent=len(payloads),
        frames_answered=len(annotations),
        frames_unanswered=len(payloads) - len(annotations),
        wall_time_s=wall,
        achieved_fps=len(payloads) / wall if wall > 0 else 0.0,
        p50_ns=int(percentile(latencies_ns, 50)) if latencies_ns else 0,
        p90_ns=int(percentile(latencies_ns, 90)) if latencies_ns else 0,
        p99_ns=int(percentile(latencies_ns, 99)) if latencies_ns else 0,
        statuses=statuses)

    if annotations_out is not None:
        dump = {"source": str(manifest.root),
                "report": report.to_dict(),
                "annotations": {str(fid): ann.to_header()
                                for fid, ann in sorted(annotations.items())}}
        with open(annotations_out, "w", encoding="utf-8") as fh:
            json.dump(dump, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return report
