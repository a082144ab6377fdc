"""Deterministic stand-in workers for closed-loop runs.

A mock worker connects to the gateway, registers, and answers every
frame it receives with annotations derived from a ground-truth
manifest, optionally corrupted by seeded noise.  The reply for a frame
is a pure function of (manifest, noise spec, seed, frame_id): the RNG
is re-seeded per frame, so replies do not depend on arrival order,
dropped frames, or how many workers share the sequence.  That makes
end-to-end runs reproducible and lets tests compute the expected reply
offline.

The worker is single-threaded.  It blocks on the socket with a short
timeout and uses timeouts as its heartbeat clock.
"""
from __future__ import annotations

import logging
import select
import socket
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import AI4ARError, InvariantError
from ..manifest import SequenceManifest
from ..netio import ConnectionClosed, read_message, write_message
from ..protocol import (BBox, Detection, ErrorMessage, Frame, Heartbeat,
                        OCRReading, Pose6D, WorkerKind, WorkerRegister,
                        WorkerResult)
from ..protocol.quaternions import canonicalize, normalize

log = logging.getLogger(__name__)


class RegistrationRefused(AI4ARError):
    """The gateway rejected this worker's registration."""


@dataclass(frozen=True)
class BBoxNoise:
    shift_fraction: float = 0.0   # uniform +-fraction of box size, per axis
    scale_low: float = 1.0
    scale_high: float = 1.0
    confidence_low: float = 1.0
    confidence_high: float = 1.0

    def __post_init__(self):
        if self.shift_fraction < 0:
            raise InvariantError("shift_fraction must be >= 0")
        if not 0 < self.scale_low <= self.scale_high:
            raise InvariantError("need 0 < scale_low <= scale_high")
        if not 0 <= self.confidence_low <= self.confidence_high <= 1:
            raise InvariantError("need 0 <= confidence_low <= confidence_high <= 1")


@dataclass(frozen=True)
class PoseNoise:
    rotation_deg: float = 0.0     # max rotation perturbation angle
    translation_mm: float = 0.0   # uniform +-mm per axis

    def __post_init__(self):
        if self.rotation_deg < 0 or self.translation_mm < 0:
            raise InvariantError("pose noise magnitudes must be >= 0")


@dataclass(frozen=True)
class TextNoise:
    corrupt_probability: float = 0.0   # chance a reading is garbled

    def __post_init__(self):
        if not 0 <= self.corrupt_probability <= 1:
            raise InvariantError("corrupt_probability must be in [0, 1]")


@dataclass(frozen=True)
class NoiseSpec:
    bbox: BBoxNoise = field(default_factory=BBoxNoise)
    pose: PoseNoise = field(default_factory=PoseNoise)
    text: TextNoise = field(default_factory=TextNoise)


_GARBLE_POOL = "0123456789-."


def _noisy_bbox(bbox: BBox, noise: BBoxNoise, rng: np.random.Generator) -> BBox:
    # Draw order is fixed: shift x, shift y, scale w, scale h.
    du = rng.uniform(-noise.shift_fraction, noise.shift_fraction) * bbox.w
    dv = rng.uniform(-noise.shift_fraction, noise.shift_fraction) * bbox.h
    sw = rng.uniform(noise.scale_low, noise.scale_high)
    sh = rng.uniform(noise.scale_low, noise.scale_high)
    if du == 0.0 and dv == 0.0 and sw == 1.0 and sh == 1.0:
        return bbox
    cx, cy = bbox.center
    w = bbox.w * sw
    h = bbox.h * sh
    return BBox(x=cx + du - w / 2, y=cy + dv - h / 2, w=w, h=h)


def _noisy_pose(pose: Pose6D, noise: PoseNoise,
                rng: np.random.Generator) -> Pose6D:
    axis = rng.normal(size=3)
    axis /= max(np.linalg.norm(axis), 1e-12)
    angle = rng.uniform(0.0, np.deg2rad(noise.rotation_deg))
    dt = rng.uniform(-noise.translation_mm, noise.translation_mm, size=3)
    if angle == 0.0 and not dt.any():
        return pose
    half = angle / 2.0
    dq = np.array([np.cos(half), *(np.sin(half) * axis)])
    w1, x1, y1, z1 = dq
    w2, x2, y2, z2 = pose.quaternion
    q = (w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
         w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
         w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
         w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2)
    translation = tuple(float(v) for v in
                        (np.asarray(pose.translation) + dt))
    return Pose6D(quaternion=canonicalize(normalize(q)),
                  translation=translation, object_id=pose.object_id)


def _garble(text: str, rng: np.random.Generator) -> str:
    if not text:
        return "?"
    chars = list(text)
    idx = int(rng.integers(0, len(chars)))
    pool = [c for c in _GARBLE_POOL if c != chars[idx]] or ["?"]
    chars[idx] = pool[int(rng.integers(0, len(pool)))]
    return "".join(chars)


class MockWorker:
    """Scripted worker answering from a ground-truth manifest.

    kind selects which annotation stream the worker produces; frames
    absent from the manifest get an empty reply flagged unknown_frame.
    """

    def __init__(self, worker_id: str, kind: WorkerKind,
                 manifest: SequenceManifest, seed: int = 0,
                 noise: NoiseSpec = NoiseSpec(),
                 deadline_ms: int = 100,
                 delay_s: float = 0.0,
                 heartbeat_interval_s: float = 1.0):
        if delay_s < 0:
            raise InvariantError("delay_s must be >= 0")
        self.worker_id = worker_id
        self.kind = WorkerKind(kind)
        self.manifest = manifest
        self.seed = int(seed)
        self.noise = noise
        self.deadline_ms = int(deadline_ms)
        self.delay_s = float(delay_s)
        self.heartbeat_interval_s = float(heartbeat_interval_s)
        self._gt = manifest.gt_by_frame_id()
        self.frames_answered = 0
        self.session_id: Optional[str] = None

    # -- pure reply construction ----------------------------------------

    def reply_for(self, frame_id: int) -> WorkerResult:
        record = self._gt.get(frame_id)
        if record is None:
            return WorkerResult(worker_id=self.worker_id, frame_id=frame_id,
                                unknown_frame=True)
        rng = np.random.default_rng([self.seed, frame_id])
        detections: tuple[Detection, ...] = ()
        poses: tuple[Pose6D, ...] = ()
        readings: tuple[OCRReading, ...] = ()
        if self.kind is WorkerKind.DETECTION:
            out = []
            for det in record.gt_detections:
                bbox = _noisy_bbox(det.bbox, self.noise.bbox, rng)
                conf = float(rng.uniform(self.noise.bbox.confidence_low,
                                         self.noise.bbox.confidence_high))
                out.append(Detection(bbox=bbox, class_id=det.class_id,
                                     class_name=det.class_name,
                                     confidence=conf))
            detections = tuple(out)
        elif self.kind is WorkerKind.POSE:
            poses = tuple(_noisy_pose(p, self.noise.pose, rng)
                          for p in record.gt_poses)
        elif self.kind is WorkerKind.OCR:
            out = []
            for reading in record.gt_readings:
                bbox = _noisy_bbox(reading.bbox, self.noise.bbox, rng)
                text = reading.text
                if rng.uniform() < self.noise.text.corrupt_probability:
                    text = _garble(text, rng)
                out.append(OCRReading(bbox=bbox, text=text,
                                      confidence=reading.confidence))
            readings = tuple(out)
        return WorkerResult(worker_id=self.worker_id, frame_id=frame_id,
                            detections=detections, poses=poses,
                            readings=readings)

    # -- network loop -----------------------------------------------------

    def run(self, host: str, port: int,
            max_frames: Optional[int] = None,
            connect_timeout: float = 10.0) -> int:
        """Serve until the gateway hangs up or max_frames are answered.
        Returns the number of frames answered."""
        sock = socket.create_connection((host, port), timeout=connect_timeout)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        sock.settimeout(None)
        beat_every = self.heartbeat_interval_s / 2.0
        try:
            write_message(sock, WorkerRegister(worker_id=self.worker_id,
                                               kind=self.kind,
                                               deadline_ms=self.deadline_ms))
            ack = read_message(sock)
            if isinstance(ack, ErrorMessage):
                raise RegistrationRefused(f"{ack.code}: {ack.message}")
            if not isinstance(ack, WorkerRegister):
                raise RegistrationRefused(f"expected registration ack, got "
                                          f"{type(ack).__name__}")
            self.session_id = ack.session_id
            last_beat = time.monotonic()
            while max_frames is None or self.frames_answered < max_frames:
                # Gate the blocking read on readability so quiet stretches
                # turn into heartbeats instead of mid-message timeouts.
                wait = max(0.0, last_beat + beat_every - time.monotonic())
                readable, _, _ = select.select([sock], [], [], wait)
                if readable:
                    message = read_message(sock)
                    if isinstance(message, Frame):
                        if self.delay_s:
                            time.sleep(self.delay_s)
                        write_message(sock, self.reply_for(message.frame_id))
                        self.frames_answered += 1
                    elif isinstance(message, ErrorMessage):
                        log.warning("worker %s got error %s: %s",
                                    self.worker_id, message.code,
                                    message.message)
                now = time.monotonic()
                if now - last_beat >= beat_every:
                    write_message(sock, Heartbeat(sender_id=self.worker_id))
                    last_beat = now
        except ConnectionClosed:
            pass
        finally:
            sock.close()
        return self.frames_answered
