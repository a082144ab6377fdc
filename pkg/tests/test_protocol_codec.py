import json
import socket
import struct
import threading

import numpy as np
import pytest

from ai4ar.netio import ConnectionClosed, read_message, write_message
from ai4ar.protocol import (FIXED_OVERHEAD, MAGIC, MAX_MESSAGE_BYTES, VERSION,
                            AnnotationSet, AnnotationStatus, BBox,
                            CameraIntrinsics, DecodeError, DecodeErrorKind,
                            Detection, EncodeError, Envelope, ErrorMessage,
                            Frame, HeadPose, Heartbeat, MsgType, OCRReading,
                            PixelFormat, Pose6D, StatsReport, StatsRequest,
                            WorkerKind, WorkerRegister, WorkerResult,
                            decode_envelope, decode_message, encode_envelope,
                            encode_message)

K = CameraIntrinsics(fx=600, fy=600, cx=320, cy=180, width=640, height=360)


def sample_messages():
    rng = np.random.default_rng(0)
    pixels = rng.integers(0, 256, size=640 * 360, dtype=np.uint8).tobytes()
    q = tuple(np.array([0.9, 0.1, 0.4, 0.1]) / np.linalg.norm([0.9, 0.1, 0.4, 0.1]))
    pose = Pose6D(quaternion=q, translation=(10.0, -5.0, 700.0), object_id=3)
    det = Detection(bbox=BBox(10, 20, 30, 40), class_id=1, class_name="pdt",
                    confidence=0.875)
    reading = OCRReading(bbox=BBox(5, 5, 50, 20), text="12.3", confidence=1.0)
    return [
        Frame(frame_id=7, timestamp_ns=123456789, intrinsics=K,
              pixel_format=PixelFormat.GRAY8, pixels=pixels,
              head_pose=HeadPose(quaternion=(1, 0, 0, 0),
                                 translation=(0.1, -0.2, 1.5))),
        AnnotationSet(frame_id=7, detections=(det,), poses=(pose,),
                      readings=(reading,),
                      worker_timings=(("det-0", 1200345),),
                      status=AnnotationStatus.PARTIAL),
        WorkerRegister(worker_id="det-0", kind=WorkerKind.DETECTION,
                       deadline_ms=100, session_id="abc123"),
        WorkerResult(worker_id="det-0", frame_id=7, detections=(det,)),
        Heartbeat(sender_id="det-0"),
        ErrorMessage(code="Saturated", message="all workers at capacity"),
        StatsRequest(),
        StatsReport(stats={"frames_routed": 12, "statuses": {"complete": 12}}),
    ]


def test_roundtrip_every_message_type():
    seen = set()
    for msg in sample_messages():
        wire = encode_message(msg)
        back = decode_message(wire)
        assert back == msg
        assert encode_message(back) == wire  # byte-identical re-encode
        seen.add(type(msg))
    assert len(seen) == len(MsgType)


def test_fixed_overhead_and_layout():
    wire = encode_message(Heartbeat(sender_id="x"))
    header = json.dumps({"sender_id": "x"}, sort_keys=True,
                        separators=(",", ":")).encode()
    assert wire[:4] == MAGIC == b"A4AR"
    assert wire[4] == VERSION == 1
    assert wire[5] == MsgType.HEARTBEAT == 5
    assert struct.unpack_from("<I", wire, 6)[0] == len(header)
    assert wire[10:10 + len(header)] == header
    assert struct.unpack_from("<I", wire, 10 + len(header))[0] == 0
    assert len(wire) == FIXED_OVERHEAD + len(header)
    assert FIXED_OVERHEAD == 14


def test_header_is_canonical_json():
    wire = encode_message(sample_messages()[1])
    header_len = struct.unpack_from("<I", wire, 6)[0]
    header = wire[10:10 + header_len]
    parsed = json.loads(header)
    recanonical = json.dumps(parsed, sort_keys=True, separators=(",", ":"),
                             ensure_ascii=False).encode("utf-8")
    assert header == recanonical


def kind_of(data: bytes) -> DecodeErrorKind:
    with pytest.raises(DecodeError) as err:
        decode_message(data)
    return err.value.kind


def test_decode_error_classification():
    good = encode_message(Heartbeat(sender_id="w"))
    assert kind_of(b"") == DecodeErrorKind.TRUNCATED
    assert kind_of(b"A4") == DecodeErrorKind.TRUNCATED
    assert kind_of(b"NOPE" + good[4:]) == DecodeErrorKind.WRONG_PROTOCOL
    assert kind_of(b"XY") == DecodeErrorKind.WRONG_PROTOCOL
    v2 = bytearray(good)
    v2[4] = 2
    assert kind_of(bytes(v2)) == DecodeErrorKind.WRONG_PROTOCOL
    assert kind_of(good[:9]) == DecodeErrorKind.TRUNCATED
    assert kind_of(good[:-1]) == DecodeErrorKind.TRUNCATED
    assert kind_of(good + b"!") == DecodeErrorKind.TRAILING_DATA
    t99 = bytearray(good)
    t99[5] = 99
    assert kind_of(bytes(t99)) == DecodeErrorKind.UNKNOWN_TYPE
    t0 = bytearray(good)
    t0[5] = 0
    assert kind_of(bytes(t0)) == DecodeErrorKind.UNKNOWN_TYPE


def test_decode_error_oversize_lengths():
    big = struct.pack("<4sBBI", MAGIC, VERSION, 5, MAX_MESSAGE_BYTES)
    assert kind_of(big) == DecodeErrorKind.TOO_LARGE
    env = struct.pack("<4sBBI", MAGIC, VERSION, 1, 2) + b"{}" + \
        struct.pack("<I", MAX_MESSAGE_BYTES)
    assert kind_of(env) == DecodeErrorKind.TOO_LARGE


def test_decode_error_header_content():
    def craft(header_bytes: bytes, msg_type: int = 5, blob: bytes = b"") -> bytes:
        return encode_envelope(Envelope(msg_type=msg_type,
                                        header=header_bytes, blob=blob))

    assert kind_of(craft(b"not json")) == DecodeErrorKind.MALFORMED_HEADER
    assert kind_of(craft(b"\xff\xfe")) == DecodeErrorKind.MALFORMED_HEADER
    assert kind_of(craft(b"[1,2]")) == DecodeErrorKind.MALFORMED_HEADER
    assert kind_of(craft(b"{}")) == DecodeErrorKind.MALFORMED_HEADER  # key missing
    # invariant violations inside a well-formed header
    bad_reg = json.dumps({"worker_id": "", "kind": "detection",
                          "deadline_ms": 5, "session_id": None}).encode()
    assert kind_of(craft(bad_reg, msg_type=3)) == DecodeErrorKind.INVALID_MESSAGE
    # non-Frame messages must not carry a blob
    hb = json.dumps({"sender_id": "w"}).encode()
    assert kind_of(craft(hb, msg_type=5, blob=b"x")) == DecodeErrorKind.INVALID_MESSAGE
    # Frame whose blob length disagrees with its intrinsics
    frame_header = json.dumps({
        "frame_id": 0, "timestamp_ns": 0, "intrinsics": K.to_dict(),
        "pixel_format": "GRAY8", "head_pose": None}).encode()
    assert kind_of(craft(frame_header, msg_type=1,
                         blob=b"xy")) == DecodeErrorKind.INVALID_MESSAGE


def test_encode_rejects_oversize_and_foreign():
    with pytest.raises(EncodeError):
        encode_envelope(Envelope(msg_type=1, header=b"{}",
                                 blob=bytes(MAX_MESSAGE_BYTES)))
    with pytest.raises(EncodeError):
        encode_message("not a message")


def test_decode_envelope_keeps_raw_header():
    env = decode_envelope(encode_message(Heartbeat(sender_id="w")))
    assert env.msg_type == MsgType.HEARTBEAT
    assert json.loads(env.header) == {"sender_id": "w"}
    assert env.blob == b""


def test_netio_roundtrip_over_socketpair():
    a, b = socket.socketpair()
    try:
        messages = sample_messages()
        sent = []

        def writer():
            for msg in messages:
                write_message(a, msg)
                sent.append(msg)
            a.shutdown(socket.SHUT_WR)

        t = threading.Thread(target=writer)
        t.start()
        received = []
        while True:
            try:
                received.append(read_message(b))
            except ConnectionClosed as err:
                assert err.clean
                break
        t.join()
        assert received == sent
    finally:
        a.close()
        b.close()


def test_netio_mid_message_close_is_unclean():
    a, b = socket.socketpair()
    try:
        wire = encode_message(Heartbeat(sender_id="w"))
        a.sendall(wire[:7])
        a.shutdown(socket.SHUT_WR)
        with pytest.raises(ConnectionClosed) as err:
            read_message(b)
        assert not err.value.clean
    finally:
        a.close()
        b.close()


def test_netio_refuses_oversize_before_reading_payload():
    a, b = socket.socketpair()
    try:
        a.sendall(struct.pack("<4sBBI", MAGIC, VERSION, 5, MAX_MESSAGE_BYTES))
        with pytest.raises(DecodeError) as err:
            read_message(b)
        assert err.value.kind == DecodeErrorKind.TOO_LARGE
    finally:
        a.close()
        b.close()
