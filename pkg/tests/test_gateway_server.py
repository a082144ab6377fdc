"""Gateway TCP front end, exercised with raw sockets.

Every test binds an ephemeral port and talks the real wire protocol,
so registration acks, error envelopes, fan-out, and eviction are all
observed exactly as a headset or worker process would see them.
"""
import json
import socket
import time

import pytest

from ai4ar.gateway import GatewayConfig, GatewayServer
from ai4ar.netio import ConnectionClosed, read_message, write_message
from ai4ar.protocol import (AnnotationSet, AnnotationStatus, BBox,
                            CameraIntrinsics, Detection, ErrorMessage, Frame,
                            Heartbeat, PixelFormat, StatsReport, StatsRequest,
                            WorkerKind, WorkerRegister, WorkerResult)

K = CameraIntrinsics(fx=100, fy=100, cx=2, cy=1.5, width=4, height=3)


def frame(frame_id):
    return Frame(frame_id=frame_id, timestamp_ns=frame_id, intrinsics=K,
                 pixel_format=PixelFormat.GRAY8, pixels=bytes(12))


def connect(address, timeout=5.0):
    sock = socket.create_connection(address, timeout=timeout)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return sock


def register(address, worker_id, deadline_ms=100):
    sock = connect(address)
    write_message(sock, WorkerRegister(worker_id=worker_id,
                                       kind=WorkerKind.DETECTION,
                                       deadline_ms=deadline_ms))
    ack = read_message(sock)
    assert isinstance(ack, WorkerRegister)
    return sock, ack


def server(**cfg):
    stats_log = cfg.pop("stats_log", None)
    return GatewayServer(host="127.0.0.1", port=0,
                         config=GatewayConfig(**cfg), stats_log=stats_log)


def test_register_ack_over_tcp():
    with server() as gw:
        sock, ack = register(gw.address, "det-0", deadline_ms=40)
        assert ack.worker_id == "det-0"
        assert ack.deadline_ms == 40
        assert ack.session_id
        sock.close()


def test_duplicate_register_refused():
    with server() as gw:
        keep, _ = register(gw.address, "w")
        dup = connect(gw.address)
        write_message(dup, WorkerRegister(worker_id="w",
                                          kind=WorkerKind.POSE,
                                          deadline_ms=50))
        err = read_message(dup)
        assert isinstance(err, ErrorMessage)
        assert err.code == "DuplicateWorker"
        with pytest.raises((ConnectionClosed, OSError)):
            read_message(dup)  # gateway hangs up after the refusal
        keep.close()
        dup.close()


def test_frame_fanout_and_annotation_roundtrip():
    with server() as gw:
        wsock, _ = register(gw.address, "det-0")
        client = connect(gw.address)
        write_message(client, frame(11))

        fanned = read_message(wsock)
        assert isinstance(fanned, Frame)
        assert fanned.frame_id == 11
        assert fanned.pixels == bytes(12)

        d = Detection(bbox=BBox(1, 1, 2, 2), class_id=3, class_name="obj",
                      confidence=0.75)
        write_message(wsock, WorkerResult(worker_id="det-0", frame_id=11,
                                          detections=(d,)))
        ann = read_message(client)
        assert isinstance(ann, AnnotationSet)
        assert ann.frame_id == 11
        assert ann.status is AnnotationStatus.COMPLETE
        assert ann.detections == (d,)
        assert dict(ann.worker_timings)["det-0"] >= 0
        wsock.close()
        client.close()


def test_frame_without_workers_is_an_error():
    with server() as gw:
        client = connect(gw.address)
        write_message(client, frame(0))
        err = read_message(client)
        assert isinstance(err, ErrorMessage)
        assert err.code == "NoWorkers"
        client.close()


def test_silent_worker_times_out_to_partial():
    with server(default_deadline_ms=30) as gw:
        wsock, _ = register(gw.address, "slowpoke", deadline_ms=30)
        client = connect(gw.address)
        t0 = time.monotonic()
        write_message(client, frame(5))
        ann = read_message(client)
        took = time.monotonic() - t0
        assert isinstance(ann, AnnotationSet)
        assert ann.status is AnnotationStatus.PARTIAL
        assert ann.detections == ()
        assert took >= 0.030
        assert took < 2.0
        wsock.close()
        client.close()


def test_stats_request_reports_counts():
    with server() as gw:
        wsock, _ = register(gw.address, "w")
        client = connect(gw.address)
        write_message(client, frame(1))
        read_message(wsock)
        write_message(wsock, WorkerResult(worker_id="w", frame_id=1))
        ann = read_message(client)
        assert ann.status is AnnotationStatus.COMPLETE

        write_message(client, StatsRequest())
        report = read_message(client)
        assert isinstance(report, StatsReport)
        stats = report.stats
        assert stats["frames_routed"] == 1
        assert stats["live_workers"] == 1
        assert stats["statuses"]["complete"] == 1
        assert stats["per_worker"]["w"]["count"] == 1
        wsock.close()
        client.close()


def test_worker_disconnect_frees_the_name():
    with server() as gw:
        wsock, _ = register(gw.address, "w")
        wsock.close()
        deadline = time.monotonic() + 2.0
        while time.monotonic() < deadline:
            again = connect(gw.address)
            write_message(again, WorkerRegister(worker_id="w",
                                                kind=WorkerKind.OCR,
                                                deadline_ms=20))
            reply = read_message(again)
            again.close()
            if isinstance(reply, WorkerRegister):
                return  # server noticed the hangup and let us back in
            time.sleep(0.01)
        pytest.fail("worker name never freed after disconnect")


def test_heartbeats_keep_worker_alive():
    with server(heartbeat_interval_s=0.05, missed_heartbeats=2) as gw:
        wsock, _ = register(gw.address, "w")
        for _ in range(8):
            time.sleep(0.04)
            write_message(wsock, Heartbeat(sender_id="w"))
        client = connect(gw.address)
        write_message(client, StatsRequest())
        report = read_message(client)
        assert report.stats["live_workers"] == 1
        wsock.close()
        client.close()


def test_silent_worker_gets_evicted():
    with server(heartbeat_interval_s=0.05, missed_heartbeats=2) as gw:
        wsock, _ = register(gw.address, "w")
        time.sleep(0.35)  # well past 2 * 0.05s without a heartbeat
        client = connect(gw.address)
        write_message(client, StatsRequest())
        report = read_message(client)
        assert report.stats["live_workers"] == 0
        wsock.close()
        client.close()


def test_client_gets_error_for_unexpected_message():
    with server() as gw:
        client = connect(gw.address)
        write_message(client, WorkerResult(worker_id="x", frame_id=0))
        err = read_message(client)
        assert isinstance(err, ErrorMessage)
        assert err.code == "UnexpectedMessage"
        client.close()


def test_garbage_bytes_get_protocol_error():
    with server() as gw:
        client = connect(gw.address)
        client.sendall(b"GET / HTTP/1.1\r\nHost: nope\r\n\r\n" + bytes(64))
        err = read_message(client)
        assert isinstance(err, ErrorMessage)
        assert err.code == "BadMessage"
        client.close()


def test_stats_log_has_final_line(tmp_path):
    path = tmp_path / "stats.jsonl"
    gw = server(stats_log=str(path))
    with gw:
        wsock, _ = register(gw.address, "w")
        client = connect(gw.address)
        write_message(client, frame(1))
        read_message(wsock)
        write_message(wsock, WorkerResult(worker_id="w", frame_id=1))
        read_message(client)
        wsock.close()
        client.close()
    lines = [json.loads(s) for s in path.read_text().splitlines()]
    assert lines  # stop() always appends a closing snapshot
    last = lines[-1]
    assert last["final"] is True
    assert last["frames_routed"] == 1
    assert last["statuses"]["complete"] == 1
