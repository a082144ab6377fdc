"""TCP front end for the gateway core.

One listening socket serves both kinds of peers.  A connection that
opens with WorkerRegister becomes a worker link: it receives fanned-out
frames and sends back WorkerResult and Heartbeat messages.  Any other
opening message marks a client link: Frames come in, AnnotationSets go
out, and StatsRequest gets a StatsReport.

Each connection gets a reader thread; a single housekeeping thread
finalizes frames whose deadlines passed and evicts silent workers.
Writes to one socket are serialized with a per-connection lock.
"""
from __future__ import annotations

import json
import logging
import socket
import threading
from typing import Optional

from ..netio import ConnectionClosed, read_message, write_message
from ..protocol import (AnnotationSet, DecodeError, ErrorMessage, Frame,
                        Heartbeat, Message, StatsReport, StatsRequest,
                        WorkerRegister, WorkerResult)
from .core import GatewayConfig, GatewayCore, GatewayError

log = logging.getLogger(__name__)

HOUSEKEEPING_PERIOD_S = 0.002


class _Link:
    """A connected peer with serialized writes."""

    def __init__(self, sock: socket.socket, peer: str):
        self.sock = sock
        self.peer = peer
        self.lock = threading.Lock()
        self.closed = False

    def send(self, message: Message) -> None:
        with self.lock:
            if self.closed:
                raise ConnectionClosed(f"link to {self.peer} is closed")
            write_message(self.sock, message)

    def close(self) -> None:
        with self.lock:
            if not self.closed:
                self.closed = True
                try:
                    self.sock.shutdown(socket.SHUT_RDWR)
                except OSError:
                    pass
                self.sock.close()


class GatewayServer:
    """Listening gateway; `with GatewayServer(...) as gw:` serves until exit.

    Pass port 0 to bind an ephemeral port; the bound address is available
    as `.address` after start().
    """

    def __init__(self, host: str = "127.0.0.1", port: int = 7401,
                 config: GatewayConfig = GatewayConfig(),
                 stats_log: Optional[str] = None):
        self.core = GatewayCore(config)
        self._host = host
        self._port = port
        self._listener: Optional[socket.socket] = None
        self._threads: list[threading.Thread] = []
        self._links: set[_Link] = set()
        self._links_lock = threading.Lock()
        self._stop = threading.Event()
        self._stats_log_path = stats_log
        self._stats_log_lock = threading.Lock()
        self.address: Optional[tuple[str, int]] = None

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> tuple[str, int]:
        listener = socket.create_server((self._host, self._port))
        listener.settimeout(0.2)
        self._listener = listener
        self.address = listener.getsockname()[:2]
        for target, name in ((self._accept_loop, "gw-accept"),
                             (self._housekeeping_loop, "gw-housekeeping")):
            thread = threading.Thread(target=target, name=name, daemon=True)
            thread.start()
            self._threads.append(thread)
        log.info("gateway listening on %s:%d", *self.address)
        return self.address

    def stop(self) -> None:
        self._stop.set()
        if self._listener is not None:
            self._listener.close()
        with self._links_lock:
            links = list(self._links)
        for link in links:
            link.close()
        for thread in self._threads:
            thread.join(timeout=5)
        self._write_stats_line(final=True)

    def __enter__(self) -> "GatewayServer":
        self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.stop()

    def wait(self) -> None:
        """Block until stop() is called from another thread or a signal
        handler."""
        self._stop.wait()

    # -- accept / per-connection readers ------------------------------------

    def _accept_loop(self) -> None:
        assert self._listener is not None
        while not self._stop.is_set():
            try:
                conn, addr = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            link = _Link(conn, f"{addr[0]}:{addr[1]}")
            with self._links_lock:
                self._links.add(link)
            thread = threading.Thread(target=self._serve_link, args=(link,),
                                      name=f"gw-conn-{link.peer}", daemon=True)
            thread.start()
            self._threads.append(thread)

    def _serve_link(self, link: _Link) -> None:
        worker_id: Optional[str] = None
        try:
            first = read_message(link.sock)
            if isinstance(first, WorkerRegister):
                ack = self.core.register_worker(first, link.send)
                worker_id = first.worker_id
                link.send(ack)
                self._worker_loop(link, worker_id)
            else:
                self._client_handle(link, first)
                self._client_loop(link)
        except (ConnectionClosed, OSError):
            pass
        except DecodeError as err:
            self._send_error(link, "BadMessage", str(err))
        except GatewayError as err:
            self._send_error(link, err.code, str(err))
        except Exception:
            log.exception("connection %s failed", link.peer)
        finally:
            if worker_id is not None:
                self.core.worker_gone(worker_id)
            with self._links_lock:
                self._links.discard(link)
            link.close()

    def _worker_loop(self, link: _Link, worker_id: str) -> None:
        while not self._stop.is_set():
            message = read_message(link.sock)
            if isinstance(message, WorkerResult):
                self.core.submit_result(message)
            elif isinstance(message, Heartbeat):
                self.core.heartbeat(worker_id)
            else:
                self._send_error(link, "UnexpectedMessage",
                                 f"worker link got {type(message).__name__}")

    def _client_loop(self, link: _Link) -> None:
        while not self._stop.is_set():
            self._client_handle(link, read_message(link.sock))

    def _client_handle(self, link: _Link, message: Message) -> None:
        if isinstance(message, Frame):
            def reply(annotation: AnnotationSet, _link=link) -> None:
                try:
                    _link.send(annotation)
                except (ConnectionClosed, OSError):
                    pass
            try:
                accepted = self.core.submit_frame(message, reply)
            except GatewayError as err:
                self._send_error(link, err.code, str(err))
                return
            if not accepted:
                self._send_error(link, "Saturated",
                                 f"frame {message.frame_id} dropped: all "
                                 f"workers at capacity")
        elif isinstance(message, StatsRequest):
            link.send(StatsReport(stats=self.core.stats_snapshot().to_dict()))
        elif isinstance(message, Heartbeat):
            pass
        else:
            self._send_error(link, "UnexpectedMessage",
                             f"client link got {type(message).__name__}")

    def _send_error(self, link: _Link, code: str, text: str) -> None:
        try:
            link.send(ErrorMessage(code=code, message=text))
        except (ConnectionClosed, OSError):
            pass

    # -- housekeeping --------------------------------------------------------

    def _housekeeping_loop(self) -> None:
        next_stats = self.core.clock() + 1.0
        while not self._stop.wait(HOUSEKEEPING_PERIOD_S):
            self.core.finalize_due()
            self.core.evict_stale()
            now = self.core.clock()
            if self._stats_log_path and now >= next_stats:
                next_stats = now + 1.0
                self._write_stats_line()

    def _write_stats_line(self, final: bool = False) -> None:
        if not self._stats_log_path:
            return
        record = self.core.stats_snapshot().to_dict()
        if final:
            record["final"] = True
        with self._stats_log_lock:
            try:
                with open(self._stats_log_path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record, sort_keys=True) + "\n")
            except OSError as err:
                log.warning("stats log write failed: %s", err)
