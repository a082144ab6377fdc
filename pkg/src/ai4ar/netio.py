"""Blocking socket transport for envelope-framed messages."""
from __future__ import annotations

import socket
import struct

from .errors import AI4ARError
from .protocol import (FIXED_OVERHEAD, MAX_MESSAGE_BYTES, DecodeError,
                       DecodeErrorKind, Message, decode_message,
                       encode_message)

_U32 = struct.Struct("<I")
_PREFIX_LEN = 10  # magic + version + msg_type + header_len


class ConnectionClosed(AI4ARError):
    """Peer closed the socket mid-message or between messages."""

    def __init__(self, clean: bool):
        super().__init__("connection closed" if clean
                         else "connection closed mid-message")
        self.clean = clean


def read_exact(sock: socket.socket, n: int, *, at_boundary: bool = False) -> bytes:
    chunks = []
    got = 0
    while got < n:
        chunk = sock.recv(min(n - got, 1 << 20))
        if not chunk:
            raise ConnectionClosed(clean=at_boundary and got == 0)
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def read_message(sock: socket.socket) -> Message:
    """Read exactly one envelope off the socket and decode it.

    Length fields are bounds-checked before the payload is read so a bad
    peer cannot make the gateway allocate unbounded buffers.
    """
    prefix = read_exact(sock, _PREFIX_LEN, at_boundary=True)
    (header_len,) = _U32.unpack_from(prefix, 6)
    if FIXED_OVERHEAD + header_len > MAX_MESSAGE_BYTES:
        raise DecodeError(DecodeErrorKind.TOO_LARGE,
                          f"declared header_len {header_len} exceeds the cap")
    header = read_exact(sock, header_len)
    blob_len_raw = read_exact(sock, _U32.size)
    (blob_len,) = _U32.unpack(blob_len_raw)
    if FIXED_OVERHEAD + header_len + blob_len > MAX_MESSAGE_BYTES:
        raise DecodeError(DecodeErrorKind.TOO_LARGE,
                          f"declared blob_len {blob_len} exceeds the cap")
    blob = read_exact(sock, blob_len)
    return decode_message(prefix + header + blob_len_raw + blob)


def write_message(sock: socket.socket, msg: Message) -> None:
    sock.sendall(encode_message(msg))
