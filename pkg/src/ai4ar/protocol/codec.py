"""Binary envelope codec.

Wire layout, all integers little-endian:

    +--------+---------+----------+------------+---------+----------+--------+
    | magic  | version | msg_type | header_len | header  | blob_len | blob   |
    | 4 "A4AR"|  u8 =1 |    u8    |    u32     | JSON    |   u32    | bytes  |
    +--------+---------+----------+------------+---------+----------+--------+

The header is canonical JSON (UTF-8, sorted keys, no whitespace), so
encoding the same message twice yields identical bytes.  The blob carries
raw pixels for Frame and is empty for every other message type.

`decode_message` is total: any byte string is either decoded into a typed
message or rejected with a classified `DecodeError`; it never reads past
the declared lengths and never raises anything else.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from enum import Enum, IntEnum

from ..errors import AI4ARError, InvariantError
from .messages import (AnnotationSet, ErrorMessage, Frame, Heartbeat,
                       StatsReport, StatsRequest, WorkerRegister, WorkerResult)

MAGIC = b"A4AR"
VERSION = 1
MAX_MESSAGE_BYTES = 64 * 1024 * 1024
FIXED_OVERHEAD = 14  # magic + version + msg_type + header_len + blob_len

_PREFIX = struct.Struct("<4sBBI")  # through header_len
_U32 = struct.Struct("<I")


class MsgType(IntEnum):
    FRAME = 1
    ANNOTATION_SET = 2
    WORKER_REGISTER = 3
    WORKER_RESULT = 4
    HEARTBEAT = 5
    ERROR = 6
    STATS_REQUEST = 7
    STATS_REPORT = 8


_CLASS_FOR_TYPE = {
    MsgType.FRAME: Frame,
    MsgType.ANNOTATION_SET: AnnotationSet,
    MsgType.WORKER_REGISTER: WorkerRegister,
    MsgType.WORKER_RESULT: WorkerResult,
    MsgType.HEARTBEAT: Heartbeat,
    MsgType.ERROR: ErrorMessage,
    MsgType.STATS_REQUEST: StatsRequest,
    MsgType.STATS_REPORT: StatsReport,
}
_TYPE_FOR_CLASS = {cls: code for code, cls in _CLASS_FOR_TYPE.items()}

Message = (Frame | AnnotationSet | WorkerRegister | WorkerResult
           | Heartbeat | ErrorMessage | StatsRequest | StatsReport)


class DecodeErrorKind(Enum):
    WRONG_PROTOCOL = "WrongProtocol"
    TRUNCATED = "Truncated"
    UNKNOWN_TYPE = "UnknownType"
    MALFORMED_HEADER = "MalformedHeader"
    TOO_LARGE = "TooLarge"
    TRAILING_DATA = "TrailingData"
    INVALID_MESSAGE = "InvalidMessage"


class ProtocolError(AI4ARError):
    pass


class DecodeError(ProtocolError):
    def __init__(self, kind: DecodeErrorKind, message: str):
        super().__init__(f"{kind.value}: {message}")
        self.kind = kind


class EncodeError(ProtocolError):
    pass


@dataclass(frozen=True)
class Envelope:
    """Parsed framing, header still as raw canonical JSON text."""

    msg_type: int
    header: bytes
    blob: bytes
    version: int = VERSION


def canonical_header_bytes(header: dict) -> bytes:
    return json.dumps(header, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False, allow_nan=False).encode("utf-8")


def encode_envelope(env: Envelope) -> bytes:
    total = FIXED_OVERHEAD + len(env.header) + len(env.blob)
    if total > MAX_MESSAGE_BYTES:
        raise EncodeError(f"message of {total} bytes exceeds the "
                          f"{MAX_MESSAGE_BYTES} byte cap")
    return b"".join([
        _PREFIX.pack(MAGIC, env.version, env.msg_type, len(env.header)),
        env.header,
        _U32.pack(len(env.blob)),
        env.blob,
    ])


def encode_message(msg: Message) -> bytes:
    """Serialize a message; invariant-violating content cannot get here
    because the message types validate on construction, but unknown types
    and oversized payloads are still rejected with a diagnostic."""
    code = _TYPE_FOR_CLASS.get(type(msg))
    if code is None:
        raise EncodeError(f"{type(msg).__name__} is not a wire message")
    try:
        header = canonical_header_bytes(msg.to_header())
    except (TypeError, ValueError) as e:
        raise EncodeError(f"header not JSON-serializable: {e}") from e
    return encode_envelope(Envelope(msg_type=int(code), header=header,
                                    blob=msg.wire_blob()))


def decode_envelope(data: bytes) -> Envelope:
    """Parse framing only; header content is not interpreted yet."""
    n = len(data)
    if n < 4:
        if MAGIC.startswith(data):
            raise DecodeError(DecodeErrorKind.TRUNCATED,
                              f"{n} bytes is shorter than the magic")
        raise DecodeError(DecodeErrorKind.WRONG_PROTOCOL, "bad magic")
    if data[:4] != MAGIC:
        raise DecodeError(DecodeErrorKind.WRONG_PROTOCOL,
                          f"bad magic {data[:4]!r}")
    if n < _PREFIX.size:
        raise DecodeError(DecodeErrorKind.TRUNCATED,
                          f"{n} bytes is shorter than the fixed prefix")
    _, version, msg_type, header_len = _PREFIX.unpack_from(data)
    if version != VERSION:
        raise DecodeError(DecodeErrorKind.WRONG_PROTOCOL,
                          f"unsupported version {version}")
    if FIXED_OVERHEAD + header_len > MAX_MESSAGE_BYTES:
        raise DecodeError(DecodeErrorKind.TOO_LARGE,
                          f"declared header_len {header_len} exceeds the cap")
    off = _PREFIX.size
    if n < off + header_len + _U32.size:
        raise DecodeError(DecodeErrorKind.TRUNCATED,
                          f"need {off + header_len + _U32.size} bytes for the "
                          f"header and blob_len, have {n}")
    header = data[off:off + header_len]
    off += header_len
    (blob_len,) = _U32.unpack_from(data, off)
    off += _U32.size
    if FIXED_OVERHEAD + header_len + blob_len > MAX_MESSAGE_BYTES:
        raise DecodeError(DecodeErrorKind.TOO_LARGE,
                          f"declared blob_len {blob_len} exceeds the cap")
    if n < off + blob_len:
        raise DecodeError(DecodeErrorKind.TRUNCATED,
                          f"blob_len {blob_len} larger than the {n - off} "
                          f"remaining bytes")
    blob = data[off:off + blob_len]
    off += blob_len
    if off != n:
        raise DecodeError(DecodeErrorKind.TRAILING_DATA,
                          f"{n - off} bytes past the declared blob")
    return Envelope(msg_type=msg_type, header=header, blob=blob,
                    version=version)


def decode_message(data: bytes | bytearray | memoryview) -> Message:
    """Decode one complete envelope into a typed message."""
    env = decode_envelope(bytes(data))
    try:
        msg_type = MsgType(env.msg_type)
    except ValueError:
        raise DecodeError(DecodeErrorKind.UNKNOWN_TYPE,
                          f"msg_type {env.msg_type}") from None
    try:
        header = json.loads(env.header.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DecodeError(DecodeErrorKind.MALFORMED_HEADER, str(e)) from e
    if not isinstance(header, dict):
        raise DecodeError(DecodeErrorKind.MALFORMED_HEADER,
                          "header is not a JSON object")
    if msg_type is not MsgType.FRAME and env.blob:
        raise DecodeError(DecodeErrorKind.INVALID_MESSAGE,
                          f"{msg_type.name} must have an empty blob")
    cls = _CLASS_FOR_TYPE[msg_type]
    try:
        return cls.from_header(header, env.blob)
    except InvariantError as e:
        raise DecodeError(DecodeErrorKind.INVALID_MESSAGE, str(e)) from e
    except Exception as e:
        # Missing keys, ill-typed values, non-iterable lists and the like.
        # Totality over arbitrary inputs is the contract here, so anything
        # the field parsers throw is classified rather than propagated.
        raise DecodeError(DecodeErrorKind.MALFORMED_HEADER,
                          f"{type(e).__name__}: {e}") from e
