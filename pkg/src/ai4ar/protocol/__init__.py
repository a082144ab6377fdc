"""Wire protocol: value types, messages, and the envelope codec."""

from .codec import (FIXED_OVERHEAD, MAGIC, MAX_MESSAGE_BYTES, VERSION,
                    DecodeError, DecodeErrorKind, EncodeError, Envelope,
                    Message, MsgType, ProtocolError, decode_envelope,
                    decode_message, encode_envelope, encode_message)
from .messages import (AnnotationSet, ErrorMessage, Frame, Heartbeat,
                       StatsReport, StatsRequest, WorkerKind, WorkerRegister,
                       WorkerResult)
from .types import (AnnotationStatus, BBox, CameraIntrinsics, Detection,
                    HeadPose, OCRReading, PixelFormat, Pose6D)

__all__ = [
    "AnnotationSet", "AnnotationStatus", "BBox", "CameraIntrinsics",
    "DecodeError", "DecodeErrorKind", "Detection", "EncodeError", "Envelope",
    "ErrorMessage", "FIXED_OVERHEAD", "Frame", "HeadPose", "Heartbeat",
    "MAGIC", "MAX_MESSAGE_BYTES", "Message", "MsgType", "OCRReading",
    "PixelFormat", "Pose6D", "ProtocolError", "StatsReport", "StatsRequest",
    "VERSION", "WorkerKind", "WorkerRegister", "WorkerResult",
    "decode_envelope", "decode_message", "encode_envelope", "encode_message",
]
