"""
Classical channel between the parties: frame codec, message payloads and
transports. Session drivers and daemons live in `wire.session` and
`wire.daemon`.
"""

from .frames import (
    MAX_PAYLOAD,
    CrcMismatch,
    Frame,
    FrameError,
    Malformed,
    MessageType,
    Oversize,
    decode_frame,
    encode_frame,
)
from .messages import (
    PROTOCOL_VERSION,
    Abort,
    AbortReason,
    BellTestSelection,
    Hello,
    ProtocolViolation,
    SessionAborted,
    TableDigest,
    VerifyResult,
)
from .transport import (
    LatencyTransport,
    QueueTransport,
    RecordingTransport,
    ReplayMismatch,
    ReplayTransport,
    StreamTransport,
    TranscriptEntry,
    Transport,
)

__all__ = [
    "Abort",
    "AbortReason",
    "BellTestSelection",
    "CrcMismatch",
    "Frame",
    "FrameError",
    "Hello",
    "LatencyTransport",
    "MAX_PAYLOAD",
    "Malformed",
    "MessageType",
    "Oversize",
    "PROTOCOL_VERSION",
    "ProtocolViolation",
    "QueueTransport",
    "RecordingTransport",
    "ReplayMismatch",
    "ReplayTransport",
    "SessionAborted",
    "StreamTransport",
    "TableDigest",
    "TranscriptEntry",
    "Transport",
    "VerifyResult",
    "decode_frame",
    "encode_frame",
]
