"""
Frame codec for the classical channel.

    magic "OTP1" | msg_type u8 | session_id u64 | payload_len u32 | payload | CRC32 u32

All integers are little-endian; the CRC covers header and payload.
"""

import struct
import zlib
from dataclasses import dataclass
from enum import IntEnum

MAGIC = b"OTP1"
HEADER = struct.Struct("<4sBQI")
CRC = struct.Struct("<I")
MAX_PAYLOAD = 16 * 1024 * 1024


class MessageType(IntEnum):
    HELLO = 1
    TABLE_DIGEST = 2
    DETECTION_DIGEST = 3
    COINC_CONFIRM = 4
    PROPOSE_BATCH = 5
    RESPOND_BATCH = 6
    REVEAL_BATCH = 7
    TEST_LINES = 8
    SIGN_SUBMIT = 9
    VERIFY_RESULT = 10
    ABORT = 11


class FrameError(Exception):
    pass


class Malformed(FrameError):
    pass


class CrcMismatch(FrameError):
    pass


class Oversize(FrameError):
    pass


@dataclass(frozen=True)
class Frame:
    msg_type: MessageType
    session_id: int
    payload: bytes = b""


def encode_frame(frame: Frame, max_payload: int = MAX_PAYLOAD) -> bytes:
    if len(frame.payload) > max_payload:
        raise Oversize(f"Payload of {len(frame.payload)} bytes exceeds {max_payload}")
    header = HEADER.pack(MAGIC, int(frame.msg_type), frame.session_id, len(frame.payload))
    body = header + frame.payload
    return body + CRC.pack(zlib.crc32(body))


def parse_header(header: bytes, max_payload: int = MAX_PAYLOAD) -> tuple[int, int, int]:
    """(msg_type, session_id, payload_len) from the fixed-size header."""
    if len(header) != HEADER.size:
        raise Malformed(f"Header must be {HEADER.size} bytes, got {len(header)}")
    magic, msg_type, session_id, length = HEADER.unpack(header)
    if magic != MAGIC:
        raise Malformed(f"Bad magic {magic!r}")
    if length > max_payload:
        raise Oversize(f"Declared payload of {length} bytes exceeds {max_payload}")
    return msg_type, session_id, length


def decode_frame(data: bytes, max_payload: int = MAX_PAYLOAD) -> Frame:
    """Decode exactly one frame; trailing or missing bytes are Malformed."""
    if len(data) < HEADER.size + CRC.size:
        raise Malformed(f"Frame too short: {len(data)} bytes")
    msg_type, session_id, length = parse_header(data[: HEADER.size], max_payload)
    if len(data) != HEADER.size + length + CRC.size:
        raise Malformed(
            f"Frame length {len(data)} does not match declared payload of {length} bytes"
        )
    (crc,) = CRC.unpack_from(data, HEADER.size + length)
    if zlib.crc32(data[: HEADER.size + length]) != crc:
        raise CrcMismatch("Frame CRC32 does not match")
    try:
        kind = MessageType(msg_type)
    except ValueError:
        raise Malformed(f"Unknown message type {msg_type}") from None
    return Frame(kind, session_id, bytes(data[HEADER.size : HEADER.size + length]))
