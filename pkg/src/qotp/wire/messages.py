"""
Payload codecs for each message type. Batched execution messages are packed
numpy record arrays, one record per request (or per candidate line).
"""

import struct
from enum import IntEnum

import numpy as np
from pydantic import BaseModel, Field

from ..types import Party
from .frames import Frame, Malformed, MessageType

PROTOCOL_VERSION = 1

PROPOSAL = np.dtype([("request_id", "<u8"), ("line_id", "<u8"), ("scan_from", "<u8")])
# line_id 0 declines every candidate of the request.
RESPONSE = np.dtype([("request_id", "<u8"), ("line_id", "<u8")])
REVEAL = np.dtype([("request_id", "<u8"), ("r", "u1")])
TEST_REPORT = np.dtype([("line_id", "<u8"), ("input", "u1"), ("output", "u1")])


class AbortReason(IntEnum):
    PROTOCOL_VIOLATION = 1
    TABLE_MISMATCH = 2
    TABLE_EXHAUSTED = 3
    CHSH_FAILURE = 4
    THRESHOLD_FAILURE = 5
    UNKNOWN_LINE = 6
    INTERNAL = 7
    VERSION_MISMATCH = 8


class ProtocolViolation(Exception):
    """The peer sent something the local state machine cannot accept."""

    def __init__(self, message: str, reason: AbortReason = AbortReason.PROTOCOL_VIOLATION):
        super().__init__(message)
        self.reason = reason


class SessionAborted(Exception):
    """The session ended with an ABORT frame, sent or received."""

    def __init__(self, reason: AbortReason, message: str = "", by_peer: bool = True):
        super().__init__(f"{reason.name}: {message}" if message else reason.name)
        self.reason = reason
        self.by_peer = by_peer


def encode_records(records: np.ndarray, dtype: np.dtype) -> bytes:
    return np.ascontiguousarray(records, dtype=dtype).tobytes()


def decode_records(payload: bytes, dtype: np.dtype) -> np.ndarray:
    if len(payload) % dtype.itemsize:
        raise Malformed(
            f"Payload of {len(payload)} bytes is not a whole number of {dtype.itemsize}-byte records"
        )
    return np.frombuffer(payload, dtype=dtype).copy()


def expect(frame: Frame, *kinds: MessageType) -> Frame:
    """Return `frame` if its type is one of `kinds`; ABORT frames raise SessionAborted."""
    if frame.msg_type == MessageType.ABORT:
        abort = Abort.from_payload(frame.payload)
        raise SessionAborted(abort.reason, abort.message)
    if frame.msg_type not in kinds:
        names = "/".join(k.name for k in kinds)
        raise ProtocolViolation(f"Expected {names}, got {frame.msg_type.name}")
    return frame


_HELLO = struct.Struct("<HBQH")
_TABLE_DIGEST = struct.Struct("<Q32s")
_SELECTION = struct.Struct("<BQ")
_VERIFY = struct.Struct("<BddH")


class Hello(BaseModel):
    version: int = PROTOCOL_VERSION
    role: Party
    request_count: int = Field(ge=0)
    constant_round_factor: int = Field(default=0, ge=0)

    def to_payload(self) -> bytes:
        return _HELLO.pack(
            self.version, int(self.role), self.request_count, self.constant_round_factor
        )

    @classmethod
    def from_payload(cls, payload: bytes) -> "Hello":
        try:
            version, role, count, factor = _HELLO.unpack(payload)
            return cls(version=version, role=Party(role), request_count=count, constant_round_factor=factor)
        except (struct.error, ValueError) as e:
            raise Malformed(f"Bad HELLO payload: {e}") from None


class TableDigest(BaseModel):
    line_count: int
    digest: str  # hex SHA3-256

    def to_payload(self) -> bytes:
        return _TABLE_DIGEST.pack(self.line_count, bytes.fromhex(self.digest))

    @classmethod
    def from_payload(cls, payload: bytes) -> "TableDigest":
        try:
            count, digest = _TABLE_DIGEST.unpack(payload)
        except struct.error as e:
            raise Malformed(f"Bad TABLE_DIGEST payload: {e}") from None
        return cls(line_count=count, digest=digest.hex())


class Abort(BaseModel):
    reason: AbortReason
    message: str = ""

    def to_payload(self) -> bytes:
        return bytes([int(self.reason)]) + self.message.encode("utf-8")

    @classmethod
    def from_payload(cls, payload: bytes) -> "Abort":
        if not payload:
            raise Malformed("Empty ABORT payload")
        try:
            reason = AbortReason(payload[0])
        except ValueError:
            reason = AbortReason.INTERNAL
        return cls(reason=reason, message=payload[1:].decode("utf-8", errors="replace"))


class BellTestSelection(BaseModel):
    """Alice's public draw of the lines sacrificed for the Bell test."""

    seed: int
    line_ids: list[int]

    def to_payload(self) -> bytes:
        ids = np.asarray(self.line_ids, dtype="<u8")
        return _SELECTION.pack(0, self.seed) + ids.tobytes()

    @classmethod
    def from_payload(cls, payload: bytes) -> "BellTestSelection":
        if len(payload) < _SELECTION.size or payload[0] != 0:
            raise Malformed("Bad TEST_LINES selection payload")
        _, seed = _SELECTION.unpack_from(payload)
        ids = decode_records(payload[_SELECTION.size :], np.dtype("<u8"))
        return cls(seed=seed, line_ids=[int(i) for i in ids])


def encode_test_report(records: np.ndarray) -> bytes:
    """Bob's (line_id, input, output) for the selected test lines."""
    return b"\x01" + encode_records(records, TEST_REPORT)


def decode_test_report(payload: bytes) -> np.ndarray:
    if not payload or payload[0] != 1:
        raise Malformed("Bad TEST_LINES report payload")
    return decode_records(payload[1:], TEST_REPORT)


class VerifyResult(BaseModel):
    accepted: bool
    tau: float
    min_fraction: float
    fractions: list[float]

    def to_payload(self) -> bytes:
        head = _VERIFY.pack(int(self.accepted), self.tau, self.min_fraction, len(self.fractions))
        return head + np.asarray(self.fractions, dtype="<f8").tobytes()

    @classmethod
    def from_payload(cls, payload: bytes) -> "VerifyResult":
        try:
            accepted, tau, min_fraction, count = _VERIFY.unpack_from(payload)
        except struct.error as e:
            raise Malformed(f"Bad VERIFY_RESULT payload: {e}") from None
        fractions = decode_records(payload[_VERIFY.size :], np.dtype("<f8"))
        if len(fractions) != count:
            raise Malformed("VERIFY_RESULT fraction count mismatch")
        return cls(
            accepted=bool(accepted),
            tau=tau,
            min_fraction=min_fraction,
            fractions=[float(f) for f in fractions],
        )


def chunk_records(records: np.ndarray, dtype: np.dtype, max_payload: int) -> list[bytes]:
    """
    Split a record batch into frame payloads of at most `max_payload` bytes.
    Each payload starts with a continuation byte: 1 = more chunks follow.
    """
    data = encode_records(records, dtype)
    per_chunk = max(1, (max_payload - 1) // dtype.itemsize) * dtype.itemsize
    pieces = [data[i : i + per_chunk] for i in range(0, len(data), per_chunk)] or [b""]
    return [bytes([int(i < len(pieces) - 1)]) + piece for i, piece in enumerate(pieces)]


def split_chunk(payload: bytes, dtype: np.dtype) -> tuple[np.ndarray, bool]:
    """(records, more_follow) from one chunked payload."""
    if not payload or payload[0] not in (0, 1):
        raise Malformed("Bad batch chunk header")
    return decode_records(payload[1:], dtype), payload[0] == 1
