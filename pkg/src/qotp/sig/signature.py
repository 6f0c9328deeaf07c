"""
One-time delegated signatures. Alice encrypts each hash-bit slot with N
secret gates drawn from {Id, Not}; Bob feeds his hash bits through them and
Alice accepts when every hash bit's outputs are correct often enough.
"""

import hashlib
import logging
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

from ..engine import AliceSession, BobSession, LoopbackSession
from ..security import ChshEstimate, run_bell_test
from ..tabler import SharedTable
from ..types import TRUTH_TABLES, GateG1
from ..wire.frames import MessageType
from ..wire.messages import AbortReason, SessionAborted, VerifyResult
from .binomial import threshold_count

logger = logging.getLogger("qotp")

HASH_ALGOS = {"sha3_224": 1, "sha3_256": 2, "sha256": 3}
SIGNATURE_MAGIC = b"OTPS"
SIGNATURE_VERSION = 1
_SIG_HEADER = struct.Struct("<4sHIHBI")
_SIG_CRC = struct.Struct("<I")


class LengthMismatch(Exception):
    pass


class SignatureParams(BaseModel):
    n: int = Field(default=1000, ge=1)  # gates per hash bit
    m: int = Field(default=224, ge=1)  # hash bits signed
    tau: float = Field(default=0.776, ge=0.0, le=1.0)
    hash_algo: str = "sha3_224"

    @model_validator(mode="after")
    def _hash_fits(self) -> "SignatureParams":
        if self.hash_algo not in HASH_ALGOS:
            raise ValueError(f"Unsupported hash {self.hash_algo}; choose from {sorted(HASH_ALGOS)}")
        digest_bits = hashlib.new(self.hash_algo).digest_size * 8
        if self.m > digest_bits:
            raise ValueError(f"{self.hash_algo} has only {digest_bits} bits, m={self.m}")
        return self

    @property
    def length(self) -> int:
        return self.n * self.m


def hash_bits(message: bytes, params: SignatureParams) -> np.ndarray:
    """First m bits of the message digest, most significant bit first."""
    digest = hashlib.new(params.hash_algo, message).digest()
    return np.unpackbits(np.frombuffer(digest, dtype=np.uint8))[: params.m]


@dataclass
class SigningKey:
    """Alice's secret gates, shape (m, n), each Id or Not."""

    params: SignatureParams
    gates: np.ndarray = field(repr=False)

    @classmethod
    def generate(cls, params: SignatureParams, seed: int) -> "SigningKey":
        rng = np.random.default_rng(seed)
        flips = rng.integers(0, 2, size=(params.m, params.n), dtype=np.uint8)
        return cls(params, np.where(flips == 1, int(GateG1.NOT), int(GateG1.ID)).astype(np.uint8))

    def expected_outputs(self, bits: np.ndarray) -> np.ndarray:
        """Ideal gate outputs for hash bits `bits`, shape (m, n)."""
        return TRUTH_TABLES[self.gates, np.asarray(bits, dtype=np.uint8)[:, None]]


@dataclass
class Signature:
    message: bytes
    bits: np.ndarray = field(repr=False)  # L bits ordered (hash bit, replica)
    params: SignatureParams

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        if len(self.bits) != self.params.length:
            raise LengthMismatch(f"Signature has {len(self.bits)} bits, expected {self.params.length}")


def sign(message: bytes, params: SignatureParams, session: LoopbackSession, key: SigningKey) -> Signature:
    """Run N handshakes per hash bit with the bit as Bob's input."""
    bits = hash_bits(message, params)
    result = session.run(key.gates.reshape(-1), np.repeat(bits, params.n))
    if result.failed.any():
        raise SharedTable.TableExhausted(
            f"Signing ran out of table lines: {int(result.failed.sum())} of {params.length} gates failed"
        )
    logger.info(f"Signed {len(message)} bytes with {params.length} gate-OTPs in {result.rounds_used} rounds")
    return Signature(message, result.outputs.astype(np.uint8), params)


def verify(message: bytes, signature: Signature, key: SigningKey, tau: Optional[float] = None) -> VerifyResult:
    """Accept iff every hash bit has at least ceil(tau * N) correct outputs."""
    params = key.params
    tau = params.tau if tau is None else tau
    if len(signature.bits) != params.length:
        raise LengthMismatch(f"Signature has {len(signature.bits)} bits, expected {params.length}")
    expected = key.expected_outputs(hash_bits(message, params))
    correct = (signature.bits.reshape(params.m, params.n) == expected).sum(axis=1)
    fractions = correct / params.n
    accepted = bool(np.all(correct >= threshold_count(params.n, tau)))
    result = VerifyResult(
        accepted=accepted,
        tau=tau,
        min_fraction=float(fractions.min()),
        fractions=[float(f) for f in fractions],
    )
    if not accepted:
        logger.warning(f"Signature rejected: worst hash bit at {result.min_fraction:.4f} < {tau}")
    return result


class SignatureFile:
    """
    Signature exchange file:
        "OTPS" | version u16 | N u32 | m u16 | hash_algo u8 | message length u32
        | message | L bits packed little-endian | CRC32
    """

    class FormatError(Exception):
        pass

    @staticmethod
    def to_bytes(signature: Signature) -> bytes:
        params = signature.params
        header = _SIG_HEADER.pack(
            SIGNATURE_MAGIC,
            SIGNATURE_VERSION,
            params.n,
            params.m,
            HASH_ALGOS[params.hash_algo],
            len(signature.message),
        )
        body = header + signature.message + np.packbits(signature.bits, bitorder="little").tobytes()
        return body + _SIG_CRC.pack(zlib.crc32(body))

    @staticmethod
    def from_bytes(data: bytes, tau: float = 0.776) -> Signature:
        if len(data) < _SIG_HEADER.size + _SIG_CRC.size:
            raise SignatureFile.FormatError(f"Signature file too short: {len(data)} bytes")
        magic, version, n, m, algo, msg_len = _SIG_HEADER.unpack_from(data)
        if magic != SIGNATURE_MAGIC:
            raise SignatureFile.FormatError(f"Bad magic {magic!r}")
        if version != SIGNATURE_VERSION:
            raise SignatureFile.FormatError(f"Unsupported signature version {version}")
        (crc,) = _SIG_CRC.unpack_from(data, len(data) - _SIG_CRC.size)
        if zlib.crc32(data[: -_SIG_CRC.size]) != crc:
            raise SignatureFile.FormatError("Signature CRC32 does not match")
        names = {code: name for name, code in HASH_ALGOS.items()}
        if algo not in names:
            raise SignatureFile.FormatError(f"Unknown hash algorithm code {algo}")
        packed_len = (n * m + 7) // 8
        expected = _SIG_HEADER.size + msg_len + packed_len + _SIG_CRC.size
        if len(data) != expected:
            raise SignatureFile.FormatError(f"Signature file is {len(data)} bytes, header implies {expected}")
        start = _SIG_HEADER.size
        message = bytes(data[start : start + msg_len])
        packed = np.frombuffer(data, dtype=np.uint8, count=packed_len, offset=start + msg_len)
        bits = np.unpackbits(packed, bitorder="little")[: n * m]
        try:
            params = SignatureParams(n=n, m=m, tau=tau, hash_algo=names[algo])
        except ValueError as e:
            raise SignatureFile.FormatError(str(e)) from None
        return Signature(message, bits, params)


def save_signature(signature: Signature, path: Union[str, Path]) -> None:
    Path(path).write_bytes(SignatureFile.to_bytes(signature))


def load_signature(path: Union[str, Path], tau: float = 0.776) -> Signature:
    return SignatureFile.from_bytes(Path(path).read_bytes(), tau)


@dataclass
class SigningOutcome:
    verification: VerifyResult
    chsh: Optional[ChshEstimate]
    rounds: int


async def alice_signing_service(
    session: AliceSession,
    key: SigningKey,
    test_lines: int = 0,
    test_seed: int = 0,
    chsh_abort_below: float = 2.5,
) -> SigningOutcome:
    """
    Alice's side of one signing session: handshake, optional Bell test on
    sacrificed lines, the gate batch, then verification of Bob's submission.
    """
    params = key.params
    await session.handshake(params.length)
    chsh = await run_bell_test(session, test_lines, test_seed, chsh_abort_below) if test_lines else None
    outcome = await session.run_batch(key.gates.reshape(-1))
    frame = await session.receive(MessageType.SIGN_SUBMIT)
    try:
        signature = SignatureFile.from_bytes(frame.payload, params.tau)
    except (SignatureFile.FormatError, LengthMismatch) as e:
        await session.abort(AbortReason.PROTOCOL_VIOLATION, str(e))
        raise SessionAborted(AbortReason.PROTOCOL_VIOLATION, str(e), by_peer=False) from e
    if signature.params.n != params.n or signature.params.m != params.m:
        await session.abort(AbortReason.PROTOCOL_VIOLATION, "signature shape mismatch")
        raise SessionAborted(AbortReason.PROTOCOL_VIOLATION, "signature shape mismatch", by_peer=False)
    result = verify(signature.message, signature, key)
    await session.send(MessageType.VERIFY_RESULT, result.to_payload())
    if not result.accepted:
        await session.abort(AbortReason.THRESHOLD_FAILURE, f"min fraction {result.min_fraction:.4f}")
    return SigningOutcome(verification=result, chsh=chsh, rounds=outcome.rounds)


async def bob_request_signature(
    session: BobSession, message: bytes, params: SignatureParams
) -> tuple[Signature, VerifyResult]:
    """Bob's side: evaluate the gates on his hash bits, submit, read the verdict."""
    bits = hash_bits(message, params)
    await session.handshake(params.length)
    outcome = await session.serve_batch(np.repeat(bits, params.n))
    if outcome.failed.any():
        await session.abort(AbortReason.TABLE_EXHAUSTED, f"{int(outcome.failed.sum())} gates failed")
        raise SessionAborted(AbortReason.TABLE_EXHAUSTED, "table exhausted while signing", by_peer=False)
    signature = Signature(message, outcome.outputs.astype(np.uint8), params)
    await session.send(MessageType.SIGN_SUBMIT, SignatureFile.to_bytes(signature))
    result = VerifyResult.from_payload((await session.receive(MessageType.VERIFY_RESULT)).payload)
    if not result.accepted:
        # Alice follows a rejection with ABORT(THRESHOLD_FAILURE)
        await session.receive()
    return signature, result
