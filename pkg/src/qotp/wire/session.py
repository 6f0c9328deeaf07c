"""
Session drivers: one party's whole conversation over a transport, its
recording and replay, and the reconciliation exchange that turns raw
detection streams into identical shared tables.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..engine.audit import AuditLog
from ..engine.parties import AliceSession, BobSession
from ..security.chsh import ChshEstimate, run_bell_test
from ..tabler import (
    DetectionStream,
    ReconciledSession,
    SessionParams,
    SharedTable,
    SharedTableBob,
    reconcile_session,
)
from ..types import Party
from .frames import MAX_PAYLOAD, Frame, MessageType
from .messages import (
    AbortReason,
    ProtocolViolation,
    TableDigest,
    chunk_records,
    expect,
    split_chunk,
)
from .transport import RecordingTransport, ReplayMismatch, ReplayTransport, Transport, TranscriptEntry

logger = logging.getLogger("qotp")

_TIMESTAMPS = np.dtype("<i8")
_EVENT_INDEX = np.dtype("<u8")


@dataclass
class SessionScript:
    """What one party brings to a session. `requests` are Alice's target gate
    codes or Bob's desired input bits."""

    requests: np.ndarray
    seed: int = 0
    session_id: int = 1
    test_lines: int = 0
    test_seed: int = 0
    chsh_abort_below: float = 2.5
    constant_round_factor: int = 0

    def __post_init__(self):
        self.requests = np.asarray(self.requests, dtype=np.uint8)


@dataclass
class SessionOutcome:
    role: Party
    failed: np.ndarray
    rounds: int
    outputs: Optional[np.ndarray] = None  # Bob only
    chsh: Optional[ChshEstimate] = None  # Alice only
    log: Optional[AuditLog] = None
    transcript: list[TranscriptEntry] = field(default_factory=list, repr=False)


async def run_session(
    role: Party,
    transport: Transport,
    table: SharedTable,
    script: SessionScript,
    max_payload: int = MAX_PAYLOAD,
) -> SessionOutcome:
    """Handshake, optional Bell test, one batch. Every frame is recorded."""
    recorder = RecordingTransport(transport)
    if role == Party.ALICE:
        alice = AliceSession(
            table,
            recorder,
            np.random.default_rng(script.seed),
            session_id=script.session_id,
            constant_round_factor=script.constant_round_factor,
            max_payload=max_payload,
        )
        await alice.handshake(len(script.requests))
        chsh = None
        if script.test_lines:
            chsh = await run_bell_test(alice, script.test_lines, script.test_seed, script.chsh_abort_below)
        outcome = await alice.run_batch(script.requests)
        return SessionOutcome(
            role, outcome.failed, outcome.rounds, chsh=chsh, log=alice.log, transcript=recorder.transcript
        )
    bob = BobSession(table, recorder, session_id=script.session_id, max_payload=max_payload)
    await bob.handshake(len(script.requests))
    outcome = await bob.serve_batch(script.requests)
    return SessionOutcome(
        role,
        outcome.failed,
        outcome.rounds,
        outputs=outcome.outputs,
        log=bob.log,
        transcript=recorder.transcript,
    )


async def replay_transcript(
    role: Party,
    transcript: list[TranscriptEntry],
    table: SharedTable,
    script: SessionScript,
) -> SessionOutcome:
    """
    Re-run one party against its recorded inbound frames, starting from the
    table as it was before the session. Raises ReplayMismatch as soon as a
    sent frame differs from the recording.
    """
    replay = ReplayTransport(transcript)
    outcome = await run_session(role, replay, table, script)
    if not replay.complete:
        raise ReplayMismatch("Replay finished before the recording was used up")
    return outcome


async def _send_chunks(transport: Transport, session_id: int, kind: MessageType, records, dtype, max_payload):
    for payload in chunk_records(records, dtype, max_payload):
        await transport.send(Frame(kind, session_id, payload))


async def _recv_chunks(transport: Transport, kind: MessageType, dtype) -> np.ndarray:
    parts = []
    while True:
        frame = expect(await transport.recv(), kind)
        records, more = split_chunk(frame.payload, dtype)
        parts.append(records)
        if not more:
            return np.concatenate(parts)


async def reconcile_alice(
    transport: Transport,
    alice: DetectionStream,
    params: SessionParams,
    session_id: int = 1,
    max_payload: int = MAX_PAYLOAD,
) -> ReconciledSession:
    """
    Alice receives Bob's timestamps (never his channels), synchronises and
    matches, then confirms the coincident Bob events in line order.
    """
    timestamps = await _recv_chunks(transport, MessageType.DETECTION_DIGEST, _TIMESTAMPS)
    bob = DetectionStream(Party.BOB, timestamps, np.zeros(len(timestamps), dtype=np.uint8))
    reconciled = reconcile_session(alice, bob, params)
    await _send_chunks(
        transport,
        session_id,
        MessageType.COINC_CONFIRM,
        reconciled.pairs.bob_index.astype(np.uint64),
        _EVENT_INDEX,
        max_payload,
    )
    theirs = TableDigest.from_payload(expect(await transport.recv(), MessageType.TABLE_DIGEST).payload)
    ours = TableDigest(line_count=len(reconciled.alice), digest=reconciled.alice.digest())
    if theirs != ours:
        raise ProtocolViolation("Reconciled tables differ", AbortReason.TABLE_MISMATCH)
    logger.info(f"Reconciled {len(reconciled.alice)} lines with Bob")
    return reconciled


async def reconcile_bob(
    transport: Transport,
    bob: DetectionStream,
    seed: int = 0,
    session_id: int = 1,
    max_payload: int = MAX_PAYLOAD,
) -> SharedTableBob:
    """Bob's side: publish timestamps, build the table from the confirmed events."""
    await _send_chunks(
        transport, session_id, MessageType.DETECTION_DIGEST, bob.timestamps, _TIMESTAMPS, max_payload
    )
    indices = (await _recv_chunks(transport, MessageType.COINC_CONFIRM, _EVENT_INDEX)).astype(np.int64)
    if len(indices) and (indices.max() >= len(bob) or len(np.unique(indices)) != len(indices)):
        raise ProtocolViolation("COINC_CONFIRM names unknown or repeated events")
    channels = bob.channels[indices]
    table = SharedTableBob(
        np.arange(1, len(indices) + 1, dtype=np.uint64),
        channels >> 1,
        channels & 1,
        multi_photon=bob.multi_photon[indices],
        seed=seed,
    )
    digest = TableDigest(line_count=len(table), digest=table.digest())
    await transport.send(Frame(MessageType.TABLE_DIGEST, session_id, digest.to_payload()))
    return table
