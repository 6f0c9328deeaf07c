import asyncio
import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from ..tabler import SharedTableAlice, SharedTableBob
from ..types import LineStatus
from ..wire.frames import MAX_PAYLOAD
from ..wire.transport import (
    LatencyTransport,
    QueueTransport,
    RecordingTransport,
    Transport,
    TranscriptEntry,
)
from .audit import AuditLog
from .parties import AliceSession, BobSession

logger = logging.getLogger("qotp")


@dataclass
class BatchResult:
    outputs: np.ndarray  # int8, -1 where the request failed
    failed: np.ndarray
    rounds_used: int
    declines: np.ndarray
    alice_log: AuditLog
    bob_log: AuditLog
    alice_transcript: list[TranscriptEntry] = field(default_factory=list, repr=False)
    bob_transcript: list[TranscriptEntry] = field(default_factory=list, repr=False)

    @property
    def completed(self) -> int:
        return int(np.count_nonzero(~self.failed))


async def _run_both(alice_work, bob_work):
    """Run both coroutines; if one side fails the other is cancelled."""
    tasks = [asyncio.ensure_future(alice_work), asyncio.ensure_future(bob_work)]
    done, pending = await asyncio.wait(tasks, return_when=asyncio.FIRST_EXCEPTION)
    for task in pending:
        task.cancel()
    for task in pending:
        try:
            await task
        except (asyncio.CancelledError, Exception):
            pass
    for task in tasks:
        if task.done() and not task.cancelled() and task.exception() is not None:
            raise task.exception()
    return tasks[0].result(), tasks[1].result()


async def run_batch_pair(
    alice_table: SharedTableAlice,
    bob_table: SharedTableBob,
    targets,
    inputs,
    rng: Union[np.random.Generator, int, None] = None,
    session_id: int = 1,
    constant_round_factor: int = 0,
    one_way_delay: float = 0.0,
    jitter: float = 0.0,
    record: bool = False,
    audit: bool = True,
    max_payload: int = MAX_PAYLOAD,
) -> BatchResult:
    """Both parties of one batch over an in-memory link, optionally delayed and recorded."""
    if len(targets) != len(inputs):
        raise ValueError(f"{len(targets)} target gates but {len(inputs)} inputs")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    alice_end, bob_end = QueueTransport.pair(max_payload)
    alice_link: Transport = alice_end
    bob_link: Transport = bob_end
    if one_way_delay > 0 or jitter > 0:
        alice_link = LatencyTransport(alice_link, one_way_delay, jitter, np.random.default_rng(rng.integers(2**32)))
        bob_link = LatencyTransport(bob_link, one_way_delay, jitter, np.random.default_rng(rng.integers(2**32)))
    alice_rec: Optional[RecordingTransport] = None
    bob_rec: Optional[RecordingTransport] = None
    if record:
        alice_link = alice_rec = RecordingTransport(alice_link)
        bob_link = bob_rec = RecordingTransport(bob_link)

    alice = AliceSession(
        alice_table,
        alice_link,
        rng,
        session_id=session_id,
        constant_round_factor=constant_round_factor,
        audit=audit,
        max_payload=max_payload,
    )
    bob = BobSession(bob_table, bob_link, session_id=session_id, audit=audit, max_payload=max_payload)

    async def alice_side():
        await alice.handshake(len(targets))
        outcome = await alice.run_batch(targets)
        await alice_link.close()
        return outcome

    async def bob_side():
        await bob.handshake(len(inputs))
        outcome = await bob.serve_batch(inputs)
        await bob_link.close()
        return outcome

    _, bob_outcome = await _run_both(alice_side(), bob_side())
    logger.debug(
        f"Batch of {len(targets)} finished in {bob_outcome.rounds} rounds, "
        f"{int(bob_outcome.failed.sum())} failed"
    )
    return BatchResult(
        outputs=bob_outcome.outputs,
        failed=bob_outcome.failed,
        rounds_used=bob_outcome.rounds,
        declines=bob_outcome.declines,
        alice_log=alice.log,
        bob_log=bob.log,
        alice_transcript=alice_rec.transcript if alice_rec else [],
        bob_transcript=bob_rec.transcript if bob_rec else [],
    )


def execute_batch(alice_table: SharedTableAlice, bob_table: SharedTableBob, targets, inputs, **kwargs) -> BatchResult:
    """Synchronous entry point for run_batch_pair."""
    return asyncio.run(run_batch_pair(alice_table, bob_table, targets, inputs, **kwargs))


class LoopbackSession:
    """
    Both parties in one process, sharing one pad rng across batches. Used by
    circuit and G_k evaluation and by local signing.
    """

    def __init__(
        self,
        alice_table: SharedTableAlice,
        bob_table: SharedTableBob,
        seed: int = 0,
        constant_round_factor: int = 0,
        one_way_delay: float = 0.0,
        audit: bool = True,
    ):
        self.alice_table = alice_table
        self.bob_table = bob_table
        self.rng = np.random.default_rng(seed)
        self.constant_round_factor = constant_round_factor
        self.one_way_delay = one_way_delay
        self.audit = audit
        self.rounds_total = 0
        self.batches = 0

    def run(self, targets, inputs) -> BatchResult:
        self.batches += 1
        result = execute_batch(
            self.alice_table,
            self.bob_table,
            np.asarray(targets, dtype=np.uint8),
            np.asarray(inputs, dtype=np.uint8),
            rng=self.rng,
            session_id=self.batches,
            constant_round_factor=self.constant_round_factor,
            one_way_delay=self.one_way_delay,
            audit=self.audit,
        )
        self.rounds_total += result.rounds_used
        return result

    @property
    def lines_left(self) -> int:
        return self.alice_table.count(LineStatus.AVAILABLE)
