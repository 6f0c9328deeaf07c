"""
Batch state machines for both parties. Every unfinished request gets one
proposal per round; all proposals of a round travel in one PROPOSE_BATCH,
all answers in one RESPOND_BATCH, and the pads of accepted requests ride in
the REVEAL_BATCH sent ahead of the next round's proposals.
"""

import logging
import math
from bisect import bisect_left
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..tabler import SharedTable, SharedTableAlice, SharedTableBob
from ..types import LineStatus, Party
from ..wire.frames import MAX_PAYLOAD, Frame, FrameError, MessageType
from ..wire.messages import (
    PROPOSAL,
    PROTOCOL_VERSION,
    RESPONSE,
    REVEAL,
    TEST_REPORT,
    Abort,
    AbortReason,
    BellTestSelection,
    Hello,
    ProtocolViolation,
    SessionAborted,
    TableDigest,
    chunk_records,
    decode_test_report,
    encode_test_report,
    expect,
    split_chunk,
)
from ..wire.transport import Transport
from .audit import AuditEvent, AuditLog

logger = logging.getLogger("qotp")


@dataclass
class AliceBatchOutcome:
    failed: np.ndarray
    declines: np.ndarray
    rounds: int


@dataclass
class BobBatchOutcome:
    outputs: np.ndarray  # int8, -1 where the request failed
    failed: np.ndarray
    declines: np.ndarray
    rounds: int


class _PartySession:
    party: Party

    def __init__(
        self,
        table: SharedTable,
        transport: Transport,
        session_id: int = 1,
        audit: bool = True,
        max_payload: int = MAX_PAYLOAD,
    ):
        self.table = table
        self.transport = transport
        self.session_id = session_id
        self.max_payload = max_payload
        self.log = AuditLog(self.party.name.lower(), enabled=audit)

    async def _send(self, kind: MessageType, payload: bytes = b"") -> None:
        await self.transport.send(Frame(kind, self.session_id, payload))

    async def _recv(self, *kinds: MessageType) -> Frame:
        frame = await self.transport.recv()
        if frame.session_id != self.session_id:
            raise ProtocolViolation(
                f"Frame for session {frame.session_id} on session {self.session_id}"
            )
        return expect(frame, *kinds)

    async def _send_batch(self, kind: MessageType, records: np.ndarray, dtype: np.dtype) -> None:
        for payload in chunk_records(records, dtype, self.max_payload):
            await self._send(kind, payload)

    async def _recv_batch(
        self, kind: MessageType, dtype: np.dtype, first: Optional[Frame] = None
    ) -> np.ndarray:
        frame = first or await self._recv(kind)
        parts = []
        while True:
            records, more = split_chunk(frame.payload, dtype)
            parts.append(records)
            if not more:
                return np.concatenate(parts)
            frame = await self._recv(kind)

    async def send(self, kind: MessageType, payload: bytes = b"") -> None:
        """Send an application frame (signing, reconciliation) on this session."""
        await self._send(kind, payload)

    async def receive(self, *kinds: MessageType) -> Frame:
        return await self._guarded(self._recv(*kinds))

    async def abort(self, reason: AbortReason, message: str = "") -> None:
        logger.warning(f"{self.party.name.title()} aborts session {self.session_id}: {reason.name} {message}")
        await self._send(MessageType.ABORT, Abort(reason=reason, message=message).to_payload())

    async def _guarded(self, work):
        """Run `work`; local protocol failures are announced with ABORT before re-raising."""
        try:
            return await work
        except SessionAborted as e:
            logger.warning(f"Peer aborted session {self.session_id}: {e}")
            raise
        except ProtocolViolation as e:
            await self.abort(e.reason, str(e))
            raise
        except SharedTable.UnknownLine as e:
            await self.abort(AbortReason.UNKNOWN_LINE, str(e))
            raise ProtocolViolation(str(e), AbortReason.UNKNOWN_LINE) from e
        except (SharedTable.LineUnavailable, FrameError) as e:
            await self.abort(AbortReason.PROTOCOL_VIOLATION, str(e))
            raise ProtocolViolation(str(e)) from e

    def _own_digest(self) -> TableDigest:
        return TableDigest(line_count=len(self.table), digest=self.table.digest())

    def _check_hello(self, hello: Hello, request_count: int) -> None:
        if hello.version != PROTOCOL_VERSION:
            raise ProtocolViolation(
                f"Peer speaks protocol {hello.version}, expected {PROTOCOL_VERSION}",
                AbortReason.VERSION_MISMATCH,
            )
        if hello.role == self.party:
            raise ProtocolViolation(f"Peer also claims the {self.party.name} role")
        if hello.request_count != request_count:
            raise ProtocolViolation(
                f"Peer expects {hello.request_count} requests, local side has {request_count}"
            )


class AliceSession(_PartySession):
    """Alice's half: proposes lines, checks answers and reveals pads."""

    party = Party.ALICE

    def __init__(
        self,
        table: SharedTableAlice,
        transport: Transport,
        rng: np.random.Generator,
        session_id: int = 1,
        constant_round_factor: int = 0,
        audit: bool = True,
        max_payload: int = MAX_PAYLOAD,
    ):
        super().__init__(table, transport, session_id, audit, max_payload)
        self.rng = rng
        self.constant_round_factor = constant_round_factor

    def candidates_per_request(self, request_count: int) -> int:
        if self.constant_round_factor <= 0:
            return 1
        return max(1, math.ceil(self.constant_round_factor * math.log2(max(request_count, 2))))

    async def handshake(self, request_count: int) -> Hello:
        return await self._guarded(self._handshake(request_count))

    async def _handshake(self, request_count: int) -> Hello:
        hello = Hello(
            role=Party.ALICE,
            request_count=request_count,
            constant_round_factor=self.constant_round_factor,
        )
        await self._send(MessageType.HELLO, hello.to_payload())
        peer = Hello.from_payload((await self._recv(MessageType.HELLO)).payload)
        self._check_hello(peer, request_count)
        own = self._own_digest()
        await self._send(MessageType.TABLE_DIGEST, own.to_payload())
        theirs = TableDigest.from_payload((await self._recv(MessageType.TABLE_DIGEST)).payload)
        if theirs != own:
            raise ProtocolViolation("Shared tables differ", AbortReason.TABLE_MISMATCH)
        logger.debug(f"Session {self.session_id}: handshake done, {len(self.table)} lines")
        return peer

    async def announce_test_lines(self, line_ids, seed: int) -> np.ndarray:
        """Sacrifice `line_ids` for the Bell test; returns Bob's (line_id, input, output) report."""
        return await self._guarded(self._announce_test_lines(line_ids, seed))

    async def _announce_test_lines(self, line_ids, seed: int) -> np.ndarray:
        ids = np.sort(np.asarray(line_ids, dtype=np.uint64))
        self.table.set_status_by_id(ids, LineStatus.CONSUMED)
        selection = BellTestSelection(seed=seed, line_ids=[int(i) for i in ids])
        await self._send(MessageType.TEST_LINES, selection.to_payload())
        report = decode_test_report((await self._recv(MessageType.TEST_LINES)).payload)
        if not np.array_equal(report["line_id"], ids):
            raise ProtocolViolation("Test report does not cover the selected lines")
        return report

    async def run_batch(self, targets) -> AliceBatchOutcome:
        targets = np.asarray(targets, dtype=np.uint8)
        if np.any(targets > 3):
            raise ValueError("Target gates must be GateG1 codes 0..3")
        return await self._guarded(self._run_batch(targets))

    def _scan(self, wanted: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """
        Sequential scan for each wanted gate in turn, each starting where the
        previous one stopped. Returns found positions and scan starts, -1 when
        no such gate remains.
        """
        table = self.table
        head = table.head()
        available = np.flatnonzero(table.status[head:] == LineStatus.AVAILABLE) + head
        by_gate = [available[table.gates[available] == g].tolist() for g in range(4)]
        next_hit = [0, 0, 0, 0]
        found = np.full(len(wanted), -1, dtype=np.int64)
        scan_from = np.full(len(wanted), -1, dtype=np.int64)
        cursor = head
        for i, gate in enumerate(wanted.tolist()):
            hits = by_gate[gate]
            j = bisect_left(hits, cursor, next_hit[gate])
            if j == len(hits):
                continue
            found[i] = hits[j]
            scan_from[i] = cursor
            cursor = hits[j] + 1
            next_hit[gate] = j + 1
        return found, scan_from

    async def _run_batch(self, targets: np.ndarray) -> AliceBatchOutcome:
        n = len(targets)
        table = self.table
        width = self.candidates_per_request(n)
        pending = np.ones(n, dtype=bool)
        failed = np.zeros(n, dtype=bool)
        declines = np.zeros(n, dtype=np.int32)
        reveal = np.zeros(0, dtype=REVEAL)
        rounds = 0
        while pending.any():
            rounds += 1
            open_requests = np.flatnonzero(pending)
            req = np.repeat(open_requests, width)
            r = self.rng.integers(0, 2, size=len(req), dtype=np.uint8)
            found, scan_from = self._scan(targets[req] ^ r)
            ok = found >= 0
            req, r, found, scan_from = req[ok], r[ok], found[ok], scan_from[ok]
            table.set_status(found, LineStatus.PROPOSED)
            skipped = table.delete_available_between(scan_from, found)

            has_line = np.zeros(n, dtype=bool)
            has_line[req] = True
            exhausted = open_requests[~has_line[open_requests]]
            live = open_requests[has_line[open_requests]]

            proposals = np.zeros(len(req) + len(exhausted), dtype=PROPOSAL)
            proposals["request_id"][: len(req)] = req + 1
            proposals["line_id"][: len(req)] = table.line_ids[found]
            proposals["scan_from"][: len(req)] = table.line_ids[scan_from]
            proposals["request_id"][len(req) :] = exhausted + 1
            if len(reveal):
                await self._send_batch(MessageType.REVEAL_BATCH, reveal, REVEAL)
                reveal = np.zeros(0, dtype=REVEAL)
            await self._send_batch(MessageType.PROPOSE_BATCH, proposals, PROPOSAL)
            self.log.record(
                AuditEvent.PROPOSED, rounds, req + 1, table.line_ids[found], target=targets[req], r=r
            )

            responses = await self._recv_batch(MessageType.RESPOND_BATCH, RESPONSE)
            answered = responses["request_id"].astype(np.int64) - 1
            if len(answered) != len(live) or not np.array_equal(np.sort(answered), live):
                raise ProtocolViolation("RESPOND_BATCH does not answer exactly the proposed requests")
            accepted = responses["line_id"] != 0
            acc_req = answered[accepted]
            acc_line = responses["line_id"][accepted]
            candidate_lines = table.line_ids[found]
            pick = np.searchsorted(candidate_lines, acc_line)
            pick_ok = pick < len(candidate_lines)
            if not pick_ok.all() or np.any(candidate_lines[pick] != acc_line) or np.any(req[pick] != acc_req):
                raise ProtocolViolation("Bob accepted a line that was not proposed for that request")
            chosen = np.zeros(len(req), dtype=bool)
            chosen[pick] = True
            table.set_status(found[chosen], LineStatus.CONSUMED)
            table.set_status(found[~chosen], LineStatus.DELETED)

            reveal = np.zeros(len(pick), dtype=REVEAL)
            reveal["request_id"] = acc_req + 1
            reveal["r"] = r[pick]
            pending[acc_req] = False
            declines[answered[~accepted]] += 1
            pending[exhausted] = False
            failed[exhausted] = True
            if len(exhausted):
                logger.warning(f"Table exhausted for {len(exhausted)} request(s) in round {rounds}")
            self.log.record(AuditEvent.ACCEPTED, rounds, acc_req + 1, acc_line, r=r[pick])
            self.log.record(
                AuditEvent.DECLINED,
                rounds,
                req[~chosen] + 1,
                candidate_lines[~chosen],
                target=targets[req[~chosen]],
                r=r[~chosen],
            )
            self.log.record(AuditEvent.EXHAUSTED, rounds, exhausted + 1)
            logger.debug(
                f"Round {rounds}: {len(req)} proposed, {len(acc_req)} accepted, {skipped} skipped"
            )
        if len(reveal):
            await self._send_batch(MessageType.REVEAL_BATCH, reveal, REVEAL)
        self.log.record(AuditEvent.REVEALED, rounds, np.flatnonzero(~failed) + 1)
        return AliceBatchOutcome(failed=failed, declines=declines, rounds=rounds)


class BobSession(_PartySession):
    """Bob's half: answers proposals with his desired inputs and unpads outputs."""

    party = Party.BOB

    def __init__(
        self,
        table: SharedTableBob,
        transport: Transport,
        session_id: int = 1,
        audit: bool = True,
        max_payload: int = MAX_PAYLOAD,
    ):
        super().__init__(table, transport, session_id, audit, max_payload)
        self.constant_round_factor = 0

    async def handshake(self, request_count: int) -> Hello:
        return await self._guarded(self._handshake(request_count))

    async def _handshake(self, request_count: int) -> Hello:
        peer = Hello.from_payload((await self._recv(MessageType.HELLO)).payload)
        self._check_hello(peer, request_count)
        self.constant_round_factor = peer.constant_round_factor
        await self._send(MessageType.HELLO, Hello(role=Party.BOB, request_count=request_count).to_payload())
        theirs = TableDigest.from_payload((await self._recv(MessageType.TABLE_DIGEST)).payload)
        own = self._own_digest()
        if theirs != own:
            raise ProtocolViolation("Shared tables differ", AbortReason.TABLE_MISMATCH)
        await self._send(MessageType.TABLE_DIGEST, own.to_payload())
        return peer

    async def receive_test_lines(self) -> np.ndarray:
        return await self._guarded(self._answer_test_lines(await self._recv(MessageType.TEST_LINES)))

    async def _answer_test_lines(self, frame: Frame) -> np.ndarray:
        selection = BellTestSelection.from_payload(frame.payload)
        positions = self.table.positions(selection.line_ids)
        self.table.set_status(positions, LineStatus.CONSUMED)
        report = np.zeros(len(positions), dtype=TEST_REPORT)
        report["line_id"] = self.table.line_ids[positions]
        report["input"] = self.table.inputs[positions]
        report["output"] = self.table.outputs[positions]
        await self._send(MessageType.TEST_LINES, encode_test_report(report))
        logger.debug(f"Reported {len(report)} test lines")
        return report

    async def serve_batch(self, desired_inputs) -> BobBatchOutcome:
        desired = np.asarray(desired_inputs, dtype=np.uint8)
        if np.any(desired > 1):
            raise ValueError("Desired inputs must be bits")
        return await self._guarded(self._serve_batch(desired))

    async def _serve_batch(self, desired: np.ndarray) -> BobBatchOutcome:
        n = len(desired)
        self._awaiting = np.full(n, -1, dtype=np.int64)
        self._outputs = np.full(n, -1, dtype=np.int8)
        done = np.zeros(n, dtype=bool)
        failed = np.zeros(n, dtype=bool)
        declines = np.zeros(n, dtype=np.int32)
        rounds = 0
        while not (done | failed).all():
            frame = await self._recv(
                MessageType.PROPOSE_BATCH, MessageType.REVEAL_BATCH, MessageType.TEST_LINES
            )
            if frame.msg_type == MessageType.TEST_LINES:
                await self._answer_test_lines(frame)
                continue
            if frame.msg_type == MessageType.REVEAL_BATCH:
                reveal = await self._recv_batch(MessageType.REVEAL_BATCH, REVEAL, frame)
                done[self._apply_reveal(reveal, rounds)] = True
                continue
            rounds += 1
            proposals = await self._recv_batch(MessageType.PROPOSE_BATCH, PROPOSAL, frame)
            responses = self._answer(proposals, desired, done | failed, failed, declines, rounds)
            await self._send_batch(MessageType.RESPOND_BATCH, responses, RESPONSE)
        return BobBatchOutcome(outputs=self._outputs, failed=failed, declines=declines, rounds=rounds)

    def _answer(self, proposals, desired, settled, failed, declines, rounds) -> np.ndarray:
        table = self.table
        n = len(desired)
        rid = proposals["request_id"].astype(np.int64) - 1
        if np.any((rid < 0) | (rid >= n)):
            raise ProtocolViolation("Proposal for an unknown request id")
        if np.any(settled[rid] | (self._awaiting[rid] >= 0)):
            raise ProtocolViolation("Proposal for a request that is already settled")
        gone = proposals["line_id"] == 0
        failed[rid[gone]] = True
        candidates = proposals[~gone]
        crid = rid[~gone]
        if len(np.unique(candidates["line_id"])) != len(candidates):
            raise ProtocolViolation("The same line was proposed twice")
        line_pos = table.positions(candidates["line_id"])
        from_pos = table.positions(candidates["scan_from"])
        if np.any(from_pos > line_pos):
            raise ProtocolViolation("Scan range ends before it starts")
        table.delete_available_between(from_pos, line_pos)
        if np.any(table.status[line_pos] != LineStatus.AVAILABLE):
            raise SharedTable.LineUnavailable("Proposed line is no longer Available")

        matched = np.flatnonzero(table.inputs[line_pos] == desired[crid])
        _, first = np.unique(crid[matched], return_index=True)
        chosen = np.zeros(len(candidates), dtype=bool)
        chosen[matched[first]] = True
        table.set_status(line_pos[chosen], LineStatus.CONSUMED)
        table.set_status(line_pos[~chosen], LineStatus.DELETED)
        self._awaiting[crid[chosen]] = line_pos[chosen]

        requests, first_seen = np.unique(crid, return_index=True)
        requests = requests[np.argsort(first_seen)]
        accepted_line = np.zeros(n, dtype=np.uint64)
        accepted_line[crid[chosen]] = candidates["line_id"][chosen]
        responses = np.zeros(len(requests), dtype=RESPONSE)
        responses["request_id"] = requests + 1
        responses["line_id"] = accepted_line[requests]
        declines[requests[accepted_line[requests] == 0]] += 1

        self.log.record(
            AuditEvent.ACCEPTED,
            rounds,
            crid[chosen] + 1,
            candidates["line_id"][chosen],
            desired_input=desired[crid[chosen]],
        )
        self.log.record(
            AuditEvent.DECLINED,
            rounds,
            crid[~chosen] + 1,
            candidates["line_id"][~chosen],
            desired_input=desired[crid[~chosen]],
            line_input=table.inputs[line_pos[~chosen]],
            line_output=table.outputs[line_pos[~chosen]],
        )
        return responses

    def _apply_reveal(self, reveal: np.ndarray, rounds: int) -> np.ndarray:
        rid = reveal["request_id"].astype(np.int64) - 1
        n = len(self._awaiting)
        if np.any((rid < 0) | (rid >= n)) or len(np.unique(rid)) != len(rid):
            raise ProtocolViolation("REVEAL_BATCH names unknown or repeated requests")
        positions = self._awaiting[rid]
        if np.any(positions < 0):
            raise ProtocolViolation("REVEAL for a request that was not accepted")
        if np.any(reveal["r"] > 1):
            raise ProtocolViolation("Pad bit out of range")
        self._outputs[rid] = self.table.outputs[positions] ^ reveal["r"]
        self._awaiting[rid] = -1
        self.log.record(AuditEvent.FINALIZED, rounds, rid + 1, self.table.line_ids[positions])
        return rid
