"""
Single-request form of the execution handshake. Alice proposes a line whose
gate is her target (r = 0) or its opposite (r = 1); Bob accepts iff the
line's recorded input is the one he wants; only then does Alice reveal r.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from ..tabler import SharedTable, SharedTableAlice, SharedTableBob
from ..types import GateG1, LineStatus

logger = logging.getLogger("qotp")


class InvalidState(Exception):
    """An operation was applied to a request in the wrong state."""

    pass


class RequestState(Enum):
    PENDING = "pending"
    PROPOSED = "proposed"
    ACCEPTED = "accepted"
    REVEALED = "revealed"
    DONE = "done"
    FAILED = "failed"


@dataclass
class GateRequest:
    request_id: int
    target_gate: Optional[GateG1] = None  # Alice's side
    desired_input: Optional[int] = None  # Bob's side
    state: RequestState = RequestState.PENDING
    line_id: Optional[int] = None
    r: Optional[int] = field(default=None, repr=False)
    output: Optional[int] = None
    declines: int = 0


@dataclass(frozen=True)
class LineProposal:
    request_id: int
    line_id: int
    scan_from: int  # first line id of the skipped range


@dataclass(frozen=True)
class Response:
    request_id: int
    line_id: int
    accepted: bool


def alice_next_proposal(
    table: SharedTableAlice,
    request: GateRequest,
    rng: np.random.Generator,
    r: Optional[int] = None,
) -> LineProposal:
    """
    Draw a fresh pad bit, scan from the lowest Available line for the wanted
    gate, delete the lines skipped over and mark the found one Proposed.
    """
    if request.state is not RequestState.PENDING:
        raise InvalidState(f"Request {request.request_id} is {request.state.value}, not pending")
    if request.target_gate is None:
        raise InvalidState(f"Request {request.request_id} has no target gate")
    r = int(rng.integers(2)) if r is None else int(r)
    wanted = request.target_gate if r == 0 else request.target_gate.opposite()
    head = table.head()
    rest = table.status[head:]
    hits = np.flatnonzero((rest == LineStatus.AVAILABLE) & (table.gates[head:] == int(wanted)))
    if len(hits) == 0:
        request.state = RequestState.FAILED
        raise SharedTable.TableExhausted(f"No Available {wanted.name} line left for request {request.request_id}")
    found = head + int(hits[0])
    table.delete_available_between(head, found)
    table.set_status([found], LineStatus.PROPOSED)
    request.state = RequestState.PROPOSED
    request.line_id = int(table.line_ids[found])
    request.r = r
    return LineProposal(request.request_id, request.line_id, int(table.line_ids[head]))


def bob_respond(table: SharedTableBob, proposal: LineProposal, desired_input: int) -> Response:
    """
    Apply the announced deletions, then accept iff the line's input matches.
    The line leaves Available either way: Consumed on accept, Deleted on decline.
    """
    start, line = table.positions([proposal.scan_from, proposal.line_id])
    if start > line:
        raise SharedTable.LineUnavailable(
            f"Scan range starts at line {proposal.scan_from}, after line {proposal.line_id}"
        )
    table.delete_available_between(start, line)
    accepted = int(table.inputs[line]) == int(desired_input)
    table.set_status([line], LineStatus.CONSUMED if accepted else LineStatus.DELETED)
    return Response(proposal.request_id, proposal.line_id, accepted)


def alice_apply_response(table: SharedTableAlice, request: GateRequest, response: Response) -> None:
    if request.state is not RequestState.PROPOSED or response.line_id != request.line_id:
        raise InvalidState(f"Response for line {response.line_id} does not match request {request.request_id}")
    if response.accepted:
        table.set_status_by_id([response.line_id], LineStatus.CONSUMED)
        request.state = RequestState.ACCEPTED
        return
    table.set_status_by_id([response.line_id], LineStatus.DELETED)
    request.declines += 1
    request.state = RequestState.PENDING
    request.line_id = None
    request.r = None


def alice_reveal(request: GateRequest) -> int:
    if request.state is not RequestState.ACCEPTED:
        raise InvalidState(f"Cannot reveal r for request {request.request_id} in state {request.state.value}")
    request.state = RequestState.REVEALED
    return int(request.r)


def bob_finalize(request: GateRequest, recorded_output: int, r: int) -> int:
    if request.state is not RequestState.REVEALED:
        raise InvalidState(f"Request {request.request_id} has not been revealed")
    request.output = int(recorded_output) ^ int(r)
    request.state = RequestState.DONE
    return request.output
