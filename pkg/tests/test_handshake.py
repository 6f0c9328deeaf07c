import numpy as np
import pytest

from qotp.engine import (
    GateRequest,
    InvalidState,
    RequestState,
    alice_apply_response,
    alice_next_proposal,
    alice_reveal,
    bob_finalize,
    bob_respond,
)
from qotp.tabler import SharedTable, SharedTableAlice, SharedTableBob
from qotp.types import GateG1, LineStatus


@pytest.fixture
def tables():
    ids = np.arange(1, 7)
    alice = SharedTableAlice(ids, [0, 1, 2, 3, 2, 0])
    bob = SharedTableBob(ids, [0, 1, 1, 0, 0, 1], [0, 1, 1, 0, 1, 0])
    return alice, bob


def test_accepted_request_reveals_pad(tables):
    alice, bob = tables
    request = GateRequest(request_id=1, target_gate=GateG1.ID, desired_input=1)
    rng = np.random.default_rng(0)

    proposal = alice_next_proposal(alice, request, rng, r=0)
    assert proposal.line_id == 3
    assert proposal.scan_from == 1
    assert alice.status_of(1) is LineStatus.DELETED
    assert alice.status_of(3) is LineStatus.PROPOSED

    response = bob_respond(bob, proposal, desired_input=1)
    assert response.accepted
    alice_apply_response(alice, request, response)
    assert request.state is RequestState.ACCEPTED

    r = alice_reveal(request)
    output = bob_finalize(request, int(bob.outputs[2]), r)
    assert output == 1
    assert request.state is RequestState.DONE
    assert alice.digest() == bob.digest()


def test_pad_bit_flips_the_recorded_output(tables):
    alice, bob = tables
    request = GateRequest(request_id=1, target_gate=GateG1.ID, desired_input=0)
    proposal = alice_next_proposal(alice, request, np.random.default_rng(0), r=1)
    # opposite(ID) = NOT sits on line 4
    assert proposal.line_id == 4
    response = bob_respond(bob, proposal, desired_input=0)
    alice_apply_response(alice, request, response)
    assert bob_finalize(request, int(bob.outputs[3]), alice_reveal(request)) == 1


def test_decline_returns_request_to_pending(tables):
    alice, bob = tables
    request = GateRequest(request_id=7, target_gate=GateG1.CONST1, desired_input=0)
    proposal = alice_next_proposal(alice, request, np.random.default_rng(0), r=0)
    assert proposal.line_id == 2

    response = bob_respond(bob, proposal, desired_input=0)
    assert not response.accepted
    alice_apply_response(alice, request, response)
    assert request.state is RequestState.PENDING
    assert request.declines == 1
    assert request.r is None
    assert alice.status_of(2) is LineStatus.DELETED
    assert bob.status_of(2) is LineStatus.DELETED
    assert alice.digest() == bob.digest()


def test_exhaustion_fails_request():
    alice = SharedTableAlice([1, 2], [0, 0])
    request = GateRequest(request_id=1, target_gate=GateG1.CONST1)
    with pytest.raises(SharedTable.TableExhausted):
        alice_next_proposal(alice, request, np.random.default_rng(0), r=0)
    assert request.state is RequestState.FAILED


def test_reveal_requires_acceptance(tables):
    alice, _ = tables
    request = GateRequest(request_id=1, target_gate=GateG1.NOT)
    with pytest.raises(InvalidState):
        alice_reveal(request)
    alice_next_proposal(alice, request, np.random.default_rng(0), r=0)
    with pytest.raises(InvalidState):
        alice_next_proposal(alice, request, np.random.default_rng(0))
    with pytest.raises(InvalidState):
        bob_finalize(request, 0, 0)


def test_response_for_other_line_rejected(tables):
    alice, bob = tables
    request = GateRequest(request_id=1, target_gate=GateG1.ID)
    proposal = alice_next_proposal(alice, request, np.random.default_rng(0), r=0)
    response = bob_respond(bob, proposal, desired_input=1)
    forged = type(response)(request_id=1, line_id=5, accepted=True)
    with pytest.raises(InvalidState):
        alice_apply_response(alice, request, forged)


def test_foreign_line_id(tables):
    alice, bob = tables
    request = GateRequest(request_id=1, target_gate=GateG1.ID)
    proposal = alice_next_proposal(alice, request, np.random.default_rng(0), r=0)
    bad = type(proposal)(request_id=1, line_id=99, scan_from=proposal.scan_from)
    with pytest.raises(SharedTable.UnknownLine):
        bob_respond(bob, bad, desired_input=1)
