"""
The classical execution protocol over shared tables: single-request
handshake, batched party state machines, circuits and G_k gates.
"""

from .audit import AuditEvent, AuditLog
from .batch import BatchResult, LoopbackSession, execute_batch, run_batch_pair
from .circuit import (
    CircuitDesc,
    CircuitGate,
    CircuitRun,
    evaluate_circuit,
    load_circuit,
    randomize_circuit,
)
from .gk import (
    SIMULATE_MODE,
    TABLE_MODE,
    DecompositionUnavailable,
    GkGateSpec,
    execute_gk,
    execute_gk_batch,
)
from .handshake import (
    GateRequest,
    InvalidState,
    LineProposal,
    RequestState,
    Response,
    alice_apply_response,
    alice_next_proposal,
    alice_reveal,
    bob_finalize,
    bob_respond,
)
from .parties import AliceBatchOutcome, AliceSession, BobBatchOutcome, BobSession

__all__ = [
    "AliceBatchOutcome",
    "AliceSession",
    "AuditEvent",
    "AuditLog",
    "BatchResult",
    "BobBatchOutcome",
    "BobSession",
    "CircuitDesc",
    "CircuitGate",
    "CircuitRun",
    "DecompositionUnavailable",
    "GateRequest",
    "GkGateSpec",
    "InvalidState",
    "LineProposal",
    "LoopbackSession",
    "RequestState",
    "Response",
    "SIMULATE_MODE",
    "TABLE_MODE",
    "alice_apply_response",
    "alice_next_proposal",
    "alice_reveal",
    "bob_finalize",
    "bob_respond",
    "evaluate_circuit",
    "execute_batch",
    "execute_gk",
    "execute_gk_batch",
    "load_circuit",
    "randomize_circuit",
    "run_batch_pair",
]
