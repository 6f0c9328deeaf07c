"""
Bell test on sacrificed table lines. Alice's outcome is +1 when she
projected onto the positive end of A1/A2 (her recorded gate is odd); Bob's is
+1 when his output is 0.
"""

import logging
import math
from typing import Optional

import numpy as np
from pydantic import BaseModel

from ..tabler import SharedTable, SharedTableAlice, SharedTableBob
from ..types import LineStatus
from ..wire.messages import AbortReason, SessionAborted

logger = logging.getLogger("qotp")

SETTINGS = ("A1_Z", "A1_X", "A2_Z", "A2_X")
_SIGNS = np.array([1.0, 1.0, 1.0, -1.0])
CLASSICAL_BOUND = 2.0
TSIRELSON_BOUND = 2.0 * math.sqrt(2.0)


class InsufficientLines(Exception):
    """Too few lines to estimate every correlator."""

    pass


class ChshEstimate(BaseModel):
    s: float
    std_error: float
    correlators: dict[str, float]
    counts: dict[str, int]
    lines: int

    @property
    def violation_sigma(self) -> float:
        """Distance above the classical bound in standard errors."""
        return (self.s - CLASSICAL_BOUND) / self.std_error if self.std_error > 0 else math.inf


def chsh_from_records(gates, bob_inputs, bob_outputs) -> ChshEstimate:
    gates = np.asarray(gates, dtype=np.uint8)
    bob_inputs = np.asarray(bob_inputs, dtype=np.uint8)
    bob_outputs = np.asarray(bob_outputs, dtype=np.uint8)
    alice_sign = np.where(gates & 1, 1.0, -1.0)
    bob_sign = np.where(bob_outputs == 0, 1.0, -1.0)
    setting = 2 * (gates >> 1) + bob_inputs
    products = alice_sign * bob_sign

    counts = np.bincount(setting, minlength=4)
    if np.any(counts < 2):
        raise InsufficientLines(f"Need at least 2 lines per setting, got {counts.tolist()}")
    sums = np.bincount(setting, weights=products, minlength=4)
    correlators = sums / counts
    s = abs(float(np.dot(_SIGNS, correlators)))
    std_error = math.sqrt(float(np.sum((1.0 - correlators**2) / counts)))
    return ChshEstimate(
        s=s,
        std_error=std_error,
        correlators={name: float(e) for name, e in zip(SETTINGS, correlators)},
        counts={name: int(c) for name, c in zip(SETTINGS, counts)},
        lines=len(gates),
    )


def chsh_from_table(
    alice: SharedTableAlice, bob: SharedTableBob, line_ids: Optional[np.ndarray] = None
) -> ChshEstimate:
    """CHSH over the given lines (default: the whole table)."""
    if line_ids is None:
        alice_pos = bob_pos = np.arange(len(alice))
    else:
        alice_pos = alice.positions(line_ids)
        bob_pos = bob.positions(line_ids)
    return chsh_from_records(alice.gates[alice_pos], bob.inputs[bob_pos], bob.outputs[bob_pos])


def select_test_lines(table: SharedTable, count: int, seed: int) -> np.ndarray:
    """Seeded public draw of `count` Available lines, sorted by id."""
    available = table.available_ids()
    if count > len(available):
        raise InsufficientLines(f"Asked for {count} test lines, only {len(available)} available")
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(available, size=count, replace=False))


def mark_test_lines(alice: SharedTableAlice, bob: SharedTableBob, line_ids: np.ndarray) -> None:
    alice.set_status_by_id(line_ids, LineStatus.CONSUMED)
    bob.set_status_by_id(line_ids, LineStatus.CONSUMED)


class ChshReport(BaseModel):
    s: float
    std_error: float
    violation_sigma: float
    correlators: dict[str, float]
    counts: dict[str, int]
    threshold: float
    verdict: str  # "secure" or "abort"


def chsh_report(estimate: ChshEstimate, threshold: float = 2.5) -> ChshReport:
    verdict = "secure" if estimate.s >= threshold else "abort"
    if verdict == "abort":
        logger.warning(f"CHSH value {estimate.s:.3f} below abort threshold {threshold}")
    return ChshReport(
        s=estimate.s,
        std_error=estimate.std_error,
        violation_sigma=estimate.violation_sigma,
        correlators=estimate.correlators,
        counts=estimate.counts,
        threshold=threshold,
        verdict=verdict,
    )


async def run_bell_test(session, count: int, seed: int, abort_below: float = 2.5) -> ChshEstimate:
    """
    Alice's side of the in-session Bell test: announce `count` seeded lines,
    score Bob's report against her gates and abort with CHSH_FAILURE when S
    falls below `abort_below`.
    """
    ids = select_test_lines(session.table, count, seed)
    report = await session.announce_test_lines(ids, seed)
    positions = session.table.positions(report["line_id"])
    estimate = chsh_from_records(session.table.gates[positions], report["input"], report["output"])
    logger.info(f"Bell test on {count} lines: S = {estimate.s:.3f} +- {estimate.std_error:.3f}")
    if estimate.s < abort_below:
        message = f"S = {estimate.s:.3f} below {abort_below}"
        await session.abort(AbortReason.CHSH_FAILURE, message)
        raise SessionAborted(AbortReason.CHSH_FAILURE, message, by_peer=False)
    return estimate
