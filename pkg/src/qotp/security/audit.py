"""
What Bob learns from lines he declined. Without the pad a declined line's
output carries no information about Alice's gate, and the number of declines
before an acceptance does not depend on Bob's input.
"""

import logging
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel
from scipy import stats

from ..engine.audit import AuditEvent, AuditLog
from ..types import TRUTH_TABLES

logger = logging.getLogger("qotp")

MIN_DECLINES = 10_000


class SampleTooSmall(Exception):
    pass


@dataclass
class DeclineTranscripts:
    """One row per declined line, joined from both parties' audit logs."""

    line_id: np.ndarray
    target: np.ndarray
    r: np.ndarray
    desired_input: np.ndarray
    line_input: np.ndarray
    line_output: np.ndarray

    def __len__(self) -> int:
        return len(self.line_id)


def collect_declines(alice_log: AuditLog, bob_log: AuditLog) -> DeclineTranscripts:
    alice = alice_log.events(AuditEvent.DECLINED)
    bob = bob_log.events(AuditEvent.DECLINED)
    if not alice or not bob:
        empty = np.zeros(0, dtype=np.uint8)
        return DeclineTranscripts(np.zeros(0, dtype=np.uint64), empty, empty, empty, empty, empty)
    line_ids, a, b = np.intersect1d(alice["line_id"], bob["line_id"], return_indices=True)
    return DeclineTranscripts(
        line_id=line_ids,
        target=alice["target"][a].astype(np.uint8),
        r=alice["r"][a].astype(np.uint8),
        desired_input=bob["desired_input"][b].astype(np.uint8),
        line_input=bob["line_input"][b].astype(np.uint8),
        line_output=bob["line_output"][b].astype(np.uint8),
    )


class PrivacyReport(BaseModel):
    declines: int
    # P(declined output == target(line input)) without the pad; 0.5 when private
    output_agreement: float
    output_agreement_error: float
    # same line unpadded with the pad Alice kept; about P_S
    pad_known_agreement: float
    ks_statistic: float
    ks_pvalue: float
    input_independent: bool
    leaks: bool


def privacy_audit(
    declines: DeclineTranscripts,
    decline_counts: np.ndarray,
    desired_inputs: np.ndarray,
    alpha: float = 0.01,
    tolerance: float = 0.005,
) -> PrivacyReport:
    """
    Declined-line output correlation plus a two-sample KS test of the
    per-request decline counts split by Bob's input.
    """
    if len(declines) < MIN_DECLINES:
        raise SampleTooSmall(f"Need at least {MIN_DECLINES} declined lines, got {len(declines)}")
    decline_counts = np.asarray(decline_counts)
    desired_inputs = np.asarray(desired_inputs)
    zeros = decline_counts[desired_inputs == 0]
    ones = decline_counts[desired_inputs == 1]
    if len(zeros) == 0 or len(ones) == 0:
        raise SampleTooSmall("Both input values need at least one request")

    ideal = TRUTH_TABLES[declines.target, declines.line_input]
    agreement = float(np.mean(declines.line_output == ideal))
    error = float(np.sqrt(agreement * (1.0 - agreement) / len(declines)))
    pad_known = float(
        np.mean((declines.line_output ^ declines.r) == TRUTH_TABLES[declines.target, declines.line_input])
    )
    ks = stats.ks_2samp(zeros, ones)
    independent = bool(ks.pvalue >= alpha)
    leaks = abs(agreement - 0.5) > tolerance or not independent
    if leaks:
        logger.warning(
            f"Privacy audit flags leakage: agreement {agreement:.4f}, KS p-value {ks.pvalue:.4f}"
        )
    return PrivacyReport(
        declines=len(declines),
        output_agreement=agreement,
        output_agreement_error=error,
        pad_known_agreement=pad_known,
        ks_statistic=float(ks.statistic),
        ks_pvalue=float(ks.pvalue),
        input_independent=independent,
        leaks=leaks,
    )
