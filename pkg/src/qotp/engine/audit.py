import logging
from collections import defaultdict
from enum import IntEnum

import numpy as np

logger = logging.getLogger("qotp")


class AuditEvent(IntEnum):
    PROPOSED = 0
    ACCEPTED = 1
    DECLINED = 2
    SKIPPED = 3
    REVEALED = 4
    FINALIZED = 5
    EXHAUSTED = 6


class AuditLog:
    """
    Column-oriented log of one party's state-machine transitions. Each
    entry carries the round, request ids and line ids plus event-specific
    columns (Alice: target, r; Bob: desired_input, line_input, line_output).
    """

    def __init__(self, party: str, enabled: bool = True):
        self.party = party
        self.enabled = enabled
        self._chunks: dict[AuditEvent, list[dict[str, np.ndarray]]] = defaultdict(list)

    def record(self, event: AuditEvent, round_no: int, request_ids=None, line_ids=None, **columns) -> None:
        if not self.enabled:
            return
        size = len(request_ids) if request_ids is not None else len(line_ids)
        chunk = {"round": np.full(size, round_no, dtype=np.int32)}
        if request_ids is not None:
            chunk["request_id"] = np.asarray(request_ids, dtype=np.uint64)
        if line_ids is not None:
            chunk["line_id"] = np.asarray(line_ids, dtype=np.uint64)
        for name, values in columns.items():
            chunk[name] = np.asarray(values)
        self._chunks[event].append(chunk)

    def events(self, event: AuditEvent) -> dict[str, np.ndarray]:
        """All entries of one event kind, concatenated column by column."""
        chunks = self._chunks.get(event, [])
        if not chunks:
            return {}
        return {name: np.concatenate([c[name] for c in chunks]) for name in chunks[0]}

    def count(self, event: AuditEvent) -> int:
        return sum(len(c["round"]) for c in self._chunks.get(event, []))

    def lifecycle_problems(self) -> list[str]:
        """
        Lines consumed twice, and proposed lines that never reached an
        accepted or declined outcome.
        """
        problems = []
        accepted = self.events(AuditEvent.ACCEPTED).get("line_id", np.zeros(0, np.uint64))
        declined = self.events(AuditEvent.DECLINED).get("line_id", np.zeros(0, np.uint64))
        proposed = self.events(AuditEvent.PROPOSED).get("line_id", np.zeros(0, np.uint64))
        ids, counts = np.unique(accepted, return_counts=True)
        for line_id in ids[counts > 1]:
            problems.append(f"line {int(line_id)} consumed more than once")
        settled = np.concatenate([accepted, declined])
        for line_id in np.setdiff1d(proposed, settled):
            problems.append(f"line {int(line_id)} proposed but never settled")
        if len(np.intersect1d(accepted, declined)):
            problems.append("a line was both accepted and declined")
        return problems
