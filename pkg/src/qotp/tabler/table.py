import hashlib
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from pydantic import BaseModel

from ..qsim import NoiseModel, SamplingChannel, sample_table_lines
from ..types import GateG1, LineRecordAlice, LineRecordBob, LineStatus, Party
from .coincidence import ClockModel, Coincidences, match_coincidences
from .session import DetectionStream, SessionParams
from .sync import estimate_clock_drift, find_calibration_edge, find_clock_offset

logger = logging.getLogger("qotp")

# _ALLOWED[old, new] is True when a line may move from status old to new.
_ALLOWED = np.array(
    [[old.can_become(new) for new in LineStatus] for old in LineStatus], dtype=bool
)


class SharedTable:
    """
    One party's copy of the shared table, stored column-wise. Line ids are
    strictly increasing; statuses follow Available -> Proposed ->
    {Consumed, Deleted} or Available -> Deleted.
    """

    party: Party

    class TableExhausted(Exception):
        """No Available line with the wanted gate remains."""

        pass

    class UnknownLine(Exception):
        """A line id that is not part of this table."""

        pass

    class LineUnavailable(Exception):
        """A status change the line lifecycle does not allow."""

        pass

    def __init__(
        self,
        line_ids: np.ndarray,
        status: Optional[np.ndarray] = None,
        multi_photon: Optional[np.ndarray] = None,
        seed: int = 0,
    ):
        self.line_ids = np.asarray(line_ids, dtype=np.uint64)
        n = len(self.line_ids)
        self.status = (
            np.zeros(n, dtype=np.uint8)
            if status is None
            else np.asarray(status, dtype=np.uint8).copy()
        )
        self.multi_photon = (
            np.zeros(n, dtype=bool) if multi_photon is None else np.asarray(multi_photon, dtype=bool)
        )
        self.seed = int(seed)
        if n > 1 and np.any(np.diff(self.line_ids.astype(np.int64)) <= 0):
            raise ValueError("Line ids must be strictly increasing")

    def __len__(self) -> int:
        return len(self.line_ids)

    def positions(self, line_ids) -> np.ndarray:
        """Row positions of the given line ids; raises UnknownLine for foreign ids."""
        ids = np.atleast_1d(np.asarray(line_ids, dtype=np.uint64))
        if len(self.line_ids) == 0:
            if len(ids):
                raise self.UnknownLine(f"Unknown line id {int(ids[0])}: the table is empty")
            return np.zeros(0, dtype=np.int64)
        pos = np.searchsorted(self.line_ids, ids)
        clipped = np.minimum(pos, len(self.line_ids) - 1)
        bad = (pos >= len(self.line_ids)) | (self.line_ids[clipped] != ids)
        if np.any(bad):
            raise self.UnknownLine(f"Unknown line id {int(ids[np.argmax(bad)])}")
        return pos

    def set_status(self, positions: np.ndarray, new: LineStatus) -> None:
        positions = np.asarray(positions, dtype=np.int64)
        if len(positions) == 0:
            return
        old = self.status[positions]
        illegal = ~_ALLOWED[old, int(new)]
        if np.any(illegal):
            i = int(np.argmax(illegal))
            raise self.LineUnavailable(
                f"Line {int(self.line_ids[positions[i]])} cannot go from "
                f"{LineStatus(int(old[i])).name} to {new.name}"
            )
        self.status[positions] = int(new)

    def set_status_by_id(self, line_ids, new: LineStatus) -> None:
        self.set_status(self.positions(line_ids), new)

    def status_of(self, line_id: int) -> LineStatus:
        return LineStatus(int(self.status[self.positions(line_id)[0]]))

    def head(self) -> int:
        """Position of the lowest Available line, or len(self) if none remains."""
        available = np.flatnonzero(self.status == LineStatus.AVAILABLE)
        return int(available[0]) if len(available) else len(self)

    def available_ids(self) -> np.ndarray:
        return self.line_ids[self.status == LineStatus.AVAILABLE]

    def count(self, status: LineStatus) -> int:
        return int(np.count_nonzero(self.status == int(status)))

    def delete_available_between(self, start: np.ndarray, stop: np.ndarray) -> int:
        """
        Delete every Available line in the position ranges [start, stop).
        Returns the number of lines deleted.
        """
        start = np.atleast_1d(np.asarray(start, dtype=np.int64))
        stop = np.atleast_1d(np.asarray(stop, dtype=np.int64))
        if len(start) == 0:
            return 0
        marks = np.zeros(len(self) + 1, dtype=np.int64)
        np.add.at(marks, start, 1)
        np.add.at(marks, stop, -1)
        inside = np.cumsum(marks[:-1]) > 0
        doomed = inside & (self.status == LineStatus.AVAILABLE)
        self.status[doomed] = LineStatus.DELETED
        return int(doomed.sum())

    def digest(self) -> str:
        """SHA3-256 over line ids and statuses; equal on both sides when in sync."""
        h = hashlib.sha3_256()
        h.update(self.line_ids.astype("<u8").tobytes())
        h.update(self.status.astype(np.uint8).tobytes())
        return h.hexdigest()


class SharedTableAlice(SharedTable):
    party = Party.ALICE

    def __init__(self, line_ids, gates, status=None, multi_photon=None, seed: int = 0):
        super().__init__(line_ids, status=status, multi_photon=multi_photon, seed=seed)
        self.gates = np.asarray(gates, dtype=np.uint8)
        if len(self.gates) != len(self.line_ids):
            raise ValueError("gates and line_ids must have equal length")

    def record(self, i: int) -> LineRecordAlice:
        return LineRecordAlice(
            line_id=int(self.line_ids[i]),
            gate=GateG1(int(self.gates[i])),
            status=LineStatus(int(self.status[i])),
        )

    def copy(self) -> "SharedTableAlice":
        return SharedTableAlice(
            self.line_ids.copy(), self.gates.copy(), self.status.copy(), self.multi_photon.copy(), self.seed
        )

    @staticmethod
    def from_records(records: list[LineRecordAlice], seed: int = 0) -> "SharedTableAlice":
        return SharedTableAlice(
            [r.line_id for r in records],
            [int(r.gate) for r in records],
            [int(r.status) for r in records],
            seed=seed,
        )


class SharedTableBob(SharedTable):
    party = Party.BOB

    def __init__(self, line_ids, inputs, outputs, status=None, multi_photon=None, seed: int = 0):
        super().__init__(line_ids, status=status, multi_photon=multi_photon, seed=seed)
        self.inputs = np.asarray(inputs, dtype=np.uint8)
        self.outputs = np.asarray(outputs, dtype=np.uint8)
        if not len(self.inputs) == len(self.outputs) == len(self.line_ids):
            raise ValueError("inputs, outputs and line_ids must have equal length")

    def record(self, i: int) -> LineRecordBob:
        return LineRecordBob(
            line_id=int(self.line_ids[i]),
            input=int(self.inputs[i]),
            output=int(self.outputs[i]),
            status=LineStatus(int(self.status[i])),
        )

    def copy(self) -> "SharedTableBob":
        return SharedTableBob(
            self.line_ids.copy(),
            self.inputs.copy(),
            self.outputs.copy(),
            self.status.copy(),
            self.multi_photon.copy(),
            self.seed,
        )

    @staticmethod
    def from_records(records: list[LineRecordBob], seed: int = 0) -> "SharedTableBob":
        return SharedTableBob(
            [r.line_id for r in records],
            [r.input for r in records],
            [r.output for r in records],
            [int(r.status) for r in records],
            seed=seed,
        )


def reconcile(
    alice: DetectionStream,
    bob: DetectionStream,
    pairs: Coincidences,
    table_start: Optional[int] = None,
    seed: int = 0,
) -> tuple[SharedTableAlice, SharedTableBob]:
    """
    Keep only mutually confirmed detections (at or after `table_start` in
    Alice's clock) and number them 1, 2, ... identically on both sides.
    """
    if table_start is not None and len(pairs):
        pairs = pairs.select(alice.timestamps[pairs.alice_index] >= table_start)
    n = len(pairs)
    line_ids = np.arange(1, n + 1, dtype=np.uint64)
    alice_channels = alice.channels[pairs.alice_index]
    bob_channels = bob.channels[pairs.bob_index]
    flags = alice.multi_photon[pairs.alice_index] | bob.multi_photon[pairs.bob_index]
    alice_table = SharedTableAlice(line_ids, alice_channels ^ 1, multi_photon=flags, seed=seed)
    bob_table = SharedTableBob(
        line_ids.copy(), bob_channels >> 1, bob_channels & 1, multi_photon=flags.copy(), seed=seed
    )
    logger.debug(f"Reconciled {n} lines")
    return alice_table, bob_table


class ReconcileReport(BaseModel):
    alice_edge: int
    bob_edge: int
    offset_ps: int
    skew_ppm: float
    alice_events: int
    bob_events: int
    table_period_events: int
    lines: int
    matched_fraction: float


@dataclass
class ReconciledSession:
    alice: SharedTableAlice
    bob: SharedTableBob
    clock: ClockModel
    report: ReconcileReport
    pairs: Coincidences  # confirmed pairs in line order


def reconcile_session(
    alice: DetectionStream, bob: DetectionStream, params: SessionParams
) -> ReconciledSession:
    """Offset recovery, drift estimation, matching and reconciliation in one pass."""
    offset = find_clock_offset(
        alice, bob, window=params.coincidence_window, calibration=params.calibration
    )
    clock = estimate_clock_drift(alice, bob, offset, window=params.coincidence_window)
    pairs = match_coincidences(alice, bob, clock, params.coincidence_window)
    alice_edge = find_calibration_edge(alice)
    table_start = alice_edge + params.calibration + params.calibration_gap // 2
    if len(pairs):
        pairs = pairs.select(alice.timestamps[pairs.alice_index] >= table_start)
    alice_table, bob_table = reconcile(alice, bob, pairs, seed=params.seed)
    period_events = int(np.count_nonzero(alice.timestamps >= table_start))
    report = ReconcileReport(
        alice_edge=alice_edge,
        bob_edge=find_calibration_edge(bob),
        offset_ps=offset,
        skew_ppm=clock.skew_ppm,
        alice_events=len(alice),
        bob_events=len(bob),
        table_period_events=period_events,
        lines=len(alice_table),
        matched_fraction=len(alice_table) / period_events if period_events else 0.0,
    )
    logger.info(
        f"Reconciled {report.lines} lines, matched fraction {report.matched_fraction:.4f}, "
        f"offset {offset} ps, skew {clock.skew_ppm:.3f} ppm"
    )
    return ReconciledSession(alice_table, bob_table, clock, report, pairs)


def generate_tables(
    n_lines: int,
    noise: NoiseModel,
    rng: np.random.Generator,
    channel: Optional[SamplingChannel] = None,
    run_index: int = 0,
    seed: int = 0,
) -> tuple[SharedTableAlice, SharedTableBob]:
    """Directly sampled, already reconciled tables of `n_lines` lines (no timestamps)."""
    if n_lines > 0 and noise.loss_prob >= 1.0:
        raise ValueError("Cannot generate table lines when every qubit is lost")
    parts = []
    have = 0
    while have < n_lines:
        draw = int((n_lines - have) / (1.0 - noise.loss_prob) * 1.05) + 64
        batch = sample_table_lines(noise, draw, rng, channel=channel, run_index=run_index).kept()
        parts.append(batch)
        have += len(batch)
    gates = np.concatenate([p.gate for p in parts])[:n_lines] if parts else np.zeros(0, np.uint8)
    inputs = np.concatenate([p.bob_input for p in parts])[:n_lines] if parts else np.zeros(0, np.uint8)
    outputs = np.concatenate([p.bob_output for p in parts])[:n_lines] if parts else np.zeros(0, np.uint8)
    flags = np.concatenate([p.multi_photon for p in parts])[:n_lines] if parts else np.zeros(0, bool)
    line_ids = np.arange(1, n_lines + 1, dtype=np.uint64)
    return (
        SharedTableAlice(line_ids, gates, multi_photon=flags, seed=seed),
        SharedTableBob(line_ids.copy(), inputs, outputs, multi_photon=flags.copy(), seed=seed),
    )
