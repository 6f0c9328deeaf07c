"""
Simulated quantum phase: time-tagged detection streams for both parties.

Timeline (Alice's clock): the source switch stays closed for `switch_delay`,
opens for the calibration burst, closes for `calibration_gap`, then stays
open until `duration`. Only detections after the gap become table lines.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import BaseModel, Field

from ..qsim import NoiseModel, SamplingChannel, sample_table_lines
from ..types import DetectionEvent, GateG1, LineRecordAlice, LineRecordBob, Party

logger = logging.getLogger("qotp")

PS_PER_S = 10**12
PS_PER_MS = 10**9


class SessionParams(BaseModel):
    pair_rate: float = Field(default=10_000.0, gt=0.0)  # Hz
    duration: float = Field(default=10.0, gt=0.0)  # s, includes the calibration prefix
    coincidence_window: int = Field(default=6_000, gt=0)  # ps
    clock_offset: int = 0  # ps, added to Bob's clock
    clock_skew: float = 0.0  # ppm
    jitter: float = Field(default=100.0, ge=0.0)  # ps, Gaussian sigma per detection
    noise: NoiseModel = Field(default_factory=NoiseModel)
    seed: int = 0
    switch_delay: int = 10 * PS_PER_MS
    calibration: int = 100 * PS_PER_MS
    calibration_gap: int = 1 * PS_PER_MS
    run_index: int = 0

    @property
    def table_start(self) -> int:
        """Start of the table period, in ps after the calibration edge."""
        return self.calibration + self.calibration_gap

    def expected_table_lines(self) -> float:
        period = self.duration * PS_PER_S - self.switch_delay - self.table_start
        return self.pair_rate * max(period, 0) / PS_PER_S * (1.0 - self.noise.loss_prob)


@dataclass
class DetectionStream:
    """
    One party's time-tagged detections. Alice's channel is 2 * basis + outcome
    (A1: Psi_0 -> 0, Psi_1 -> 1; A2: Psi_Id -> 2, Psi_not -> 3), Bob's is
    2 * input + output.
    """

    party: Party
    timestamps: np.ndarray  # int64 ps, non-decreasing
    channels: np.ndarray  # uint8
    multi_photon: np.ndarray = field(default=None)

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        self.channels = np.asarray(self.channels, dtype=np.uint8)
        if self.multi_photon is None:
            self.multi_photon = np.zeros(len(self.timestamps), dtype=bool)
        if len(self.channels) != len(self.timestamps):
            raise ValueError("timestamps and channels must have equal length")
        if len(self.timestamps) > 1 and np.any(np.diff(self.timestamps) < 0):
            raise ValueError("Detection timestamps must be non-decreasing")

    def __len__(self) -> int:
        return len(self.timestamps)

    def event(self, i: int) -> DetectionEvent:
        return DetectionEvent(
            timestamp=int(self.timestamps[i]),
            channel=int(self.channels[i]),
            party=self.party,
        )

    def events(self) -> list[DetectionEvent]:
        return [self.event(i) for i in range(len(self))]

    def window(self, start: int, stop: int) -> "DetectionStream":
        lo, hi = np.searchsorted(self.timestamps, [start, stop])
        return DetectionStream(
            self.party,
            self.timestamps[lo:hi],
            self.channels[lo:hi],
            self.multi_photon[lo:hi],
        )

    def alice_records(self) -> list[LineRecordAlice]:
        """Per-event records before reconciliation; line_id is the event index."""
        return [
            LineRecordAlice(line_id=i, gate=GateG1(int(c) ^ 1))
            for i, c in enumerate(self.channels)
        ]

    def bob_records(self) -> list[LineRecordBob]:
        return [
            LineRecordBob(line_id=i, input=int(c) >> 1, output=int(c) & 1)
            for i, c in enumerate(self.channels)
        ]


@dataclass
class SimulatedSession:
    params: SessionParams
    alice: DetectionStream
    bob: DetectionStream
    # Alice-clock emission time of the calibration edge.
    switch_open: int


def _emission_times(rng: np.random.Generator, start: int, stop: int, rate: float) -> np.ndarray:
    if stop <= start:
        return np.zeros(0, dtype=np.int64)
    count = rng.poisson(rate * (stop - start) / PS_PER_S)
    return np.sort(rng.integers(start, stop, size=count, dtype=np.int64))


def _dark_counts(rng: np.random.Generator, rate: float, stop: int) -> tuple[np.ndarray, np.ndarray]:
    if rate <= 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.uint8)
    times = _emission_times(rng, 0, stop, rate)
    return times, rng.integers(0, 4, size=len(times), dtype=np.uint8)


def _bob_clock(times: np.ndarray, params: SessionParams) -> np.ndarray:
    """Alice-clock times as read on Bob's skewed and offset clock."""
    return np.round(times * (1.0 + params.clock_skew * 1e-6)).astype(np.int64) + params.clock_offset


def _merge(party, times, channels, flags, extra_times, extra_channels) -> DetectionStream:
    times = np.concatenate([times, extra_times])
    channels = np.concatenate([channels, extra_channels])
    flags = np.concatenate([flags, np.zeros(len(extra_times), dtype=bool)])
    order = np.argsort(times, kind="stable")
    return DetectionStream(party, times[order], channels[order], flags[order])


def simulate_session(
    params: SessionParams, channel: Optional[SamplingChannel] = None
) -> SimulatedSession:
    """
    Poisson pair emissions sampled through qsim. Lost qubits leave an
    Alice-only detection; Bob's clock is offset and skewed.
    """
    rng = np.random.default_rng(params.seed)
    stop = int(params.duration * PS_PER_S)
    switch_open = params.switch_delay
    burst_end = switch_open + params.calibration
    table_open = burst_end + params.calibration_gap

    emissions = np.concatenate(
        [
            _emission_times(rng, switch_open, min(burst_end, stop), params.pair_rate),
            _emission_times(rng, min(table_open, stop), stop, params.pair_rate),
        ]
    )
    lines = sample_table_lines(
        params.noise, len(emissions), rng, channel=channel, run_index=params.run_index
    )

    alice_times = emissions + np.round(rng.normal(0.0, params.jitter, len(emissions))).astype(np.int64)
    bob_true = emissions + np.round(rng.normal(0.0, params.jitter, len(emissions))).astype(np.int64)
    bob_times = _bob_clock(bob_true, params)
    kept = ~lines.lost

    dark_a = _dark_counts(rng, params.noise.dark_count_rate, stop)
    dark_b = _dark_counts(rng, params.noise.dark_count_rate, stop)
    alice = _merge(
        Party.ALICE, alice_times, lines.alice_channel, lines.multi_photon, *dark_a
    )
    bob = _merge(
        Party.BOB,
        bob_times[kept],
        lines.bob_channel[kept],
        lines.multi_photon[kept],
        _bob_clock(dark_b[0], params),
        dark_b[1],
    )
    logger.debug(
        f"Simulated session: {len(emissions)} pairs, {len(alice)} Alice and {len(bob)} Bob detections"
    )
    return SimulatedSession(params=params, alice=alice, bob=bob, switch_open=switch_open)


def save_streams(path: str | Path, alice: DetectionStream, bob: DetectionStream) -> None:
    np.savez_compressed(
        path,
        alice_timestamps=alice.timestamps,
        alice_channels=alice.channels,
        alice_multi_photon=alice.multi_photon,
        bob_timestamps=bob.timestamps,
        bob_channels=bob.channels,
        bob_multi_photon=bob.multi_photon,
    )


def load_streams(path: str | Path) -> tuple[DetectionStream, DetectionStream]:
    with np.load(path) as data:
        alice = DetectionStream(
            Party.ALICE,
            data["alice_timestamps"],
            data["alice_channels"],
            data["alice_multi_photon"],
        )
        bob = DetectionStream(
            Party.BOB,
            data["bob_timestamps"],
            data["bob_channels"],
            data["bob_multi_photon"],
        )
    return alice, bob
