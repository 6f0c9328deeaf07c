import logging
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel

from ..types import DetectionEvent
from .session import DetectionStream

logger = logging.getLogger("qotp")


class ClockModel(BaseModel):
    """t_bob = offset + t_alice * (1 + skew_ppm * 1e-6)"""

    offset: float = 0.0  # ps
    skew_ppm: float = 0.0

    @property
    def scale(self) -> float:
        return 1.0 + self.skew_ppm * 1e-6

    def to_alice(self, bob_times: np.ndarray) -> np.ndarray:
        return (np.asarray(bob_times, dtype=np.float64) - self.offset) / self.scale

    def to_bob(self, alice_times: np.ndarray) -> np.ndarray:
        return self.offset + np.asarray(alice_times, dtype=np.float64) * self.scale

    def offset_at(self, alice_time: float) -> float:
        return self.offset + alice_time * (self.scale - 1.0)

    def inverse(self) -> "ClockModel":
        """The model with the parties' roles swapped."""
        scale = 1.0 / self.scale
        return ClockModel(offset=-self.offset * scale, skew_ppm=(scale - 1.0) * 1e6)


@dataclass
class Coincidences:
    """Matched event indices, sorted by Alice's timestamp."""

    alice_index: np.ndarray
    bob_index: np.ndarray

    def __len__(self) -> int:
        return len(self.alice_index)

    def events(
        self, alice: DetectionStream, bob: DetectionStream
    ) -> list[tuple[DetectionEvent, DetectionEvent]]:
        return [
            (alice.event(int(a)), bob.event(int(b)))
            for a, b in zip(self.alice_index, self.bob_index)
        ]

    def select(self, mask: np.ndarray) -> "Coincidences":
        return Coincidences(self.alice_index[mask], self.bob_index[mask])


def match_coincidences(
    alice: DetectionStream,
    bob: DetectionStream,
    offset: float | ClockModel,
    window: float,
) -> Coincidences:
    """
    Greedy closest-pair matching of detections within `window` ps after
    mapping Bob's clock onto Alice's. Each event is used at most once; equal
    distances go to the pair with the earlier events.

    Candidate pairs whose events have no competing candidate are accepted in
    one vectorised step; only the contested remainder is resolved greedily.
    """
    model = offset if isinstance(offset, ClockModel) else ClockModel(offset=float(offset))
    ta = alice.timestamps.astype(np.float64)
    tb = model.to_alice(bob.timestamps)
    if len(ta) == 0 or len(tb) == 0:
        return Coincidences(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))

    lo = np.searchsorted(ta, tb - window, side="left")
    hi = np.searchsorted(ta, tb + window, side="right")
    counts = hi - lo
    total = int(counts.sum())
    b_idx = np.repeat(np.arange(len(tb)), counts)
    a_idx = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts) + np.repeat(lo, counts)

    per_alice = np.bincount(a_idx, minlength=len(ta))
    per_bob = counts
    lone = (per_alice[a_idx] == 1) & (per_bob[b_idx] == 1)
    chosen_a = [a_idx[lone]]
    chosen_b = [b_idx[lone]]

    contested = np.flatnonzero(~lone)
    if len(contested):
        ca, cb = a_idx[contested], b_idx[contested]
        distance = np.abs(tb[cb] - ta[ca])
        order = np.lexsort((cb, ca, ta[ca] + tb[cb], distance))
        used_a: set[int] = set()
        used_b: set[int] = set()
        picked_a, picked_b = [], []
        for i in order:
            a, b = int(ca[i]), int(cb[i])
            if a in used_a or b in used_b:
                continue
            used_a.add(a)
            used_b.add(b)
            picked_a.append(a)
            picked_b.append(b)
        chosen_a.append(np.array(picked_a, dtype=np.int64))
        chosen_b.append(np.array(picked_b, dtype=np.int64))
        logger.debug(f"Resolved {len(contested)} contested candidate pairs")

    alice_index = np.concatenate(chosen_a).astype(np.int64)
    bob_index = np.concatenate(chosen_b).astype(np.int64)
    order = np.lexsort((bob_index, alice_index))
    return Coincidences(alice_index[order], bob_index[order])
