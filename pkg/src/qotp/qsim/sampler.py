"""
Monte-Carlo sampling of shared-table lines from noisy |Psi-> pairs.

Alice measures her half of each pair in A1 or A2 (chosen by a 50/50 beamsplitter)
and records the gate of the state ORTHOGONAL to her projection, which is the
state Bob's qubit collapses into. Bob measures in Z (input 0) or X (input 1).
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..types import TRUTH_TABLES, GateG1, MeasBasis
from .gates import INV_SQRT2
from .noise import NoiseModel

logger = logging.getLogger("qotp")

# (x, z) Bloch components of the state Alice projects onto, indexed by
# 2 * basis + outcome, which coincides with that state's GateG1 code.
_PROJECTED_X = np.array([INV_SQRT2, -INV_SQRT2, -INV_SQRT2, INV_SQRT2])
_PROJECTED_Z = np.array([INV_SQRT2, -INV_SQRT2, INV_SQRT2, -INV_SQRT2])

# Transforms Bob's conditional Bloch vectors (x, z) before his measurement.
SamplingChannel = Callable[
    [np.ndarray, np.ndarray, np.random.Generator], tuple[np.ndarray, np.ndarray]
]


@dataclass
class LineSamples:
    """
    Column-oriented batch of sampled lines. Lost lines keep their Alice side;
    their Bob columns hold 0 and must be ignored.
    """

    alice_basis: np.ndarray  # 0 = A1, 1 = A2
    alice_outcome: np.ndarray  # 0 = Psi_0 / Psi_Id, 1 = Psi_1 / Psi_not
    gate: np.ndarray  # GateG1 code recorded by Alice
    bob_input: np.ndarray
    bob_output: np.ndarray
    lost: np.ndarray
    multi_photon: np.ndarray

    def __len__(self) -> int:
        return len(self.gate)

    @property
    def alice_channel(self) -> np.ndarray:
        """Detector index on Alice's side: 2 * basis + outcome."""
        return (2 * self.alice_basis + self.alice_outcome).astype(np.uint8)

    @property
    def bob_channel(self) -> np.ndarray:
        """Detector index on Bob's side: 2 * input + output."""
        return (2 * self.bob_input + self.bob_output).astype(np.uint8)

    def kept(self) -> "LineSamples":
        """The lines Bob actually detected."""
        keep = ~self.lost
        return LineSamples(
            alice_basis=self.alice_basis[keep],
            alice_outcome=self.alice_outcome[keep],
            gate=self.gate[keep],
            bob_input=self.bob_input[keep],
            bob_output=self.bob_output[keep],
            lost=self.lost[keep],
            multi_photon=self.multi_photon[keep],
        )

    def success(self) -> np.ndarray:
        """Whether Bob's output equals the recorded gate's truth table on his input."""
        return TRUTH_TABLES[self.gate, self.bob_input] == self.bob_output


def sample_table_lines(
    noise: NoiseModel,
    size: int,
    rng: np.random.Generator,
    channel: Optional[SamplingChannel] = None,
    run_index: int = 0,
) -> LineSamples:
    visibility = noise.visibility_at(run_index)

    alice_basis = rng.integers(0, 2, size=size, dtype=np.uint8)
    alice_outcome = rng.integers(0, 2, size=size, dtype=np.uint8)
    projected = 2 * alice_basis + alice_outcome
    gate = (projected ^ 1).astype(np.uint8)

    # Bob's qubit is orthogonal to Alice's projection; the Werner channel
    # shrinks the Bloch vector by v.
    bloch_x = -visibility * _PROJECTED_X[projected]
    bloch_z = -visibility * _PROJECTED_Z[projected]
    if channel is not None:
        bloch_x, bloch_z = channel(bloch_x, bloch_z, rng)

    bob_input = rng.integers(0, 2, size=size, dtype=np.uint8)
    along = np.where(bob_input == 1, bloch_x, bloch_z)
    p_zero = 0.5 * (1.0 + along)
    bob_output = (rng.random(size) >= p_zero).astype(np.uint8)

    lost = rng.random(size) < noise.loss_prob
    multi_photon = rng.random(size) < noise.multi_photon_fraction
    bob_input[lost] = 0
    bob_output[lost] = 0

    logger.debug(
        f"Sampled {size} lines at v={visibility:.4f}, {int(lost.sum())} lost"
    )
    return LineSamples(
        alice_basis=alice_basis,
        alice_outcome=alice_outcome,
        gate=gate,
        bob_input=bob_input,
        bob_output=bob_output,
        lost=lost,
        multi_photon=multi_photon,
    )


def sample_table_line(
    noise: NoiseModel,
    rng: np.random.Generator,
    channel: Optional[SamplingChannel] = None,
) -> Optional[tuple[GateG1, MeasBasis, int]]:
    """
    One Bell pair. Returns (alice_gate, bob_basis, bob_output), or None when
    Bob's photon is lost.
    """
    line = sample_table_lines(noise, 1, rng, channel=channel)
    if line.lost[0]:
        return None
    return (
        GateG1(int(line.gate[0])),
        MeasBasis.for_input(int(line.bob_input[0])),
        int(line.bob_output[0]),
    )
