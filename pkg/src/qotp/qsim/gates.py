"""
Single-qubit gate states and projective measurements in the Z-X plane.
"""

import math
from dataclasses import dataclass

import numpy as np

from ..types import GateG1, MeasBasis, TRUTH_TABLES

INV_SQRT2 = 1.0 / math.sqrt(2.0)

# P_S = 1/2 + 1/(2*sqrt(2))
P_SUCCESS = 0.5 + 0.5 * INV_SQRT2


@dataclass(frozen=True)
class PureQubit:
    """
    A normalized qubit state. Gate states are real, so the amplitudes are
    stored as complex numbers only for generality.
    """

    amplitudes: tuple[complex, complex]

    def __post_init__(self):
        norm = abs(self.amplitudes[0]) ** 2 + abs(self.amplitudes[1]) ** 2
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"State is not normalized: |a|^2+|b|^2 = {norm}")

    @staticmethod
    def from_bloch(x: float, z: float) -> "PureQubit":
        """Pure state with Bloch vector (x, 0, z); (x, z) must be a unit vector."""
        theta = math.atan2(x, z)
        return PureQubit((complex(math.cos(theta / 2)), complex(math.sin(theta / 2))))

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.amplitudes, dtype=np.complex128)

    @property
    def bloch(self) -> tuple[float, float, float]:
        """(x, y, z) expectation values of the Pauli operators."""
        a, b = self.amplitudes
        x = 2.0 * (a.conjugate() * b).real
        y = 2.0 * (a.conjugate() * b).imag
        z = abs(a) ** 2 - abs(b) ** 2
        return (x, y, z)

    def projector(self) -> np.ndarray:
        v = self.vector
        return np.outer(v, v.conj())

    def overlap(self, other: "PureQubit") -> complex:
        """<self|other>"""
        return complex(np.vdot(self.vector, other.vector))


def gate_bloch(gate: GateG1) -> tuple[float, float]:
    """(x, z) Bloch components of the gate state: z encodes g(0), x encodes g(1)."""
    out0, out1 = TRUTH_TABLES[gate]
    return ((-1.0) ** int(out1) * INV_SQRT2, (-1.0) ** int(out0) * INV_SQRT2)


def gate_state(gate: GateG1) -> PureQubit:
    """
    Const0 -> (|0> + |+>), Const1 -> (|1> - |->), Id -> (|0> + |->),
    Not -> (|1> + |+>), each normalized by 1/sqrt(2 + sqrt(2)).
    """
    x, z = gate_bloch(gate)
    state = PureQubit.from_bloch(x, z)
    # Fix the global phase so amplitudes match the defining superpositions.
    if gate is GateG1.CONST1:
        state = PureQubit(tuple(-a for a in state.amplitudes))
    return state


# Outcome 0 of each basis: Bob's positive eigenstates, Alice's Psi_0 / Psi_Id.
_OUTCOME0 = {
    MeasBasis.Z: PureQubit((1 + 0j, 0j)),
    MeasBasis.X: PureQubit((complex(INV_SQRT2), complex(INV_SQRT2))),
    MeasBasis.A1: gate_state(GateG1.CONST0),
    MeasBasis.A2: gate_state(GateG1.ID),
}


def basis_state(basis: MeasBasis, outcome: int) -> PureQubit:
    """The eigenstate of `basis` that yields `outcome`."""
    zero = _OUTCOME0[basis]
    if outcome == 0:
        return zero
    x, _, z = zero.bloch
    return PureQubit.from_bloch(-x, -z)


def outcome_probability(state: PureQubit, basis: MeasBasis, outcome: int = 0) -> float:
    return abs(basis_state(basis, outcome).overlap(state)) ** 2


def measure(state: PureQubit, basis: MeasBasis, rng: np.random.Generator) -> int:
    """Born-rule sample; 0 means projection onto the basis' positive state."""
    p0 = outcome_probability(state, basis, 0)
    return 0 if rng.random() < p0 else 1
