from enum import Enum, IntEnum

import numpy as np
from pydantic import BaseModel, Field


class GateG1(IntEnum):
    CONST0 = 0  # (0, 0)
    CONST1 = 1  # (1, 1)
    ID = 2  # (0, 1)
    NOT = 3  # (1, 0)

    @property
    def truth_table(self) -> tuple[int, int]:
        """(output on input 0, output on input 1)"""
        return tuple(int(b) for b in TRUTH_TABLES[self])

    def evaluate(self, bit: int) -> int:
        return int(TRUTH_TABLES[self, bit])

    def opposite(self) -> "GateG1":
        """The gate with both truth-table outputs flipped."""
        return GateG1(self ^ 1)

    @staticmethod
    def from_truth_table(table: tuple[int, int] | list[int]) -> "GateG1":
        for gate in GateG1:
            if gate.truth_table == tuple(int(b) for b in table):
                return gate
        raise ValueError(f"Not a 1-bit truth table: {table}")

    @staticmethod
    def from_name(name: str) -> "GateG1":
        aliases = {
            "const0": GateG1.CONST0,
            "zero": GateG1.CONST0,
            "const1": GateG1.CONST1,
            "one": GateG1.CONST1,
            "id": GateG1.ID,
            "identity": GateG1.ID,
            "not": GateG1.NOT,
        }
        try:
            return aliases[name.strip().lower()]
        except KeyError:
            raise ValueError(
                f"Unknown gate: {name}. Valid gates are: {sorted(aliases)}"
            ) from None


# Row g is the truth table of GateG1(g); opposite(g) == g ^ 1 flips both outputs.
TRUTH_TABLES = np.array([[0, 0], [1, 1], [0, 1], [1, 0]], dtype=np.uint8)


class MeasBasis(Enum):
    Z = "Z"  # Bob, input 0
    X = "X"  # Bob, input 1
    A1 = "A1"  # Alice, {Psi_0, Psi_1}
    A2 = "A2"  # Alice, {Psi_Id, Psi_not}

    @staticmethod
    def for_input(bit: int) -> "MeasBasis":
        return MeasBasis.X if bit else MeasBasis.Z

    @property
    def input_bit(self) -> int:
        if self is MeasBasis.Z:
            return 0
        if self is MeasBasis.X:
            return 1
        raise ValueError(f"{self.value} is not one of Bob's bases")


class Party(IntEnum):
    ALICE = 0
    BOB = 1


class LineStatus(IntEnum):
    AVAILABLE = 0
    PROPOSED = 1
    CONSUMED = 2
    DELETED = 3

    def can_become(self, other: "LineStatus") -> bool:
        return other in _TRANSITIONS[self]


_TRANSITIONS = {
    LineStatus.AVAILABLE: {
        LineStatus.PROPOSED,
        LineStatus.CONSUMED,
        LineStatus.DELETED,
    },
    LineStatus.PROPOSED: {LineStatus.CONSUMED, LineStatus.DELETED},
    LineStatus.CONSUMED: set(),
    LineStatus.DELETED: set(),
}


class DetectionEvent(BaseModel):
    timestamp: int  # ps since the party's acquisition start
    channel: int = Field(ge=0, le=3)
    party: Party


class LineRecordAlice(BaseModel):
    line_id: int = Field(ge=0)
    gate: GateG1
    status: LineStatus = LineStatus.AVAILABLE


class LineRecordBob(BaseModel):
    line_id: int = Field(ge=0)
    input: int = Field(ge=0, le=1)
    output: int = Field(ge=0, le=1)
    status: LineStatus = LineStatus.AVAILABLE
