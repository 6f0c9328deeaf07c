"""
G_k gate-OTP evaluation. In table mode each evaluation becomes 2^k - 1
concurrent G_1 handshakes whose gates come from a product-state
decomposition of rho_G; Bob's input for slot j is the j-th letter of
M_index(x) and the result is the parity of the slots in its support. In
simulate mode the measurement is sampled from rho_G directly.
"""

import logging
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from ..qsim import (
    build_gate_density,
    build_measurement_set,
    decompose_product_states,
    input_index,
    sample_gk_outcome,
)
from ..qsim.pauli import MAX_DENSITY_ORDER, MAX_SET_ORDER, PauliString
from ..tabler import SharedTable
from .batch import LoopbackSession

logger = logging.getLogger("qotp")

TABLE_MODE = "table"
SIMULATE_MODE = "simulate"


class DecompositionUnavailable(Exception):
    """No G_1 product-state decomposition is known for this G_k gate."""

    pass


class GkGateSpec(BaseModel):
    k: int = Field(ge=1, le=MAX_SET_ORDER)
    truth_table: list[int]

    @field_validator("truth_table")
    @classmethod
    def _bits(cls, value: list[int]) -> list[int]:
        if any(b not in (0, 1) for b in value):
            raise ValueError("truth table entries must be bits")
        return value

    @model_validator(mode="after")
    def _size(self) -> "GkGateSpec":
        if len(self.truth_table) != 2**self.k:
            raise ValueError(f"G_{self.k} needs {2**self.k} truth-table bits, got {len(self.truth_table)}")
        return self

    @property
    def slot_count(self) -> int:
        return 2**self.k - 1

    @property
    def measurement_set(self) -> list[PauliString]:
        return build_measurement_set(self.k)

    def evaluate(self, bits: Sequence[int]) -> int:
        return self.truth_table[input_index(bits)]


def _input_indices(spec: GkGateSpec, xs) -> np.ndarray:
    xs = np.atleast_2d(np.asarray(xs, dtype=np.int64))
    if xs.shape[1] != spec.k or np.any((xs < 0) | (xs > 1)):
        raise ValueError(f"Each G_{spec.k} input must be {spec.k} bits")
    weights = 1 << np.arange(spec.k - 1, -1, -1)
    return xs @ weights


def _slot_layout(spec: GkGateSpec) -> tuple[np.ndarray, np.ndarray]:
    """Per measurement string: Bob's input bit for every slot, and the parity mask."""
    strings = spec.measurement_set
    bases = np.array([[1 if c == "X" else 0 for c in s.letters] for s in strings], dtype=np.uint8)
    support = np.array([[c != "I" for c in s.letters] for s in strings], dtype=bool)
    return bases, support


def _simulate(spec: GkGateSpec, indices: np.ndarray, rng: np.random.Generator, visibility: float) -> np.ndarray:
    if spec.k <= MAX_DENSITY_ORDER and visibility == 1.0:
        rho = build_gate_density(spec.k, spec.truth_table)
        return np.array([sample_gk_outcome(rho, int(i), rng) for i in indices], dtype=np.uint8)
    # <M_i> = (-1)^G(i) 2^(-k/2); each measured qubit is damped by the visibility.
    _, support = _slot_layout(spec)
    weight = support[indices].sum(axis=1)
    signs = 1.0 - 2.0 * np.asarray(spec.truth_table, dtype=float)[indices]
    p_even = 0.5 * (1.0 + signs * 2.0 ** (-spec.k / 2) * visibility**weight)
    return (rng.random(len(indices)) >= p_even).astype(np.uint8)


def execute_gk_batch(
    spec: GkGateSpec,
    xs,
    session: Optional[LoopbackSession] = None,
    mode: str = TABLE_MODE,
    rng: Optional[np.random.Generator] = None,
    visibility: float = 1.0,
) -> tuple[np.ndarray, int]:
    """
    Evaluate the gate on every row of `xs`. All handshakes of all rows run
    as one batch. Returns (output bits, rounds used).
    """
    rng = rng or np.random.default_rng()
    indices = _input_indices(spec, xs)
    if mode == SIMULATE_MODE:
        return _simulate(spec, indices, rng, visibility), 0
    if mode != TABLE_MODE:
        raise ValueError(f"Unknown G_k mode: {mode}")
    if session is None:
        raise ValueError("Table mode needs a session")
    if spec.k > 2:
        raise DecompositionUnavailable(f"No decomposition search for k={spec.k}")
    branches = decompose_product_states(build_gate_density(spec.k, spec.truth_table))
    if branches is None:
        raise DecompositionUnavailable(f"G_{spec.k} truth table {spec.truth_table} has no G_1 decomposition")

    gates = np.array([[int(g) for g in branch] for _, branch in branches], dtype=np.uint8)
    picks = rng.integers(0, len(branches), size=len(indices))
    bases, support = _slot_layout(spec)
    targets = gates[picks].reshape(-1)
    inputs = bases[indices].reshape(-1)
    result = session.run(targets, inputs)
    if result.failed.any():
        raise SharedTable.TableExhausted(
            f"{int(result.failed.sum())} G_k slot handshakes failed: table exhausted"
        )
    slots = result.outputs.astype(np.uint8).reshape(len(indices), spec.slot_count)
    parity = np.bitwise_xor.reduce(slots * support[indices], axis=1)
    logger.debug(f"Evaluated {len(indices)} G_{spec.k} gates in {result.rounds_used} rounds")
    return parity.astype(np.uint8), result.rounds_used


def execute_gk(
    spec: GkGateSpec,
    x: Sequence[int],
    session: Optional[LoopbackSession] = None,
    mode: str = TABLE_MODE,
    rng: Optional[np.random.Generator] = None,
    visibility: float = 1.0,
) -> int:
    outputs, _ = execute_gk_batch(spec, [list(x)], session, mode, rng, visibility)
    return int(outputs[0])
