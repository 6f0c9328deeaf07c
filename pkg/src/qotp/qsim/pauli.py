"""
Pauli-string algebra and density matrices for G_k gate-OTPs.

A G_k gate with truth table G is the state

    rho_G = (I + 2^(-k/2) sum_i (-1)^G(i) M_i) / 2^n,    n = 2^k - 1,

where M_0 .. M_{2^k - 1} are pairwise-anticommuting Pauli strings over
{I, X, Z}. Identity letters mark qubits that are measured but left out of
the parity.
"""

import functools
import itertools
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..types import GateG1
from .gates import gate_bloch, gate_state

logger = logging.getLogger("qotp")

MAX_SET_ORDER = 4
MAX_DENSITY_ORDER = 3
MAX_DECOMPOSITION_ORDER = 2

_LETTER_MATRICES = {
    "I": np.eye(2, dtype=np.complex128),
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}


class UnsupportedOrder(Exception):
    """Raised when k lies outside the range a construction supports."""

    pass


@dataclass(frozen=True)
class PauliString:
    letters: str

    def __post_init__(self):
        if not self.letters or set(self.letters) - set("IXZ"):
            raise ValueError(f"Pauli string must be over {{I, X, Z}}: {self.letters!r}")

    def __len__(self) -> int:
        return len(self.letters)

    def __str__(self) -> str:
        return self.letters

    @property
    def support(self) -> list[int]:
        """Positions that enter the parity."""
        return [j for j, letter in enumerate(self.letters) if letter != "I"]

    def anticommutes(self, other: "PauliString") -> bool:
        if len(self) != len(other):
            raise ValueError("Pauli strings must have equal length")
        clashes = sum(
            1
            for a, b in zip(self.letters, other.letters)
            if a != "I" and b != "I" and a != b
        )
        return clashes % 2 == 1


def _check_order(k: int, limit: int) -> None:
    if not 1 <= k <= limit:
        raise UnsupportedOrder(f"k must lie in [1, {limit}], got {k}")


@functools.lru_cache(maxsize=None)
def _measurement_set(k: int) -> tuple[PauliString, ...]:
    n = 2**k - 1
    strings = [PauliString("Z" * n)]
    for j in range(n):
        strings.append(PauliString("Z" * j + "X" + "I" * (n - j - 1)))
    return tuple(strings)


def build_measurement_set(k: int) -> list[PauliString]:
    """
    The canonical 2^k pairwise-anticommuting strings of length 2^k - 1:
    Z..Z followed by the Jordan-Wigner strings Z^j X I^(n-j-1). Input x
    selects entry int(x, 2), so k=1 gives [Z, X].
    """
    _check_order(k, MAX_SET_ORDER)
    return list(_measurement_set(k))


def input_index(bits: Sequence[int]) -> int:
    """Lexicographic index of a k-bit input, most significant bit first."""
    index = 0
    for bit in bits:
        if bit not in (0, 1):
            raise ValueError(f"Input bits must be 0 or 1, got {bit}")
        index = 2 * index + int(bit)
    return index


def pauli_matrix(string: PauliString | str) -> np.ndarray:
    if isinstance(string, str):
        string = PauliString(string)
    return functools.reduce(
        np.kron, (_LETTER_MATRICES[letter] for letter in string.letters)
    )


@dataclass
class DensityMatrix:
    matrix: np.ndarray
    k: int
    truth_table: tuple[int, ...]

    @property
    def n_qubits(self) -> int:
        return 2**self.k - 1

    def check(self, tol: float = 1e-10) -> None:
        """Raise ValueError unless the matrix is Hermitian, unit-trace and PSD."""
        m = self.matrix
        if np.max(np.abs(m - m.conj().T)) > tol:
            raise ValueError("Density matrix is not Hermitian")
        if abs(np.trace(m).real - 1.0) > tol:
            raise ValueError(f"Density matrix trace is {np.trace(m).real}")
        min_eig = float(np.min(np.linalg.eigvalsh(m)))
        if min_eig < -tol:
            raise ValueError(f"Density matrix has eigenvalue {min_eig}")

    def expectation(self, string: PauliString) -> float:
        return float(np.trace(self.matrix @ pauli_matrix(string)).real)

    def trace_distance(self, other: np.ndarray) -> float:
        diff = self.matrix - other
        return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(diff))))


def _normalize_truth_table(k: int, truth_table) -> tuple[int, ...]:
    size = 2**k
    if isinstance(truth_table, dict):
        table = [0] * size
        for key, value in truth_table.items():
            index = key if isinstance(key, int) else input_index(key)
            table[index] = int(value)
    else:
        table = [int(b) for b in truth_table]
    if len(table) != size or any(b not in (0, 1) for b in table):
        raise ValueError(f"A G_{k} truth table needs {size} bits, got {truth_table}")
    return tuple(table)


def build_gate_density(k: int, truth_table) -> DensityMatrix:
    """
    rho_G for a k-bit truth table given as a sequence of 2^k bits (index =
    input_index(x)) or a mapping from inputs to bits.
    """
    _check_order(k, MAX_DENSITY_ORDER)
    table = _normalize_truth_table(k, truth_table)
    n = 2**k - 1
    dim = 2**n
    operator = np.zeros((dim, dim), dtype=np.complex128)
    for bit, string in zip(table, build_measurement_set(k)):
        operator += (-1) ** bit * pauli_matrix(string)
    operator *= 2.0 ** (-k / 2)
    rho = DensityMatrix((np.eye(dim) + operator) / dim, k=k, truth_table=table)
    rho.check()
    return rho


def born_success(rho: DensityMatrix, index: int) -> float:
    """Probability that the parity of M_index equals (-1)^G(index)."""
    strings = build_measurement_set(rho.k)
    if not 0 <= index < len(strings):
        raise IndexError(f"input index {index} out of range for k={rho.k}")
    sign = (-1) ** rho.truth_table[index]
    return 0.5 * (1.0 + sign * rho.expectation(strings[index]))


def sample_gk_outcome(
    rho: DensityMatrix, index: int, rng: np.random.Generator
) -> int:
    """Born-rule sample of the parity of M_index, reported as a bit (+1 -> 0)."""
    strings = build_measurement_set(rho.k)
    if not 0 <= index < len(strings):
        raise IndexError(f"input index {index} out of range for k={rho.k}")
    p_even = 0.5 * (1.0 + rho.expectation(strings[index]))
    return 0 if rng.random() < p_even else 1


def _pauli_coefficients(n: int) -> tuple[list[str], np.ndarray]:
    """
    All 3^n strings over {I, X, Z} except I..I, and the coefficient
    Tr(rho P) of every G_1 product state on each of them (rows indexed by
    the assignment in itertools.product order).
    """
    strings = ["".join(s) for s in itertools.product("IXZ", repeat=n)][1:]
    assignments = list(itertools.product(list(GateG1), repeat=n))
    coeffs = np.ones((len(assignments), len(strings)))
    for a, gates in enumerate(assignments):
        blochs = [gate_bloch(g) for g in gates]
        for s, letters in enumerate(strings):
            for (x, z), letter in zip(blochs, letters):
                if letter == "X":
                    coeffs[a, s] *= x
                elif letter == "Z":
                    coeffs[a, s] *= z
    return strings, coeffs


def _product_density(gates: Sequence[GateG1]) -> np.ndarray:
    states = [gate_state(g).projector() for g in gates]
    return functools.reduce(np.kron, states)


def decompose_product_states(
    rho: DensityMatrix, k: Optional[int] = None
) -> Optional[list[tuple[float, tuple[GateG1, ...]]]]:
    """
    Search for rho = sum_i 2^-k (x)_j gate_state(G_ij) over 2^k branches of
    per-qubit G_1 states. Returns the branches, or None when no exact
    decomposition exists in this family.

    The branches are split into two halves; every half-sum of Pauli
    coefficient vectors is hashed and matched against its complement.
    """
    k = rho.k if k is None else k
    _check_order(k, MAX_DECOMPOSITION_ORDER)
    n = 2**k - 1
    branches = 2**k
    strings, coeffs = _pauli_coefficients(n)
    target = np.array([rho.expectation(PauliString(s)) for s in strings])

    half = branches // 2
    half_choices = list(itertools.product(range(len(coeffs)), repeat=half))

    def key(vec: np.ndarray) -> tuple:
        return tuple(np.round(vec * 1e6).astype(np.int64))

    sums = {}
    for choice in half_choices:
        sums.setdefault(key(coeffs[list(choice)].sum(axis=0)), choice)

    needed = branches * target
    assignments = list(itertools.product(list(GateG1), repeat=n))
    for choice in half_choices:
        rest = needed - coeffs[list(choice)].sum(axis=0)
        match = sums.get(key(rest))
        if match is None:
            continue
        picks = list(choice) + list(match)
        result = [(1.0 / branches, tuple(assignments[a])) for a in picks]
        mixture = sum(w * _product_density(g) for w, g in result)
        if rho.trace_distance(mixture) < 1e-8:
            logger.debug(f"Found a {branches}-branch G_1 decomposition for k={k}")
            return result
    logger.info(f"No G_1 product-state decomposition exists for k={k}, G={rho.truth_table}")
    return None
