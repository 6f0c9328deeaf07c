import itertools

import numpy as np
import pytest

from qotp.qsim import (
    P_SUCCESS,
    PauliString,
    UnsupportedOrder,
    born_success,
    build_gate_density,
    build_measurement_set,
    decompose_product_states,
    gate_state,
    input_index,
    pauli_matrix,
    sample_gk_outcome,
)
from qotp.types import GateG1


class TestMeasurementSet:
    def test_k1_is_z_then_x(self):
        assert [str(s) for s in build_measurement_set(1)] == ["Z", "X"]

    def test_k2_strings(self):
        assert [str(s) for s in build_measurement_set(2)] == ["ZZZ", "XII", "ZXI", "ZZX"]

    @pytest.mark.parametrize("k", [1, 2, 3, 4])
    def test_pairwise_anticommuting(self, k):
        strings = build_measurement_set(k)
        assert len(strings) == 2**k
        assert all(len(s) == 2**k - 1 for s in strings)
        for a, b in itertools.combinations(strings, 2):
            assert a.anticommutes(b)

    def test_anticommutation_matches_matrices(self):
        for a, b in itertools.combinations(build_measurement_set(2), 2):
            ma, mb = pauli_matrix(a), pauli_matrix(b)
            assert np.allclose(ma @ mb, -mb @ ma)

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_signed_sum_squares_to_identity(self, k):
        matrices = [pauli_matrix(s) for s in build_measurement_set(k)]
        if k < 3:
            tables = list(itertools.product([0, 1], repeat=2**k))
        else:
            tables = np.random.default_rng(3).integers(0, 2, size=(16, 2**k))
        for table in tables:
            total = sum((-1) ** int(bit) * m for bit, m in zip(table, matrices)) * 2 ** (-k / 2)
            assert np.allclose(total @ total, np.eye(len(total)), atol=1e-12)

    @pytest.mark.parametrize("k", [0, 5])
    def test_out_of_range(self, k):
        with pytest.raises(UnsupportedOrder):
            build_measurement_set(k)


class TestPauliString:
    def test_support_skips_identity(self):
        assert PauliString("ZIX").support == [0, 2]

    def test_rejects_other_letters(self):
        with pytest.raises(ValueError):
            PauliString("ZY")

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            PauliString("Z").anticommutes(PauliString("ZZ"))

    def test_matrix_is_kronecker_product(self):
        x = np.array([[0, 1], [1, 0]])
        z = np.diag([1, -1])
        assert np.allclose(pauli_matrix("XZ"), np.kron(x, z))


def test_input_index_msb_first():
    assert input_index([0]) == 0
    assert input_index([1, 0]) == 2
    assert input_index((1, 1, 0)) == 6
    with pytest.raises(ValueError):
        input_index([2])


class TestGateDensity:
    def test_k1_matches_single_qubit_gate(self):
        for gate in GateG1:
            rho = build_gate_density(1, gate.truth_table)
            assert np.allclose(rho.matrix, gate_state(gate).projector())

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_success_probability_every_input(self, k):
        expected = 0.5 * (1.0 + 2.0 ** (-k / 2))
        rng = np.random.default_rng(k)
        table = rng.integers(0, 2, size=2**k)
        rho = build_gate_density(k, table)
        assert rho.n_qubits == 2**k - 1
        for index in range(2**k):
            assert born_success(rho, index) == pytest.approx(expected)

    def test_known_values(self):
        assert born_success(build_gate_density(1, [0, 1]), 1) == pytest.approx(P_SUCCESS)
        assert born_success(build_gate_density(2, [0, 1, 1, 0]), 3) == pytest.approx(0.75)

    def test_truth_table_mapping(self):
        from_mapping = build_gate_density(2, {(0, 0): 0, (0, 1): 1, (1, 0): 1, (1, 1): 1})
        assert from_mapping.truth_table == (0, 1, 1, 1)

    def test_bad_truth_table(self):
        with pytest.raises(ValueError, match="needs 4 bits"):
            build_gate_density(2, [0, 1])
        with pytest.raises(UnsupportedOrder):
            build_gate_density(4, [0] * 16)

    def test_index_out_of_range(self):
        with pytest.raises(IndexError):
            born_success(build_gate_density(1, [0, 0]), 2)

    def test_sampled_parity(self):
        rho = build_gate_density(2, [1, 0, 0, 1])
        rng = np.random.default_rng(11)
        hits = sum(sample_gk_outcome(rho, 0, rng) == 1 for _ in range(20000))
        assert hits / 20000 == pytest.approx(0.75, abs=0.015)


class TestDecomposition:
    def test_k1_single_qubit_mixture(self):
        rho = build_gate_density(1, GateG1.NOT.truth_table)
        branches = decompose_product_states(rho)
        assert branches is not None
        assert sum(weight for weight, _ in branches) == pytest.approx(1.0)
        mixture = sum(w * gate_state(g[0]).projector() for w, g in branches)
        assert np.allclose(mixture, rho.matrix)

    @pytest.mark.slow
    def test_k2_has_no_product_decomposition(self):
        rho = build_gate_density(2, [0, 0, 0, 1])
        assert decompose_product_states(rho) is None

    def test_k3_not_supported(self):
        rho = build_gate_density(3, [0] * 8)
        with pytest.raises(UnsupportedOrder):
            decompose_product_states(rho)
