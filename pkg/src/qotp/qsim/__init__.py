"""
Quantum mechanics of the protocol: gate states, noisy Bell-pair sampling,
correlators and the G_k density matrices.
"""

from .correlations import (
    BASIS_DIRECTIONS,
    chsh_value,
    correlator,
    fidelity_lower_bound,
    werner_fidelity,
)
from .gates import (
    INV_SQRT2,
    P_SUCCESS,
    PureQubit,
    basis_state,
    gate_bloch,
    gate_state,
    measure,
    outcome_probability,
)
from .noise import (
    NoiseModel,
    success_probability,
    visibility_for_chsh,
    visibility_for_success,
)
from .pauli import (
    DensityMatrix,
    PauliString,
    UnsupportedOrder,
    born_success,
    build_gate_density,
    build_measurement_set,
    decompose_product_states,
    input_index,
    pauli_matrix,
    sample_gk_outcome,
)
from .sampler import LineSamples, SamplingChannel, sample_table_line, sample_table_lines

__all__ = [
    "BASIS_DIRECTIONS",
    "DensityMatrix",
    "INV_SQRT2",
    "LineSamples",
    "NoiseModel",
    "P_SUCCESS",
    "PauliString",
    "PureQubit",
    "SamplingChannel",
    "UnsupportedOrder",
    "basis_state",
    "born_success",
    "build_gate_density",
    "build_measurement_set",
    "chsh_value",
    "correlator",
    "decompose_product_states",
    "fidelity_lower_bound",
    "gate_bloch",
    "gate_state",
    "input_index",
    "measure",
    "outcome_probability",
    "pauli_matrix",
    "sample_gk_outcome",
    "sample_table_line",
    "sample_table_lines",
    "success_probability",
    "visibility_for_chsh",
    "visibility_for_success",
    "werner_fidelity",
]
