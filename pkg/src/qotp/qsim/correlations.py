import math

import numpy as np

from ..types import MeasBasis
from .gates import INV_SQRT2
from .noise import NoiseModel

# Unit (x, z) direction whose +1 outcome is bit 0 / Psi_0 / Psi_Id.
BASIS_DIRECTIONS = {
    MeasBasis.Z: np.array([0.0, 1.0]),
    MeasBasis.X: np.array([1.0, 0.0]),
    MeasBasis.A1: np.array([INV_SQRT2, INV_SQRT2]),
    MeasBasis.A2: np.array([-INV_SQRT2, INV_SQRT2]),
}


def correlator(
    alice_dir: np.ndarray | MeasBasis,
    bob_dir: np.ndarray | MeasBasis,
    noise: NoiseModel | float = 1.0,
) -> float:
    """
    Exact correlator E = -v (a . b) of the Werner-mixed |Psi-> state for
    directions in the Z-X plane, given as (x, z) unit vectors or bases.
    """
    a = BASIS_DIRECTIONS[alice_dir] if isinstance(alice_dir, MeasBasis) else alice_dir
    b = BASIS_DIRECTIONS[bob_dir] if isinstance(bob_dir, MeasBasis) else bob_dir
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    for name, vec in (("alice_dir", a), ("bob_dir", b)):
        if abs(float(np.linalg.norm(vec)) - 1.0) > 1e-9:
            raise ValueError(f"{name} is not a unit vector: {vec}")
    visibility = noise.visibility if isinstance(noise, NoiseModel) else float(noise)
    return -visibility * float(np.dot(a, b))


def chsh_value(noise: NoiseModel | float = 1.0) -> float:
    """S = |E(A1,Z) + E(A1,X) + E(A2,Z) - E(A2,X)| = 2 sqrt(2) v."""
    return abs(
        correlator(MeasBasis.A1, MeasBasis.Z, noise)
        + correlator(MeasBasis.A1, MeasBasis.X, noise)
        + correlator(MeasBasis.A2, MeasBasis.Z, noise)
        - correlator(MeasBasis.A2, MeasBasis.X, noise)
    )


def werner_fidelity(visibility: float) -> float:
    """<Psi-|rho|Psi-> for the Werner state of visibility v."""
    return (1.0 + 3.0 * visibility) / 4.0


def fidelity_lower_bound(v_linear: float, v_diagonal: float) -> float:
    """
    Lower bound on the Bell-state fidelity from the visibilities measured in
    the linear (Z) and diagonal (X) bases. Sound for every Werner state and
    equal to 1 for perfect visibilities.
    """
    for name, value in (("v_linear", v_linear), ("v_diagonal", v_diagonal)):
        if not 0.0 <= value <= 1.0 or math.isnan(value):
            raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return (v_linear + v_diagonal) / 2.0
