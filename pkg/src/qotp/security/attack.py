import logging
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel

from ..qsim import NoiseModel, sample_table_lines
from ..types import MeasBasis
from .chsh import chsh_from_records

logger = logging.getLogger("qotp")


class AttackKind(Enum):
    NONE = "none"
    INTERCEPT_RESEND = "intercept-resend"


class AttackChannel:
    """
    A sampling channel acting on Bob's conditional Bloch vectors (x, z).
    Intercept-resend: Eve measures the flying qubit in Z or X (fixed, or
    random per photon) and resends the eigenstate she observed.
    """

    def __init__(self, kind: AttackKind = AttackKind.NONE, basis: Optional[MeasBasis] = None):
        if basis is not None and basis not in (MeasBasis.Z, MeasBasis.X):
            raise ValueError(f"Eve measures in Z or X, not {basis.value}")
        self.kind = kind
        self.basis = basis

    def __call__(
        self, bloch_x: np.ndarray, bloch_z: np.ndarray, rng: np.random.Generator
    ) -> tuple[np.ndarray, np.ndarray]:
        if self.kind is AttackKind.NONE:
            return bloch_x, bloch_z
        size = len(bloch_x)
        if self.basis is None:
            use_x = rng.integers(0, 2, size=size).astype(bool)
        else:
            use_x = np.full(size, self.basis is MeasBasis.X)
        along = np.where(use_x, bloch_x, bloch_z)
        sign = np.where(rng.random(size) < 0.5 * (1.0 + along), 1.0, -1.0)
        return np.where(use_x, sign, 0.0), np.where(use_x, 0.0, sign)

    def __repr__(self) -> str:
        basis = self.basis.value if self.basis else "random"
        return f"AttackChannel({self.kind.value}, basis={basis})"


def intercept_resend_attack(basis: Optional[MeasBasis] = None) -> AttackChannel:
    return AttackChannel(AttackKind.INTERCEPT_RESEND, basis)


class DetectionReport(BaseModel):
    attack: str
    trials: int
    lines: int
    threshold: float
    detected: int
    probability: float
    mean_s: float
    std_s: float


def detection_probability(
    noise: NoiseModel,
    attack: AttackChannel,
    lines: int,
    trials: int,
    threshold: float = 2.5,
    rng: Optional[np.random.Generator] = None,
) -> DetectionReport:
    """Fraction of Bell tests over `lines` sampled pairs whose S falls below `threshold`."""
    rng = rng or np.random.default_rng()
    values = np.empty(trials)
    for t in range(trials):
        sample = sample_table_lines(noise, lines, rng, channel=attack).kept()
        values[t] = chsh_from_records(sample.gate, sample.bob_input, sample.bob_output).s
    detected = int(np.count_nonzero(values < threshold))
    logger.debug(f"{attack!r}: detected in {detected}/{trials} trials, mean S {values.mean():.3f}")
    return DetectionReport(
        attack=attack.kind.value,
        trials=trials,
        lines=lines,
        threshold=threshold,
        detected=detected,
        probability=detected / trials if trials else 0.0,
        mean_s=float(values.mean()) if trials else 0.0,
        std_s=float(values.std(ddof=1)) if trials > 1 else 0.0,
    )
