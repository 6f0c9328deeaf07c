import math

from pydantic import BaseModel, Field

from .gates import INV_SQRT2


class NoiseModel(BaseModel):
    """
    Werner-mixed |Psi-> pairs with independent loss of Bob's photon.

    visibility=1, loss_prob=0, multi_photon_fraction=0 reproduces the ideal
    statistics exactly. The drift fields describe a slow sinusoidal modulation
    of the visibility across successive runs (signing sessions).
    """

    visibility: float = Field(default=1.0, ge=0.0, le=1.0)
    loss_prob: float = Field(default=0.0, ge=0.0, le=1.0)
    multi_photon_fraction: float = Field(default=0.0, ge=0.0, le=1.0)
    dark_count_rate: float = Field(default=0.0, ge=0.0)  # events/s
    drift_amplitude: float = Field(default=0.0, ge=0.0, le=1.0)
    drift_period: float = Field(default=25.0, gt=0.0)  # runs

    def visibility_at(self, run_index: int = 0) -> float:
        if self.drift_amplitude == 0.0:
            return self.visibility
        v = self.visibility + self.drift_amplitude * math.sin(
            2.0 * math.pi * run_index / self.drift_period
        )
        return min(1.0, max(0.0, v))

    @property
    def success_probability(self) -> float:
        return success_probability(self.visibility)


def success_probability(visibility: float) -> float:
    """Per-gate success 1/2 + v/(2*sqrt(2)) for Werner visibility v."""
    return 0.5 + 0.5 * visibility * INV_SQRT2


def visibility_for_success(p_success: float) -> float:
    return (p_success - 0.5) * 2.0 * math.sqrt(2.0)


def visibility_for_chsh(s_value: float) -> float:
    return s_value / (2.0 * math.sqrt(2.0))
