"""
Acceptance probabilities for delegated signatures. Every hash bit is signed
by N gate-OTPs and passes when its fraction of correct outputs reaches tau.

Verification counts whole outputs (at least ceil(tau * N) correct). The
analysis treats tau as a cut on the continuous success fraction, so the
binomial tail is taken at the continuity-corrected count tau * N - 1/2
through the regularized incomplete beta function. Pass continuity=False
for the plain discrete tails.
"""

import logging
import math
from typing import Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy import special, stats
from scipy.special import logsumexp

logger = logging.getLogger("qotp")

HERMITE_NODES = 48


def threshold_count(n: int, tau: float) -> int:
    """Smallest number of correct outputs that meets tau."""
    return min(n, max(0, math.ceil(tau * n - 1e-9)))


def log_tail(n: int, p: float, count: int) -> float:
    """log P(Bin(n, p) >= count)."""
    if count <= 0:
        return 0.0
    if count > n:
        return -math.inf
    k = np.arange(count, n + 1)
    with np.errstate(divide="ignore"):
        return float(logsumexp(stats.binom.logpmf(k, n, p)))


def log_tails(n: int, p: float) -> np.ndarray:
    """log P(Bin(n, p) >= c) for every c in 0..n."""
    with np.errstate(divide="ignore", invalid="ignore"):
        logpmf = stats.binom.logpmf(np.arange(n + 1), n, p)
        tails = np.logaddexp.accumulate(logpmf[::-1])[::-1]
    tails[0] = 0.0
    return tails


def _log_smooth_tail(n: int, p: float, cut) -> np.ndarray:
    """log P(Bin(n, p) >= cut) for real cuts, I_p(cut, n - cut + 1)."""
    cut = np.atleast_1d(np.asarray(cut, dtype=float))
    out = np.zeros_like(cut)
    inside = cut > 0.0
    with np.errstate(divide="ignore"):
        out[inside] = np.log(special.betainc(cut[inside], n - cut[inside] + 1.0, p))
    return out


def log_fraction_tail(n: int, p: float, tau: float, continuity: bool = True) -> float:
    """log P(one hash bit passes at threshold tau) with per-gate success p."""
    if not continuity:
        return log_tail(n, p, threshold_count(n, tau))
    return float(_log_smooth_tail(n, p, tau * n - 0.5)[0])


def log_fraction_tails(n: int, p: float, continuity: bool = True) -> np.ndarray:
    """log_fraction_tail for every tau in {0, 1/N, ..., 1}."""
    if not continuity:
        return log_tails(n, p)
    return _log_smooth_tail(n, p, np.arange(n + 1) - 0.5)


def _gauss_hermite(mean: float, sigma: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for E[f(X)], X ~ Normal(mean, sigma), clipped to [0, 1]."""
    nodes, weights = np.polynomial.hermite_e.hermegauss(HERMITE_NODES)
    return np.clip(mean + sigma * nodes, 0.0, 1.0), weights / math.sqrt(2.0 * math.pi)


def honest_accept_probability(
    n: int, m: int, tau: float, p: float, overdispersion: float = 0.0, continuity: bool = True
) -> float:
    """
    P(all m bits pass) for an honest signer with per-gate success p. With
    overdispersion, the signature's p is drawn once from Normal(p, sigma).
    """
    if overdispersion <= 0.0:
        return math.exp(m * log_fraction_tail(n, p, tau, continuity))
    nodes, weights = _gauss_hermite(p, overdispersion)
    values = np.array([math.exp(m * log_fraction_tail(n, float(q), tau, continuity)) for q in nodes])
    return float(np.dot(weights, values))


def normal_accept_probability(n: int, m: int, tau: float, mean: float, sigma: float) -> float:
    """Same acceptance with each bit's correct fraction taken as Normal(mean, sigma)."""
    if sigma <= 0.0:
        return 1.0 if mean >= tau else 0.0
    return math.exp(m * stats.norm.logsf(tau, loc=mean, scale=sigma))


class CheatModel(BaseModel):
    """
    Bob evaluates the gates of one hash bit for both values at once: per gate
    he is right about input 0 with q0 and about input 1 with q1, q0 + q1 <= 3/2.
    A fraction f of multi-photon lines lets him behave honestly on both.
    """

    q0: float = Field(default=0.75, ge=0.0, le=1.0)
    q1: float = Field(default=0.75, ge=0.0, le=1.0)
    p_honest: float = Field(default=0.831, ge=0.0, le=1.0)
    multi_photon_fraction: float = Field(default=0.0, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _bound(self) -> "CheatModel":
        if self.q0 + self.q1 > 1.5 + 1e-12:
            raise ValueError(f"q0 + q1 must not exceed 3/2, got {self.q0 + self.q1}")
        return self

    def effective(self) -> tuple[float, float]:
        f = self.multi_photon_fraction
        return (1 - f) * self.q0 + f * self.p_honest, (1 - f) * self.q1 + f * self.p_honest


def cheat_accept_probability(n: int, m: int, tau: float, model: CheatModel, continuity: bool = True) -> float:
    """
    P(two messages differing in one hash bit are both accepted): the shared
    bits pass once at the honest rate, the differing bit must pass for both
    values.
    """
    q0, q1 = model.effective()
    log_p = (
        log_fraction_tail(n, q0, tau, continuity)
        + log_fraction_tail(n, q1, tau, continuity)
        + (m - 1) * log_fraction_tail(n, model.p_honest, tau, continuity)
    )
    return math.exp(log_p)


class ThresholdAnalysis(BaseModel):
    tau: float
    difference: float
    honest: float
    cheat: float
    taus: list[float] = Field(repr=False)
    honest_curve: list[float] = Field(repr=False)
    cheat_curve: list[float] = Field(repr=False)


def optimize_threshold(
    n: int, m: int, p_honest: float, model: Optional[CheatModel] = None, continuity: bool = True
) -> ThresholdAnalysis:
    """argmax over tau in {0, 1/N, ..., 1} of honest minus cheat acceptance; ties go to the smaller tau."""
    model = (model or CheatModel()).model_copy(update={"p_honest": p_honest})
    q0, q1 = model.effective()
    honest_log = log_fraction_tails(n, p_honest, continuity)
    cheat_log = log_fraction_tails(n, q0, continuity) + log_fraction_tails(n, q1, continuity) + (m - 1) * honest_log
    with np.errstate(invalid="ignore"):
        honest = np.exp(m * honest_log)
        cheat = np.exp(cheat_log)
    difference = honest - cheat
    best = int(np.argmax(difference))
    taus = np.arange(n + 1) / n
    logger.debug(f"Optimal threshold {taus[best]:.4f}: difference {difference[best]:.6f}")
    return ThresholdAnalysis(
        tau=float(taus[best]),
        difference=float(difference[best]),
        honest=float(honest[best]),
        cheat=float(cheat[best]),
        taus=taus.tolist(),
        honest_curve=honest.tolist(),
        cheat_curve=cheat.tolist(),
    )
