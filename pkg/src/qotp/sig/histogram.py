import logging
import math
from typing import Optional

import numpy as np
from pydantic import BaseModel

from ..engine import LoopbackSession
from ..qsim import NoiseModel, success_probability
from ..tabler import generate_tables
from .binomial import threshold_count
from .signature import SignatureParams, SigningKey, sign, verify

logger = logging.getLogger("qotp")

# Table lines generated per signed gate in full-protocol runs; about 8 are consumed.
LINES_PER_GATE = 10


class HistogramReport(BaseModel):
    runs: int
    bits: int
    counts: list[int]
    edges: list[float]
    cumulative: list[float]
    mean: float
    std: float
    binomial_sigma: float
    min_fraction: float


def histogram_report(runs, n: int, bins: int = 20) -> HistogramReport:
    """
    Histogram of per-hash-bit success fractions over signature runs, given
    as an array of shape (runs, m), with sample mean and sigma next to the
    binomial baseline sqrt(p(1 - p) / N).
    """
    fractions = np.atleast_2d(np.asarray(runs, dtype=float))
    flat = fractions.reshape(-1)
    if len(flat) == 0:
        raise ValueError("histogram_report needs at least one run")
    mean = float(flat.mean())
    std = float(flat.std(ddof=1)) if len(flat) > 1 else 0.0
    low, high = float(flat.min()), float(flat.max())
    if high == low:
        high = low + 1.0 / n
    counts, edges = np.histogram(flat, bins=bins, range=(low, high))
    return HistogramReport(
        runs=fractions.shape[0],
        bits=fractions.shape[1],
        counts=counts.tolist(),
        edges=edges.tolist(),
        cumulative=(np.cumsum(counts) / len(flat)).tolist(),
        mean=mean,
        std=std,
        binomial_sigma=math.sqrt(mean * (1.0 - mean) / n),
        min_fraction=low,
    )


def simulate_signature_runs(
    runs: int,
    params: SignatureParams,
    noise: NoiseModel,
    seed: int = 0,
    full_protocol: bool = False,
) -> np.ndarray:
    """
    Per-hash-bit success fractions for `runs` signing sessions, shape
    (runs, m). Run t uses the visibility of run index t, so drift shows up
    across runs. The fast path draws binomial counts; `full_protocol`
    generates tables and signs through the loopback session instead.
    """
    rng = np.random.default_rng(seed)
    fractions = np.empty((runs, params.m))
    for t in range(runs):
        if not full_protocol:
            p = success_probability(noise.visibility_at(t))
            fractions[t] = rng.binomial(params.n, p, size=params.m) / params.n
            continue
        alice, bob = generate_tables(params.length * LINES_PER_GATE, noise, rng, run_index=t, seed=seed + t)
        key = SigningKey.generate(params, int(rng.integers(2**32)))
        message = f"run {t}".encode()
        session = LoopbackSession(alice, bob, seed=int(rng.integers(2**32)), audit=False)
        result = verify(message, sign(message, params, session, key), key)
        fractions[t] = result.fractions
        logger.debug(f"Run {t}: accepted={result.accepted}, min fraction {result.min_fraction:.4f}")
    return fractions


def acceptance_rate(fractions: np.ndarray, params: SignatureParams, tau: Optional[float] = None) -> float:
    """Share of runs whose every hash bit meets tau."""
    tau = params.tau if tau is None else tau
    counts = np.rint(np.asarray(fractions) * params.n)
    return float(np.mean(np.all(counts >= threshold_count(params.n, tau), axis=1)))
