"""One-time delegated signatures and their acceptance analysis."""

from .binomial import (
    CheatModel,
    ThresholdAnalysis,
    cheat_accept_probability,
    honest_accept_probability,
    log_fraction_tail,
    log_fraction_tails,
    log_tail,
    log_tails,
    normal_accept_probability,
    optimize_threshold,
    threshold_count,
)
from .histogram import HistogramReport, acceptance_rate, histogram_report, simulate_signature_runs
from .signature import (
    HASH_ALGOS,
    LengthMismatch,
    Signature,
    SignatureFile,
    SignatureParams,
    SigningKey,
    SigningOutcome,
    alice_signing_service,
    bob_request_signature,
    hash_bits,
    load_signature,
    save_signature,
    sign,
    verify,
)

__all__ = [
    "CheatModel",
    "HASH_ALGOS",
    "HistogramReport",
    "LengthMismatch",
    "Signature",
    "SignatureFile",
    "SignatureParams",
    "SigningKey",
    "SigningOutcome",
    "ThresholdAnalysis",
    "acceptance_rate",
    "alice_signing_service",
    "bob_request_signature",
    "cheat_accept_probability",
    "hash_bits",
    "histogram_report",
    "honest_accept_probability",
    "log_fraction_tail",
    "log_fraction_tails",
    "load_signature",
    "log_tail",
    "log_tails",
    "normal_accept_probability",
    "optimize_threshold",
    "save_signature",
    "sign",
    "simulate_signature_runs",
    "threshold_count",
    "verify",
]
