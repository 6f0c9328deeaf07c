"""Eavesdropper detection and privacy checks."""

from .attack import (
    AttackChannel,
    AttackKind,
    DetectionReport,
    detection_probability,
    intercept_resend_attack,
)
from .audit import (
    MIN_DECLINES,
    DeclineTranscripts,
    PrivacyReport,
    SampleTooSmall,
    collect_declines,
    privacy_audit,
)
from .chsh import (
    CLASSICAL_BOUND,
    TSIRELSON_BOUND,
    ChshEstimate,
    ChshReport,
    InsufficientLines,
    chsh_from_records,
    chsh_from_table,
    chsh_report,
    mark_test_lines,
    run_bell_test,
    select_test_lines,
)

__all__ = [
    "AttackChannel",
    "AttackKind",
    "CLASSICAL_BOUND",
    "ChshEstimate",
    "ChshReport",
    "DeclineTranscripts",
    "MIN_DECLINES",
    "DetectionReport",
    "InsufficientLines",
    "PrivacyReport",
    "SampleTooSmall",
    "TSIRELSON_BOUND",
    "chsh_from_records",
    "chsh_from_table",
    "chsh_report",
    "collect_declines",
    "detection_probability",
    "intercept_resend_attack",
    "mark_test_lines",
    "privacy_audit",
    "run_bell_test",
    "select_test_lines",
]
