"""
The quantum phase as seen by the two laboratories: detection streams, clock
synchronisation, coincidence matching and the reconciled shared tables.
"""

from .coincidence import ClockModel, Coincidences, match_coincidences
from .session import (
    DetectionStream,
    SessionParams,
    SimulatedSession,
    load_streams,
    save_streams,
    simulate_session,
)
from .sync import (
    CalibrationEdgeNotFound,
    estimate_clock_drift,
    find_calibration_edge,
    find_clock_offset,
)
from .table import (
    ReconciledSession,
    ReconcileReport,
    SharedTable,
    SharedTableAlice,
    SharedTableBob,
    generate_tables,
    reconcile,
    reconcile_session,
)
from .tablefile import TableFile, load_table, save_table

__all__ = [
    "CalibrationEdgeNotFound",
    "ClockModel",
    "Coincidences",
    "DetectionStream",
    "ReconcileReport",
    "ReconciledSession",
    "SessionParams",
    "SharedTable",
    "SharedTableAlice",
    "SharedTableBob",
    "SimulatedSession",
    "TableFile",
    "estimate_clock_drift",
    "find_calibration_edge",
    "find_clock_offset",
    "generate_tables",
    "load_streams",
    "load_table",
    "match_coincidences",
    "reconcile",
    "reconcile_session",
    "save_streams",
    "save_table",
    "simulate_session",
]
