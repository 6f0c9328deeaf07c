import json
import logging
import math
import sys
from datetime import datetime, timezone
from typing import Any, TextIO

import numpy as np
from pydantic import BaseModel

logger = logging.getLogger("qotp")

SCHEMA_VERSION = 1
SIGNIFICANT_DIGITS = 6


def _round(value: float) -> float:
    if value == 0 or not math.isfinite(value):
        return value
    return round(value, SIGNIFICANT_DIGITS - 1 - int(math.floor(math.log10(abs(value)))))


def _plain(value: Any) -> Any:
    """JSON-ready copy of `value` with floats cut to 6 significant digits."""
    if isinstance(value, BaseModel):
        return _plain(value.model_dump(mode="json"))
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return _round(float(value))
    return value


class Report:
    """
    Machine-readable result of one CLI command. The JSON document goes to
    stdout, the short human summary through the logger to stderr.
    """

    def __init__(self, command: str, **data: Any) -> None:
        self.command = command
        self.data = data
        self.summary: list[str] = []

    def add(self, **data: Any) -> "Report":
        self.data.update(data)
        return self

    def note(self, line: str) -> "Report":
        self.summary.append(line)
        return self

    def to_dict(self, timestamp: bool = True) -> dict:
        doc = {"schema": SCHEMA_VERSION, "command": self.command}
        if timestamp:
            doc["generated_at"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
        doc.update(_plain(self.data))
        return doc

    def to_json(self, timestamp: bool = True) -> str:
        return json.dumps(self.to_dict(timestamp), indent=2)

    def emit(self, stream: TextIO | None = None) -> None:
        for line in self.summary:
            logger.info(line)
        (stream or sys.stdout).write(self.to_json() + "\n")
