import io
import json
import logging

import numpy as np
from pydantic import BaseModel

from qotp.reporting import SCHEMA_VERSION, Report


class Estimate(BaseModel):
    s: float
    lines: int


def test_document_header():
    doc = Report("bell-test", s=2.5).to_dict()
    assert doc["schema"] == SCHEMA_VERSION
    assert doc["command"] == "bell-test"
    assert doc["generated_at"].endswith("+00:00")
    assert "generated_at" not in Report("x").to_dict(timestamp=False)


def test_floats_keep_six_significant_digits():
    doc = Report("x", a=0.123456789, b=2.70123456, c=0.000987654321, d=0.0).to_dict(timestamp=False)
    assert doc["a"] == 0.123457
    assert doc["b"] == 2.70123
    assert doc["c"] == 0.000987654
    assert doc["d"] == 0.0


def test_numpy_and_models_are_converted():
    report = Report(
        "x",
        counts=np.array([1, 2, 3]),
        flag=np.bool_(True),
        n=np.int64(5),
        estimate=Estimate(s=2.828427124, lines=40),
        nested={1: (0.5, np.float32(0.25))},
    )
    doc = json.loads(report.to_json(timestamp=False))
    assert doc["counts"] == [1, 2, 3]
    assert doc["flag"] is True
    assert doc["n"] == 5
    assert doc["estimate"] == {"s": 2.82843, "lines": 40}
    assert doc["nested"] == {"1": [0.5, 0.25]}


def test_emit_writes_json_and_logs_summary(caplog):
    stream = io.StringIO()
    report = Report("sign", accepted=True).add(min_fraction=0.81).note("Signature accepted")
    with caplog.at_level(logging.INFO, logger="qotp"):
        report.emit(stream)
    doc = json.loads(stream.getvalue())
    assert doc["accepted"] is True
    assert doc["min_fraction"] == 0.81
    assert "Signature accepted" in caplog.text
