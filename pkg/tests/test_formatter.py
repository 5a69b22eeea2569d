"""
Unit tests for the formatter module.
"""

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import json

import numpy as np
import pandas as pd
import pytest

from src.experiment import SUMMARY_COLUMNS
from src.formatter import SEPARATOR, ResultFormatter
from src.scheduling import Scheme, build_schedule
from src.topology import Topology


def _summary():
    rows = [
        [2.0, 0.8, "MAC", 3, 0, 19.6667, 0.4714, 0.9012, 0.0031, 0.9050, 19, 20, 0.81, 0.42],
        [2.0, 0.8, "P2P", 2, 1, 57.0, 2.0, np.nan, np.nan, np.nan, 55, 59, 0.81, 0.42],
    ]
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def test_format_number():
    assert ResultFormatter.format_number(3.14159) == "3.14"
    assert ResultFormatter.format_number(0.5, digits=4) == "0.5000"
    assert ResultFormatter.format_number(None) == "-"
    assert ResultFormatter.format_number(float("nan")) == "-"


def test_create_report():
    paths = {"summary": "results/summary.csv", "trace:a": "x", "trace:b": "y", "meta": "results/meta.json"}
    report = ResultFormatter.create_report(_summary(), "accuracy", paths)

    print("✅ Report created")
    print(report)

    lines = report.splitlines()
    assert lines[0].startswith("OTA-DSGD experiment")
    assert lines.count(SEPARATOR) == 2
    assert "accuracy_final" in report
    assert "0.9012±0.0031" in report
    assert "-±-" in report, "Missing metrics render as dashes"
    assert "traces: 2 files" in report
    assert "summary: results/summary.csv" in report


def test_report_without_paths():
    report = ResultFormatter.create_report(_summary())
    assert "traces:" not in report
    assert report.count("\n") == len(ResultFormatter.summary_lines(_summary())) + 2


def test_schedule_json_layout():
    topo = Topology.from_adjacency([[0, 1, 0], [1, 0, 1], [0, 1, 0]])

    p2p = json.loads(ResultFormatter.schedule_to_json(build_schedule(topo, Scheme.P2P)))
    assert p2p["scheme"] == "P2P"
    assert p2p["T"] == len(p2p["slots"])
    links = sorted(tuple(link) for slot in p2p["slots"] for link in slot["links"])
    assert links == [(0, 1), (1, 0), (1, 2), (2, 1)]

    mac = json.loads(ResultFormatter.schedule_to_json(build_schedule(topo, Scheme.MAC), indent=None))
    assert mac["scheme"] == "MAC"
    assert [slot["slot"] for slot in mac["slots"]] == list(range(mac["T"]))
    receivers = sorted(r for slot in mac["slots"] for r in slot["receivers"])
    assert receivers == [0, 1, 2]
    for slot in mac["slots"]:
        assert all(isinstance(tx, str) for tx in slot["transmitters"])


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
