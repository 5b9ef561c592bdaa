"""Byte-deterministic run artefacts: metrics.csv, ledger.jsonl, summary.json.

Floats are written in Python's shortest round-trip form (``repr``), so a
value read back parses to the identical double.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

METRICS_COLUMNS = (
    "tick",
    "time_s",
    "agent_id",
    "soc_battery_wh",
    "soc_supercap_wh",
    "delivered_wh",
    "losses_wh",
    "faults",
)


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def metrics_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRICS_COLUMNS)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def summary_json(summary: dict) -> str:
    return json.dumps(summary, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_run(sim, scenario, out_dir) -> dict:
    """Write the three artefacts of a finished run; returns the summary dict."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    # the seed is a run input, not a result: deterministic scenarios must give
    # identical summaries whatever seed they were run with
    summary = {"scenario": scenario.name, **sim.summary()}
    (out / "metrics.csv").write_text(metrics_csv(sim.rows), encoding="utf-8", newline="")
    (out / "ledger.jsonl").write_text(sim.book.ledger.dumps(), encoding="utf-8", newline="")
    (out / "summary.json").write_text(summary_json(summary), encoding="utf-8", newline="")
    return summary
