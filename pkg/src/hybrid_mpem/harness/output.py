"""CSV writers for tick logs, run summaries and campaign SoH curves.

Floats are written with ``repr`` so a file read back gives the same doubles.
Wall-clock time is left out of every file, which keeps outputs of identical
runs byte-identical.
"""

from __future__ import annotations

import csv
from dataclasses import fields
from pathlib import Path

import numpy as np

from .run import TICK_COLUMNS, CampaignResult, RunMetrics, TickLog

__all__ = [
    "SUMMARY_COLUMNS",
    "write_tick_csv",
    "read_tick_csv",
    "write_summary_csv",
    "write_campaign_csv",
]

SUMMARY_COLUMNS = ("scenario", "cycle") + tuple(f.name for f in fields(RunMetrics) if f.name != "wall_time_s")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_tick_csv(log: TickLog, path) -> Path:
    """One row per MPC tick, columns ``TICK_COLUMNS``; header only for an empty log."""
    path = Path(path)
    cols = [log[c] for c in TICK_COLUMNS]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TICK_COLUMNS)
        for k in range(len(log)):
            w.writerow([_fmt(col[k]) for col in cols])
    return path


def read_tick_csv(path) -> TickLog:
    """Inverse of :func:`write_tick_csv`."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != TICK_COLUMNS:
        raise ValueError(f"{path}: header does not match the tick log columns")
    tl = TickLog()
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(TICK_COLUMNS):
            raise ValueError(f"{path}:{lineno}: expected {len(TICK_COLUMNS)} fields, got {len(row)}")
        tl.append(**{c: (int(v) if c == "admm_iters" else float(v)) for c, v in zip(TICK_COLUMNS, row)})
    return tl.freeze()


def write_summary_csv(rows, path) -> Path:
    """``rows`` is an iterable of (scenario name, cycle name, RunMetrics)."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for scenario, cycle, m in rows:
            w.writerow([scenario, cycle] + [_fmt(getattr(m, c)) for c in SUMMARY_COLUMNS[2:]])
    return path


def write_campaign_csv(res: CampaignResult, path) -> Path:
    """Long format: hour, gamma, remaining_capacity_pct, capacity_loss_pct."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("hour", "gamma", "remaining_capacity_pct", "capacity_loss_pct"))
        for g in sorted(res.remaining_pct):
            for hr, rem, loss in zip(res.hours, res.remaining_pct[g], res.loss_pct[g]):
                w.writerow([_fmt(float(hr)), _fmt(float(g)), _fmt(float(rem)), _fmt(float(loss))])
    return path
