"""Speed traces: CSV I/O, resampling, composition, synthetic profiles."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

__all__ = [
    "CycleTrace",
    "CycleFormatError",
    "load_cycle",
    "save_cycle",
    "import_epa_mph",
    "resample",
    "concat",
    "constant_speed",
    "ramp_profile",
    "bundled_cycle",
    "BUNDLED_CYCLES",
]

MPH = 0.44704
BUNDLED_CYCLES = ("us06", "nycc", "sc03", "dps_profile", "hea_profile")
# road drive cycles live in data/cycles (a campaign directory), vessel profiles in data/profiles
_PROFILES = ("dps_profile", "hea_profile")


class CycleFormatError(ValueError):
    pass


@dataclass(frozen=True)
class CycleTrace:
    t: np.ndarray
    speed: np.ndarray
    name: str = "cycle"
    allow_negative: bool = False

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(-1)
        s = np.asarray(self.speed, dtype=float).reshape(-1)
        if t.size == 0:
            raise CycleFormatError("empty trace")
        if t.shape != s.shape:
            raise CycleFormatError("t and speed must have the same length")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(s))):
            raise CycleFormatError("trace must be finite")
        if t[0] != 0.0:
            raise CycleFormatError(f"time must start at 0, got {t[0]}")
        if np.any(np.diff(t) <= 0):
            k = int(np.flatnonzero(np.diff(t) <= 0)[0]) + 1
            raise CycleFormatError(f"time not strictly increasing at sample {k}")
        if not self.allow_negative and np.any(s < 0):
            raise CycleFormatError("negative speed in a road cycle")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "speed", s)

    @property
    def duration(self) -> float:
        return float(self.t[-1])

    def __len__(self):
        return self.t.size


def _parse(lines, name, source):
    """Rows of ``t_s,speed_mps``; the header line is optional."""
    reader = csv.reader(lines)
    t, s = [], []
    for lineno, row in enumerate(reader, start=1):
        if not row:
            continue
        if lineno == 1 and [h.strip() for h in row] == ["t_s", "speed_mps"]:
            continue
        if len(row) != 2:
            raise CycleFormatError(f"{source}:{lineno}: expected 2 fields, got {len(row)}")
        try:
            t.append(float(row[0]))
            s.append(float(row[1]))
        except ValueError:
            raise CycleFormatError(f"{source}:{lineno}: non-numeric field in {row!r}") from None
    if not t:
        raise CycleFormatError(f"{source}: no samples")
    try:
        return CycleTrace(np.array(t), np.array(s), name)
    except CycleFormatError as exc:
        raise CycleFormatError(f"{source}: {exc}") from None


def load_cycle(path) -> CycleTrace:
    """Read a ``t_s,speed_mps`` CSV (header line optional)."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        return _parse(fh, path.stem, str(path))


def save_cycle(trace: CycleTrace, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("t_s,speed_mps\n")
        for t, s in zip(trace.t, trace.speed):
            fh.write(f"{float(t)!r},{float(s)!r}\n")


def bundled_cycle(name: str) -> CycleTrace:
    """One of the bundled 1 Hz traces, see ``BUNDLED_CYCLES``."""
    if name not in BUNDLED_CYCLES:
        raise KeyError(f"unknown bundled cycle {name!r}; choose from {BUNDLED_CYCLES}")
    pkg = "hybrid_mpem.data.profiles" if name in _PROFILES else "hybrid_mpem.data.cycles"
    text = resources.files(pkg).joinpath(f"{name}.csv").read_text(encoding="utf-8")
    return _parse(io.StringIO(text), name, f"<bundled {name}>")


def import_epa_mph(path, name=None) -> CycleTrace:
    """Read an EPA-style schedule (two numeric columns: seconds, mph) and convert to m/s.

    Leading title/header lines that do not parse as numbers are skipped.
    """
    path = Path(path)
    t, s = [], []
    with open(path, newline="", encoding="utf-8-sig") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = [p for p in line.replace("\t", ",").replace(";", ",").split(",") if p.strip()]
            if len(parts) < 2:
                parts = line.split()
            try:
                tv, sv = float(parts[0]), float(parts[1])
            except (ValueError, IndexError):
                if t:
                    raise CycleFormatError(f"{path}:{lineno}: malformed row {line.strip()!r}") from None
                continue
            t.append(tv)
            s.append(sv * MPH)
    if not t:
        raise CycleFormatError(f"{path}: no numeric rows")
    t = np.array(t)
    return CycleTrace(t - t[0], np.array(s), name or path.stem)


def resample(trace: CycleTrace, dt: float) -> CycleTrace:
    """Linear interpolation on the grid 0, dt, 2dt, ... up to the last sample; endpoint held."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    n = int(np.floor(trace.duration / dt + 1e-9))
    grid = np.arange(n + 1) * dt
    return CycleTrace(grid, np.interp(grid, trace.t, trace.speed), trace.name, trace.allow_negative)


def concat(traces, name=None) -> CycleTrace:
    """Join traces end to end; each next trace starts one native step after the previous end."""
    ts, ss = [], []
    offset = 0.0
    for k, tr in enumerate(traces):
        if k:
            step = tr.t[1] - tr.t[0] if len(tr) > 1 else 1.0
            offset = ts[-1][-1] + step
        ts.append(tr.t + offset)
        ss.append(tr.speed)
    if not ts:
        raise ValueError("nothing to concatenate")
    return CycleTrace(
        np.concatenate(ts),
        np.concatenate(ss),
        name or "+".join(tr.name for tr in traces),
        any(tr.allow_negative for tr in traces),
    )


def constant_speed(speed: float, duration: float, dt: float = 1.0, name="constant") -> CycleTrace:
    n = int(round(duration / dt))
    return CycleTrace(np.arange(n + 1) * dt, np.full(n + 1, float(speed)), name)


def ramp_profile(knots, dt: float = 1.0, name="profile") -> CycleTrace:
    """Piecewise profile through (t, speed) knots with smoothstep blending between them.

    Smoothstep keeps the acceleration continuous at the knots, which the
    adaptive controller's reference-acceleration input benefits from.
    """
    knots = np.asarray(knots, dtype=float)
    t_end = knots[-1, 0]
    n = int(round(t_end / dt))
    t = np.arange(n + 1) * dt
    s = np.empty_like(t)
    idx = np.clip(np.searchsorted(knots[:, 0], t, side="right") - 1, 0, len(knots) - 2)
    t0, t1 = knots[idx, 0], knots[idx + 1, 0]
    v0, v1 = knots[idx, 1], knots[idx + 1, 1]
    u = np.clip((t - t0) / (t1 - t0), 0.0, 1.0)
    s[:] = v0 + (v1 - v0) * u * u * (3.0 - 2.0 * u)
    return CycleTrace(t, s, name)
