"""Regenerate the bundled synthetic drive cycles and vessel profiles under src/hybrid_mpem/data.

The bundled traces are synthetic 1 Hz stand-ins with the duration, peak speed
and mean speed of the EPA US06, NYCC and SC03 schedules.  Real schedules can be
converted with ``hybrid_mpem.harness.cycles.import_epa_mph``.

    python tools/make_cycles.py
"""

from pathlib import Path

import numpy as np

from hybrid_mpem.harness.cycles import CycleTrace, ramp_profile, save_cycle

DATA = Path(__file__).resolve().parents[1] / "src" / "hybrid_mpem" / "data"
OUT = DATA / "cycles"
OUT_PROFILES = DATA / "profiles"

# (t s, speed m/s) knots, blended with smoothstep
PROFILES = {
    # anchored, swift ramp to 10 m/s, cruise, slow de-ramp, anchored
    "dps_profile": [(0, 0.0), (30, 0.0), (90, 10.0), (330, 10.0), (570, 0.0), (600, 0.0)],
    # take-off run to 120 m/s, cruise, descent to 60 m/s
    "hea_profile": [(0, 0.0), (120, 120.0), (420, 120.0), (540, 60.0), (600, 60.0)],
}

# name: (duration s, peak m/s, mean m/s, accel m/s^2, trip peak range m/s, idle range s, seed)
TARGETS = {
    "us06": (600, 35.9, 21.6, 3.0, (18.0, 36.0), (2, 8), 6),
    "nycc": (598, 12.4, 3.2, 1.8, (4.0, 12.4), (10, 40), 7),
    "sc03": (596, 24.5, 9.6, 2.0, (8.0, 24.5), (8, 25), 8),
}


def micro_trips(duration, accel, peak_range, idle_range, rng):
    v = [0.0]
    while len(v) < duration + 1:
        v.extend([0.0] * int(rng.integers(*idle_range)))
        peak = rng.uniform(*peak_range)
        a = accel * rng.uniform(0.6, 1.0)
        up = np.arange(1, int(np.ceil(peak / a)) + 1) * a
        v.extend(np.minimum(up, peak))
        cruise = int(rng.integers(5, 60))
        wobble = np.cumsum(rng.normal(0.0, 0.3, cruise))
        v.extend(np.clip(peak + wobble, 0.5 * peak, None))
        d = accel * rng.uniform(0.7, 1.1)
        start = v[-1]
        down = start - np.arange(1, int(np.ceil(start / d)) + 1) * d
        v.extend(np.maximum(down, 0.0))
    v = np.array(v)
    # cut at the last stop inside the window and idle to the end
    stops = np.flatnonzero(v[: duration + 1] == 0.0)
    v = np.concatenate([v[: stops[-1] + 1], np.zeros(duration - stops[-1])])
    # light smoothing keeps jerk bounded
    k = np.array([0.25, 0.5, 0.25])
    v[1:-1] = np.convolve(v, k, mode="same")[1:-1]
    return np.maximum(v, 0.0)


def fit(v, peak, mean):
    """Power warp s -> peak * (s / max)^p with p chosen to hit the mean."""
    base = v / v.max()
    lo, hi = 0.05, 20.0
    for _ in range(200):
        p = 0.5 * (lo + hi)
        m = np.mean(peak * base**p)
        if m > mean:
            lo = p
        else:
            hi = p
    return peak * base ** (0.5 * (lo + hi))


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    OUT_PROFILES.mkdir(parents=True, exist_ok=True)
    for name, (dur, peak, mean, accel, pr, ir, seed) in TARGETS.items():
        rng = np.random.default_rng(seed)
        v = fit(micro_trips(dur, accel, pr, ir, rng), peak, mean)
        v = np.round(v, 4)
        tr = CycleTrace(np.arange(dur + 1, dtype=float), v, name)
        save_cycle(tr, OUT / f"{name}.csv")
        _report(name, v)
    for name, knots in PROFILES.items():
        tr = ramp_profile(knots, name=name)
        save_cycle(CycleTrace(tr.t, np.round(tr.speed, 6), name), OUT_PROFILES / f"{name}.csv")
        _report(name, tr.speed)


def _report(name, v):
    acc = np.diff(v)
    print(f"{name}: {v.size - 1} s, max {v.max():.2f} m/s, mean {v.mean():.2f} m/s, "
          f"accel [{acc.min():.2f}, {acc.max():.2f}] m/s^2")


if __name__ == "__main__":
    main()
