"""Closed-loop runs: plant + adaptive controller + battery + ADMM energy manager."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..coordinator import BatteryNodeConfig, EnergyManager, EngineNodeConfig
from ..dynamics import GeneralizedState, regressor, step
from ..ess import (
    BatteryPowerError,
    BatteryState,
    battery_current,
    degradation_step,
    loss_metrics,
    soc_kappa,
    soc_step,
    terminal_voltage,
)
from ..tracking import ControllerState, ReferenceSample, advance_integral, control_torque, tracking_error
from . import kernels
from .cycles import CycleTrace, bundled_cycle, concat, resample
from .scenario import Scenario

__all__ = [
    "SimulationError",
    "RunMetrics",
    "TickLog",
    "TICK_COLUMNS",
    "run_scenario",
    "gamma_sweep",
    "campaign",
    "CampaignResult",
    "random_cycle_sequence",
    "hev_composite",
    "reference_signals",
    "TrackingTrace",
    "track_reference",
]

log = logging.getLogger(__name__)

TICK_COLUMNS = (
    "t_s",
    "speed_mps",
    "speed_ref_mps",
    "p_d_w",
    "p_e_w",
    "p_b_w",
    "soc",
    "i_b_a",
    "q_loss_ah",
    "admm_iters",
    "tracking_gap_w",
)

# ticks in a row whose primal iterates were still moving at max_iters
MAX_UNSETTLED_TICKS = 10


class SimulationError(RuntimeError):
    """Plant blow-up, battery limit, or persistent ADMM non-convergence."""

    def __init__(self, message, t=None, diagnostics=None):
        super().__init__(message if t is None else f"t={t:.3f} s: {message}")
        self.t = t
        self.diagnostics = diagnostics or {}


@dataclass
class TickLog:
    """Per-MPC-tick record; one array per column of ``TICK_COLUMNS``."""

    columns: dict = field(default_factory=lambda: {c: [] for c in TICK_COLUMNS})

    def append(self, **row):
        for c in TICK_COLUMNS:
            self.columns[c].append(row[c])

    def freeze(self) -> "TickLog":
        out = TickLog()
        out.columns = {
            c: np.asarray(v, dtype=int if c == "admm_iters" else float) for c, v in self.columns.items()
        }
        return out

    def __getitem__(self, key):
        return np.asarray(self.columns[key])

    def __len__(self):
        return len(self.columns["t_s"])


@dataclass(frozen=True)
class RunMetrics:
    gamma: float
    duration_s: float
    rms_tracking_error_W: float
    rms_speed_error: float
    soc_min: float
    soc_max: float
    soc_final: float
    capacity_loss_pct: float
    remaining_capacity_pct: float
    q_loss_ah: float
    throughput: float
    total_energy_engine_J: float
    total_energy_battery_J: float
    admm_iters_mean: float
    admm_iters_max: int
    nonconverged_ticks: int
    relaxed_ticks: int
    soc_clamped: bool
    wall_time_s: float


def reference_signals(n: int, trace: CycleTrace, dt: float):
    """Resampled reference velocity and its central-difference acceleration, shaped (N, n).

    For the 3-DOF vessel the speed is the surge velocity along the x axis.
    """
    tr = resample(trace, dt)
    s = tr.speed
    a = np.gradient(s, dt) if s.size > 1 else np.zeros_like(s)
    ref_v = np.zeros((s.size, n))
    ref_a = np.zeros((s.size, n))
    ref_v[:, 0] = s
    ref_a[:, 0] = a
    return tr, np.ascontiguousarray(ref_v), np.ascontiguousarray(ref_a)


def _python_interval(model, bp, dp, x, v, phi, ref_v, ref_a, i0, nsub, dt, k1, g1, q, thr, p_b):
    """Reference implementation of ``kernels.run_interval`` on the public module functions."""
    state = GeneralizedState(x, v)
    cs = ControllerState(phi, k1, g1)
    bs = BatteryState(q, thr, dp.prefactor * thr / 3600.0)
    eta_sq = 0.0
    for j in range(nsub):
        i = i0 + j
        ref = ReferenceSample(ref_v[i], ref_a[i])
        eta = tracking_error(state, ref)
        Y = regressor(model, state, ref.xdot_d, ref.xddot_d)
        tau = control_torque(cs, Y, eta) + model.known_force(state)
        eta_sq += (eta @ eta) * dt
        cs = advance_integral(cs, Y, eta, dt)
        state = step(model, state, tau, dt)
        i_b = battery_current(bp, bs.q, p_b)
        v_b = terminal_voltage(bp, bs.q, i_b)
        bs = soc_step(bp, bs, p_b, dt, v_b=v_b)
        bs = degradation_step(dp, bs, i_b, dt)
    return state.x, state.v, cs.phi, bs.q, bs.throughput, eta_sq, bs.clamped, kernels.OK, nsub


def _speed(v):
    return float(v[0]) if v.size == 1 else float(np.hypot(v[0], v[1]))


def _trapz(y, t):
    if len(y) < 2:
        return 0.0
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(t)))


@dataclass(frozen=True)
class TrackingTrace:
    """Controller and plant history at every simulation step (no energy manager)."""

    t: np.ndarray  # (N+1,)
    x: np.ndarray  # (N+1, n)
    v: np.ndarray
    phi: np.ndarray  # (N+1, n_theta)
    ref_v: np.ndarray

    @property
    def eta(self) -> np.ndarray:
        return self.v - self.ref_v


def track_reference(scn: Scenario, trace: CycleTrace, phi0=None) -> TrackingTrace:
    """Tracking loop alone at ``scn.dt_sim``, recording every step.

    The battery is not involved; this is the setting for checking the
    controller's error decay and the Lyapunov rate.
    """
    model = scn.model()
    kind, prm = model.kernel_params()
    tr, ref_v, ref_a = reference_signals(model.n, trace, scn.dt_sim)
    phi = np.zeros(model.n_theta) if phi0 is None else np.array(phi0, dtype=float)
    xs, vs, phis = kernels.trajectory(kind, prm, np.zeros(model.n), ref_v[0].copy(), phi, ref_v, ref_a,
                                      scn.dt_sim, scn.k1, scn.gamma1)
    return TrackingTrace(tr.t, xs, vs, phis, ref_v)


def run_scenario(
    scn: Scenario,
    trace: CycleTrace,
    *,
    initial_battery: BatteryState | None = None,
    backend: str = "compiled",
    plant_backend: str = "compiled",
    phi0=None,
):
    """Simulate ``trace`` closed loop; returns (RunMetrics, TickLog).

    ``initial_battery`` carries throughput and capacity loss from earlier runs;
    its SoC is used as the starting SoC.  Without it the pack starts fresh at
    ``scn.q_init``.
    """
    wall0 = time.perf_counter()
    model = scn.model()
    kind, prm = model.kernel_params()
    n, n_theta = model.n, model.n_theta
    bp, dgp = scn.battery, scn.degradation
    cfg = scn.coordinator_config()
    nsub = scn.n_sub
    dt = scn.dt_sim

    tr, ref_v, ref_a = reference_signals(n, trace, dt)
    n_ticks = (len(tr) - 1) // nsub

    bs = initial_battery or BatteryState(scn.q_init)
    q, thr = bs.q, bs.throughput
    x = np.zeros(n)
    v = ref_v[0].copy()
    phi = np.zeros(n_theta) if phi0 is None else np.array(phi0, dtype=float)

    cfg_e = EngineNodeConfig(**{**scn.engine_node.__dict__, "p_prev_applied": 0.0})
    lim = scn.battery_node
    cfg_b = BatteryNodeConfig(
        gamma=lim.gamma,
        p_min=lim.p_min,
        p_max=lim.p_max,
        ramp_b=lim.ramp_b,
        kappa=soc_kappa(bp, q, cfg.Ts),
        q0=q,
        q_min=bp.q_min,
        q_max=bp.q_max,
        p_prev_applied=0.0,
    )
    mgr = EnergyManager(cfg, cfg_e, cfg_b, backend=backend)

    tl = TickLog()
    eta_sq_total = 0.0
    clamped = False
    nonconv = relaxed = unsettled = 0
    for k in range(n_ticks):
        i0 = k * nsub
        t = k * scn.dt_mpc
        tau, _, _ = kernels.controller(kind, prm, x, v, phi, ref_v[i0], ref_a[i0], scn.k1, scn.gamma1)
        p_d = float(v @ tau)
        res = mgr.step(p_d, q, soc_kappa(bp, q, cfg.Ts))
        p_b = res.applied_pb
        try:
            i_b = battery_current(bp, q, p_b)
        except BatteryPowerError as exc:
            raise SimulationError(str(exc), t) from None
        tl.append(
            t_s=t,
            speed_mps=_speed(v),
            speed_ref_mps=float(tr.speed[i0]),
            p_d_w=p_d,
            p_e_w=res.applied_pe,
            p_b_w=p_b,
            soc=q,
            i_b_a=i_b,
            q_loss_ah=dgp.prefactor * thr / 3600.0,
            admm_iters=res.iterations,
            tracking_gap_w=res.tracking_gap,
        )
        relaxed += res.relaxed
        if not res.converged:
            nonconv += 1
            unsettled = unsettled + 1 if res.primal_delta > cfg.eps_abs else 0
            if unsettled > MAX_UNSETTLED_TICKS:
                raise SimulationError(
                    f"ADMM primal iterates still moving after {cfg.max_iters} iterations "
                    f"for {unsettled} consecutive ticks",
                    t,
                    {"primal_delta": res.primal_delta, "p_d": p_d, "soc": q},
                )
        else:
            unsettled = 0

        if plant_backend == "compiled":
            out = kernels.run_interval(
                kind, prm, x, v, phi, ref_v, ref_a, i0, nsub, dt, scn.k1, scn.gamma1,
                bp.Q_T_seconds, bp.r_b, bp.c1, bp.c2, q, thr, p_b,
            )
        elif plant_backend == "python":
            out = _python_interval(model, bp, dgp, x, v, phi, ref_v, ref_a, i0, nsub, dt, scn.k1, scn.gamma1, q, thr, p_b)
        else:
            raise ValueError(f"unknown plant backend {plant_backend!r}")
        x, v, phi, q, thr, eta_sq, clamp_now, status, _ = out
        q, thr = float(q), float(thr)
        if status != kernels.OK:
            what = {
                kernels.PLANT_BLOWUP: "plant state became non-finite",
                kernels.BATTERY_LIMIT: "battery power beyond deliverable limit",
                kernels.VOLTAGE_COLLAPSE: "battery terminal voltage collapsed",
            }[status]
            raise SimulationError(what, t, {"x": x, "v": v, "p_b": p_b, "soc": q})
        eta_sq_total += eta_sq
        if clamp_now and not clamped:
            log.warning("SoC clamped to [0, 1] during tick at t=%.1f s", t)
        clamped |= bool(clamp_now)

    log_f = tl.freeze()
    Q_L = dgp.prefactor * thr / 3600.0
    final = BatteryState(q, thr, Q_L, clamped)
    loss_pct, remaining_pct = loss_metrics(bp, final)
    ts = log_f["t_s"]
    soc_all = np.append(log_f["soc"], q)
    gap = log_f["tracking_gap_w"]
    iters = log_f["admm_iters"]
    duration = n_ticks * scn.dt_mpc
    metrics = RunMetrics(
        gamma=float(scn.battery_node.gamma),
        duration_s=float(duration),
        rms_tracking_error_W=float(np.sqrt(np.mean(gap**2))) if n_ticks else 0.0,
        rms_speed_error=float(np.sqrt(eta_sq_total / duration)) if n_ticks else 0.0,
        soc_min=float(soc_all.min()),
        soc_max=float(soc_all.max()),
        soc_final=q,
        capacity_loss_pct=float(loss_pct),
        remaining_capacity_pct=float(remaining_pct),
        q_loss_ah=float(Q_L),
        throughput=thr,
        total_energy_engine_J=_trapz(log_f["p_e_w"], ts),
        total_energy_battery_J=_trapz(log_f["p_b_w"], ts),
        admm_iters_mean=float(iters.mean()) if n_ticks else 0.0,
        admm_iters_max=int(iters.max()) if n_ticks else 0,
        nonconverged_ticks=int(nonconv),
        relaxed_ticks=int(relaxed),
        soc_clamped=bool(clamped),
        wall_time_s=time.perf_counter() - wall0,
    )
    return metrics, log_f


def gamma_sweep(scn: Scenario, trace: CycleTrace, gammas, **kw):
    """One fresh-battery run per gamma, everything else fixed; returns [(gamma, metrics, log)]."""
    gammas = list(gammas)
    if not gammas:
        raise ValueError("gammas must be non-empty")
    rows = []
    for g in gammas:
        m, tl = run_scenario(scn.with_gamma(g), trace, **kw)
        rows.append((float(g), m, tl))
    return rows


def hev_composite() -> CycleTrace:
    """Fixed 30-minute road composite US06 + NYCC + US06 from the bundled traces."""
    us06, nycc = bundled_cycle("us06"), bundled_cycle("nycc")
    return concat([us06, nycc, us06], "us06+nycc+us06")


def random_cycle_sequence(cycles, hours: float, rng: np.random.Generator, name=None) -> CycleTrace:
    """Random concatenation of the given traces, cut to exactly ``hours``."""
    target = hours * 3600.0
    parts, total = [], 0.0
    while total < target:
        tr = cycles[int(rng.integers(len(cycles)))]
        parts.append(tr)
        total += tr.duration + 1.0
    joined = concat(parts, name or "+".join(p.name for p in parts))
    keep = joined.t <= target
    t, s = joined.t[keep], joined.speed[keep]
    if t[-1] < target:
        t = np.append(t, target)
        s = np.append(s, np.interp(target, joined.t, joined.speed))
    return CycleTrace(t, s, joined.name)


@dataclass(frozen=True)
class CampaignResult:
    hours: np.ndarray  # checkpoint times, h
    remaining_pct: dict  # gamma -> array over checkpoints
    loss_pct: dict
    runs: dict  # gamma -> list of RunMetrics
    sequences: list  # cycle names per run
    logs: dict | None = None  # gamma -> list of TickLog, when requested


def _campaign_one_gamma(scn, traces, hours, keep_logs=False):
    """Sequential runs for one gamma with capacity loss carried over."""
    bp = scn.battery
    state = None
    runs, rem, loss, logs = [], [], [], []
    for r, tr in enumerate(traces):
        start = BatteryState(scn.q_init) if state is None else BatteryState(scn.q_init, state.throughput, state.Q_L)
        m, tl = run_scenario(scn, tr, initial_battery=start)
        state = BatteryState(m.soc_final, m.throughput, m.q_loss_ah)
        runs.append(m)
        if keep_logs:
            logs.append(tl)
        # checkpoints at each whole hour inside this run, last one at the run end
        t = tl["t_s"]
        qls = np.append(tl["q_loss_ah"], m.q_loss_ah)
        tt = np.append(t, m.duration_s)
        for hcp in np.arange(1, int(round(hours)) + 1):
            ql = float(np.interp(hcp * 3600.0, tt, qls))
            loss.append(100.0 * ql / bp.Q_T)
            rem.append((bp.Q_T - ql) / bp.Q_T * 100.0)
    return runs, np.array(rem), np.array(loss), logs


def campaign(
    scn: Scenario,
    cycles,
    runs: int,
    hours_per_run: float,
    gammas,
    seed: int | None = None,
    workers: int = 1,
    keep_logs: bool = False,
):
    """Randomized multi-run campaign; SoH checkpoints every hour of driving.

    Every gamma sees the same cycle sequence for a given run index, so curves
    differ only through gamma.  The SoC is reset to ``q_init`` at each run
    start while throughput and capacity loss carry over.  With ``keep_logs``
    the per-run tick logs are returned as well.
    """
    if runs < 1 or not hours_per_run > 0:
        raise ValueError("runs must be >= 1 and hours_per_run > 0")
    if abs(hours_per_run - round(hours_per_run)) > 1e-9:
        raise ValueError("hours_per_run must be a whole number of hours")
    seed = scn.seed if seed is None else seed
    cycles = list(cycles)
    traces, names = [], []
    for r in range(runs):
        rng = np.random.default_rng([seed, r])
        tr = random_cycle_sequence(cycles, hours_per_run, rng)
        traces.append(tr)
        names.append(tr.name)
    gammas = [float(g) for g in gammas]
    jobs = [(scn.with_gamma(g), traces, hours_per_run, keep_logs) for g in gammas]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            outs = list(ex.map(_campaign_one_gamma, *zip(*jobs)))
    else:
        outs = [_campaign_one_gamma(*j) for j in jobs]
    n_cp = runs * int(round(hours_per_run))
    return CampaignResult(
        hours=np.arange(1, n_cp + 1, dtype=float),
        remaining_pct={g: o[1] for g, o in zip(gammas, outs)},
        loss_pct={g: o[2] for g, o in zip(gammas, outs)},
        runs={g: o[0] for g, o in zip(gammas, outs)},
        sequences=names,
        logs={g: o[3] for g, o in zip(gammas, outs)} if keep_logs else None,
    )
