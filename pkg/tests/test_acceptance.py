"""Acceptance criteria 1-9, each printing one PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the PASS/FAIL lines are
repeated in the terminal summary.  Criterion 4 runs a 20 x 2 h campaign and
takes a couple of minutes on one core.
"""

import time
from dataclasses import replace

import numpy as np
import pytest

from hybrid_mpem.coordinator import (
    BatteryNodeConfig,
    CoordinatorConfig,
    EngineNodeConfig,
    NodeState,
    balanced_rho,
    centralized_solve,
    run_admm,
)
from hybrid_mpem.ess import BatteryParams, BatteryState, DegradationParams, battery_current, degradation_step, terminal_voltage
from hybrid_mpem.harness.cycles import bundled_cycle, constant_speed
from hybrid_mpem.harness.output import write_campaign_csv, write_summary_csv, write_tick_csv
from hybrid_mpem.harness.run import campaign, gamma_sweep, hev_composite, run_scenario, track_reference
from hybrid_mpem.harness.scenario import bundled_scenario
from hybrid_mpem.oracles import admm_oracle_gap, qp_oracle_gap, random_admm_instance, regressor_identity_gap
from hybrid_mpem.wire import NodeLink

CRITERIA = {
    1: "distributed == centralized",
    2: "saturation case",
    3: "gamma trend on the 30-minute HEV composite",
    4: "SoH separation, 20 runs x 2 h",
    5: "adaptive tracking and Lyapunov rate",
    6: "constraint envelope",
    7: "unit-level oracles",
    8: "ship and aircraft scenarios",
    9: "determinism and wire parity",
}
RESULTS = {}

GAMMAS = (0.0, 1.0, 10.0, 100.0, 1000.0)


def report(n, ok, detail):
    line = f"criterion {n} {'PASS' if ok else 'FAIL'}: {CRITERIA[n]} | {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def _criterion1_instances():
    rng = np.random.default_rng(20240601)
    return [random_admm_instance(rng, h) for h, count in ((5, 100), (3, 20), (10, 20)) for _ in range(count)]


@pytest.fixture(scope="module")
def instances():
    return _criterion1_instances()


@pytest.fixture(scope="module")
def hev():
    return bundled_scenario("hev")


@pytest.fixture(scope="module")
def sweep(hev):
    t0 = time.perf_counter()
    rows = gamma_sweep(hev, hev_composite(), GAMMAS)
    return rows, time.perf_counter() - t0


@pytest.fixture(scope="module")
def soh(hev):
    cycles = [bundled_cycle(n) for n in ("us06", "nycc", "sc03")]
    t0 = time.perf_counter()
    res = campaign(hev, cycles, runs=20, hours_per_run=2, gammas=[1.0, 100.0], seed=2024, keep_logs=True)
    return res, time.perf_counter() - t0


@pytest.fixture(scope="module")
def cruise(hev):
    seg = constant_speed(30.0, 120.0)
    return seg, track_reference(hev, seg), run_scenario(hev, seg)


def test_criterion_1_distributed_matches_centralized(instances):
    t0 = time.perf_counter()
    worst_gap, worst_it, all_conv = 0.0, 0, True
    for inst in instances:
        gap, res = admm_oracle_gap(inst)
        worst_gap = max(worst_gap, gap)
        worst_it = max(worst_it, res.iterations)
        all_conv &= bool(res.converged)
    elapsed = time.perf_counter() - t0
    ok = worst_gap <= 1e-4 and worst_it <= 500 and all_conv and elapsed < 10.0
    report(1, ok, f"{len(instances)} instances, max gap {worst_gap:.2e} (<= 1e-4), "
                  f"max {worst_it} iterations, all converged={all_conv}, {elapsed:.1f} s")


def test_criterion_2_saturation():
    cfg_e = EngineNodeConfig(beta=1.0, p_ref=75e3, p_min=0.0, p_max=100e3, ramp_e=11.2e3, p_prev_applied=100e3)
    cfg_b = BatteryNodeConfig(gamma=10.0, p_min=-14e3, p_max=14e3, ramp_b=13.5e3, kappa=6.5 * 3600 * 312.0,
                              q0=0.7, q_min=0.5, q_max=0.8, p_prev_applied=14e3)
    cfg = CoordinatorConfig(alpha=1000.0, rho=balanced_rho(1.0, 10.0), h=5, adaptive_rho=True)
    p_hat = np.full(5, 120e3)
    res = run_admm(p_hat, NodeState.cold(5), NodeState.cold(5), cfg, cfg_e, cfg_b)
    pe, pb = centralized_solve(p_hat, cfg, cfg_e, cfg_b)
    ok = (
        abs(res.applied_pe - 100e3) <= 1e-6
        and abs(res.applied_pb - 14e3) <= 1e-6
        and abs(res.tracking_gap - 6e3) <= 1.0
        and abs(pe[0] - 100e3) <= 1e-3
        and abs(pb[0] - 14e3) <= 1e-3
    )
    report(2, ok, f"applied ({res.applied_pe:.3f}, {res.applied_pb:.3f}) W, gap {res.tracking_gap:.6f} W, "
                  f"oracle ({pe[0]:.3f}, {pb[0]:.3f}) W")


def test_criterion_3_gamma_trend(sweep):
    rows, elapsed = sweep
    loss = [m.capacity_loss_pct for _, m, _ in rows]
    rms = [m.rms_tracking_error_W for _, m, _ in rows]
    ok = (
        all(b <= a for a, b in zip(loss, loss[1:]))
        and all(b >= a for a, b in zip(rms, rms[1:]))
        and elapsed < 300.0
    )
    report(3, ok, "loss % " + ", ".join(f"{v:.4g}" for v in loss) + "; rms gap W "
           + ", ".join(f"{v:.4g}" for v in rms) + f"; {elapsed:.1f} s")


@pytest.mark.slow
def test_criterion_4_soh_separation(soh):
    res, elapsed = soh
    lo, hi = res.remaining_pct[1.0], res.remaining_pct[100.0]
    after = res.hours > 1.0
    margin = float(np.min(hi[after] - lo[after]))
    final = float(hi[-1] - lo[-1])
    ok = margin >= 0.0 and final > 0.0
    report(4, ok, f"{res.hours.size} checkpoints, min separation after hour 1 {margin:.3e} %, "
                  f"final {hi[-1]:.5f} vs {lo[-1]:.5f} % ({final:.3e}), {elapsed:.0f} s")


def test_criterion_5_tracking(hev, cruise):
    _, tr, _ = cruise
    eta = tr.eta[:, 0]
    last = tr.t >= tr.t[-1] - 12.0
    mean_eta = float(np.mean(np.abs(eta[last])))

    m = float(hev.model().inertia(np.zeros(1))[0, 0])
    err = -hev.gamma1 * tr.phi - hev.model().theta()
    V = 0.5 * m * eta**2 + np.sum(err**2, axis=1) / (2.0 * hev.gamma1)

    def dV(a, b):
        # difference of squares keeps the increment accurate next to a large V
        return 0.5 * m * (eta[b] - eta[a]) * (eta[b] + eta[a]) + np.sum((err[b] - err[a]) * (err[b] + err[a]), axis=-1) / (2.0 * hev.gamma1)

    dt, k1 = hev.dt_sim, hev.k1
    floor = 1e3 * np.finfo(float).eps
    # 1 s windows: integrated rate
    win, worst_win, n_win = 1000, 0.0, 0
    for a in range(0, eta.size - win, win):
        pred = -k1 * np.sum(eta[a:a + win] ** 2) * dt
        if abs(pred) >= floor * V[a]:
            n_win += 1
            worst_win = max(worst_win, abs(dV(a, a + win) - pred) / abs(pred))
    # single 1 ms steps after the onset
    k = np.arange(200, eta.size - 1)
    pred = -k1 * eta[k] ** 2 * dt
    use = np.abs(pred) >= floor * V[k]
    rel = np.abs(dV(k[use], k[use] + 1) - pred[use]) / np.abs(pred[use])
    worst_step = float(rel.max())
    ok = mean_eta <= 0.3 and worst_win <= 0.01 and worst_step <= 0.01 and n_win >= 10
    report(5, ok, f"mean |eta| last 12 s {mean_eta:.2e} m/s (<= 0.3); Lyapunov rate mismatch "
                  f"{worst_win:.1e} over {n_win} 1 s windows, {worst_step:.1e} over {use.sum()} steps")


def _violations(scn, tl, soc_final):
    e, b = scn.engine_node, scn.battery_node
    pe, pb = tl["p_e_w"], tl["p_b_w"]
    soc = np.append(tl["soc"], soc_final)
    dpe = np.diff(np.r_[0.0, pe])
    dpb = np.diff(np.r_[0.0, pb])
    box = max(np.max(pe - e.p_max), np.max(e.p_min - pe), np.max(pb - b.p_max), np.max(b.p_min - pb))
    ramp = max(np.max(np.abs(dpe) - e.ramp_e), np.max(np.abs(dpb) - b.ramp_b))
    soc_out = max(np.max(soc - (scn.battery.q_max + 1e-3)), np.max((scn.battery.q_min - 1e-3) - soc))
    return box, ramp, soc_out


@pytest.mark.slow
def test_criterion_6_constraint_envelope(hev, sweep, soh, cruise):
    runs = [(hev.with_gamma(g), tl, m.soc_final) for g, m, tl in sweep[0]]
    res = soh[0]
    for g in res.logs:
        runs += [(hev.with_gamma(g), tl, m.soc_final) for tl, m in zip(res.logs[g], res.runs[g])]
    m, tl = cruise[2]
    runs.append((hev, tl, m.soc_final))
    box = ramp = soc_out = -np.inf
    ticks = 0
    for scn, tl, qf in runs:
        b, r, s = _violations(scn, tl, qf)
        box, ramp, soc_out = max(box, b), max(ramp, r), max(soc_out, s)
        ticks += len(tl)
    ok = box <= 1e-6 and ramp <= 1e-6 and soc_out <= 0.0
    report(6, ok, f"{len(runs)} runs, {ticks} applied steps; worst box excess {box:.2e} W, "
                  f"ramp excess {ramp:.2e} W, SoC outside [0.499, 0.801] by {soc_out:.2e}")


def test_criterion_7_unit_oracles():
    rng = np.random.default_rng(7)
    reg = regressor_identity_gap(rng, count=1000)
    qp = qp_oracle_gap(rng, count=200)
    worst_i = 0.0
    for _ in range(1000):
        bp = BatteryParams(Q_T=rng.uniform(1, 100), r_b=rng.uniform(1e-3, 0.5), c1=rng.uniform(0, 100), c2=rng.uniform(100, 1000))
        q = rng.uniform(0, 1)
        v_oc = bp.c1 * q + bp.c2
        p = rng.uniform(-1.0, 0.99) * v_oc**2 / (4 * bp.r_b)
        i = battery_current(bp, q, p)
        worst_i = max(worst_i, abs(terminal_voltage(bp, q, i) * i - p))
    worst_d = 0.0
    for _ in range(100):
        dp = DegradationParams(zeta2=rng.uniform(0, 5e4), T_K=rng.uniform(260, 330), C_r=rng.uniform(0, 200), prefactor_override=None)
        i, T, n = rng.uniform(-100, 100), rng.uniform(1, 3600), 50
        st = BatteryState(0.6)
        for _ in range(n):
            st = degradation_step(dp, st, i, T / n)
        closed = dp.prefactor * np.sqrt(abs(i)) * T / 3600.0
        worst_d = max(worst_d, abs(st.Q_L - closed) / closed)
    ok = reg <= 1e-10 and qp <= 1e-6 and worst_i <= 1e-6 and worst_d <= 1e-12
    report(7, ok, f"regressor {reg:.1e}, QP {qp:.1e}, battery current residual {worst_i:.1e} W, "
                  f"degradation {worst_d:.1e}")


def test_criterion_8_ship_and_aircraft():
    details, ok = [], True
    for name, profile, p_lim in (("dps", "dps_profile", 10e6), ("hea", "hea_profile", 2e6)):
        scn = bundled_scenario(name)
        trace = bundled_cycle(profile)
        thr = {}
        for g in (1.0, 100.0):
            m, tl = run_scenario(scn.with_gamma(g), trace)
            pb, pe = tl["p_b_w"], tl["p_e_w"]
            ramp = float(np.max(np.abs(np.diff(np.r_[0.0, pe]))))
            rating = scn.engine_node.p_max
            ok &= bool(np.max(np.abs(pb)) <= p_lim + 1e-6 and ramp <= 0.1 * rating + 1e-6)
            ok &= m.relaxed_ticks == 0 and not m.soc_clamped
            thr[g] = m.throughput
            details.append(f"{name} g={g:g}: |p_b| <= {np.max(np.abs(pb)) / 1e6:.2f} MW, "
                           f"engine ramp {ramp / rating:.1%}, throughput {m.throughput:.0f}")
        ok &= thr[100.0] < thr[1.0]
    report(8, ok, "; ".join(details))


def test_criterion_9_determinism_and_wire_parity(tmp_path, hev, instances):
    tr = bundled_cycle("us06")
    blobs = []
    for k in range(2):
        m, tl = run_scenario(hev, tr)
        t = write_tick_csv(tl, tmp_path / f"ticks{k}.csv").read_bytes()
        s = write_summary_csv([("hev", tr.name, m)], tmp_path / f"summary{k}.csv").read_bytes()
        c = write_campaign_csv(
            campaign(hev, [bundled_cycle("nycc"), tr], runs=2, hours_per_run=1, gammas=[1.0], seed=11),
            tmp_path / f"soh{k}.csv",
        ).read_bytes()
        blobs.append((t, s, c))
    same_csv = blobs[0] == blobs[1]
    mismatches = 0
    with NodeLink() as link:
        for inst in instances:
            h = inst.cfg.h
            args = (inst.p_hat, NodeState.cold(h), NodeState.cold(h), inst.cfg, inst.cfg_e, inst.cfg_b)
            a = run_admm(*args)
            b = run_admm(*args, backend="process", transport=link)
            if a.p_e.tobytes() != b.p_e.tobytes() or a.p_b.tobytes() != b.p_b.tobytes() or a.iterations != b.iterations:
                mismatches += 1
    ok = same_csv and mismatches == 0
    report(9, ok, f"tick/summary/campaign CSVs byte-identical={same_csv}; "
                  f"process-mode mismatches {mismatches}/{len(instances)}")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
