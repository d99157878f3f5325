import numpy as np
import pytest

from hybrid_mpem.dynamics import GeneralizedState, regressor, step
from hybrid_mpem.harness.cycles import constant_speed
from hybrid_mpem.harness.run import track_reference
from hybrid_mpem.tracking import (
    ControllerState,
    ReferenceSample,
    advance_integral,
    control_torque,
    lyapunov_rate,
    power_demand,
    tracking_error,
)

from test_dynamics import DRAG, ROLL, s1


def test_tracking_error_examples():
    ref = ReferenceSample([30.0], [0.0])
    assert tracking_error(s1(0.0, 30.0), ref)[0] == 0.0
    assert tracking_error(s1(0.0, 31.0), ref)[0] == 1.0
    with pytest.raises(ValueError):
        tracking_error(GeneralizedState(np.zeros(3), np.zeros(3)), ref)


def test_advance_integral_examples():
    cs = ControllerState.zero(3, k1=500.0, gamma1=1e-3)
    assert advance_integral(cs, [[100.0, 2.0, 1.0]], [0.0], 1e-3).phi.tolist() == [0.0, 0.0, 0.0]
    nxt = advance_integral(cs, [[100.0, 2.0, 1.0]], [0.5], 1e-3)
    np.testing.assert_allclose(nxt.phi, [0.05, 0.001, 0.0005], rtol=1e-14)


def test_control_torque_examples(rng):
    cs = ControllerState.zero(3, k1=500.0, gamma1=1e-3)
    np.testing.assert_array_equal(control_torque(cs, [[1.0, 2.0, 3.0]], [0.0]), [0.0])
    off = ControllerState(rng.standard_normal(3), k1=500.0, gamma1=0.0)
    assert control_torque(off, rng.standard_normal((1, 3)), [1.0])[0] == -500.0


def test_controller_state_validation():
    with pytest.raises(ValueError):
        ControllerState(np.zeros(3), k1=0.0, gamma1=1.0)
    with pytest.raises(ValueError):
        ControllerState(np.array([np.nan]), k1=1.0, gamma1=1.0)
    with pytest.raises(ValueError):
        ReferenceSample([1.0, 2.0], [0.0])


def test_power_demand_is_velocity_dot_torque():
    assert power_demand(s1(0.0, 0.0), [1234.0]) == 0.0
    st = GeneralizedState(np.zeros(3), np.array([1.0, -2.0, 0.5]))
    assert power_demand(st, [10.0, 3.0, -4.0]) == 10.0 - 6.0 - 2.0


def test_lyapunov_rate_basics(rng, road):
    th = road.theta()
    cs = ControllerState(-th / 1e-3, k1=2000.0, gamma1=1e-3)
    V, Vdot = lyapunov_rate(cs, road.inertia(np.zeros(1)), [0.0], th)
    assert V == pytest.approx(0.0, abs=1e-9) and Vdot == 0.0
    for _ in range(20):
        cs = ControllerState(rng.standard_normal(3) * 1e3, k1=2000.0, gamma1=1e-3)
        V, Vdot = lyapunov_rate(cs, road.inertia(np.zeros(1)), rng.standard_normal(1), th)
        assert V >= 0.0 and Vdot <= 0.0


@pytest.fixture(scope="module")
def cruise(hev):
    tr = track_reference(hev, constant_speed(30.0, 120.0))
    return hev, tr


def test_steady_tracking_recovers_feedforward(cruise):
    scn, tr = cruise
    model = scn.model()
    st = GeneralizedState(tr.x[-1], tr.v[-1])
    Y = regressor(model, st, tr.ref_v[-1], [0.0])
    cs = ControllerState(tr.phi[-1], scn.k1, scn.gamma1)
    tau = control_torque(cs, Y, tr.eta[-1])
    assert tau[0] == pytest.approx((Y @ model.theta())[0], rel=0.02)
    # cruise power of the HEV at 30 m/s
    assert power_demand(st, tau) == pytest.approx(30.0 * (DRAG * 900 + ROLL), rel=0.02)
    assert power_demand(st, tau) == pytest.approx(23.6e3, rel=0.01)


def test_asymptotic_tracking(cruise):
    scn, tr = cruise
    last = tr.t >= 0.9 * tr.t[-1]
    assert np.mean(np.abs(tr.eta[last])) <= 0.01 * 30.0


def _lyapunov_series(scn, tr, stop):
    model = scn.model()
    th = model.theta()
    M = model.inertia(np.zeros(1))
    V = np.array([lyapunov_rate(ControllerState(tr.phi[i], scn.k1, scn.gamma1), M, tr.eta[i], th)[0] for i in range(stop)])
    return V


def test_lyapunov_monotone_and_rate(cruise):
    scn, tr = cruise
    stop = 5001
    V = _lyapunov_series(scn, tr, stop)
    assert np.all(V[1:] <= V[:-1] + 1e-6 * V[:-1] + 1e-9)
    # finite-difference integral against -k1 |eta|^2 over 0.5 s windows
    eta_sq = (tr.eta[:stop] ** 2).sum(axis=1)
    dt = scn.dt_sim
    for a in range(0, stop - 500, 500):
        b = a + 500
        pred = -scn.k1 * np.sum(eta_sq[a:b]) * dt
        assert V[b] - V[a] == pytest.approx(pred, rel=0.01)


def test_compiled_trajectory_matches_module_functions(hev):
    model = hev.model()
    trace = constant_speed(25.0, 1.0)
    tr = track_reference(hev, trace)
    st = GeneralizedState(np.zeros(1), np.array([25.0]))
    cs = ControllerState.zero(3, hev.k1, hev.gamma1)
    for i in range(300):
        ref = ReferenceSample(tr.ref_v[i], [0.0])
        eta = tracking_error(st, ref)
        Y = regressor(model, st, ref.xdot_d, ref.xddot_d)
        tau = control_torque(cs, Y, eta)
        cs = advance_integral(cs, Y, eta, hev.dt_sim)
        st = step(model, st, tau, hev.dt_sim)
    np.testing.assert_allclose(st.v, tr.v[300], rtol=1e-12)
    np.testing.assert_allclose(cs.phi, tr.phi[300], rtol=1e-10, atol=1e-12)
