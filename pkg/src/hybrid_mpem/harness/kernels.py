"""Compiled closed-loop integration between two MPC ticks.

Plants are passed as ``(kind, prm)`` from ``EulerLagrangeModel.kernel_params``:

kind 0  point mass, prm = [m, k_drag, f_const]
kind 1  vessel, prm = [Mbar (9), Mbar^-1 (9), D (9), K (9)] row-major

Each substep: controller torque from the state at the step start, rectangle
update of the adaptive integral, RK4 plant step with the torque held, then the
battery SoC and throughput step with the applied battery power held.
"""

from __future__ import annotations

import numpy as np

from .._jit import njit

__all__ = ["accel", "regressor", "known_force", "controller", "run_interval", "trajectory"]

KIND_POINT = 0
KIND_SHIP = 1

# run_interval status codes
OK = 0
PLANT_BLOWUP = 1
BATTERY_LIMIT = 2
VOLTAGE_COLLAPSE = 3


@njit
def _rot(psi):
    c = np.cos(psi)
    s = np.sin(psi)
    R = np.zeros((3, 3))
    R[0, 0] = c
    R[0, 1] = -s
    R[1, 0] = s
    R[1, 1] = c
    R[2, 2] = 1.0
    return R


@njit
def _rot_rate(psi, r):
    c = np.cos(psi)
    s = np.sin(psi)
    Rd = np.zeros((3, 3))
    Rd[0, 0] = -s * r
    Rd[0, 1] = -c * r
    Rd[1, 0] = c * r
    Rd[1, 1] = -s * r
    return Rd


@njit
def accel(kind, prm, x, v, tau):
    if kind == KIND_POINT:
        out = np.empty(1)
        out[0] = (tau[0] - prm[1] * v[0] * v[0] - prm[2]) / prm[0]
        return out
    Mb = prm[0:9].reshape(3, 3)
    Mi = prm[9:18].reshape(3, 3)
    D = prm[18:27].reshape(3, 3)
    K = prm[27:36].reshape(3, 3)
    R = _rot(x[2])
    Rd = _rot_rate(x[2], v[2])
    # M^-1 (tau - V_m v - G - F) with M = R Mbar R'
    body = R.T @ tau - Mb @ (Rd.T @ v) - K @ x - D @ (R.T @ v)
    return R @ (Mi @ body)


@njit
def regressor(kind, prm, x, v, vd, ad):
    if kind == KIND_POINT:
        Y = np.empty((1, 3))
        Y[0, 0] = v[0] * v[0]
        Y[0, 1] = ad[0]
        Y[0, 2] = 1.0
        return Y
    R = _rot(x[2])
    Rd = _rot_rate(x[2], v[2])
    b1 = Rd.T @ vd + R.T @ ad
    b2 = R.T @ v
    B = np.zeros((3, 9))
    B[0, 0] = b1[0]
    B[1, 1] = b1[1]
    B[1, 2] = b1[2]
    B[2, 2] = b1[1]
    B[2, 3] = b1[2]
    B[0, 4] = b2[0]
    B[1, 5] = b2[1]
    B[1, 6] = b2[2]
    B[2, 7] = b2[1]
    B[2, 8] = b2[2]
    return R @ B


@njit
def known_force(kind, prm, x):
    if kind == KIND_POINT:
        return np.zeros(1)
    K = prm[27:36].reshape(3, 3)
    return _rot(x[2]) @ (K @ x)


@njit
def controller(kind, prm, x, v, phi, vd, ad, k1, g1):
    """Return (tau, Y, eta) at the given state and reference sample."""
    eta = v - vd
    Y = regressor(kind, prm, x, v, vd, ad)
    tau = -k1 * eta - g1 * (Y @ phi) + known_force(kind, prm, x)
    return tau, Y, eta


@njit
def _rk4(kind, prm, x, v, tau, dt):
    k1x = v
    k1v = accel(kind, prm, x, v, tau)
    k2x = v + 0.5 * dt * k1v
    k2v = accel(kind, prm, x + 0.5 * dt * k1x, k2x, tau)
    k3x = v + 0.5 * dt * k2v
    k3v = accel(kind, prm, x + 0.5 * dt * k2x, k3x, tau)
    k4x = v + dt * k3v
    k4v = accel(kind, prm, x + dt * k3x, k4x, tau)
    x1 = x + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    v1 = v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    return x1, v1


@njit
def battery_current(r_b, v_oc, p_b):
    if r_b == 0.0:
        return p_b / v_oc, 0
    disc = v_oc * v_oc - 4.0 * r_b * p_b
    if disc < 0.0:
        return np.nan, BATTERY_LIMIT
    return 2.0 * p_b / (v_oc + np.sqrt(disc)), 0


@njit
def _battery_substep(Q_Ts, r_b, c1, c2, q, thr, p_b, dt):
    """One SoC/throughput step; returns (q, thr, clamped, status)."""
    v_oc = c1 * q + c2
    i_b, st = battery_current(r_b, v_oc, p_b)
    if st != 0:
        return q, thr, False, st
    v_b = v_oc - r_b * i_b
    if not v_b > 0.0:
        return q, thr, False, VOLTAGE_COLLAPSE
    q = q - p_b * dt / (Q_Ts * v_b)
    clamped = False
    if q < 0.0 or q > 1.0:
        q = min(max(q, 0.0), 1.0)
        clamped = True
    return q, thr + np.sqrt(abs(i_b)) * dt, clamped, OK


@njit
def _run_point(prm, x, v, phi, ref_v, ref_a, i0, nsub, dt, k1, g1, Q_Ts, r_b, c1, c2, q, thr, p_b):
    """Scalar version of the loop below for the one-DOF point-mass plants."""
    m, kd, kc = prm[0], prm[1], prm[2]
    x0, v0 = x[0], v[0]
    f0, f1, f2 = phi[0], phi[1], phi[2]
    eta_sq = 0.0
    clamped = False
    status = OK
    done = nsub
    h2 = 0.5 * dt
    for j in range(nsub):
        i = i0 + j
        vd = ref_v[i, 0]
        ad = ref_a[i, 0]
        eta = v0 - vd
        y0 = v0 * v0
        tau = -k1 * eta - g1 * (y0 * f0 + ad * f1 + f2)
        eta_sq += eta * eta * dt
        f0 += y0 * eta * dt
        f1 += ad * eta * dt
        f2 += eta * dt
        a1 = (tau - kd * v0 * v0 - kc) / m
        u2 = v0 + h2 * a1
        a2 = (tau - kd * u2 * u2 - kc) / m
        u3 = v0 + h2 * a2
        a3 = (tau - kd * u3 * u3 - kc) / m
        u4 = v0 + dt * a3
        a4 = (tau - kd * u4 * u4 - kc) / m
        x0 = x0 + dt / 6.0 * (v0 + 2.0 * u2 + 2.0 * u3 + u4)
        v0 = v0 + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        if not (np.isfinite(x0) and np.isfinite(v0)):
            status = PLANT_BLOWUP
            done = j + 1
            break
        q, thr, cl, st = _battery_substep(Q_Ts, r_b, c1, c2, q, thr, p_b, dt)
        clamped |= cl
        if st != OK:
            status = st
            done = j
            break
    xo = np.empty(1)
    vo = np.empty(1)
    xo[0] = x0
    vo[0] = v0
    po = np.empty(3)
    po[0] = f0
    po[1] = f1
    po[2] = f2
    return xo, vo, po, q, thr, eta_sq, clamped, status, done


@njit
def run_interval(kind, prm, x, v, phi, ref_v, ref_a, i0, nsub, dt, k1, g1,
                 Q_Ts, r_b, c1, c2, q, thr, p_b):
    """Advance nsub substeps starting at reference index i0.

    Returns (x, v, phi, q, thr, sum |eta|^2 dt, clamped, status, steps done).
    """
    if kind == KIND_POINT:
        return _run_point(prm, x, v, phi, ref_v, ref_a, i0, nsub, dt, k1, g1, Q_Ts, r_b, c1, c2, q, thr, p_b)
    eta_sq = 0.0
    clamped = False
    for j in range(nsub):
        i = i0 + j
        tau, Y, eta = controller(kind, prm, x, v, phi, ref_v[i], ref_a[i], k1, g1)
        eta_sq += (eta @ eta) * dt
        phi = phi + (Y.T @ eta) * dt
        x, v = _rk4(kind, prm, x, v, tau, dt)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            return x, v, phi, q, thr, eta_sq, clamped, PLANT_BLOWUP, j + 1
        q, thr, cl, st = _battery_substep(Q_Ts, r_b, c1, c2, q, thr, p_b, dt)
        clamped |= cl
        if st != OK:
            return x, v, phi, q, thr, eta_sq, clamped, st, j
    return x, v, phi, q, thr, eta_sq, clamped, OK, nsub


@njit
def trajectory(kind, prm, x, v, phi, ref_v, ref_a, dt, k1, g1):
    """Tracking loop over the whole reference with every state recorded.

    Same update order as :func:`run_interval` without the battery.  Returns
    (x, v, phi) histories with one row per reference sample.
    """
    N = ref_v.shape[0]
    xs = np.empty((N, x.shape[0]))
    vs = np.empty((N, v.shape[0]))
    ps = np.empty((N, phi.shape[0]))
    xs[0] = x
    vs[0] = v
    ps[0] = phi
    for i in range(N - 1):
        tau, Y, eta = controller(kind, prm, x, v, phi, ref_v[i], ref_a[i], k1, g1)
        phi = phi + (Y.T @ eta) * dt
        x, v = _rk4(kind, prm, x, v, tau, dt)
        xs[i + 1] = x
        vs[i + 1] = v
        ps[i + 1] = phi
    return xs, vs, ps
