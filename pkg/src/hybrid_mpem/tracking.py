"""Adaptive speed-tracking controller and the power demand it induces.

The control law is

    tau = -k1 * eta - gamma1 * Y @ phi,    phi = int_0^t Y' eta dt,

with eta = x' - xd' the velocity tracking error.  The running integral is
kept in ``ControllerState.phi``; the implied parameter estimate is
``theta_hat = -gamma1 * phi`` so that tau = -k1 eta + Y theta_hat.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dynamics import GeneralizedState

__all__ = [
    "ControllerState",
    "ReferenceSample",
    "tracking_error",
    "advance_integral",
    "control_torque",
    "power_demand",
    "lyapunov_rate",
]


@dataclass(frozen=True)
class ControllerState:
    phi: np.ndarray
    k1: float
    gamma1: float

    def __post_init__(self):
        phi = np.atleast_1d(np.asarray(self.phi, dtype=float))
        if not np.all(np.isfinite(phi)):
            raise ValueError("phi must be finite")
        if not self.k1 > 0:
            raise ValueError("k1 must be positive")
        # gamma1 = 0 switches adaptation off
        if not self.gamma1 >= 0:
            raise ValueError("gamma1 must be non-negative")
        object.__setattr__(self, "phi", phi)

    @classmethod
    def zero(cls, n_theta, k1, gamma1):
        return cls(np.zeros(n_theta), k1, gamma1)

    @property
    def theta_hat(self) -> np.ndarray:
        return -self.gamma1 * self.phi


@dataclass(frozen=True)
class ReferenceSample:
    xdot_d: np.ndarray
    xddot_d: np.ndarray

    def __post_init__(self):
        xd = np.atleast_1d(np.asarray(self.xdot_d, dtype=float))
        xdd = np.atleast_1d(np.asarray(self.xddot_d, dtype=float))
        if xd.shape != xdd.shape:
            raise ValueError("reference velocity and acceleration must have equal length")
        if not (np.all(np.isfinite(xd)) and np.all(np.isfinite(xdd))):
            raise ValueError("reference must be finite")
        object.__setattr__(self, "xdot_d", xd)
        object.__setattr__(self, "xddot_d", xdd)


def tracking_error(state: GeneralizedState, ref: ReferenceSample) -> np.ndarray:
    if state.v.shape != ref.xdot_d.shape:
        raise ValueError(f"state has {state.v.size} velocities, reference has {ref.xdot_d.size}")
    return state.v - ref.xdot_d


def advance_integral(cs: ControllerState, Y, eta, dt: float) -> ControllerState:
    """Rectangle-rule update phi <- phi + Y' eta dt."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    return replace(cs, phi=cs.phi + (Y.T @ eta) * dt)


def control_torque(cs: ControllerState, Y, eta) -> np.ndarray:
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    return -cs.k1 * eta - cs.gamma1 * (Y @ cs.phi)


def power_demand(state: GeneralizedState, tau) -> float:
    """Mechanical power x'.tau in watts; negative while braking."""
    return float(state.v @ np.atleast_1d(np.asarray(tau, dtype=float)))


def lyapunov_rate(cs: ControllerState, M_at_state, eta, theta_true):
    """Return (V, predicted dV/dt) for the closed loop with the true parameters.

    V = 0.5 eta' M eta + |theta_hat - theta|^2 / (2 gamma1), dV/dt = -k1 |eta|^2.
    """
    M = np.atleast_2d(np.asarray(M_at_state, dtype=float))
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    V = 0.5 * eta @ M @ eta
    if cs.gamma1 > 0:
        err = cs.theta_hat - np.asarray(theta_true, dtype=float)
        V += (err @ err) / (2.0 * cs.gamma1)
    return float(V), float(-cs.k1 * (eta @ eta))
