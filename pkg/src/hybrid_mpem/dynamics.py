"""Euler-Lagrange vehicle plants: road vehicle, surface vessel, aircraft.

All three share

    M(x) x'' + V_m(x, x') x' + G(x) + F(x') = tau

and a linear parametrization

    V_m(x, x') xd' + G(x) + F(x') + M(x) xd'' = Y(x, x', xd', xd'') theta (+ known terms)

where ``xd'``/``xd''`` are the reference velocity and acceleration.  The
vessel's mooring force R K x is treated as known and kept out of theta; it is
reported by :meth:`EulerLagrangeModel.known_force` (zero for the default
free-cruising K = 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "G_DEFAULT",
    "GeneralizedState",
    "RoadParams",
    "ShipParams",
    "AircraftParams",
    "EulerLagrangeModel",
    "RoadModel",
    "ShipModel",
    "AircraftModel",
    "PlantError",
    "eval_accel",
    "regressor",
    "assemble_theta",
    "model_terms",
    "step",
]

# gravity as used for the reproduction scenarios; override per params
G_DEFAULT = 9.87


class PlantError(RuntimeError):
    """Singular inertia, non-finite input, or integrator blow-up."""


def _vec(a, name):
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if a.ndim != 1:
        raise ValueError(f"{name} must be a vector")
    return a


@dataclass(frozen=True)
class GeneralizedState:
    x: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        x = _vec(self.x, "x")
        v = _vec(self.v, "v")
        if x.shape != v.shape:
            raise ValueError(f"x and v must have the same shape, got {x.shape} and {v.shape}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v)) and np.isfinite(self.t)):
            raise PlantError(f"non-finite state at t={self.t}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "t", float(self.t))

    @property
    def n(self) -> int:
        return self.x.size


@dataclass(frozen=True)
class RoadParams:
    m: float
    rho_d: float
    C_d: float
    A: float
    mu_r: float
    g: float = G_DEFAULT
    phi: float = 0.0

    def __post_init__(self):
        if not (self.m > 0 and self.rho_d > 0 and self.A > 0):
            raise ValueError("road params need m, rho_d, A > 0")
        if self.C_d < 0 or self.mu_r < 0:
            raise ValueError("road params need C_d, mu_r >= 0")


@dataclass(frozen=True)
class AircraftParams:
    m_a: float
    rho_a: float
    C_d: float
    S: float
    g: float = G_DEFAULT
    phi_a: float = 0.0

    def __post_init__(self):
        if not (self.m_a > 0 and self.rho_a > 0 and self.S > 0):
            raise ValueError("aircraft params need m_a, rho_a, S > 0")
        if self.C_d < 0:
            raise ValueError("aircraft params need C_d >= 0")


_MBAR_PATTERN = np.array([[1, 0, 0], [0, 1, 1], [0, 1, 1]], dtype=bool)


@dataclass(frozen=True)
class ShipParams:
    """Vessel matrices: Mbar (body-frame mass-inertia), D (damping), K (mooring, diagonal)."""

    Mbar: np.ndarray
    D: np.ndarray
    K: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))

    def __post_init__(self):
        Mbar = np.asarray(self.Mbar, dtype=float)
        D = np.asarray(self.D, dtype=float)
        K = np.asarray(self.K, dtype=float)
        for name, a in (("Mbar", Mbar), ("D", D), ("K", K)):
            if a.shape != (3, 3):
                raise ValueError(f"{name} must be 3x3")
        if np.any(Mbar[~_MBAR_PATTERN] != 0) or np.any(D[~_MBAR_PATTERN] != 0):
            raise ValueError("Mbar and D must have the surge/sway-yaw block pattern")
        if not np.array_equal(Mbar, Mbar.T):
            raise ValueError("Mbar must be symmetric")
        if np.any(np.linalg.eigvalsh(Mbar) <= 0):
            raise ValueError("Mbar must be positive definite")
        if np.any(K != np.diag(np.diag(K))):
            raise ValueError("K must be diagonal")
        object.__setattr__(self, "Mbar", Mbar)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "K", K)


class EulerLagrangeModel:
    """Common interface; subclasses provide the matrices and the theta map."""

    n: int
    n_theta: int

    def inertia(self, x):
        raise NotImplementedError

    def coriolis(self, x, v):
        raise NotImplementedError

    def gravity(self, x):
        raise NotImplementedError

    def damping(self, x, v):
        raise NotImplementedError

    def theta(self) -> np.ndarray:
        raise NotImplementedError

    def theta_terms(self, theta, state, xdot_d, xddot_d) -> np.ndarray:
        """The theta-dependent part of the parametrized dynamics, linear in theta."""
        raise NotImplementedError

    def known_force(self, state) -> np.ndarray:
        return np.zeros(self.n)

    def regressor(self, state, xdot_d, xddot_d) -> np.ndarray:
        # column j is the parametrized dynamics evaluated at theta = e_j
        Y = np.empty((self.n, self.n_theta))
        basis = np.eye(self.n_theta)
        for j in range(self.n_theta):
            Y[:, j] = self.theta_terms(basis[j], state, xdot_d, xddot_d)
        return Y

    def kernel_params(self):
        """(kind, flat parameter array) consumed by the compiled simulation kernels."""
        raise NotImplementedError


class _PointMass(EulerLagrangeModel):
    """1-DOF longitudinal model: m x'' + k_drag x'^2 + f_const = tau."""

    n = 1
    n_theta = 3

    def __init__(self, mass, drag_coeff, const_force):
        self.mass = float(mass)
        self.drag_coeff = float(drag_coeff)
        self.const_force = float(const_force)

    def inertia(self, x):
        return np.array([[self.mass]])

    def coriolis(self, x, v):
        return np.zeros((1, 1))

    def gravity(self, x):
        return np.array([self.const_force])

    def damping(self, x, v):
        v = _vec(v, "v")
        return self.drag_coeff * v * v

    def theta(self):
        return np.array([self.drag_coeff, self.mass, self.const_force])

    def theta_terms(self, theta, state, xdot_d, xddot_d):
        v = state.v[0]
        return np.array([theta[0] * v * v + theta[1] * _vec(xddot_d, "xddot_d")[0] + theta[2]])

    def regressor(self, state, xdot_d, xddot_d):
        _check_ref(self, xdot_d, xddot_d)
        v = state.v[0]
        return np.array([[v * v, _vec(xddot_d, "xddot_d")[0], 1.0]])

    def kernel_params(self):
        return 0, np.array([self.mass, self.drag_coeff, self.const_force])


class RoadModel(_PointMass):
    def __init__(self, params: RoadParams):
        self.params = params
        p = params
        super().__init__(
            p.m,
            0.5 * p.rho_d * p.A * p.C_d,
            p.mu_r * p.m * p.g * np.cos(p.phi),
        )


class AircraftModel(_PointMass):
    def __init__(self, params: AircraftParams):
        self.params = params
        p = params
        super().__init__(
            p.m_a,
            0.5 * p.rho_a * p.C_d * p.S,
            p.m_a * p.g * np.sin(p.phi_a),
        )


def _rotation(psi):
    c, s = np.cos(psi), np.sin(psi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _rotation_rate(psi, r):
    c, s = np.cos(psi), np.sin(psi)
    return r * np.array([[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]])


def _ship_mats(theta):
    m11, m22, m23, m33, d11, d22, d23, d32, d33 = theta
    Mbar = np.array([[m11, 0.0, 0.0], [0.0, m22, m23], [0.0, m23, m33]])
    D = np.array([[d11, 0.0, 0.0], [0.0, d22, d23], [0.0, d32, d33]])
    return Mbar, D


class ShipModel(EulerLagrangeModel):
    """3-DOF vessel in earth-fixed coordinates x = [x, y, psi].

    M = R Mbar R', V_m = R Mbar R_dot', F = R D R' x', G = R K x.
    theta = [m11, m22, m23, m33, d11, d22, d23, d32, d33]; d23 and d32 are the two
    off-diagonal damping entries (equal for a symmetric D).
    """

    n = 3
    n_theta = 9

    def __init__(self, params: ShipParams):
        self.params = params

    def inertia(self, x):
        R = _rotation(_vec(x, "x")[2])
        return R @ self.params.Mbar @ R.T

    def coriolis(self, x, v):
        x = _vec(x, "x")
        R = _rotation(x[2])
        Rd = _rotation_rate(x[2], _vec(v, "v")[2])
        return R @ self.params.Mbar @ Rd.T

    def inertia_rate(self, x, v):
        x = _vec(x, "x")
        R = _rotation(x[2])
        Rd = _rotation_rate(x[2], _vec(v, "v")[2])
        Mb = self.params.Mbar
        return Rd @ Mb @ R.T + R @ Mb @ Rd.T

    def gravity(self, x):
        x = _vec(x, "x")
        return _rotation(x[2]) @ self.params.K @ x

    def damping(self, x, v):
        R = _rotation(_vec(x, "x")[2])
        return R @ self.params.D @ R.T @ _vec(v, "v")

    def theta(self):
        M, D = self.params.Mbar, self.params.D
        return np.array([M[0, 0], M[1, 1], M[1, 2], M[2, 2], D[0, 0], D[1, 1], D[1, 2], D[2, 1], D[2, 2]])

    def theta_terms(self, theta, state, xdot_d, xddot_d):
        Mbar, D = _ship_mats(theta)
        R = _rotation(state.x[2])
        Rd = _rotation_rate(state.x[2], state.v[2])
        xdot_d = _vec(xdot_d, "xdot_d")
        xddot_d = _vec(xddot_d, "xddot_d")
        return R @ Mbar @ Rd.T @ xdot_d + R @ D @ R.T @ state.v + R @ Mbar @ R.T @ xddot_d

    def known_force(self, state):
        return self.gravity(state.x)

    def kernel_params(self):
        p = self.params
        Minv = np.linalg.inv(p.Mbar)
        return 1, np.concatenate([p.Mbar.ravel(), Minv.ravel(), p.D.ravel(), p.K.ravel()])


def _check_ref(model, xdot_d, xddot_d):
    if _vec(xdot_d, "xdot_d").size != model.n or _vec(xddot_d, "xddot_d").size != model.n:
        raise ValueError(f"reference must have {model.n} components")


def eval_accel(model: EulerLagrangeModel, state: GeneralizedState, tau) -> np.ndarray:
    """Generalized acceleration M^-1 (tau - V_m x' - G - F)."""
    tau = _vec(tau, "tau")
    if tau.size != model.n:
        raise ValueError(f"tau must have {model.n} components")
    if not np.all(np.isfinite(tau)):
        raise PlantError(f"non-finite torque at t={state.t}")
    M = model.inertia(state.x)
    rhs = tau - model.coriolis(state.x, state.v) @ state.v - model.gravity(state.x) - model.damping(state.x, state.v)
    try:
        acc = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError:
        raise PlantError(f"singular inertia matrix at t={state.t}, x={state.x}") from None
    return acc


def regressor(model: EulerLagrangeModel, state: GeneralizedState, xdot_d, xddot_d) -> np.ndarray:
    _check_ref(model, xdot_d, xddot_d)
    xd = _vec(xdot_d, "xdot_d")
    xdd = _vec(xddot_d, "xddot_d")
    if not (np.all(np.isfinite(xd)) and np.all(np.isfinite(xdd))):
        raise ValueError("reference must be finite")
    return model.regressor(state, xd, xdd)


def assemble_theta(model: EulerLagrangeModel) -> np.ndarray:
    return model.theta()


def model_terms(model: EulerLagrangeModel, state: GeneralizedState, xdot_d, xddot_d) -> np.ndarray:
    """V_m xd' + G + F + M xd'' evaluated from the physical matrices."""
    xd = _vec(xdot_d, "xdot_d")
    xdd = _vec(xddot_d, "xddot_d")
    return (
        model.coriolis(state.x, state.v) @ xd
        + model.gravity(state.x)
        + model.damping(state.x, state.v)
        + model.inertia(state.x) @ xdd
    )


def step(model: EulerLagrangeModel, state: GeneralizedState, tau, dt: float) -> GeneralizedState:
    """One classical RK4 step with tau held over the step."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    tau = _vec(tau, "tau")

    def f(x, v):
        return v, eval_accel(model, GeneralizedState(x, v, state.t), tau)

    x0, v0 = state.x, state.v
    k1x, k1v = f(x0, v0)
    k2x, k2v = f(x0 + 0.5 * dt * k1x, v0 + 0.5 * dt * k1v)
    k3x, k3v = f(x0 + 0.5 * dt * k2x, v0 + 0.5 * dt * k2v)
    k4x, k4v = f(x0 + dt * k3x, v0 + dt * k3v)
    x1 = x0 + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    v1 = v0 + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    t1 = state.t + dt
    if not (np.all(np.isfinite(x1)) and np.all(np.isfinite(v1))):
        raise PlantError(f"integration blew up at t={t1}")
    return GeneralizedState(x1, v1, t1)
