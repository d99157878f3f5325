"""Independent reference computations used by the test suite and ``mpem verify``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._jit import njit
from .coordinator import (
    BatteryNodeConfig,
    CoordinatorConfig,
    balanced_rho,
    EngineNodeConfig,
    NodeState,
    centralized_solve,
    run_admm,
    soc_window,
)
from .dynamics import (
    AircraftModel,
    AircraftParams,
    GeneralizedState,
    RoadModel,
    RoadParams,
    ShipModel,
    ShipParams,
    model_terms,
    regressor,
)
from .qp import QpProblem, solve

__all__ = [
    "projected_gradient",
    "random_box_qp",
    "random_admm_instance",
    "AdmmInstance",
    "regressor_identity_gap",
    "qp_oracle_gap",
    "admm_oracle_gap",
]


def projected_gradient(Q, c, lb, ub, iters=1_000_000, x0=None):
    """Minimize 1/2 x'Qx + c'x over a box by projected gradient with step 1/L.

    Iterates until ``iters`` steps or until the iterate stops moving.
    """
    Q = np.ascontiguousarray(Q, dtype=float)
    c = np.ascontiguousarray(c, dtype=float)
    L = np.linalg.eigvalsh(Q)[-1]
    x = np.clip(np.zeros_like(c) if x0 is None else np.asarray(x0, dtype=float), lb, ub)
    return _pg_loop(Q, c, np.asarray(lb, dtype=float), np.asarray(ub, dtype=float), x, 1.0 / L, int(iters))


@njit
def _pg_loop(Q, c, lb, ub, x, step, iters):
    n = x.shape[0]
    x = x.copy()
    x_new = np.empty(n)
    for _ in range(iters):
        moved = False
        for i in range(n):
            g = c[i]
            for j in range(n):
                g += Q[i, j] * x[j]
            v = min(max(x[i] - step * g, lb[i]), ub[i])
            x_new[i] = v
            if v != x[i]:
                moved = True
        if not moved:
            break
        x[:] = x_new
    return x


def random_box_qp(rng: np.random.Generator, n: int = 5) -> QpProblem:
    """Well-conditioned strictly convex box QP (condition number <= 10)."""
    U, _ = np.linalg.qr(rng.standard_normal((n, n)))
    Q = U @ np.diag(rng.uniform(1.0, 10.0, n)) @ U.T
    Q = 0.5 * (Q + Q.T)
    c = rng.standard_normal(n) * 5.0
    lb = -rng.uniform(0.1, 2.0, n)
    ub = rng.uniform(0.1, 2.0, n)
    return QpProblem(Q=Q, c=c, lb=lb, ub=ub)


def qp_oracle_gap(rng: np.random.Generator, count: int = 200, n: int = 5) -> float:
    """Largest sup-norm gap between :func:`solve` and projected gradient."""
    worst = 0.0
    for _ in range(count):
        p = random_box_qp(rng, n)
        x = solve(p).x_star
        x_pg = projected_gradient(p.Q, p.c, p.lb, p.ub)
        worst = max(worst, float(np.max(np.abs(x - x_pg))))
    return worst


@dataclass(frozen=True)
class AdmmInstance:
    p_hat: np.ndarray
    cfg: CoordinatorConfig
    cfg_e: EngineNodeConfig
    cfg_b: BatteryNodeConfig


def _feasible_walk(rng, h, p0, ramp, lo, hi, cum_lo=None, cum_hi=None):
    """Random profile respecting ramp, box and (optionally) cumulative-sum limits."""
    p = np.empty(h)
    prev, cum = p0, 0.0
    for k in range(h):
        a, b = max(lo, prev - ramp), min(hi, prev + ramp)
        if cum_lo is not None:
            a, b = max(a, cum_lo - cum), min(b, cum_hi - cum)
        p[k] = rng.uniform(a, b) if b > a else 0.5 * (a + b)
        prev, cum = p[k], cum + p[k]
    return p


def random_admm_instance(rng: np.random.Generator, h: int = 5, eps_abs: float = 0.1) -> AdmmInstance:
    """Random instance at hybrid-car power scale whose demand both sources can meet.

    The demand is the sum of one random admissible profile per node, so the
    tracking term can be driven to (nearly) zero.  Weights follow the
    reference tuning alpha=1000, beta=1 with gamma drawn from the sweep grid;
    rho starts at :func:`balanced_rho` with residual balancing on, as in the
    closed loop (a fixed rho stalls when both nodes sit on ramp limits).
    """
    P_e = rng.uniform(50e3, 150e3)
    P_b = rng.uniform(10e3, 50e3)
    q_min = rng.uniform(0.1, 0.5)
    q_max = rng.uniform(q_min + 0.1, 0.95)
    cfg_e = EngineNodeConfig(
        beta=1.0,
        p_ref=rng.uniform(0.5, 0.9) * P_e,
        p_min=0.0,
        p_max=P_e,
        ramp_e=rng.uniform(0.1, 0.5) * P_e,
        p_prev_applied=rng.uniform(0.0, P_e),
    )
    Q_T = rng.uniform(2.0, 10.0)
    v = rng.uniform(250.0, 350.0)
    cfg_b = BatteryNodeConfig(
        gamma=float(rng.choice([0.0, 1.0, 10.0, 100.0, 1000.0])),
        p_min=-P_b,
        p_max=P_b,
        ramp_b=rng.uniform(0.3, 1.0) * P_b,
        kappa=3600.0 * Q_T * v,
        q0=rng.uniform(q_min, q_max),
        q_min=q_min,
        q_max=q_max,
        p_prev_applied=rng.uniform(-P_b, P_b),
    )
    pe = _feasible_walk(rng, h, cfg_e.p_prev_applied, cfg_e.ramp_e, cfg_e.p_min, cfg_e.p_max)
    lo, hi, _ = soc_window(cfg_b, h)
    pb = _feasible_walk(rng, h, cfg_b.p_prev_applied, cfg_b.ramp_b, cfg_b.p_min, cfg_b.p_max, lo[0], hi[0])
    rho = balanced_rho(cfg_e.beta, cfg_b.gamma)
    cfg = CoordinatorConfig(alpha=1000.0, rho=rho, h=h, max_iters=500, eps_abs=eps_abs, adaptive_rho=True)
    return AdmmInstance(pe + pb, cfg, cfg_e, cfg_b)


def admm_oracle_gap(inst: AdmmInstance, backend: str = "compiled"):
    """Return (relative gap, AllocationResult) of run_admm against centralized_solve."""
    h = inst.cfg.h
    res = run_admm(inst.p_hat, NodeState.cold(h), NodeState.cold(h), inst.cfg, inst.cfg_e, inst.cfg_b, backend=backend)
    pe, pb = centralized_solve(inst.p_hat, inst.cfg, inst.cfg_e, inst.cfg_b)
    scale = 1.0 + max(np.max(np.abs(pe)), np.max(np.abs(pb)))
    gap = max(np.max(np.abs(res.p_e - pe)), np.max(np.abs(res.p_b - pb)))
    return float(gap / scale), res


def _random_state(rng, n):
    return GeneralizedState(rng.uniform(-10, 10, n) * (1 if n == 1 else np.array([100, 100, np.pi / 10])), rng.uniform(-30, 30, n))


def random_models(rng: np.random.Generator):
    """One random admissible instance of each vehicle model."""
    road = RoadModel(
        RoadParams(
            m=rng.uniform(800, 3000),
            rho_d=rng.uniform(1.0, 1.3),
            C_d=rng.uniform(0.2, 0.5),
            A=rng.uniform(1.5, 3.0),
            mu_r=rng.uniform(0.005, 0.05),
            phi=rng.uniform(-0.1, 0.1),
        )
    )
    air = AircraftModel(
        AircraftParams(
            m_a=rng.uniform(1e4, 8e4),
            rho_a=rng.uniform(0.4, 1.3),
            C_d=rng.uniform(0.02, 0.06),
            S=rng.uniform(50, 120),
            phi_a=rng.uniform(-0.1, 0.1),
        )
    )
    m11, m22, m33 = rng.uniform(1e5, 1e7, 3)
    m23 = rng.uniform(-0.5, 0.5) * np.sqrt(m22 * m33)
    d = rng.uniform(1e3, 1e6, 6)
    ship = ShipModel(
        ShipParams(
            Mbar=np.array([[m11, 0, 0], [0, m22, m23], [0, m23, m33]]),
            D=np.array([[d[0], 0, 0], [0, d[1], d[2]], [0, d[3], d[4]]]),
            K=np.diag(rng.uniform(0, 1e4, 3)),
        )
    )
    return road, air, ship


def regressor_identity_gap(rng: np.random.Generator, count: int = 1000) -> float:
    """Worst relative gap |Y theta + known - (V_m xd' + G + F + M xd'')| over random triples."""
    worst = 0.0
    for _ in range(count):
        for model in random_models(rng):
            state = _random_state(rng, model.n)
            xd = rng.uniform(-30, 30, model.n)
            xdd = rng.uniform(-5, 5, model.n)
            lhs = regressor(model, state, xd, xdd) @ model.theta() + model.known_force(state)
            rhs = model_terms(model, state, xd, xdd)
            worst = max(worst, float(np.max(np.abs(lhs - rhs)) / (1.0 + np.max(np.abs(rhs)))))
    return worst
