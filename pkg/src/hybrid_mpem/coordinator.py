"""Two-node ADMM energy manager: engine node, battery node, closed-form aggregator.

Each MPC tick splits a forecast demand ``p_hat`` over a horizon of h samples
by minimizing

    alpha/2 |p_e + p_b - p_hat|^2 + beta/2 |p_e - p_ref|^2 + gamma/2 |p_b|^2

subject to each source's box, ramp and (battery) state-of-charge limits.  The
ADMM iteration is run in the z-form: the aggregator broadcasts

    a = alpha / (2 alpha + rho) * (p_hat - z_e - z_b)

each node solves its proximal QP around p + a and replies
z = 2 p_new - p_old - a.  The scaled dual of each node is u = z - p.

Three interchangeable backends run the same iteration:

``"compiled"``  whole loop in one numba kernel (default, fastest)
``"python"``    reference loop calling :func:`node_step` per node
``"process"``   one OS process per node talking the binary frame protocol
                of :mod:`hybrid_mpem.wire`

All three produce bitwise-identical iterates.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ._jit import njit
from .qp import QpProblem, QpStatus, _dual_active_set, solve

__all__ = [
    "CoordinatorConfig",
    "EngineNodeConfig",
    "BatteryNodeConfig",
    "NodeState",
    "AllocationResult",
    "NodeSolveError",
    "CentralizedInfeasible",
    "difference_matrix",
    "engine_constraints",
    "battery_constraints",
    "aggregator_update",
    "build_engine_qp",
    "build_battery_qp",
    "node_step",
    "run_admm",
    "centralized_problem",
    "centralized_solve",
    "mpc_step",
    "EnergyManager",
    "balanced_rho",
]

log = logging.getLogger(__name__)

ENGINE_ID = 0
BATTERY_ID = 1


class NodeSolveError(RuntimeError):
    def __init__(self, node, status):
        super().__init__(f"{node} node QP failed with status {status}")
        self.node = node
        self.status = status


class CentralizedInfeasible(RuntimeError):
    def __init__(self, families):
        super().__init__("centralized problem infeasible; conflicting constraints: " + ", ".join(families))
        self.families = families


@dataclass(frozen=True)
class CoordinatorConfig:
    alpha: float = 1000.0
    rho: float = 0.1
    h: int = 5
    Ts: float = 1.0
    max_iters: int = 500
    eps_abs: float = 1.0
    adaptive_rho: bool = False

    def __post_init__(self):
        if not (self.alpha > 0 and self.rho > 0 and self.Ts > 0):
            raise ValueError("alpha, rho and Ts must be positive")
        if int(self.h) != self.h or self.h < 1:
            raise ValueError("h must be a positive integer")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError("max_iters must be a positive integer")
        if not self.eps_abs > 0:
            raise ValueError("eps_abs must be positive")
        object.__setattr__(self, "h", int(self.h))
        object.__setattr__(self, "max_iters", int(self.max_iters))
        object.__setattr__(self, "adaptive_rho", bool(self.adaptive_rho))

    @property
    def agg_gain(self) -> float:
        return self.alpha / (2.0 * self.alpha + self.rho)


@dataclass(frozen=True)
class EngineNodeConfig:
    beta: float
    p_ref: float
    p_min: float
    p_max: float
    ramp_e: float
    p_prev_applied: float = 0.0

    def __post_init__(self):
        if not self.beta >= 0:
            raise ValueError("beta must be non-negative")
        if not self.p_min <= self.p_ref <= self.p_max:
            raise ValueError("need p_min <= p_ref <= p_max")
        if not self.ramp_e > 0:
            raise ValueError("ramp_e must be positive")


@dataclass(frozen=True)
class BatteryNodeConfig:
    gamma: float
    p_min: float
    p_max: float
    ramp_b: float
    kappa: float
    q0: float
    q_min: float
    q_max: float
    p_prev_applied: float = 0.0

    def __post_init__(self):
        if not self.gamma >= 0:
            raise ValueError("gamma must be non-negative")
        if not self.p_min < 0 < self.p_max:
            raise ValueError("battery needs p_min < 0 < p_max")
        if not (self.ramp_b > 0 and self.kappa > 0):
            raise ValueError("ramp_b and kappa must be positive")
        if not 0.0 <= self.q0 <= 1.0:
            raise ValueError("q0 must lie in [0, 1]")
        if not 0.0 <= self.q_min < self.q_max <= 1.0:
            raise ValueError("need 0 <= q_min < q_max <= 1")


@dataclass(frozen=True)
class NodeState:
    p: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        p = np.array(self.p, dtype=float).reshape(-1)
        z = np.array(self.z, dtype=float).reshape(-1)
        if p.shape != z.shape:
            raise ValueError("p and z must have equal length")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(z))):
            raise ValueError("node state must be finite")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "z", z)

    @classmethod
    def cold(cls, h):
        return cls(np.zeros(h), np.zeros(h))

    @property
    def u(self) -> np.ndarray:
        """Scaled dual variable u = z - p."""
        return self.z - self.p

    def shifted(self) -> "NodeState":
        """Warm start for the next tick: drop the first sample, repeat the last."""
        return NodeState(np.append(self.p[1:], self.p[-1]), np.append(self.z[1:], self.z[-1]))


@dataclass(frozen=True)
class AllocationResult:
    p_e: np.ndarray
    p_b: np.ndarray
    applied_pe: float
    applied_pb: float
    iterations: int
    converged: bool
    tracking_gap: float
    relaxed: bool = False
    primal_delta: float = 0.0  # last iteration's sup-norm change of p_e, p_b
    rho: float = 0.0  # penalty in force at exit (differs from cfg.rho only when adaptive)
    engine: NodeState | None = field(default=None, repr=False)
    battery: NodeState | None = field(default=None, repr=False)


def balanced_rho(beta: float, gamma: float, floor: float = 0.1) -> float:
    """Starting ADMM penalty matched to the stiffer node cost, max(beta, gamma, floor).

    The penalty does not change the limit point, only the speed.  When one node
    sits on a constraint the other contracts at roughly 1 - rho/curvature per
    iteration, so rho should not fall far below the stiffer node cost.
    """
    return max(float(beta), float(gamma), float(floor))


# residual balancing: compare dual motion |a+ - a| with rho |p+ - p|
RHO_MU = 10.0
RHO_TAU = 2.0
RHO_COOLDOWN = 5  # iterations between two penalty changes
RHO_ADAPT_ITERS = 200  # penalty frozen afterwards, which keeps the usual convergence guarantee
RHO_RANGE = 1e4  # rho stays within [rho0 / RHO_RANGE, rho0 * RHO_RANGE]


@njit
def _rho_adapt(p_hat, ze, zb, a, dp, rho, rho0, alpha, it, last_change):
    """Residual-balancing penalty update after iteration ``it``.

    Both node residuals keep the same unscaled dual rho * a: on a change, z_e
    and z_b are shifted by a common offset so that the next aggregator output
    equals a+ rho / rho_new.  Returns (rho, z_e, z_b, changed).
    """
    if it > RHO_ADAPT_ITERS or it - last_change < RHO_COOLDOWN:
        return rho, ze, zb, False
    a_next = (alpha / (2.0 * alpha + rho)) * ((p_hat - ze) - zb)
    r = np.max(np.abs(a_next - a))
    s = rho * dp
    if r > RHO_MU * s:
        rho_new = min(rho * RHO_TAU, rho0 * RHO_RANGE)
    elif s > RHO_MU * r:
        rho_new = max(rho / RHO_TAU, rho0 / RHO_RANGE)
    else:
        return rho, ze, zb, False
    if rho_new == rho:
        return rho, ze, zb, False
    ze, zb = _rescale_dual(p_hat, ze, zb, rho, rho_new, alpha)
    return rho_new, ze, zb, True


@njit
def _rescale_dual(p_hat, ze, zb, rho, rho_new, alpha):
    """Shift z_e, z_b so the next aggregator output under rho_new keeps the dual rho * a."""
    a_next = (alpha / (2.0 * alpha + rho)) * ((p_hat - ze) - zb)
    target = a_next * (rho / rho_new)
    delta = 0.5 * (((p_hat - ze) - zb) - target * ((2.0 * alpha + rho_new) / alpha))
    return ze + delta, zb + delta


# constraint families ------------------------------------------------------


def difference_matrix(h: int) -> np.ndarray:
    """First differences p_k - p_{k-1}; row 0 differences against the previous command."""
    return np.eye(h) - np.eye(h, k=-1)


def _ramp_rows(h, ramp, p_prev):
    D = difference_matrix(h)
    e1 = np.zeros(h)
    e1[0] = p_prev
    A = np.vstack([D, -D])
    b = np.concatenate([ramp + e1, ramp - e1])
    return A, b


def engine_constraints(cfg_e: EngineNodeConfig, h: int):
    """Box and ramp rows of the engine node: (lb, ub, A_ineq, b_ineq)."""
    A, b = _ramp_rows(h, cfg_e.ramp_e, cfg_e.p_prev_applied)
    return np.full(h, float(cfg_e.p_min)), np.full(h, float(cfg_e.p_max)), A, b


def soc_window(cfg_b: BatteryNodeConfig, h: int):
    """Cumulative-energy window lo_k <= sum_{j<=k} p_j <= hi_k, relaxed where needed.

    Returns (lo, hi, relaxed).  The window is widened to q0 when q0 lies outside
    [q_min, q_max], and further where the fastest ramp back to zero power from
    the previous command would still leave it.
    """
    q_lo = min(cfg_b.q_min, cfg_b.q0)
    q_hi = max(cfg_b.q_max, cfg_b.q0)
    relaxed = q_lo < cfg_b.q_min or q_hi > cfg_b.q_max
    lo = np.full(h, cfg_b.kappa * (cfg_b.q0 - q_hi))
    hi = np.full(h, cfg_b.kappa * (cfg_b.q0 - q_lo))
    # fastest admissible return to zero power from the last applied command
    p0 = cfg_b.p_prev_applied
    k = np.arange(1, h + 1)
    back = np.sign(p0) * np.maximum(abs(p0) - k * cfg_b.ramp_b, 0.0)
    back = np.clip(back, cfg_b.p_min, cfg_b.p_max)
    cum = np.cumsum(back)
    if np.any(cum < lo) or np.any(cum > hi):
        relaxed = True
        lo = np.minimum(lo, cum)
        hi = np.maximum(hi, cum)
    return lo, hi, relaxed


def battery_constraints(cfg_b: BatteryNodeConfig, h: int):
    """Box, ramp and cumulative SoC rows of the battery node: (lb, ub, A_ineq, b_ineq, relaxed)."""
    A_r, b_r = _ramp_rows(h, cfg_b.ramp_b, cfg_b.p_prev_applied)
    lo, hi, relaxed = soc_window(cfg_b, h)
    L = np.tril(np.ones((h, h)))
    A = np.vstack([A_r, L, -L])
    b = np.concatenate([b_r, hi, -lo])
    return np.full(h, float(cfg_b.p_min)), np.full(h, float(cfg_b.p_max)), A, b, relaxed


# ADMM pieces ---------------------------------------------------------------


def _check_len(h, **vecs):
    for name, v in vecs.items():
        if v.shape != (h,):
            raise ValueError(f"{name} has length {v.size}, expected {h}")


def aggregator_update(z_e, z_b, p_hat_d, cfg: CoordinatorConfig) -> np.ndarray:
    z_e = np.asarray(z_e, dtype=float)
    z_b = np.asarray(z_b, dtype=float)
    p_hat_d = np.asarray(p_hat_d, dtype=float)
    _check_len(p_hat_d.size, z_e=z_e, z_b=z_b)
    return cfg.agg_gain * ((p_hat_d - z_e) - z_b)


def build_engine_qp(cfg_e: EngineNodeConfig, node: NodeState, a, rho: float) -> QpProblem:
    """Engine proximal QP: beta/2 |p - p_ref|^2 + rho/2 |p - p_old - a|^2."""
    h = node.p.size
    lb, ub, A, b = engine_constraints(cfg_e, h)
    pref = np.full(h, float(cfg_e.p_ref))
    c = -cfg_e.beta * pref - rho * (node.p + a)
    return QpProblem(Q=(cfg_e.beta + rho) * np.eye(h), c=c, lb=lb, ub=ub, A_ineq=A, b_ineq=b)


def build_battery_qp(cfg_b: BatteryNodeConfig, node: NodeState, a, rho: float) -> QpProblem:
    """Battery proximal QP: gamma/2 |p|^2 + rho/2 |p - p_old - a|^2."""
    h = node.p.size
    lb, ub, A, b, relaxed = battery_constraints(cfg_b, h)
    c = -rho * (node.p + a)
    return QpProblem(Q=(cfg_b.gamma + rho) * np.eye(h), c=c, lb=lb, ub=ub, A_ineq=A, b_ineq=b)


def node_step(node: NodeState, qp_builder, a, solver=solve, name: str = "node") -> NodeState:
    """p <- argmin of the node QP built around (p, a); z <- 2 p_new - p_old - a."""
    sol = solver(qp_builder(node, a))
    if sol.status is not QpStatus.OPTIMAL:
        raise NodeSolveError(name, sol.status.value)
    p_new = sol.x_star
    return NodeState(p_new, (2.0 * p_new - node.p) - a)


def _qp_iter_cap(qp: QpProblem) -> int:
    C, _, _ = qp.constraint_rows()
    return 50 + 10 * (qp.n + C.shape[0])


def _stack_rows(lb, ub, A, b):
    """(C, d, iteration cap) in ``QpProblem.constraint_rows`` order for finite bounds."""
    h = lb.size
    eye = np.eye(h)
    C = np.vstack([A, eye, -eye])
    d = np.concatenate([b, ub, -lb])
    return C, d, 50 + 10 * (h + C.shape[0])


@njit(nogil=True)
def _admm_kernel(p_hat, pe, ze, pb, zb, Ce, de, cap_e, Cb, db, cap_b,
                 alpha, rho, adaptive, beta, gamma, pref, max_iters, eps):
    h = pe.shape[0]
    eye = np.eye(h)
    rho0 = rho
    He = (beta + rho) * eye
    Hb = (gamma + rho) * eye
    last_change = 0
    it = 0
    converged = False
    status = 0
    dp = np.inf
    for it in range(1, max_iters + 1):
        a = (alpha / (2.0 * alpha + rho)) * ((p_hat - ze) - zb)
        ce = -beta * pref - rho * (pe + a)
        xe, lam_e, st_e, k_e, cert_e = _dual_active_set(He, ce, Ce, de, 0, cap_e)
        if st_e != 0:
            status = 1
            break
        cb = -rho * (pb + a)
        xb, lam_b, st_b, k_b, cert_b = _dual_active_set(Hb, cb, Cb, db, 0, cap_b)
        if st_b != 0:
            status = 2
            break
        ze_new = (2.0 * xe - pe) - a
        zb_new = (2.0 * xb - pb) - a
        dp = max(np.max(np.abs(xe - pe)), np.max(np.abs(xb - pb)))
        dz = max(np.max(np.abs(ze_new - ze)), np.max(np.abs(zb_new - zb)))
        pe, ze, pb, zb = xe, ze_new, xb, zb_new
        if max(dp, dz) <= eps:
            converged = True
            break
        if adaptive:
            rho, ze, zb, changed = _rho_adapt(p_hat, ze, zb, a, dp, rho, rho0, alpha, it, last_change)
            if changed:
                last_change = it
                He = (beta + rho) * eye
                Hb = (gamma + rho) * eye
    return pe, ze, pb, zb, it, converged, status, dp, rho


def _deltas(e_old, e_new, b_old, b_new):
    """Sup-norm increments (primal, dual-side) of one iteration."""
    dp = max(np.max(np.abs(e_new.p - e_old.p)), np.max(np.abs(b_new.p - b_old.p)))
    dz = max(np.max(np.abs(e_new.z - e_old.z)), np.max(np.abs(b_new.z - b_old.z)))
    return dp, dz


def run_admm(
    p_hat_d,
    engine: NodeState,
    battery: NodeState,
    cfg: CoordinatorConfig,
    cfg_e: EngineNodeConfig,
    cfg_b: BatteryNodeConfig,
    *,
    backend: str = "compiled",
    parallel: bool = False,
    transport=None,
) -> AllocationResult:
    """Iterate aggregator -> both nodes until the sup-norm increments fall below eps_abs.

    ``parallel`` runs the two node solves of the python backend on two threads.
    ``transport`` is a :class:`hybrid_mpem.wire.NodeLink` for the process backend;
    one is created (and shut down afterwards) when omitted.
    """
    h = cfg.h
    p_hat_d = np.asarray(p_hat_d, dtype=float).reshape(-1)
    _check_len(h, p_hat_d=p_hat_d, engine_p=engine.p, battery_p=battery.p)
    if not np.all(np.isfinite(p_hat_d)):
        raise ValueError("demand forecast must be finite")
    rho = cfg.rho
    lb_b, ub_b, A_b, b_b, relaxed = battery_constraints(cfg_b, h)

    if backend == "compiled":
        Ce, de, cap_e = _stack_rows(*engine_constraints(cfg_e, h))
        Cb, db, cap_b = _stack_rows(lb_b, ub_b, A_b, b_b)
        pe, ze, pb, zb, it, conv, status, dp, rho = _admm_kernel(
            p_hat_d, engine.p, engine.z, battery.p, battery.z,
            Ce, de, cap_e, Cb, db, cap_b,
            float(cfg.alpha), float(rho), cfg.adaptive_rho, float(cfg_e.beta), float(cfg_b.gamma),
            np.full(h, float(cfg_e.p_ref)), cfg.max_iters, cfg.eps_abs,
        )
        if status == 1:
            raise NodeSolveError("engine", "infeasible or iteration cap")
        if status == 2:
            raise NodeSolveError("battery", "infeasible or iteration cap")
        e_node, b_node = NodeState(pe, ze), NodeState(pb, zb)
        it, conv, dp, rho = int(it), bool(conv), float(dp), float(rho)
    elif backend == "python":
        e_node, b_node, it, conv, dp, rho = _run_python(p_hat_d, engine, battery, cfg, cfg_e, cfg_b, parallel)
    elif backend == "process":
        from .wire import NodeLink

        own = transport is None
        link = NodeLink() if own else transport
        try:
            e_node, b_node, it, conv, dp, rho = link.run(p_hat_d, engine, battery, cfg, cfg_e, cfg_b)
        finally:
            if own:
                link.close()
    else:
        raise ValueError(f"unknown backend {backend!r}")

    if not conv:
        log.debug("ADMM stopped at max_iters=%d without meeting eps_abs=%g", cfg.max_iters, cfg.eps_abs)
    gap = abs(e_node.p[0] + b_node.p[0] - p_hat_d[0])
    return AllocationResult(
        p_e=e_node.p,
        p_b=b_node.p,
        applied_pe=float(e_node.p[0]),
        applied_pb=float(b_node.p[0]),
        iterations=it,
        converged=conv,
        tracking_gap=float(gap),
        relaxed=relaxed,
        primal_delta=dp,
        rho=rho,
        engine=e_node,
        battery=b_node,
    )


def _run_python(p_hat_d, engine, battery, cfg, cfg_e, cfg_b, parallel):
    rho = rho0 = cfg.rho
    last_change = 0

    def eng(node, a):
        return build_engine_qp(cfg_e, node, a, rho)

    def bat(node, a):
        return build_battery_qp(cfg_b, node, a, rho)

    pool = ThreadPoolExecutor(max_workers=2) if parallel else None
    conv = False
    it = 0
    dp = np.inf
    try:
        for it in range(1, cfg.max_iters + 1):
            a = aggregator_update(engine.z, battery.z, p_hat_d, replace(cfg, rho=rho))
            if pool is not None:
                fe = pool.submit(node_step, engine, eng, a, solve, "engine")
                fb = pool.submit(node_step, battery, bat, a, solve, "battery")
                e_new, b_new = fe.result(), fb.result()
            else:
                e_new = node_step(engine, eng, a, solve, "engine")
                b_new = node_step(battery, bat, a, solve, "battery")
            dp, dz = _deltas(engine, e_new, battery, b_new)
            engine, battery = e_new, b_new
            if max(dp, dz) <= cfg.eps_abs:
                conv = True
                break
            if cfg.adaptive_rho:
                rho, ze, zb, changed = _rho_adapt(
                    p_hat_d, engine.z, battery.z, a, dp, rho, rho0, cfg.alpha, it, last_change
                )
                if changed:
                    last_change = it
                    engine, battery = NodeState(engine.p, ze), NodeState(battery.p, zb)
    finally:
        if pool is not None:
            pool.shutdown()
    return engine, battery, it, conv, float(dp), float(rho)


# centralized oracle ----------------------------------------------------------


def centralized_problem(p_hat_d, cfg: CoordinatorConfig, cfg_e: EngineNodeConfig, cfg_b: BatteryNodeConfig):
    """Monolithic QP over [p_e; p_b].

    Returns (problem, tikhonov, labels) where ``labels`` names the constraint
    family of every row of ``problem.constraint_rows()``.  A Tikhonov term of
    1e-9 is added to the Hessian when beta or gamma is zero.
    """
    h = cfg.h
    p_hat_d = np.asarray(p_hat_d, dtype=float).reshape(-1)
    _check_len(h, p_hat_d=p_hat_d)
    al, be, ga = cfg.alpha, cfg_e.beta, cfg_b.gamma
    I = np.eye(h)
    tik = 1e-9 if be * ga == 0 else 0.0
    H = np.block([[(al + be) * I, al * I], [al * I, (al + ga) * I]]) + tik * np.eye(2 * h)
    c = np.concatenate([-al * p_hat_d - be * cfg_e.p_ref, -al * p_hat_d])

    lb_e, ub_e, A_e, b_e = engine_constraints(cfg_e, h)
    lb_b, ub_b, A_b, b_b, _ = battery_constraints(cfg_b, h)
    Z_e = np.zeros((A_e.shape[0], h))
    Z_b = np.zeros((A_b.shape[0], h))
    A = np.vstack([np.hstack([A_e, Z_e]), np.hstack([Z_b, A_b])])
    b = np.concatenate([b_e, b_b])
    labels = (
        ["engine ramp"] * (2 * h)
        + ["battery ramp"] * (2 * h)
        + ["battery SoC upper"] * h
        + ["battery SoC lower"] * h
        + ["engine max power"] * h
        + ["battery max power"] * h
        + ["engine min power"] * h
        + ["battery min power"] * h
    )
    qp = QpProblem(
        Q=H,
        c=c,
        lb=np.concatenate([lb_e, lb_b]),
        ub=np.concatenate([ub_e, ub_b]),
        A_ineq=A,
        b_ineq=b,
    )
    return qp, tik, labels


def centralized_solve(p_hat_d, cfg: CoordinatorConfig, cfg_e: EngineNodeConfig, cfg_b: BatteryNodeConfig):
    """Return (p_e, p_b) from the monolithic problem; raises CentralizedInfeasible."""
    qp, tik, labels = centralized_problem(p_hat_d, cfg, cfg_e, cfg_b)
    sol = solve(qp)
    if sol.status is QpStatus.INFEASIBLE:
        rows = np.flatnonzero(sol.certificate > 1e-12 * np.max(sol.certificate))
        raise CentralizedInfeasible(sorted({labels[i] for i in rows}))
    if sol.status is not QpStatus.OPTIMAL:
        raise RuntimeError(f"centralized solve failed: {sol.status.value}, kkt {sol.kkt_residual:.3g}")
    if tik:
        log.debug("centralized oracle used Tikhonov term %g", tik)
    h = cfg.h
    return sol.x_star[:h].copy(), sol.x_star[h:].copy()


# MPC tick ------------------------------------------------------------------


def mpc_step(
    p_d_now: float,
    q0: float,
    kappa: float,
    engine: NodeState,
    battery: NodeState,
    cfg: CoordinatorConfig,
    cfg_e: EngineNodeConfig,
    cfg_b: BatteryNodeConfig,
    **admm_kwargs,
):
    """One receding-horizon tick with the demand held constant over the horizon.

    ``cfg_e``/``cfg_b`` carry the previously applied commands; q0 and kappa are
    the fresh SoC and SoC coefficient.  Returns (result, engine_next,
    battery_next, cfg_e_next, cfg_b_next) where the node states are the
    shifted warm starts and the configs carry the new applied commands.
    """
    cfg_b = replace(cfg_b, q0=float(q0), kappa=float(kappa))
    p_hat = np.full(cfg.h, float(p_d_now))
    res = run_admm(p_hat, engine, battery, cfg, cfg_e, cfg_b, **admm_kwargs)
    if res.relaxed:
        log.info("SoC window relaxed at q0=%.6f", q0)
    return (
        res,
        res.engine.shifted(),
        res.battery.shifted(),
        replace(cfg_e, p_prev_applied=res.applied_pe),
        replace(cfg_b, p_prev_applied=res.applied_pb),
    )


class EnergyManager:
    """Stateful wrapper holding warm starts and previously applied commands."""

    def __init__(self, cfg: CoordinatorConfig, cfg_e: EngineNodeConfig, cfg_b: BatteryNodeConfig, **admm_kwargs):
        self.cfg = cfg
        self.cfg_e = cfg_e
        self.cfg_b = cfg_b
        self.engine = NodeState.cold(cfg.h)
        self.battery = NodeState.cold(cfg.h)
        self.admm_kwargs = admm_kwargs

    def step(self, p_d_now: float, q0: float, kappa: float) -> AllocationResult:
        res, self.engine, self.battery, self.cfg_e, self.cfg_b = mpc_step(
            p_d_now, q0, kappa, self.engine, self.battery, self.cfg, self.cfg_e, self.cfg_b, **self.admm_kwargs
        )
        if res.rho != self.cfg.rho:
            # every tick starts from the configured penalty; carry the dual over
            p_hat = np.full(self.cfg.h, float(p_d_now))
            ze, zb = _rescale_dual(p_hat, self.engine.z, self.battery.z, res.rho, self.cfg.rho, self.cfg.alpha)
            self.engine, self.battery = NodeState(self.engine.p, ze), NodeState(self.battery.p, zb)
        return res
