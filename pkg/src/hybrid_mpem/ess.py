"""Battery pack: linear open-circuit voltage, series resistance, SoC, capacity fade.

Sign convention: positive power and current discharge the pack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

__all__ = [
    "BatteryParams",
    "BatteryState",
    "DegradationParams",
    "BatteryPowerError",
    "open_circuit_voltage",
    "battery_current",
    "terminal_voltage",
    "soc_step",
    "degradation_step",
    "loss_metrics",
    "soc_kappa",
]


class BatteryPowerError(ValueError):
    """Requested power is beyond what the pack can deliver."""

    def __init__(self, p_b, p_limit):
        super().__init__(f"power exceeds battery capability: requested {p_b:.6g} W, limit {p_limit:.6g} W")
        self.p_b = p_b
        self.p_limit = p_limit


@dataclass(frozen=True)
class BatteryParams:
    Q_T: float
    r_b: float
    c1: float
    c2: float
    q_min: float = 0.0
    q_max: float = 1.0

    def __post_init__(self):
        if not self.Q_T > 0:
            raise ValueError("Q_T must be positive")
        if not self.r_b >= 0:
            raise ValueError("r_b must be non-negative")
        if not 0.0 <= self.q_min < self.q_max <= 1.0:
            raise ValueError("need 0 <= q_min < q_max <= 1")
        # v_oc is affine so checking the ends is enough
        if min(self.c1 * self.q_min + self.c2, self.c1 * self.q_max + self.c2) <= 0:
            raise ValueError("open-circuit voltage must be positive on [q_min, q_max]")

    @property
    def Q_T_seconds(self) -> float:
        """Capacity in ampere-seconds."""
        return 3600.0 * self.Q_T


@dataclass(frozen=True)
class BatteryState:
    q: float
    throughput: float = 0.0
    Q_L: float = 0.0
    clamped: bool = False

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"SoC {self.q} outside [0, 1]")
        if self.throughput < 0 or self.Q_L < 0:
            raise ValueError("throughput and Q_L must be non-negative")


@dataclass(frozen=True)
class DegradationParams:
    zeta2: float = 0.0
    T_K: float = 298.15
    C_r: float = 0.0
    R_gas: float = 8.314
    prefactor_override: float | None = 1.0

    def __post_init__(self):
        if not (self.T_K > 0 and self.R_gas > 0):
            raise ValueError("T_K and R_gas must be positive")
        if self.prefactor_override is not None and not self.prefactor_override >= 0:
            raise ValueError("prefactor_override must be non-negative")

    @property
    def prefactor(self) -> float:
        if self.prefactor_override is not None:
            return float(self.prefactor_override)
        return math.exp((-self.zeta2 + self.T_K * self.C_r) / (self.R_gas * self.T_K))


def open_circuit_voltage(params: BatteryParams, q: float) -> float:
    return params.c1 * q + params.c2


def battery_current(params: BatteryParams, q: float, p_b: float) -> float:
    """Current drawn for terminal power p_b on the low-current branch of v_b i = p_b."""
    v_oc = open_circuit_voltage(params, q)
    r = params.r_b
    if r == 0.0:
        return p_b / v_oc
    disc = v_oc * v_oc - 4.0 * r * p_b
    if disc < 0:
        raise BatteryPowerError(p_b, v_oc * v_oc / (4.0 * r))
    # rationalized root avoids cancellation when r p_b << v_oc^2
    return 2.0 * p_b / (v_oc + math.sqrt(disc))


def terminal_voltage(params: BatteryParams, q: float, i_b: float) -> float:
    v_b = open_circuit_voltage(params, q) - params.r_b * i_b
    if not v_b > 0:
        raise ValueError(f"non-positive terminal voltage {v_b:.6g} V at q={q}, i_b={i_b}")
    return v_b


def soc_step(params: BatteryParams, state: BatteryState, p_b: float, dt: float, v_b: float | None = None) -> BatteryState:
    """Advance SoC by dt with p_b held; v_b defaults to its value at the step start.

    A result outside [0, 1] is clamped and ``clamped`` is set on the returned state.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if v_b is None:
        v_b = terminal_voltage(params, state.q, battery_current(params, state.q, p_b))
    q = state.q - p_b * dt / (params.Q_T_seconds * v_b)
    clamped = state.clamped
    if q < 0.0 or q > 1.0:
        q = min(max(q, 0.0), 1.0)
        clamped = True
    return replace(state, q=q, clamped=clamped)


def degradation_step(dp: DegradationParams, state: BatteryState, i_b: float, dt: float) -> BatteryState:
    """Accumulate sqrt|i_b| dt and refresh Q_L = prefactor * throughput / 3600."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    throughput = state.throughput + math.sqrt(abs(i_b)) * dt
    return replace(state, throughput=throughput, Q_L=dp.prefactor * throughput / 3600.0)


def loss_metrics(params: BatteryParams, state: BatteryState):
    """Return (loss_pct, remaining_pct)."""
    loss_pct = 100.0 * state.Q_L / params.Q_T
    remaining_pct = (params.Q_T - state.Q_L) / params.Q_T * 100.0
    return loss_pct, remaining_pct


def soc_kappa(params: BatteryParams, q0: float, Ts: float) -> float:
    """W per unit SoC per MPC sample with the voltage frozen at v_oc(q0)."""
    return params.Q_T_seconds * open_circuit_voltage(params, q0) / Ts
