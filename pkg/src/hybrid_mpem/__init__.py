"""Battery-health-aware distributed MPC energy management for hybrid power trains.

Modules
-------
dynamics     Euler-Lagrange plant models (road vehicle, aircraft, vessel)
tracking     adaptive trajectory-tracking controller
ess          battery state of charge, current and capacity fade
qp           small dense strictly convex QP solver
coordinator  two-node ADMM power split and the centralized reference problem
wire         frame protocol for running the nodes in separate processes
harness      drive cycles, scenarios, closed-loop runs and CSV output
"""

from .coordinator import (
    AllocationResult,
    BatteryNodeConfig,
    CoordinatorConfig,
    EnergyManager,
    EngineNodeConfig,
    NodeState,
    centralized_solve,
    mpc_step,
    run_admm,
)
from .dynamics import AircraftModel, GeneralizedState, RoadModel, ShipModel
from .ess import BatteryParams, BatteryState, DegradationParams
from .qp import QpProblem, QpSolution, QpStatus, solve

__version__ = "0.1.0"

__all__ = [
    "AllocationResult",
    "BatteryNodeConfig",
    "CoordinatorConfig",
    "EnergyManager",
    "EngineNodeConfig",
    "NodeState",
    "centralized_solve",
    "mpc_step",
    "run_admm",
    "AircraftModel",
    "GeneralizedState",
    "RoadModel",
    "ShipModel",
    "BatteryParams",
    "BatteryState",
    "DegradationParams",
    "QpProblem",
    "QpSolution",
    "QpStatus",
    "solve",
]
