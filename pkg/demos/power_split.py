"""One MPC allocation: engine and battery nodes split a 120 kW demand.

The demand exceeds what both sources can deliver (100 kW engine, 14 kW
battery), so the two-node ADMM settles on the limits and leaves a 6 kW
tracking gap.  The centralized problem gives the same answer.
"""

import numpy as np

from hybrid_mpem.coordinator import (
    BatteryNodeConfig,
    CoordinatorConfig,
    EngineNodeConfig,
    NodeState,
    balanced_rho,
    centralized_solve,
    run_admm,
)

h = 5
engine = EngineNodeConfig(beta=1.0, p_ref=75e3, p_min=0.0, p_max=100e3, ramp_e=11.2e3, p_prev_applied=100e3)
battery = BatteryNodeConfig(
    gamma=10.0, p_min=-14e3, p_max=14e3, ramp_b=13.5e3,
    kappa=6.5 * 3600 * 312.0,  # 6.5 Ah at 312 V, J per unit SoC
    q0=0.7, q_min=0.5, q_max=0.8, p_prev_applied=14e3,
)
demand = np.full(h, 120e3)

for adaptive in (False, True):
    cfg = CoordinatorConfig(alpha=1000.0, rho=balanced_rho(engine.beta, battery.gamma), h=h, adaptive_rho=adaptive)
    res = run_admm(demand, NodeState.cold(h), NodeState.cold(h), cfg, engine, battery)
    print(f"adaptive rho={adaptive!s:5}  iterations {res.iterations:4d}  converged {res.converged!s:5}  "
          f"applied engine {res.applied_pe / 1e3:.3f} kW  battery {res.applied_pb / 1e3:.3f} kW  "
          f"gap {res.tracking_gap / 1e3:.3f} kW")

pe, pb = centralized_solve(demand, cfg, engine, battery)
print("centralized engine kW ", np.round(pe / 1e3, 3))
print("centralized battery kW", np.round(pb / 1e3, 3))
