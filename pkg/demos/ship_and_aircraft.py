"""Same energy manager at megawatt scale: a DP vessel and a hybrid aircraft.

Each vehicle follows its bundled reference profile at gamma 1 and 100.
The engine ramp is reported as a fraction of its rating per MPC sample.
"""

import numpy as np

from hybrid_mpem.harness.cycles import bundled_cycle
from hybrid_mpem.harness.run import run_scenario
from hybrid_mpem.harness.scenario import bundled_scenario

for name, profile in (("dps", "dps_profile"), ("hea", "hea_profile")):
    scn = bundled_scenario(name)
    trace = bundled_cycle(profile)
    for g in (1.0, 100.0):
        m, tl = run_scenario(scn.with_gamma(g), trace)
        ramp = np.max(np.abs(np.diff(tl["p_e_w"]))) / scn.engine_node.p_max
        print(f"{name} gamma={g:<5g} duration {m.duration_s:5.0f} s  "
              f"peak |p_b| {np.max(np.abs(tl['p_b_w'])) / 1e6:5.2f} MW  "
              f"engine ramp {ramp:5.1%}  throughput {m.throughput:8.0f}  "
              f"rms speed error {m.rms_speed_error:.3f} m/s")
