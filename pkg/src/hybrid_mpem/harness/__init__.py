"""Closed-loop simulation harness: cycles, scenarios, runs, sweeps, campaigns, CSV output."""

from .cycles import BUNDLED_CYCLES, CycleFormatError, CycleTrace, bundled_cycle, load_cycle, save_cycle
from .output import read_tick_csv, write_campaign_csv, write_summary_csv, write_tick_csv
from .run import (
    CampaignResult,
    RunMetrics,
    SimulationError,
    TickLog,
    campaign,
    gamma_sweep,
    hev_composite,
    random_cycle_sequence,
    run_scenario,
)
from .scenario import BUNDLED_SCENARIOS, Scenario, ScenarioError, bundled_scenario, load_scenario

__all__ = [
    "BUNDLED_CYCLES",
    "CycleFormatError",
    "CycleTrace",
    "bundled_cycle",
    "load_cycle",
    "save_cycle",
    "read_tick_csv",
    "write_campaign_csv",
    "write_summary_csv",
    "write_tick_csv",
    "CampaignResult",
    "RunMetrics",
    "SimulationError",
    "TickLog",
    "campaign",
    "gamma_sweep",
    "hev_composite",
    "random_cycle_sequence",
    "run_scenario",
    "BUNDLED_SCENARIOS",
    "Scenario",
    "ScenarioError",
    "bundled_scenario",
    "load_scenario",
]
