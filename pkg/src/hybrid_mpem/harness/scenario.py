"""Scenario files (TOML) and the validated in-memory ``Scenario``."""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from ..coordinator import CoordinatorConfig, EngineNodeConfig, balanced_rho
from ..dynamics import AircraftModel, AircraftParams, RoadModel, RoadParams, ShipModel, ShipParams
from ..ess import BatteryParams, DegradationParams

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

__all__ = [
    "ScenarioError",
    "BatteryNodeLimits",
    "Scenario",
    "load_scenario",
    "scenario_from_dict",
    "bundled_scenario",
    "BUNDLED_SCENARIOS",
]

BUNDLED_SCENARIOS = ("hev", "dps", "hea")

_SECTIONS = ("vehicle", "battery", "degradation", "controller", "mpc", "engine_node", "battery_node", "sim")
_VEHICLE = {
    "road": (RoadParams, RoadModel),
    "ship": (ShipParams, ShipModel),
    "aircraft": (AircraftParams, AircraftModel),
}
# filled in each MPC tick, never read from a file
_RUNTIME_FIELDS = {
    "engine_node": {"p_prev_applied"},
    "battery_node": {"kappa", "q0", "q_min", "q_max", "p_prev_applied"},
}


class ScenarioError(ValueError):
    """Invalid scenario file or values."""


@dataclass(frozen=True)
class BatteryNodeLimits:
    gamma: float
    p_min: float
    p_max: float
    ramp_b: float

    def __post_init__(self):
        if not self.gamma >= 0:
            raise ValueError("gamma must be non-negative")
        if not self.p_min < 0 < self.p_max:
            raise ValueError("battery needs p_min < 0 < p_max")
        if not self.ramp_b > 0:
            raise ValueError("ramp_b must be positive")


@dataclass(frozen=True)
class Scenario:
    name: str
    vehicle_kind: str
    vehicle: object
    battery: BatteryParams
    degradation: DegradationParams
    k1: float
    gamma1: float
    mpc: CoordinatorConfig
    rho_auto: bool
    engine_node: EngineNodeConfig
    battery_node: BatteryNodeLimits
    dt_sim: float
    dt_mpc: float
    q_init: float
    seed: int

    def __post_init__(self):
        if not (self.dt_sim > 0 and self.dt_mpc > 0):
            raise ScenarioError("dt_sim and dt_mpc must be positive")
        ratio = self.dt_mpc / self.dt_sim
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise ScenarioError(f"dt_mpc={self.dt_mpc} is not an integer multiple of dt_sim={self.dt_sim}")
        if not self.battery.q_min <= self.q_init <= self.battery.q_max:
            raise ScenarioError(f"q_init={self.q_init} outside [{self.battery.q_min}, {self.battery.q_max}]")
        if not (self.k1 > 0 and self.gamma1 >= 0):
            raise ScenarioError("controller needs k1 > 0 and gamma1 >= 0")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ScenarioError("seed must be a non-negative integer")

    @property
    def n_sub(self) -> int:
        return int(round(self.dt_mpc / self.dt_sim))

    def model(self):
        return _VEHICLE[self.vehicle_kind][1](self.vehicle)

    def coordinator_config(self) -> CoordinatorConfig:
        if self.rho_auto:
            return replace(self.mpc, rho=balanced_rho(self.engine_node.beta, self.battery_node.gamma), adaptive_rho=True)
        return self.mpc

    def with_gamma(self, gamma: float) -> "Scenario":
        return replace(self, battery_node=replace(self.battery_node, gamma=float(gamma)))

    def with_sim(self, **kw) -> "Scenario":
        """Copy with any of dt_sim, q_init, seed replaced (dt_mpc stays fixed)."""
        bad = set(kw) - {"dt_sim", "q_init", "seed"}
        if bad:
            raise ScenarioError(f"cannot override {sorted(bad)}")
        return replace(self, **kw)


def _section(doc, name, source):
    sec = doc.get(name)
    if not isinstance(sec, dict):
        raise ScenarioError(f"{source}: missing section [{name}]")
    return dict(sec)


def _build(cls, fields, section, source, skip=()):
    known = set(cls.__dataclass_fields__) - set(skip)
    derived = _RUNTIME_FIELDS.get(section, set())
    for key in fields:
        if key in derived:
            raise ScenarioError(f"{source}: [{section}] {key} is set at run time and may not appear in the file")
        if key not in known:
            raise ScenarioError(f"{source}: unknown key [{section}] {key}")
    try:
        return cls(**fields)
    except TypeError as exc:
        raise ScenarioError(f"{source}: [{section}] {exc}") from None
    except ValueError as exc:
        raise ScenarioError(f"{source}: [{section}] {exc}") from None


def scenario_from_dict(doc: dict, source: str = "<scenario>", name: str = "scenario") -> Scenario:
    unknown = set(doc) - set(_SECTIONS)
    if unknown:
        raise ScenarioError(f"{source}: unknown section(s) {sorted(unknown)}")
    veh = _section(doc, "vehicle", source)
    kind = veh.pop("kind", None)
    if kind not in _VEHICLE:
        raise ScenarioError(f"{source}: [vehicle] kind must be one of {sorted(_VEHICLE)}, got {kind!r}")
    if kind == "ship":
        for key in ("Mbar", "D", "K"):
            if key in veh:
                veh[key] = np.asarray(veh[key], dtype=float)
    vehicle = _build(_VEHICLE[kind][0], veh, "vehicle", source)

    battery = _build(BatteryParams, _section(doc, "battery", source), "battery", source)
    degradation = _build(DegradationParams, _section(doc, "degradation", source), "degradation", source)

    ctl = _section(doc, "controller", source)
    extra = set(ctl) - {"k1", "gamma1"}
    if extra:
        raise ScenarioError(f"{source}: unknown key(s) in [controller]: {sorted(extra)}")
    if "k1" not in ctl or "gamma1" not in ctl:
        raise ScenarioError(f"{source}: [controller] needs k1 and gamma1")

    sim = _section(doc, "sim", source)
    extra = set(sim) - {"dt_sim", "dt_mpc", "q_init", "seed"}
    if extra:
        raise ScenarioError(f"{source}: unknown key(s) in [sim]: {sorted(extra)}")
    for key in ("dt_sim", "dt_mpc", "q_init"):
        if key not in sim:
            raise ScenarioError(f"{source}: [sim] needs {key}")

    mpc = _section(doc, "mpc", source)
    rho_auto = mpc.get("rho") == "auto"
    if rho_auto:
        mpc["rho"] = 1.0  # placeholder, resolved per gamma
    if "Ts" in mpc and not math.isclose(mpc["Ts"], sim["dt_mpc"]):
        raise ScenarioError(f"{source}: [mpc] Ts={mpc['Ts']} differs from [sim] dt_mpc={sim['dt_mpc']}")
    mpc["Ts"] = float(sim["dt_mpc"])
    coord = _build(CoordinatorConfig, mpc, "mpc", source)

    engine = _build(EngineNodeConfig, _section(doc, "engine_node", source), "engine_node", source)
    bnode = _section(doc, "battery_node", source)
    for key in bnode:
        if key in _RUNTIME_FIELDS["battery_node"]:
            raise ScenarioError(f"{source}: [battery_node] {key} is set at run time and may not appear in the file")
    limits = _build(BatteryNodeLimits, bnode, "battery_node", source)

    try:
        return Scenario(
            name=name,
            vehicle_kind=kind,
            vehicle=vehicle,
            battery=battery,
            degradation=degradation,
            k1=float(ctl["k1"]),
            gamma1=float(ctl["gamma1"]),
            mpc=coord,
            rho_auto=rho_auto,
            engine_node=engine,
            battery_node=limits,
            dt_sim=float(sim["dt_sim"]),
            dt_mpc=float(sim["dt_mpc"]),
            q_init=float(sim["q_init"]),
            seed=int(sim.get("seed", 0)),
        )
    except ScenarioError as exc:
        raise ScenarioError(f"{source}: {exc}") from None


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    return scenario_from_dict(doc, str(path), path.stem)


def bundled_scenario(name: str) -> Scenario:
    """One of the bundled scenarios: hev, dps, hea."""
    if name not in BUNDLED_SCENARIOS:
        raise KeyError(f"unknown bundled scenario {name!r}; choose from {BUNDLED_SCENARIOS}")
    ref = resources.files("hybrid_mpem.data.scenarios").joinpath(f"{name}.toml")
    with ref.open("rb") as fh:
        doc = tomllib.load(fh)
    return scenario_from_dict(doc, f"<bundled {name}>", name)
