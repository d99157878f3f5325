import copy
import sys
from importlib import resources

import pytest

from hybrid_mpem.coordinator import balanced_rho
from hybrid_mpem.dynamics import AircraftModel, RoadModel, ShipModel
from hybrid_mpem.harness.scenario import BUNDLED_SCENARIOS, ScenarioError, bundled_scenario, load_scenario, scenario_from_dict

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def _doc(name="hev"):
    with resources.files("hybrid_mpem.data.scenarios").joinpath(f"{name}.toml").open("rb") as fh:
        return tomllib.load(fh)


def test_bundled_scenarios_load():
    kinds = {"hev": RoadModel, "dps": ShipModel, "hea": AircraftModel}
    for name in BUNDLED_SCENARIOS:
        scn = bundled_scenario(name)
        assert isinstance(scn.model(), kinds[name])
        assert scn.n_sub * scn.dt_sim == pytest.approx(scn.dt_mpc)


def test_hev_values(hev):
    assert hev.battery.q_min == 0.5 and hev.battery.q_max == 0.8
    assert hev.engine_node.p_max == 100e3 and hev.battery_node.p_max == 14e3
    assert hev.mpc.alpha == 1000.0 and hev.engine_node.beta == 1.0
    assert hev.n_sub == 1000


def test_rho_auto_and_gamma_override(hev):
    assert hev.rho_auto
    for g in (0.0, 1.0, 100.0):
        cfg = hev.with_gamma(g).coordinator_config()
        assert cfg.adaptive_rho and cfg.rho == balanced_rho(1.0, g)
    doc = _doc()
    doc["mpc"]["rho"] = 0.1
    fixed = scenario_from_dict(doc)
    assert not fixed.rho_auto and fixed.coordinator_config().rho == 0.1


@pytest.mark.parametrize(
    "mutate, match",
    [
        (lambda d: d["battery"].update(bogus=1.0), "unknown key"),
        (lambda d: d.update(extra={}), "unknown section"),
        (lambda d: d.pop("controller"), r"missing section \[controller\]"),
        (lambda d: d["battery_node"].update(q0=0.7), "run time"),
        (lambda d: d["engine_node"].update(p_prev_applied=0.0), "run time"),
        (lambda d: d["sim"].update(dt_mpc=1.0005), "integer multiple"),
        (lambda d: d["vehicle"].update(kind="train"), "kind"),
        (lambda d: d["sim"].update(q_init=0.9), "q_init"),
        (lambda d: d["battery"].update(Q_T=-1.0), r"\[battery\]"),
    ],
)
def test_invalid_scenarios(mutate, match):
    doc = copy.deepcopy(_doc())
    mutate(doc)
    with pytest.raises(ScenarioError, match=match):
        scenario_from_dict(doc)


def test_load_from_file(tmp_path):
    src = resources.files("hybrid_mpem.data.scenarios").joinpath("dps.toml").read_bytes()
    p = tmp_path / "ship.toml"
    p.write_bytes(src)
    scn = load_scenario(p)
    assert scn.name == "ship" and scn.vehicle_kind == "ship"
    p.write_text("[vehicle\n", encoding="utf-8")
    with pytest.raises(ScenarioError):
        load_scenario(p)


def test_with_sim(hev):
    assert hev.with_sim(dt_sim=0.002).n_sub == 500
    with pytest.raises(ScenarioError):
        hev.with_sim(dt_mpc=2.0)
