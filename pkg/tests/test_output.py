import csv

import numpy as np
import pytest

from hybrid_mpem.harness.cycles import bundled_cycle
from hybrid_mpem.harness.output import (
    SUMMARY_COLUMNS,
    read_tick_csv,
    write_campaign_csv,
    write_summary_csv,
    write_tick_csv,
)
from hybrid_mpem.harness.run import TICK_COLUMNS, TickLog, campaign, run_scenario


@pytest.fixture(scope="module")
def nycc_run(hev):
    return run_scenario(hev, bundled_cycle("nycc"))


def test_empty_log_is_header_only(tmp_path):
    p = write_tick_csv(TickLog().freeze(), tmp_path / "t.csv")
    assert p.read_text() == ",".join(TICK_COLUMNS) + "\n"
    assert len(read_tick_csv(p)) == 0


def test_header_matches_contract(tmp_path, nycc_run):
    p = write_tick_csv(nycc_run[1], tmp_path / "t.csv")
    assert p.read_text().splitlines()[0] == (
        "t_s,speed_mps,speed_ref_mps,p_d_w,p_e_w,p_b_w,soc,i_b_a,q_loss_ah,admm_iters,tracking_gap_w"
    )


def test_tick_round_trip(tmp_path, nycc_run):
    tl = nycc_run[1]
    back = read_tick_csv(write_tick_csv(tl, tmp_path / "t.csv"))
    for c in TICK_COLUMNS:
        assert back[c].tobytes() == tl[c].tobytes()
    assert back["admm_iters"].dtype.kind == "i"


def test_read_rejects_bad_files(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError, match="header"):
        read_tick_csv(p)
    p.write_text(",".join(TICK_COLUMNS) + "\n1,2\n")
    with pytest.raises(ValueError, match=":2:"):
        read_tick_csv(p)


def test_summary_rows(tmp_path, nycc_run):
    m = nycc_run[0]
    p = write_summary_csv([("hev", "nycc", m)] * 3, tmp_path / "s.csv")
    rows = list(csv.reader(p.open()))
    assert tuple(rows[0]) == SUMMARY_COLUMNS and "wall_time_s" not in rows[0]
    assert len(rows) == 4
    rec = dict(zip(rows[0], rows[1]))
    assert float(rec["capacity_loss_pct"]) == m.capacity_loss_pct
    assert rec["soc_clamped"] in ("0", "1")


def test_campaign_csv(tmp_path, hev):
    res = campaign(hev, [bundled_cycle("nycc")], runs=2, hours_per_run=1, gammas=[1.0, 100.0], seed=1)
    p = write_campaign_csv(res, tmp_path / "soh.csv")
    rows = list(csv.DictReader(p.open()))
    assert len(rows) == 4
    assert [float(r["gamma"]) for r in rows] == [1.0, 1.0, 100.0, 100.0]
    for r in rows:
        assert float(r["remaining_capacity_pct"]) + float(r["capacity_loss_pct"]) == pytest.approx(100.0)


def test_byte_stable(tmp_path, hev):
    tr = bundled_cycle("sc03")
    paths = []
    for k in range(2):
        m, tl = run_scenario(hev, tr)
        paths.append((write_tick_csv(tl, tmp_path / f"t{k}.csv"), write_summary_csv([("hev", tr.name, m)], tmp_path / f"s{k}.csv")))
    assert paths[0][0].read_bytes() == paths[1][0].read_bytes()
    assert paths[0][1].read_bytes() == paths[1][1].read_bytes()
