import csv
import math

import pytest

from rhwsim.cli import main
from rhwsim.config import SimConfig, serialize_config
from rhwsim.io import (
    EVENT_COLUMNS,
    SPACETIME_COLUMNS,
    SUMMARY_COLUMNS,
    TRAJ_COLUMNS,
    OutputError,
    emit_outputs,
    format_row,
)
from rhwsim.oracle import recompute
from rhwsim.scenarios import (
    SWEEP_COLUMNS,
    ScenarioSpec,
    mean_row,
    parse_seeds,
    run_sweep,
    table4_grid,
)
from rhwsim.sim import run

SMALL = SimConfig().with_overrides(
    demand={"horizon": 150.0, "rate": 2000.0, "penetration": 0.5, "seed": 3},
    hazard={"depart_time": 5.0, "trigger_position": 1200.0},
)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    res = run(SMALL, trajectory_path=out / "trajectory.csv")
    files = emit_outputs(res, out, scenario_id=7)
    return res, files


def test_output_schemas(small_run):
    res, files = small_run
    assert tuple(read_csv(files["trajectory"])[0]) == TRAJ_COLUMNS
    assert tuple(read_csv(files["events"])[0]) == EVENT_COLUMNS
    assert tuple(read_csv(files["summary"])[0]) == SUMMARY_COLUMNS
    assert tuple(read_csv(files["spacetime"])[0]) == SPACETIME_COLUMNS
    for name, path in files.items():
        text = path.read_text()
        assert text.endswith("\n"), name
        width = len(text.splitlines()[0].split(","))
        assert all(len(r) == width for r in read_csv(path)), name


def test_summary_matches_result(small_run):
    res, files = small_run
    row = dict(zip(*read_csv(files["summary"])))
    assert row["scenario_id"] == "7" and row["seed"] == "3"
    assert int(row["crashes"]) == len(res.crash_events)
    assert float(row["flow_vph"]) == pytest.approx(res.report.flow, abs=1e-6)


def test_trajectory_zone_labels(small_run):
    _, files = small_run
    zones = {r[6] for r in read_csv(files["trajectory"])[1:]}
    assert zones <= {"Standard", "Safe", "Dangerous", "NearCrash"}


def test_oracle_matches_in_run_tit(small_run):
    res, files = small_run
    rep = recompute(files["trajectory"], crash_time=res.report.tit_anchor)
    assert rep.tit == pytest.approx(res.report.tit, rel=1e-9, abs=1e-12)
    assert rep.critical_ttc_events == res.report.critical_ttc_events
    assert rep.critical_drac_events == res.report.critical_drac_events
    if not math.isnan(res.report.min_ttc):
        assert rep.min_ttc == pytest.approx(res.report.min_ttc, rel=1e-9)


def test_format_row_types():
    row = {"scenario_id": 1, "penetration": 0.5, "seed": "mean", "tit": math.nan}
    assert format_row(row, ("scenario_id", "penetration", "seed", "tit")) == "1,0.500000,mean,\n"


def test_unwritable_output_dir(tmp_path, small_run):
    res, _ = small_run
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OutputError, match=str(blocker)):
        emit_outputs(res, blocker / "sub")


# -- scenarios ----------------------------------------------------------------

def test_grid_has_17_scenarios():
    g = table4_grid((0, 1))
    assert len(g) == 17 and g[0].penetration == 0.0
    assert {(s.penetration, s.scr_factor) for s in g[1:]} == {
        (p, f) for p in (0.25, 0.5, 0.75, 1.0) for f in (0.5, 0.75, 0.85, 1.0)}
    assert [s.scenario_id for s in g] == list(range(1, 18))


def test_parse_seeds():
    assert parse_seeds("1,2,5-7") == (1, 2, 5, 6, 7)
    for bad in ("", "3-1", "x"):
        with pytest.raises(ValueError):
            parse_seeds(bad)


def test_spec_validation():
    with pytest.raises(ValueError):
        ScenarioSpec(1, 1.5, 0.5)
    with pytest.raises(ValueError):
        ScenarioSpec(1, 0.5, 0.0)


def test_mean_row_skips_failures():
    spec = ScenarioSpec(3, 0.5, 0.5, (0, 1, 2))
    rows = [{"tit": 1.0, "crashes": 2, "flow_vph": 900.0, "min_ttc_s": 0.5, "ttc_events": 4,
             "drac_events": 1, "error": ""},
            {"tit": 3.0, "crashes": 4, "flow_vph": 1000.0, "min_ttc_s": math.nan,
             "ttc_events": 6, "drac_events": 3, "error": ""},
            {"error": "boom"}]
    m = mean_row(spec, rows)
    assert m["seed"] == "mean" and m["error"] == "1 failed"
    assert m["tit"] == 2.0 and m["crashes"] == 3.0 and m["min_ttc_s"] == 0.5


def test_sweep_rows_and_file(tmp_path):
    specs = [ScenarioSpec(1, 0.0, 1.0, (0, 1)), ScenarioSpec(2, 1.0, 0.5, (0,))]
    base = SMALL.with_overrides(demand={"horizon": 60.0})
    rows = run_sweep(base, specs, tmp_path, jobs=1)
    assert [(r["scenario_id"], r["seed"]) for r in rows] == [
        (1, 0), (1, 1), (2, 0), (1, "mean"), (2, "mean")]
    table = read_csv(tmp_path / "summary.csv")
    assert tuple(table[0]) == SWEEP_COLUMNS and len(table) == 6
    # a sweep row equals a standalone run of the same scenario and seed
    alone = run(specs[0].config_for(base, 1))
    assert rows[1]["flow_vph"] == alone.report.flow and rows[1]["tit"] == alone.report.tit


# -- CLI ----------------------------------------------------------------------

@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "small.ini"
    p.write_text(serialize_config(SMALL.with_overrides(demand={"horizon": 60.0})))
    return p


def test_cli_run(tmp_path, cfg_file, capsys):
    assert main(["run", "--config", str(cfg_file), "--seed", "2",
                 "--out", str(tmp_path / "o"), "--traj"]) == 0
    assert (tmp_path / "o" / "trajectory.csv").is_file()
    assert (tmp_path / "o" / "summary.csv").is_file()
    assert "seed=2" in capsys.readouterr().out


def test_cli_invalid_config_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[road]\nlane_count = 0\n")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert "road.lane_count" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.ini"), "--out", "x"]) == 1
    assert main(["bogus"]) == 1
    assert main(["sweep", "--seeds", "3-1", "--out", str(tmp_path)]) == 1


def test_cli_output_failure_exit_2(tmp_path, cfg_file):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["run", "--config", str(cfg_file), "--out", str(blocker / "o")]) == 2


def test_cli_ssm(tmp_path, small_run, capsys):
    res, files = small_run
    assert main(["ssm", "--traj", str(files["trajectory"])]) == 0
    out = dict(line.split("=", 1) for line in capsys.readouterr().out.split())
    assert float(out["tit"]) == pytest.approx(res.report.tit, rel=1e-9, abs=1e-12)
    assert main(["ssm", "--traj", str(tmp_path / "none.csv")]) == 1
    assert main(["ssm", "--traj", str(files["trajectory"]), "--ttc-star", "-1"]) == 1


def test_cli_sweep(tmp_path, cfg_file, capsys):
    assert main(["sweep", "--config", str(cfg_file), "--seeds", "0-1",
                 "--out", str(tmp_path / "sw")]) == 0
    table = read_csv(tmp_path / "sw" / "summary.csv")
    assert len(table) == 4 and table[-1][3] == "mean"
