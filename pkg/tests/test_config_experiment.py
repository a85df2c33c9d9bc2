import json
import os

import pytest

from conftest import make_scenario
from corsim.config import ConfigError, load_experiment
from corsim.experiment import aggregate, cell_dir, run_cell, run_matrix
from corsim.record import RunRecord


def test_default_config_matrix_size():
    exp = load_experiment("configs/default.yaml")
    cells = exp.matrix.cells()
    # 3 scenarios x 2 trajectory algorithms x 6 ranges x 5 seeds
    # + 3 scenarios x 2 baselines x 5 seeds
    assert len(cells) == 3 * 2 * 6 * 5 + 3 * 2 * 5 == 210


def test_empty_config_reports_errors(tmp_path):
    p = tmp_path / "empty.yaml"
    p.write_text("")
    with pytest.raises(ConfigError) as ei:
        load_experiment(str(p))
    msgs = ei.value.errors
    assert any("scenarios" in m for m in msgs)
    assert any("seeds" in m for m in msgs)


def test_unknown_keys_and_locations(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text(
        "schema: 1\nbananas: 1\nmatrix:\n  scenarios: [x]\n  strategies: [FA]\n"
        "  seeds: [1, 1]\n  sensing_ranges_ft: [-5]\n"
    )
    with pytest.raises(ConfigError) as ei:
        load_experiment(str(p))
    msgs = "\n".join(ei.value.errors)
    assert "bananas" in msgs
    assert "distinct" in msgs
    assert "-5" in msgs
    assert str(p) in msgs
    # all errors reported, not just the first
    assert len(ei.value.errors) >= 3


def _tiny_experiment(tmp_path, strategies="[FA]", ranges="[330]", seeds="[7]"):
    cdir = tmp_path / "configs"
    (cdir / "scenarios").mkdir(parents=True)
    (cdir / "plans").mkdir()
    import yaml

    sc = make_scenario(warmup=60.0, duration=240.0)
    demand = {mv.key(): rate for mv, rate in sc.demand.items()}
    fractions = {
        f"i{i}.{a.value}": {t.value: v for t, v in fr.items()}
        for (i, a), fr in sc.turn_fractions.items()
    }
    (cdir / "scenarios" / "tiny.yaml").write_text(
        yaml.safe_dump({"schema": 1, "name": "tiny", "demand": demand,
                        "turn_fractions": fractions})
    )
    (cdir / "exp.yaml").write_text(
        f"""
schema: 1
output_dir: {tmp_path}/out
run: {{warmup_s: 60, duration_s: 240}}
matrix:
  scenarios: [tiny]
  strategies: {strategies}
  sensing_ranges_ft: {ranges}
  seeds: {seeds}
paa: {{priority: false}}
"""
    )
    return str(cdir / "exp.yaml")


def test_single_cell_run_and_resume(tmp_path):
    cfg_path = _tiny_experiment(tmp_path)
    exp = load_experiment(cfg_path)
    summary = run_matrix(exp, jobs=1)
    assert summary["cells_ok"] == 1 and summary["cells_failed"] == 0
    out = summary["results"][0]["dir"]
    rec = RunRecord.load(out)
    digest1 = rec.digest()

    agg_files = sorted(os.listdir(exp.matrix.output_dir))
    blobs1 = {
        f: open(os.path.join(exp.matrix.output_dir, f), "rb").read()
        for f in agg_files
        if f.endswith(".csv") or f == "summary.json"
    }
    # rerun: no new simulation, byte-identical outputs
    exp2 = load_experiment(cfg_path)
    summary2 = run_matrix(exp2, jobs=1)
    assert summary2["cells_ok"] == 1
    assert RunRecord.load(out).digest() == digest1
    for f, blob in blobs1.items():
        assert open(os.path.join(exp.matrix.output_dir, f), "rb").read() == blob


def test_failed_cell_quarantined(tmp_path):
    # CA without a plan fixture fails that cell but not the matrix
    cfg_path = _tiny_experiment(tmp_path, strategies="[FA, CA]", ranges="[330]")
    exp = load_experiment(cfg_path)
    summary = run_matrix(exp, jobs=1)
    assert summary["cells_ok"] == 1
    assert summary["cells_failed"] == 1
    assert any("timing plan" in v for v in summary["failures"].values())


def test_seed_offset_changes_cells(tmp_path):
    cfg_path = _tiny_experiment(tmp_path)
    exp = load_experiment(cfg_path)
    run_matrix(exp, jobs=1, seed_offset=0)
    d0 = cell_dir(exp, "tiny", "FA", 0.0, 7)
    assert os.path.exists(d0)
    run_matrix(exp, jobs=1, seed_offset=1000)
    d1 = cell_dir(exp, "tiny", "FA", 0.0, 1007)
    assert os.path.exists(d1)


def test_record_roundtrip(tmp_path):
    cfg_path = _tiny_experiment(tmp_path)
    exp = load_experiment(cfg_path)
    run_cell(exp, "tiny", "FA", 0.0, 7)
    out = cell_dir(exp, "tiny", "FA", 0.0, 7)
    rec = RunRecord.load(out)
    assert rec.meta["entered"] == int(rec.meta["exited"]) + int(rec.meta["on_network"])
    assert len(rec.vehicle_events) > 0
    # schema rows present
    import gzip

    with gzip.open(os.path.join(out, "vehicles.csv.gz"), "rt") as fh:
        assert fh.readline().startswith("#schema,corsim.vehicles,")


def test_cli_oracle_and_exit_codes(tmp_path):
    from corsim.cli import main

    assert main(["oracle", "--instances", "3", "--seed", "2", "--t-max", "32"]) == 0
    # config error path
    bad = tmp_path / "nope.yaml"
    bad.write_text("schema: 1\n")
    assert main(["run", "--config", str(bad)]) == 1
