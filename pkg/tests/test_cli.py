import csv
import json
from pathlib import Path

import pytest

from dlsim.cli import main
from dlsim.config import ConfigError, load_config, parse_config
from dlsim.experiments import SCHEMAS, check_csv

DATA = Path(__file__).parent / "data"
GOLDEN = Path(__file__).parent / "golden"
BAD = DATA / "bad_configs"
EXPECTED = json.loads((BAD / "expected.json").read_text())


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_simulate_two_designs(tmp_path, capsys):
    code = main(
        [
            "simulate",
            "--workload",
            "vgg_e",
            "--design",
            "dc,mc_ring_bw",
            "--parallelism",
            "data",
            "--output",
            str(tmp_path),
        ]
    )
    assert code == 0
    rows = read_rows(tmp_path / "results.csv")
    assert [r["design"] for r in rows] == ["dc", "mc_ring_bw"]
    assert float(rows[0]["speedupVsDC"]) == 1.0
    assert float(rows[1]["speedupVsDC"]) > 1.0
    assert check_csv((tmp_path / "results.csv").read_text(), "results") == []
    assert json.loads((tmp_path / "results.json").read_text())[1]["design"] == "mc_ring_bw"
    assert "mc_ring_bw" in capsys.readouterr().out


def test_dc_baseline_runs_hidden_when_not_requested(tmp_path):
    assert main(["simulate", "--workload", "alexnet", "--design", "mc_ring_bw", "--output", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "results.csv")
    assert [r["design"] for r in rows] == ["mc_ring_bw"]
    assert float(rows[0]["speedupVsDC"]) > 1.0


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("DLSIM_OUTPUT_DIR", str(tmp_path / "env-out"))
    assert main(["simulate", "--workload", "alexnet", "--design", "dc"]) == 0
    assert (tmp_path / "env-out" / "results.csv").exists()


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "exp.json"
    cfg.write_text(
        json.dumps({"workloads": ["alexnet"], "designs": ["dc"], "batchSize": 256, "output": str(tmp_path / "a")})
    )
    assert main(["simulate", "--config", str(cfg), "--batch-size", "128", "--output", str(tmp_path / "b")]) == 0
    assert not (tmp_path / "a").exists()
    assert read_rows(tmp_path / "b" / "results.csv")[0]["batch"] == "128"


def test_sweep_from_flags_and_trace(tmp_path):
    code = main(
        [
            "simulate",
            "--workload",
            "alexnet",
            "--design",
            "mc_ring_bw",
            "--sweep-parameter",
            "batchSize",
            "--sweep-values",
            "64,128",
            "--trace",
            "--output",
            str(tmp_path),
        ]
    )
    assert code == 0
    rows = read_rows(tmp_path / "results.csv")
    assert [r["point"] for r in rows] == ["batchSize=64", "batchSize=128"]
    assert sorted(p.name for p in tmp_path.glob("*.events.tsv")) == [
        "alexnet_mc_ring_bw_data_batchSize-128.events.tsv",
        "alexnet_mc_ring_bw_data_batchSize-64.events.tsv",
    ]


def test_parallel_jobs_write_identical_output(tmp_path):
    args = ["simulate", "--workload", "alexnet,vgg_e", "--design", "dc,hc,mc_ring_bw", "--parallelism", "data,model"]
    assert main(args + ["--output", str(tmp_path / "serial")]) == 0
    assert main(args + ["--jobs", "3", "--output", str(tmp_path / "par")]) == 0
    for name in ("results.csv", "results.json"):
        assert (tmp_path / "serial" / name).read_bytes() == (tmp_path / "par" / name).read_bytes()


def test_failed_point_exits_two(tmp_path, capsys):
    cfg = tmp_path / "tiny.json"
    cfg.write_text(
        json.dumps({"workloads": ["vgg_e"], "designs": ["mc_ring_bw"], "device": {"localMemCapacityBytes": 1e9}})
    )
    assert main(["simulate", "--config", str(cfg), "--output", str(tmp_path / "out")]) == 2
    row = read_rows(tmp_path / "out" / "results.csv")[-1]
    assert "InfeasibleWorkloadError" in row["error"]
    assert "points failed" in capsys.readouterr().err


def test_usage_error_exits_one(capsys):
    with pytest.raises(SystemExit) as err:
        main(["simulate", "--batch-size", "many"])
    assert err.value.code == 1


def test_unknown_design_flag_exits_one(capsys):
    assert main(["simulate", "--workload", "alexnet", "--design", "torus"]) == 1
    assert "designs.0" in capsys.readouterr().err


def test_validate_good_config(tmp_path, capsys):
    cfg = tmp_path / "ok.json"
    cfg.write_text(
        json.dumps({"workloads": ["vgg_e", "alexnet"], "designs": ["dc", "hc"], "parallelism": ["data", "model"]})
    )
    assert main(["validate", str(cfg)]) == 0
    assert "8 runs" in capsys.readouterr().out


@pytest.mark.parametrize("name", sorted(EXPECTED))
def test_bad_config_names_the_field(name, capsys):
    assert main(["validate", str(BAD / name)]) == 1
    err = capsys.readouterr().err
    assert f"config error: {EXPECTED[name]}:" in err


def test_bad_config_corpus_is_complete():
    on_disk = {p.name for p in BAD.glob("*.json")} - {"expected.json"}
    assert on_disk == set(EXPECTED)
    assert len(on_disk) >= 10


def test_all_problems_reported_together():
    with pytest.raises(ConfigError) as err:
        parse_config({"workloads": ["vgg_e"], "batchSize": 0, "jobs": 0, "designs": ["x"]})
    paths = sorted(p.split(":")[0] for p in err.value.problems)
    assert paths == ["batchSize", "designs.0", "jobs"]


def test_policy_override_picks_ring_variant(tmp_path):
    cfg = parse_config({"workloads": ["alexnet"], "designs": ["mc_ring_bw", "dc"], "policy": "LOCAL"})
    assert [d.value for d in cfg.resolved_designs()] == ["mc_ring_local", "dc"]


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError) as err:
        load_config(tmp_path / "nope.json")
    assert err.value.problems[0].startswith("<file>:")


def test_dump_topology(capsys):
    assert main(["dump-topology", "mc_ring_bw"]) == 0
    assert capsys.readouterr().out == (GOLDEN / "topology_mc_ring_bw.txt").read_text()


def test_dump_topology_bad_count(capsys):
    assert main(["dump-topology", "mc_ring_bw", "--device-count", "7"]) == 1


def test_reproduce_table4_matches_golden(tmp_path):
    assert main(["reproduce", "table4", "--output", str(tmp_path)]) == 0
    assert (tmp_path / "table4.csv").read_text() == (GOLDEN / "table4.csv").read_text()
    assert check_csv((tmp_path / "table4_deltas.csv").read_text(), "table4_deltas") == []


def test_schema_checker_flags_problems():
    assert set(SCHEMAS) >= {"results", "table4"}
    assert check_csv("module,dimm_tdp_w\nx,1\n", "table4") != []
