import csv
import json
import subprocess
import sys

import pytest

from _models import line_mission
from rendezvous_cmdp.cli import EXIT_INFEASIBLE, EXIT_INVALID, EXIT_IO, main


@pytest.fixture(scope="module")
def mission(tmp_path_factory):
    path = tmp_path_factory.mktemp("m") / "bench.toml"
    assert main(["gen-benchmark", "--nodes", "6", "--out", str(path)]) == 0
    text = path.read_text().replace("energy_samples = 10000", "energy_samples = 2000")
    path.write_text(text)
    return path


def read_csv(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def test_gen_benchmark_is_reproducible(tmp_path):
    a, b = tmp_path / "a.toml", tmp_path / "b.toml"
    main(["gen-benchmark", "--out", str(a)])
    main(["gen-benchmark", "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_plan_and_simulate(tmp_path, mission, capsys):
    pol = tmp_path / "p.json"
    assert main(["plan", "--mission", str(mission), "--delta", "0.1", "--out", str(pol)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["risk"] <= 0.1 + 1e-8 and summary["states"] > 0
    doc = json.loads(pol.read_text())
    assert doc["delta"] == 0.1 and doc["states"]
    rep = tmp_path / "r.json"
    args = ["simulate", "--mission", str(mission), "--delta", "0.1", "--policy", str(pol),
            "--trials", "200", "--seed", "4", "--out", str(rep)]
    assert main(args) == 0
    out = json.loads(rep.read_text())
    assert out["report"]["trials"] == 200 and out["seed"] == 4
    assert out["mission_hash"] and out["tool_version"]


def test_outputs_are_byte_identical(tmp_path, mission):
    def run(tag, jobs):
        pol, rep = tmp_path / f"p{tag}.json", tmp_path / f"r{tag}.json"
        main(["plan", "--mission", str(mission), "--jobs", str(jobs), "--out", str(pol)])
        main(["simulate", "--mission", str(mission), "--policy", str(pol), "--trials", "120",
              "--jobs", str(jobs), "--out", str(rep)])
        return pol.read_bytes(), rep.read_bytes()

    assert run("a", 1) == run("b", 1) == run("c", 3)


def test_pareto(tmp_path, mission):
    out = tmp_path / "pareto.csv"
    assert main(["pareto", "--mission", str(mission), "--delta", "0.05,0.1,0.2", "--trials", "100",
                 "--out", str(out)]) == 0
    rows = read_csv(out)
    assert [float(r["delta"]) for r in rows] == [0.05, 0.1, 0.2]
    objs = [float(r["lp_objective_s"]) for r in rows]
    assert objs == sorted(objs, reverse=True)
    assert out.read_text().startswith("# tool_version=")


def test_baseline(tmp_path, mission):
    out = tmp_path / "base.csv"
    assert main(["baseline", "--mission", str(mission), "--trials", "100", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert [r["policy"] for r in rows] == ["greedy-40", "greedy-50", "greedy-60", "greedy-70", "cmdp"]


def test_export_lp(tmp_path, mission):
    lp, dump = tmp_path / "m.lp", tmp_path / "m.txt"
    assert main(["export-lp", "--mission", str(mission), "--out", str(lp), "--model-dump", str(dump)]) == 0
    text = lp.read_text()
    assert "Minimize" in text and "Subject To" in text and text.rstrip().endswith("End")
    assert dump.read_text().startswith("# cmdp v1")


def test_invalid_input_exit_code(tmp_path, mission, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text(mission.read_text().replace("v_be = 9.8", "v_be = 15.0"))
    assert main(["plan", "--mission", str(bad), "--out", str(tmp_path / "p.json")]) == EXIT_INVALID
    assert "v_be" in capsys.readouterr().err
    assert main(["plan", "--mission", str(mission), "--delta", "1.5",
                 "--out", str(tmp_path / "p.json")]) == EXIT_INVALID


def test_infeasible_exit_code(tmp_path, capsys):
    path = tmp_path / "long.toml"
    line_mission([(0, 0), (20_000, 0)], road_x=(0.0, 1000.0), ugv_route=(0, 1)).write(path)
    code = main(["plan", "--mission", str(path), "--delta", "0.01", "--out", str(tmp_path / "p.json")])
    assert code == EXIT_INFEASIBLE
    assert "least risky policy" in capsys.readouterr().err
    assert not (tmp_path / "p.json").exists()


def test_io_exit_codes(tmp_path, mission):
    assert main(["plan", "--mission", str(tmp_path / "missing.toml"), "--out", str(tmp_path / "p")]) == EXIT_IO
    assert main(["plan", "--mission", str(mission), "--out", str(tmp_path / "no" / "dir" / "p")]) == EXIT_IO


def test_bad_trials_is_usage_error(mission, tmp_path):
    with pytest.raises(SystemExit) as err:
        main(["simulate", "--mission", str(mission), "--policy", "x", "--trials", "0", "--out", str(tmp_path / "r")])
    assert err.value.code == 2


def test_console_entry_point(tmp_path):
    out = tmp_path / "b.toml"
    res = subprocess.run([sys.executable, "-m", "rendezvous_cmdp.cli", "gen-benchmark", "--nodes", "4",
                          "--out", str(out)], capture_output=True, text=True)
    assert res.returncode == 0 and out.exists()
