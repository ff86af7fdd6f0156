import csv
import json
import os
import subprocess
import sys

import pytest

from dpasim.cli import main
from dpasim.experiment import (
    RESULT_COLUMNS,
    SpecError,
    parse_spec,
    preset_spec,
    read_rows,
    run_experiment,
)


class TestParseSpec:
    def test_minimal_gets_defaults(self):
        spec = parse_spec('policy = "dpa"\nn_users = 2\n')
        b = spec.base
        assert spec.policies == ("dpa",)
        assert b.bad_channel_prob == (0.6, 0.6)
        assert (b.p_low, b.p_high) == (1.0, 2.0)
        assert b.deadline == (5, 5)
        assert b.penalty_weight == 60.0
        assert b.horizon == 100_000
        assert spec.seeds == tuple(range(10))

    def test_budget_above_p_high(self):
        with pytest.raises(SpecError) as exc:
            parse_spec("n_users = 2\npower_budget = 3\n")
        assert exc.value.field == "power_budget"

    def test_sweep_budget_above_p_high(self):
        with pytest.raises(SpecError) as exc:
            parse_spec("n_users = 2\nsweep.power_budget = [0.5, 3]\n")
        assert "power_budget" in exc.value.field

    def test_v_sweep(self):
        spec = parse_spec("n_users = 2\nsweep.V = [1, 5, 10, 20, 40, 60]\n")
        assert len(spec.points()) == 6
        assert spec.config_for(spec.points()[2], 0).penalty_weight == 10.0

    def test_axis_order_follows_file(self):
        spec = parse_spec("n_users = 1\nsweep.power_budget = [0.7, 0.8]\nsweep.V = [1, 2]\n")
        assert list(spec.sweep) == ["power_budget", "V"]
        assert spec.points()[:2] == [{"power_budget": 0.7, "V": 1.0},
                                     {"power_budget": 0.7, "V": 2.0}]

    @pytest.mark.parametrize("text, field", [
        ("n_users = 2\nseeds = []\n", "seeds"),
        ("n_users = 2\npolicy = \"lottery\"\n", "policy"),
        ("n_users = 2\ncolour = 1\n", "colour"),
        ("policy = \"dpa\"\n", "n_users"),
        ("n_users = 2\nsweep.deadline = [1]\n", "sweep.deadline"),
        ("n_users = 2\nsweep.V = []\n", "sweep.V"),
        ("n_users = 1\npolicy = \"fixed\"\nhorizon = 2\ntrace = [[0]]\n", "trace"),
        ("n_users = = 2\n", "<syntax>"),
    ])
    def test_errors(self, text, field):
        with pytest.raises(SpecError) as exc:
            parse_spec(text)
        assert exc.value.field == field

    def test_per_user_values_and_seed_list(self):
        spec = parse_spec("n_users = 2\narrival_prob = [0.3, 0.5]\nseeds = [5, 3]\nV = 7\n")
        assert spec.base.arrival_prob == (0.3, 0.5)
        assert spec.seeds == (3, 5)
        assert spec.base.penalty_weight == 7.0


SMALL = """
policy = ["dpa", "edf"]
n_users = 2
horizon = 2000
seeds = [2, 1]
sweep.V = [1, 60]
sweep.arrival_prob = [0.3, 0.6]
"""


class TestRunExperiment:
    def test_row_order_and_count(self):
        rows = run_experiment(parse_spec(SMALL))
        assert len(rows) == 2 * 2 * 2 * 2 * 2
        keys = [(r.policy, r.V, r.arrival_prob, r.seed, r.user) for r in rows]
        expected = [(p, v, lam, s, u) for p in ("dpa", "edf") for v in (1.0, 60.0)
                    for lam in (0.3, 0.6) for s in (1, 2) for u in (1, 2)]
        assert keys == expected

    def test_deterministic_and_parallel_consistent(self, tmp_path):
        spec = parse_spec(SMALL)
        a = run_experiment(spec, out_dir=str(tmp_path / "a"), timing=False)
        b = run_experiment(spec, out_dir=str(tmp_path / "b"), workers=2, timing=False)
        assert a == b
        assert (tmp_path / "a" / "results.csv").read_bytes() == \
            (tmp_path / "b" / "results.csv").read_bytes()

    def test_csv_schema(self, tmp_path):
        run_experiment(parse_spec(SMALL), out_dir=str(tmp_path))
        with open(tmp_path / "results.csv") as fh:
            header = next(csv.reader(fh))
        assert tuple(header) == RESULT_COLUMNS
        rows = read_rows(tmp_path / "results.csv")
        for r in rows:
            assert float(r["avg_power"]) <= float(r["power_budget"]) + float(r["x_over_t"]) + 1e-9
            assert int(r["slots"]) == 2000
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["schema_version"] == 1
        assert manifest["columns"] == list(RESULT_COLUMNS)

    def test_timeseries_files(self, tmp_path):
        spec = parse_spec("n_users = 2\nhorizon = 300\nseeds = 2\ntimeseries = true\nstride = 10\n"
                          "sweep.V = [1, 60]\n")
        run_experiment(spec, out_dir=str(tmp_path))
        names = sorted(p for p in os.listdir(tmp_path) if p.startswith("ts_"))
        assert names == ["ts_dpa_V=1_seed=0.csv", "ts_dpa_V=60_seed=0.csv"]
        with open(tmp_path / names[0]) as fh:
            rows = list(csv.DictReader(fh))
        assert list(rows[0]) == ["t", "user", "p_bar", "d_bar", "x"]
        assert len(rows) == 30 * 2

    def test_fixed_policy(self):
        spec = parse_spec("n_users = 1\npolicy = \"fixed\"\nhorizon = 3\nseeds = 1\n"
                          "bad_channel_prob = 1.0\ntrace = [[2], [0], [2]]\npower_budget = 2\n")
        rows = run_experiment(spec)
        assert rows[0].avg_power == pytest.approx(4 / 3)

    def test_presets(self):
        fig1 = preset_spec("fig1", horizon=100, seeds=2)
        assert fig1.sweep == {"V": (1.0, 5.0, 10.0, 20.0, 40.0, 60.0)}
        assert fig1.base.power_budget == (0.6, 0.6) and fig1.base.arrival_prob == (0.4, 0.4)
        fig45 = preset_spec("fig45", horizon=100, seeds=2)
        assert fig45.policies == ("dpa", "edf")
        assert fig45.sweep["power_budget"] == (0.7, 0.8)
        assert len(fig45.sweep["arrival_prob"]) == 9
        assert fig45.base.penalty_weight == 60.0


class TestCli:
    def test_run(self, tmp_path, capsys):
        spec = tmp_path / "spec.toml"
        spec.write_text(SMALL)
        assert main(["run", str(spec), "--out", str(tmp_path / "out")]) == 0
        assert (tmp_path / "out" / "results.csv").exists()

    def test_invalid_spec_exit_1(self, tmp_path):
        spec = tmp_path / "spec.toml"
        spec.write_text("n_users = 2\npower_budget = 3\n")
        assert main(["run", str(spec)]) == 1

    def test_missing_file_exit_3(self, tmp_path):
        assert main(["run", str(tmp_path / "nope.toml")]) == 3

    def test_table1_preset(self, tmp_path, capsys):
        assert main(["preset", "table1", "--out", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert "omega_1: drops=1 avg_power=0.3333 per_transmission=1.0000" in out
        assert "omega_2: drops=0 avg_power=1.0000 per_transmission=1.5000" in out
        rows = read_rows(tmp_path / "table1.csv")
        assert [r["d"] for r in rows] == ["1", "2", "empty", "1", "2", "1"]

    def test_fig1_preset_small(self, tmp_path):
        assert main(["preset", "fig1", "--out", str(tmp_path), "--slots", "500",
                     "--seeds", "2"]) == 0
        assert len(read_rows(tmp_path / "results.csv")) == 6 * 2 * 2

    def test_verify_passes(self, capsys):
        assert main(["verify", "--views", "500", "--slots", "2000"]) == 0
        assert capsys.readouterr().out.count("PASS") == 5

    def test_verify_detects_injected_fault(self, capsys):
        assert main(["verify", "--views", "2000", "--slots", "500",
                     "--inject-fault", "tie-rule"]) == 2
        assert "FAIL  oracle-equivalence" in capsys.readouterr().out

    def test_version(self, capsys):
        assert main(["version"]) == 0
        assert "PCG64" in capsys.readouterr().out

    def test_module_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "dpasim", "version"],
                              capture_output=True, text=True)
        assert proc.returncode == 0 and proc.stdout.startswith("dpasim ")
