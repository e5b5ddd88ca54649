import filecmp
from pathlib import Path

import pytest

from qdtlc.cli import (
    EXIT_CONFIG,
    ConfigError,
    build_parser,
    emit_config,
    load_config,
    main,
    parse_config_text,
)
from qdtlc.experiments import SCENARIOS

MINI = """
[arrivals]
mean_interarrival_1 = 2
mean_interarrival_2 = 6

[service]
discharge_rate = 1

[thresholds]
s1 = 3
s2 = 4

[cycles]
min_green_1 = 10
max_green_1 = 30
min_green_2 = 10
max_green_2 = 30

[run]
stop_switches = 60
seed = 9
"""


class TestConfigParsing:
    def test_minimal_config(self):
        rc = parse_config_text(MINI)
        assert rc.sim.thresholds.s1 == 3.0
        assert rc.sim.stop_switches == 60
        assert rc.sim.seed == 9
        assert rc.sim.mode == "discrete"
        assert rc.s0 == (3.0, 4.0)

    def test_round_trip(self):
        rc = parse_config_text(MINI)
        again = parse_config_text(emit_config(rc))
        assert again.sim == rc.sim
        assert again.rule == rc.rule
        assert again.s0 == rc.s0
        assert again.config_hash() == rc.config_hash()

    def test_packaged_scenarios_load_and_round_trip(self):
        for name in SCENARIOS:
            rc = load_config(name)
            assert parse_config_text(emit_config(rc)).sim == rc.sim

    def test_missing_key_raises(self):
        with pytest.raises(ConfigError):
            parse_config_text("[arrivals]\nmean_interarrival_1 = 2\n")

    def test_bad_value_raises(self):
        with pytest.raises(ConfigError):
            parse_config_text(MINI.replace("s1 = 3", "s1 = -3"))

    def test_zero_interarrival_means_no_arrivals(self):
        rc = parse_config_text(
            MINI.replace("mean_interarrival_2 = 6", "mean_interarrival_2 = 0"))
        assert rc.sim.mean_interarrival[1] == float("inf")

    def test_unknown_config_name(self):
        with pytest.raises(ConfigError):
            load_config("nonexistent-scenario")


class TestCliRuns:
    def test_simulate_writes_event_log(self, tmp_path):
        rc = tmp_path / "mini.cfg"
        rc.write_text(MINI)
        code = main(["simulate", "--config", str(rc), "--out", str(tmp_path)])
        assert code == 0
        log = tmp_path / "eventlog_run.csv"
        lines = log.read_text().splitlines()
        assert lines[0].startswith("# config_hash=") and "seed=9" in lines[0]
        assert lines[1] == "time,kind,road,x1,x2,z1,z2,u"
        assert len(lines) > 10

    def test_gradient_appends_records(self, tmp_path):
        rc = tmp_path / "mini.cfg"
        rc.write_text(MINI)
        args = ["gradient", "--config", str(rc), "--out", str(tmp_path)]
        assert main(args) == 0
        assert main(args + ["--seed", "10"]) == 0
        lines = (tmp_path / "gradient_records.csv").read_text().splitlines()
        assert lines[1] == "s1,s2,dLds1,dLds2,T,seed"
        assert len(lines) == 4
        assert lines[2].endswith(",9") and lines[3].endswith(",10")

    def test_optimize_writes_trajectory(self, tmp_path):
        rc = tmp_path / "mini.cfg"
        rc.write_text(MINI + "\n[optimize]\nmax_iterations = 5\n")
        code = main(["optimize", "--config", str(rc), "--out", str(tmp_path),
                     "--s1", "6", "--s2", "2"])
        assert code == 0
        lines = (tmp_path / "trajectory_run.csv").read_text().splitlines()
        assert lines[1] == "l,s1,s2,H1,H2,J,seed"
        assert lines[2].startswith("0,6.000000000,2.000000000,")
        assert len(lines) == 7

    def test_surface_writes_matrix(self, tmp_path):
        rc = tmp_path / "mini.cfg"
        rc.write_text(MINI + "\n[surface]\ngrid_min = 1\ngrid_max = 3\n"
                             "grid_step = 1\nreplications = 2\n")
        code = main(["surface", "--config", str(rc), "--out", str(tmp_path),
                     "--jobs", "2"])
        assert code == 0
        lines = (tmp_path / "surface_run.csv").read_text().splitlines()
        assert lines[1] == "s1\\s2,1,2,3"
        assert len(lines) == 5

    def test_repeat_runs_byte_identical(self, tmp_path):
        rc = tmp_path / "mini.cfg"
        rc.write_text(MINI)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out in (out_a, out_b):
            assert main(["simulate", "--config", str(rc),
                         "--out", str(out)]) == 0
        assert filecmp.cmp(out_a / "eventlog_run.csv",
                           out_b / "eventlog_run.csv", shallow=False)

    def test_seed_override_changes_hash_header(self, tmp_path):
        rc = tmp_path / "mini.cfg"
        rc.write_text(MINI)
        main(["simulate", "--config", str(rc), "--out", str(tmp_path / "x")])
        main(["simulate", "--config", str(rc), "--seed", "77",
              "--out", str(tmp_path / "y")])
        ha = (tmp_path / "x" / "eventlog_run.csv").read_text().splitlines()[0]
        hb = (tmp_path / "y" / "eventlog_run.csv").read_text().splitlines()[0]
        assert ha != hb


class TestCliErrors:
    def test_missing_config_file(self, tmp_path, capsys):
        code = main(["simulate", "--config", str(tmp_path / "nope.cfg"),
                     "--out", str(tmp_path)])
        assert code == EXIT_CONFIG
        assert "config error" in capsys.readouterr().err

    def test_invalid_threshold_override(self, tmp_path, capsys):
        rc = tmp_path / "mini.cfg"
        rc.write_text(MINI)
        code = main(["simulate", "--config", str(rc), "--s1", "-1",
                     "--out", str(tmp_path)])
        assert code == EXIT_CONFIG

    def test_malformed_config(self, tmp_path):
        rc = tmp_path / "broken.cfg"
        rc.write_text("not an ini file [[[")
        code = main(["simulate", "--config", str(rc), "--out", str(tmp_path)])
        assert code == EXIT_CONFIG

    def test_unknown_subcommand_exits_with_usage(self):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(["frobnicate"])
        assert exc.value.code == 2
