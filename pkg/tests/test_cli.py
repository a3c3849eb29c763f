"""CLI configuration loading, experiment dispatch, outputs and exit codes."""

import json

import pytest

import switchsde as s
from switchsde import cli


def run_cli(args):
    return cli.main([str(a) for a in args])


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return path


class TestLoadConfig:
    def test_telomere_defaults(self, tmp_path):
        parser = cli.build_parser()
        args = parser.parse_args(["ensemble", "--model", "telomere",
                                  "--out", str(tmp_path)])
        cfg = cli.load_config("ensemble", args)
        assert cfg.step.h_max == 0.03
        assert cfg.step.rho == 15.0
        assert cfg.step.k == 10.0
        assert cfg.seed == cli.DEFAULT_SEED
        assert cfg.generator.num_states == 4
        assert cfg.extra["horizon"] == 30.0
        assert cfg.extra["initial"] == 1000.0

    def test_rho_at_most_one_rejected(self, tmp_path):
        config = write_config(tmp_path, {"step": {"h_max": 0.03, "rho": 1.0, "k": 10.0}})
        parser = cli.build_parser()
        args = parser.parse_args(["ensemble", "--config", str(config)])
        with pytest.raises(cli.ConfigValidationError, match="rho"):
            cli.load_config("ensemble", args)

    def test_unknown_key_rejected(self, tmp_path):
        config = write_config(tmp_path, {"stepsize": 0.1})
        parser = cli.build_parser()
        args = parser.parse_args(["ensemble", "--config", str(config)])
        with pytest.raises(cli.ConfigValidationError, match="stepsize"):
            cli.load_config("ensemble", args)

    def test_flags_override_config_file(self, tmp_path):
        config = write_config(tmp_path, {"seed": 1, "trajectories": 5})
        parser = cli.build_parser()
        args = parser.parse_args(["ensemble", "--config", str(config), "--seed", "2"])
        cfg = cli.load_config("ensemble", args)
        assert cfg.seed == 2
        assert cfg.extra["trajectories"] == 5

    def test_empty_config_simulate_chain_is_runnable(self, tmp_path):
        config = write_config(tmp_path, {})
        parser = cli.build_parser()
        args = parser.parse_args(["simulate-chain", "--config", str(config),
                                  "--out", str(tmp_path / "o")])
        cfg = cli.load_config("simulate-chain", args)
        assert cfg.generator.num_states == 1
        assert cli.run(cfg) == 0
        assert (tmp_path / "o" / "chain.csv").exists()

    def test_multiple_chain_files(self, tmp_path):
        out = tmp_path / "chains"
        config = write_config(tmp_path, {"generator": cli.TELOMERE_GENERATOR,
                                         "r0": 2, "horizon": 20.0})
        assert run_cli(["simulate-chain", "--config", config, "--trajectories", 3,
                        "--out", out, "--seed", 8]) == 0
        names = sorted(p.name for p in out.glob("chain_*.csv"))
        assert names == ["chain_000.csv", "chain_001.csv", "chain_002.csv"]
        bodies = {(out / n).read_text() for n in names}
        assert len(bodies) == 3  # independent substreams per chain

    def test_generator_model_mismatch_rejected(self, tmp_path):
        config = write_config(tmp_path, {"generator": [[0.0]]})
        parser = cli.build_parser()
        args = parser.parse_args(["ensemble", "--config", str(config)])
        with pytest.raises(cli.ConfigValidationError, match="states"):
            cli.load_config("ensemble", args)


class TestExitCodes:
    def test_bad_json_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert run_cli(["ensemble", "--config", bad]) == 2
        assert "configuration error" in capsys.readouterr().err

    def test_validation_error_exits_2(self, tmp_path):
        config = write_config(tmp_path, {"step": {"rho": 0.5}})
        assert run_cli(["ensemble", "--config", config]) == 2

    def test_computation_failure_exits_3(self, tmp_path, capsys):
        config = write_config(tmp_path, {
            "model": {"kind": "linear", "mu": [1e308], "sigma": [0.0]},
            "generator": [[0.0]],
            "horizon": 1.0,
            "trajectories": 2,
        })
        code = run_cli(["ensemble", "--config", config, "--out", tmp_path / "o"])
        assert code == 3
        assert "computation failed" in capsys.readouterr().err

    def test_success_exits_0(self, tmp_path):
        assert run_cli(["simulate-chain", "--out", tmp_path / "o", "--seed", 5]) == 0


class TestEnsembleCommand:
    def test_outputs_and_manifest(self, tmp_path):
        out = tmp_path / "run"
        config = write_config(tmp_path, {"horizon": 2.0, "trajectories": 15})
        code = run_cli(["ensemble", "--model", "telomere", "--config", config,
                        "--out", out, "--seed", 9, "--dump-trajectory"])
        assert code == 0
        for name in ("histogram.csv", "summary.json", "manifest.json",
                     "trajectory.csv"):
            assert (out / name).exists(), name
        summary = json.loads((out / "summary.json").read_text())
        assert summary["M"] == 15
        assert summary["failed_count"] == 0
        assert summary["seed"] == 9
        assert summary["params"]["trajectories"] == 15
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 9
        assert manifest["tool_version"] == s.__version__
        assert manifest["config"]["horizon"] == 2.0
        assert manifest["config"]["step"] == {"h_max": 0.03, "rho": 15.0, "k": 10.0}
        header = (out / "trajectory.csv").read_text().splitlines()[0]
        assert header == "t,state,y,h,backstop"

    def test_histogram_rows_match_bins(self, tmp_path):
        out = tmp_path / "run"
        config = write_config(tmp_path, {"horizon": 1.0, "trajectories": 12})
        assert run_cli(["ensemble", "--model", "telomere-c1a1", "--config", config,
                        "--out", out]) == 0
        lines = (out / "histogram.csv").read_text().splitlines()
        assert lines[0] == "bin_left,bin_right,density"
        assert len(lines) >= 2

    def test_uniform_initial_range_flag(self, tmp_path):
        out = tmp_path / "run"
        config = write_config(tmp_path, {"horizon": 1.0, "trajectories": 8})
        assert run_cli(["ensemble", "--model", "telomere", "--config", config,
                        "--initial-range", 4000, 8000, "--out", out]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["initial"] == {"uniform": [4000.0, 8000.0]}


class TestConvergenceCommand:
    def test_writes_six_rows_and_prints_order(self, tmp_path, capsys):
        out = tmp_path / "conv"
        assert run_cli(["convergence", "--trajectories", 100, "--out", out]) == 0
        printed = capsys.readouterr().out
        assert "fitted order:" in printed
        lines = (out / "convergence.csv").read_text().splitlines()
        assert lines[0] == "h_max,rms_error"
        assert len(lines) == 1 + 6  # default grid 2^-4 .. 2^-9

    def test_nonlinear_model_rejected(self, tmp_path):
        config = write_config(tmp_path, {"model": {"kind": "telomere"},
                                         "generator": cli.TELOMERE_GENERATOR})
        assert run_cli(["convergence", "--config", config]) == 2


class TestMeanChangeCommand:
    def test_outputs(self, tmp_path):
        out = tmp_path / "mc"
        config = write_config(tmp_path, {"initials": 6, "runs": 2,
                                         "start_day": 5.0, "end_day": 6.0})
        assert run_cli(["mean-change", "--config", config, "--out", out]) == 0
        lines = (out / "meanchange.csv").read_text().splitlines()
        assert lines[0] == "initial,mean_final,single_final"
        assert len(lines) == 1 + 6
        initials = [float(line.split(",")[0]) for line in lines[1:]]
        assert initials == sorted(initials)
        summary = json.loads((out / "summary.json").read_text())
        assert "grand_mean_change" in summary


class TestDeterminism:
    def test_rerun_reproduces_bitwise_outputs(self, tmp_path):
        config = write_config(tmp_path, {"horizon": 2.0, "trajectories": 10})
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert run_cli(["ensemble", "--model", "telomere", "--config", config,
                            "--out", out, "--seed", 77]) == 0
            outs.append(out)
        for fname in ("histogram.csv", "summary.json"):
            assert (outs[0] / fname).read_bytes() == (outs[1] / fname).read_bytes()
