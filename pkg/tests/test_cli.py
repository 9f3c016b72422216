"""Tests for the polyflow command line."""

import csv
import json

import pytest

from polyflow import cli
from polyflow.services.scenarios.verify import CheckResult

TINY = ["--n-particles", "4", "--dt", "0.01", "--t-end", "0.03", "--output-every", "1", "--workers", "1"]


class TestParser:
    def test_run_flags(self):
        args = cli.build_parser().parse_args(["run", "fene-extension", "--rate", "5", "--mode", "constant", "--seed", "2"])
        assert cli.run_overrides(args) == {"seed": 2, "rate": 5.0, "mode": "constant"}

    def test_unknown_scenario(self):
        with pytest.raises(SystemExit):
            cli.build_parser().parse_args(["run", "pipe-flow"])

    def test_flags_override_config_file(self, tmp_path):
        path = tmp_path / "run.env"
        path.write_text("WI=0.5\nSEED=1\n")
        args = cli.build_parser().parse_args(["run", "cavity", "--config", str(path), "--seed", "4"])
        assert cli.run_overrides(args) == {"Wi": "0.5", "seed": 4}


class TestRun:
    def test_couette_run_writes_outputs(self, tmp_path):
        out = tmp_path / "couette"
        assert cli.main(["run", "couette-hookean", "--out", str(out), *TINY]) == 0
        assert (out / "config.env").exists()
        assert (out / "config.sha256").exists()
        with (out / "probes.csv").open() as f:
            assert next(csv.reader(f)) == ["t", "location", "u"]

    def test_cavity_checkpoint_and_resume(self, tmp_path):
        ckpt = tmp_path / "state.npz"
        mesh = ["--ly", "1.0"]
        common = ["run", "cavity", *TINY, *mesh]
        env = tmp_path / "mesh.env"
        env.write_text("NX=2\nNY=2\n")
        assert cli.main([*common, "--config", str(env), "--out", str(tmp_path / "a"), "--checkpoint", str(ckpt)]) == 0
        assert ckpt.exists()
        extended = [*common, "--config", str(env), "--t-end", "0.05", "--out", str(tmp_path / "b"), "--resume", str(ckpt)]
        assert cli.main(extended) == 0
        assert (tmp_path / "b" / "field_t0.05.csv").exists()
        assert (tmp_path / "b" / "mesh.txt").exists()

    def test_bad_config_exits_2(self, tmp_path):
        out = tmp_path / "bad"
        assert cli.main(["run", "cavity", "--dt", "-1", "--out", str(out)]) == 2
        diag = json.loads((out / "diagnostics.json").read_text())
        assert diag["code"] == "CONFIG_INVALID"
        assert any(err.startswith("dt") for err in diag["details"]["errors"])

    def test_unknown_config_key_exits_2(self, tmp_path):
        path = tmp_path / "run.env"
        path.write_text("COLOUR=blue\n")
        assert cli.main(["run", "cavity", "--config", str(path), "--out", str(tmp_path / "x")]) == 2

    def test_checkpoint_outside_cavity_exits_2(self, tmp_path):
        argv = ["run", "fene-shear", *TINY, "--checkpoint", str(tmp_path / "c.npz"), "--out", str(tmp_path / "s")]
        assert cli.main(argv) == 2


class TestReference:
    def test_oldroyd_b(self, tmp_path):
        out = tmp_path / "ref.csv"
        argv = ["reference", "oldroyd-b", "--m-fine", "20", "--dt-fine", "0.01", "--t-end", "0.1", "--record-dt", "0.05"]
        assert cli.main([*argv, "--out", str(out)]) == 0
        with out.open() as f:
            rows = list(csv.reader(f))
        assert rows[0][:2] == ["t", "u@0.2"]
        assert len(rows) == 4

    def test_bad_parameters_exit_2(self, tmp_path):
        assert cli.main(["reference", "oldroyd-b", "--re", "0", "--out", str(tmp_path / "r.csv")]) == 2


class TestVerify:
    def test_all_pass(self, monkeypatch):
        monkeypatch.setattr(cli, "run_checks", lambda: [CheckResult("a", True, 0.0)])
        assert cli.main(["verify"]) == 0

    def test_failure_exits_1(self, monkeypatch):
        monkeypatch.setattr(cli, "run_checks", lambda: [CheckResult("a", True, 0.0), CheckResult("b", False, 1.0)])
        assert cli.main(["verify"]) == 1

    @pytest.mark.slow
    def test_real_checks(self):
        assert cli.main(["verify"]) == 0
