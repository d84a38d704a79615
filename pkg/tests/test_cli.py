"""Command-line interface: exit codes, outputs, replay determinism."""

import csv
import json

import numpy as np
import pytest

from zobilevel.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, main
from zobilevel.verify import rate_fixture


def write_config(tmp_path, regime="strongly-convex", N=5, **extra):
    problem, x0, y0 = rate_fixture(regime, n=1, m=1)
    cfg = {"problem": problem.to_dict(), "regime": regime, "N": N,
           "gamma": 0.02, "x0": list(x0), "y0": list(y0)}
    cfg.update(extra)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


class TestRun:
    def test_run_writes_per_seed_files(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        out = tmp_path / "out"
        code = main(["run", "--config", str(cfg), "--seeds", "1,2",
                     "--out", str(out)])
        assert code == EXIT_OK
        for seed in (1, 2):
            assert (out / f"run-seed{seed}.csv").exists()
            sidecar = json.loads((out / f"run-seed{seed}.json").read_text())
            assert sidecar["seed"] == seed
            assert sidecar["N"] == 5
            assert sidecar["schedule"]["gamma"] == pytest.approx(0.02)
        assert "outer objective" in capsys.readouterr().out

    def test_run_csv_has_schedule_columns(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "out"
        main(["run", "--config", str(cfg), "--seeds", "3", "--out", str(out)])
        with open(out / "run-seed3.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 6  # N + 1 iterates
        assert set(rows[0]) >= {"seed", "k", "eps", "b", "t", "alpha", "x0"}
        assert int(rows[0]["b"]) >= 1
        # cells must be plain literals, not numpy reprs
        float(rows[0]["eps"]), float(rows[0]["alpha"]), float(rows[0]["x0"])

    def test_zero_horizon_writes_headers_only(self, tmp_path):
        cfg = write_config(tmp_path, N=0)
        out = tmp_path / "out"
        code = main(["run", "--config", str(cfg), "--seeds", "1",
                     "--out", str(out)])
        assert code == EXIT_OK
        lines = (out / "run-seed1.csv").read_text().splitlines()
        assert len(lines) == 1 and lines[0].startswith("seed,")

    def test_seeds_from_config(self, tmp_path):
        cfg = write_config(tmp_path, seeds=[7])
        out = tmp_path / "out"
        assert main(["run", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        assert (out / "run-seed7.csv").exists()

    def test_replay_is_byte_identical(self, tmp_path):
        cfg = write_config(tmp_path, N=8)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        for out in (out1, out2):
            assert main(["run", "--config", str(cfg), "--seeds", "5",
                         "--out", str(out)]) == EXIT_OK
        assert ((out1 / "run-seed5.csv").read_bytes()
                == (out2 / "run-seed5.csv").read_bytes())
        assert ((out1 / "run-seed5.json").read_bytes()
                == (out2 / "run-seed5.json").read_bytes())


class TestConfigErrors:
    def test_missing_config_file(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "nope.json"),
                     "--seeds", "1"]) == EXIT_CONFIG

    def test_convex_regime_requires_bounded_set(self, tmp_path):
        problem, x0, y0 = rate_fixture("strongly-convex", n=1, m=1)
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"problem": problem.to_dict(),
                                   "regime": "convex", "N": 5}))
        assert main(["run", "--config", str(cfg), "--seeds", "1",
                     "--out", str(tmp_path / "out")]) == EXIT_CONFIG

    def test_unknown_regime(self, tmp_path):
        cfg = write_config(tmp_path, regime="strongly-convex")
        raw = json.loads(cfg.read_text())
        raw["regime"] = "mystery"
        cfg.write_text(json.dumps(raw))
        assert main(["run", "--config", str(cfg), "--seeds", "1"]) == EXIT_CONFIG

    def test_no_seeds_anywhere(self, tmp_path, monkeypatch):
        monkeypatch.delenv("ZO_BILEVEL_SEED", raising=False)
        cfg = write_config(tmp_path)
        assert main(["run", "--config", str(cfg)]) == EXIT_CONFIG

    def test_unknown_verify_suite(self):
        assert main(["verify", "bogus"]) == EXIT_CONFIG

    def test_unknown_sweep_axis(self, tmp_path):
        cfg = write_config(tmp_path)
        assert main(["sweep", "--config", str(cfg), "--axis", "zeta",
                     "--values", "1,2", "--seeds", "1"]) == EXIT_CONFIG

    def test_mismatched_start_point(self, tmp_path):
        cfg = write_config(tmp_path, x0=[1.0, 2.0, 3.0])
        assert main(["run", "--config", str(cfg), "--seeds", "1"]) == EXIT_CONFIG


class TestSweep:
    def test_sweep_gamma(self, tmp_path):
        cfg = write_config(tmp_path, N=4)
        out = tmp_path / "out"
        code = main(["sweep", "--config", str(cfg), "--axis", "gamma",
                     "--values", "0.01,0.02", "--seeds", "1,2",
                     "--out", str(out)])
        assert code == EXIT_OK
        with open(out / "sweep-gamma.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 4  # two values x two seeds
        assert {r["gamma"] for r in rows} == {"0.01", "0.02"}

    def test_sweep_horizon(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "out"
        code = main(["sweep", "--config", str(cfg), "--axis", "N",
                     "--values", "2,4", "--seeds", "1", "--out", str(out)])
        assert code == EXIT_OK
        with open(out / "sweep-N.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["N"] for r in rows] == ["2", "4"]


class TestDemoAndVerify:
    def test_szhia_demo(self, tmp_path, capsys):
        out = tmp_path / "demo"
        code = main(["szhia-demo", "--steps", "40", "--seed", "0",
                     "--out", str(out)])
        assert code == EXIT_OK
        with open(out / "szhia-demo.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert rows[0]["tau"] == "0"
        assert "error_norm" in rows[0]
        assert "final error" in capsys.readouterr().out

    def test_verify_stein_suite(self, tmp_path, capsys):
        out = tmp_path / "verify"
        code = main(["verify", "stein", "--out", str(out), "--seed", "0"])
        assert code == EXIT_OK
        assert (out / "stein.csv").exists()
        assert "stein: PASS" in capsys.readouterr().out

    def test_verify_exit_code_reflects_failures(self, tmp_path, monkeypatch):
        import zobilevel.cli as cli
        from zobilevel import BoundBundle
        monkeypatch.setattr(cli.vf, "check_stein",
                            lambda seed=0: [BoundBundle("forced", 2.0, 0.0, 1.0)])
        assert main(["verify", "stein", "--out", str(tmp_path)]) == EXIT_FAIL
