import json
import os

import numpy as np
import pytest

from sekit.cli import main

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")


@pytest.fixture
def workspace(tmp_path):
    """A temp directory with a toy dataset bundle and a run config."""
    bundle = {
        "dataset": {"labels": [f"t{i}" for i in range(6)],
                    "counts": [3, 0, 5, 1, 7, 2]}
    }
    (tmp_path / "toy.json").write_text(json.dumps(bundle))
    cfg = {"recipe": "supervised-mle", "problem": "toy.json", "seed": 0}
    (tmp_path / "run.json").write_text(json.dumps(cfg))
    return tmp_path


class TestRun:
    def test_success_and_outputs(self, workspace):
        out = workspace / "out"
        code = main(["run", "--config", str(workspace / "run.json"),
                     "--out", str(out)])
        assert code == 0
        for name in ("trace.csv", "trace.json", "final_model.json",
                     "resolved_config.json"):
            assert (out / name).exists()
        model = json.loads((out / "final_model.json").read_text())
        emp = np.array([3, 0, 5, 1, 7, 2]) / 18.0
        assert np.max(np.abs(np.array(model["distribution"]) - emp)) <= 1e-6

    def test_unknown_key_names_it(self, workspace, capsys):
        cfg = {"recipe": "supervised-mle", "problem": "toy.json",
               "mystery_knob": 3}
        (workspace / "bad.json").write_text(json.dumps(cfg))
        code = main(["run", "--config", str(workspace / "bad.json")])
        assert code == 1
        assert "mystery_knob" in capsys.readouterr().err

    def test_unknown_recipe(self, workspace, capsys):
        cfg = {"recipe": "alchemy", "problem": "toy.json"}
        (workspace / "bad.json").write_text(json.dumps(cfg))
        assert main(["run", "--config", str(workspace / "bad.json")]) == 1

    def test_missing_config(self):
        assert main(["run", "--config", "/nonexistent/x.json"]) == 1

    def test_byte_identical_reruns(self, workspace):
        a, b = workspace / "a", workspace / "b"
        assert main(["run", "--config", str(workspace / "run.json"),
                     "--out", str(a)]) == 0
        assert main(["run", "--config", str(workspace / "run.json"),
                     "--out", str(b)]) == 0
        assert (a / "trace.csv").read_bytes() == (b / "trace.csv").read_bytes()
        assert (a / "trace.json").read_bytes() == (b / "trace.json").read_bytes()

    def test_seed_env_fallback(self, workspace, monkeypatch):
        cfg = {"recipe": "supervised-mle", "problem": "toy.json"}
        (workspace / "noseed.json").write_text(json.dumps(cfg))
        monkeypatch.setenv("SEKIT_SEED", "42")
        out = workspace / "envout"
        assert main(["run", "--config", str(workspace / "noseed.json"),
                     "--out", str(out)]) == 0
        resolved = json.loads((out / "resolved_config.json").read_text())
        assert resolved["seed"] == 42

    def test_override(self, workspace):
        out = workspace / "ovr"
        assert main(["run", "--config", str(workspace / "run.json"),
                     "--override", "seed=7", "--out", str(out)]) == 0
        resolved = json.loads((out / "resolved_config.json").read_text())
        assert resolved["seed"] == 7

    def test_resolved_config_reproduces(self, workspace):
        out1 = workspace / "r1"
        assert main(["run", "--config", str(workspace / "run.json"),
                     "--out", str(out1)]) == 0
        # feed the resolved config back; problem path must resolve, so copy it
        resolved = json.loads((out1 / "resolved_config.json").read_text())
        resolved["problem"] = str(workspace / "toy.json")
        (workspace / "again.json").write_text(json.dumps(resolved))
        out2 = workspace / "r2"
        assert main(["run", "--config", str(workspace / "again.json"),
                     "--out", str(out2)]) == 0
        assert (out1 / "trace.csv").read_bytes() == (out2 / "trace.csv").read_bytes()


class TestCheck:
    def test_pass_exit_zero(self, workspace, capsys):
        code = main(["check", "--recipe", "supervised-mle",
                     "--problem", str(workspace / "toy.json"),
                     "--tol", "1e-6"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["passed"] is True

    def test_fail_exit_three(self, workspace, capsys):
        code = main(["check", "--recipe", "supervised-mle",
                     "--problem", str(workspace / "toy.json"),
                     "--tol", "1e-30"])
        assert code == 3

    def test_mw_trajectory_tolerance_zero(self, tmp_path):
        rng = np.random.default_rng(0)
        (tmp_path / "experts.json").write_text(json.dumps(
            {"rewards": rng.random((100, 4)).tolist()}))
        code = main(["check", "--recipe", "multiplicative-weights",
                     "--problem", str(tmp_path / "experts.json"),
                     "--tol", "0"])
        assert code == 0

    def test_unknown_recipe_exit_one(self, workspace):
        assert main(["check", "--recipe", "alchemy",
                     "--problem", str(workspace / "toy.json"),
                     "--tol", "1"]) == 1

    def test_incompatible_oracle_exit_one(self, workspace):
        assert main(["check", "--recipe", "supervised-mle", "--oracle", "hedge",
                     "--problem", str(workspace / "toy.json"),
                     "--tol", "1"]) == 1


class TestSweep:
    def make_sweep(self, tmp_path, grid):
        bundle = {
            "dataset": {"labels": [f"t{i}" for i in range(5)],
                        "counts": [3, 1, 5, 1, 2]},
            "payoff": np.random.default_rng(0).normal(size=(5, 5)).tolist(),
        }
        (tmp_path / "prob.json").write_text(json.dumps(bundle))
        cfg = {"recipe": "interpolation-schedule", "problem": "prob.json",
               "seed": 0, "grid": grid}
        (tmp_path / "sweep.json").write_text(json.dumps(cfg))
        return tmp_path / "sweep.json"

    def test_grid_cross_product(self, tmp_path):
        cfg = self.make_sweep(tmp_path,
                              {"params.iters_per_stage": [4, 6],
                               "seed": [0, 1]})
        out = tmp_path / "sweep_out"
        code = main(["sweep", "--config", str(cfg), "--out", str(out),
                     "--jobs", "2"])
        assert code == 0
        summary = (out / "summary.csv").read_text().strip().splitlines()
        assert len(summary) == 5  # header + 4 cells
        subdirs = [p for p in out.iterdir() if p.is_dir()]
        assert len(subdirs) == 4
        for sub in subdirs:
            assert (sub / "trace.csv").exists()

    def test_empty_grid_exit_one(self, tmp_path):
        cfg = self.make_sweep(tmp_path, {})
        assert main(["sweep", "--config", str(cfg),
                     "--out", str(tmp_path / "o")]) == 1
        cfg = self.make_sweep(tmp_path, {"seed": []})
        assert main(["sweep", "--config", str(cfg),
                     "--out", str(tmp_path / "o2")]) == 1

    def test_partial_failure_exit_two(self, tmp_path):
        cfg = self.make_sweep(tmp_path,
                              {"params.iters_per_stage": [4, -1]})
        out = tmp_path / "sweep_out"
        code = main(["sweep", "--config", str(cfg), "--out", str(out)])
        assert code == 2
        summary = (out / "summary.csv").read_text()
        assert "failed" in summary
        assert "ok" in summary


class TestUsage:
    def test_missing_subcommand_exit_one(self):
        assert main([]) == 1

    def test_bad_override_exit_one(self, workspace):
        assert main(["run", "--config", str(workspace / "run.json"),
                     "--override", "notkeyvalue"]) == 1
