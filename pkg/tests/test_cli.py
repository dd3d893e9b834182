import json

import numpy as np

from fedsim import cli
from fedsim.alloc import AllocProblem


BASE_CONFIG = {
    "dataset": {"kind": "synthetic", "num_classes": 3, "dim": 8,
                "samples_per_class": 40, "test_samples_per_class": 20,
                "separation": 3.0},
    "num_clients": 6, "sample_size": 3, "rounds": 3, "batch_size": 10,
    "labels_per_client": 1, "eval_every": 2, "seed": 11,
}


def write_config(tmp_path, **extra):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({**BASE_CONFIG, **extra}))
    return str(path)


class TestRun:
    def test_success(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        out = str(tmp_path / "metrics.csv")
        assert cli.main(["run", "--config", cfg, "--out", out]) == 0
        assert "accuracy=" in capsys.readouterr().out
        assert open(out).readline().startswith("round,")

    def test_missing_config_is_io_error(self, tmp_path, capsys):
        assert cli.main(["run", "--config", str(tmp_path / "nope.json")]) == 3

    def test_invalid_config_is_validation_error(self, tmp_path, capsys):
        cfg = write_config(tmp_path, eta=-1.0)
        assert cli.main(["run", "--config", cfg]) == 1
        assert "invalid config" in capsys.readouterr().err

    def test_unknown_field_is_validation_error(self, tmp_path, capsys):
        cfg = write_config(tmp_path, momentum=0.9)
        assert cli.main(["run", "--config", cfg]) == 1

    def test_seed_override_changes_result(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        cli.main(["run", "--config", cfg, "--seed", "1"])
        first = capsys.readouterr().out
        cli.main(["run", "--config", cfg, "--seed", "2"])
        assert capsys.readouterr().out != first


class TestSweep:
    def test_grid_produces_one_csv_per_combo(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        out_dir = tmp_path / "sweep"
        rc = cli.main(["sweep", "--config", cfg,
                       "--grid", '{"eta": [0.01, 0.1], "bits": [1, 2]}',
                       "--out-dir", str(out_dir)])
        assert rc == 0
        assert len(list(out_dir.glob("metrics_*.csv"))) == 4

    def test_bad_grid_json(self, tmp_path):
        cfg = write_config(tmp_path)
        assert cli.main(["sweep", "--config", cfg, "--grid", "not json",
                         "--out-dir", str(tmp_path)]) == 1
        assert cli.main(["sweep", "--config", cfg, "--grid", "[]",
                         "--out-dir", str(tmp_path)]) == 1


class TestAlloc:
    def test_solves_problem_file(self, tmp_path, capsys):
        problem = AllocProblem(
            gains=np.array([1e-6, 2e-7]), taus=np.array([1e-3, 1e-3]),
            w_total=1e8, alpha=0.5, d=10_000, mu=384,
            noise_psd=10 ** (-14.3) / 1e3)
        path = tmp_path / "problem.json"
        path.write_text(problem.to_json())
        assert cli.main(["alloc", "--problem", str(path)]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["feasible"] is True
        assert sum(out["bandwidths"]) > 0

    def test_bad_problem_file(self, tmp_path, capsys):
        path = tmp_path / "problem.json"
        path.write_text('{"gains": []}')
        assert cli.main(["alloc", "--problem", str(path)]) == 1
        assert cli.main(["alloc", "--problem", str(tmp_path / "nope")]) == 3


class TestVerify:
    def test_all_checks_pass(self, capsys):
        assert cli.main(["verify"]) == 0
        out = capsys.readouterr().out
        assert "[PASS]" in out and "[FAIL]" not in out
