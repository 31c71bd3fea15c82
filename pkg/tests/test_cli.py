import csv
import json
import os
import subprocess
import sys

import pytest

from fedalign.cli import main

SMALL_DATA = {
    "synthetic": {
        "family": "rotated_two_moons",
        "num_domains": 3,
        "samples_per_domain": 30,
        "rotation_degrees": [0.0, 20.0, 40.0],
        "noise_sigma": 0.3,
        "seed": 0,
    }
}
SMALL_FED = {"strategy": "aligned", "rounds": 4, "batch_size": 8, "lr": 0.1, "lr_decay": None}


def write_config(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


def run_config(tmp_path, **overrides):
    doc = {
        "target": "dom2",
        "model": {"hidden_dim": 4},
        "data": SMALL_DATA,
        "federation": dict(SMALL_FED),
    }
    doc.update(overrides)
    return write_config(tmp_path, "exp.json", doc)


class TestRun:
    def test_writes_run_directory(self, tmp_path, capsys):
        cfg = run_config(tmp_path)
        out = tmp_path / "out"
        assert main(["run", "--config", cfg, "--out", str(out)]) == 0
        assert sorted(p.name for p in out.iterdir()) == [
            "manifest.json",
            "rounds.csv",
            "summary.json",
        ]
        summary = json.loads((out / "summary.json").read_text())
        assert summary["strategy"] == "aligned" and summary["rounds"] == 4
        with open(out / "rounds.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 4
        assert rows[0]["round"] == "0"
        stdout = capsys.readouterr().out
        assert "target accuracy" in stdout

    def test_manifest_contents(self, tmp_path):
        cfg = run_config(tmp_path)
        out = tmp_path / "out"
        main(["run", "--config", cfg, "--out", str(out)])
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "run"
        assert manifest["seed_list"] == [0]
        assert manifest["config"]["federation"]["strategy"] == "aligned"
        assert manifest["config"]["federation"]["lambda"] == 0.1
        assert set(manifest["outputs"]) == {"manifest", "rounds", "summary"}

    def test_replay_from_manifest_is_byte_identical(self, tmp_path):
        cfg = run_config(tmp_path)
        first, second = tmp_path / "a", tmp_path / "b"
        assert main(["run", "--config", cfg, "--out", str(first), "--quiet"]) == 0
        manifest_path = str(first / "manifest.json")
        assert main(["run", "--config", manifest_path, "--out", str(second), "--quiet"]) == 0
        assert (first / "summary.json").read_bytes() == (second / "summary.json").read_bytes()
        assert (first / "rounds.csv").read_bytes() == (second / "rounds.csv").read_bytes()

    def test_seed_override_recorded(self, tmp_path):
        cfg = run_config(tmp_path)
        out = tmp_path / "out"
        main(["run", "--config", cfg, "--out", str(out), "--seed", "9", "--quiet"])
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed_list"] == [9]
        assert manifest["config"]["federation"]["seed"] == 9

    def test_bad_lambda_names_field_and_range(self, tmp_path, capsys):
        cfg = run_config(tmp_path, federation={**SMALL_FED, "lambda": 0.9})
        assert main(["run", "--config", cfg]) == 2
        err = capsys.readouterr().err
        assert "lambda" in err and "0.5" in err

    def test_unknown_section_rejected(self, tmp_path, capsys):
        cfg = run_config(tmp_path, optimizer={"name": "adam"})
        assert main(["run", "--config", cfg]) == 2
        assert "optimizer" in capsys.readouterr().err

    def test_missing_target_rejected(self, tmp_path):
        doc = {"data": SMALL_DATA, "federation": SMALL_FED}
        cfg = write_config(tmp_path, "exp.json", doc)
        assert main(["run", "--config", cfg]) == 2

    def test_unknown_domain_is_runtime_error(self, tmp_path, capsys):
        cfg = run_config(tmp_path, target="domX")
        assert main(["run", "--config", cfg]) == 1
        assert "domX" in capsys.readouterr().err

    def test_malformed_json_positions(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text('{"target": "dom0",\n  "data": }', encoding="utf-8")
        assert main(["run", "--config", str(path)]) == 2
        err = capsys.readouterr().err
        assert "config error" in err and "line 2" in err

    def test_quiet_silences_stdout(self, tmp_path, capsys):
        cfg = run_config(tmp_path)
        main(["run", "--config", cfg, "--out", str(tmp_path / "o"), "--quiet"])
        assert capsys.readouterr().out == ""

    def test_default_outdir_uses_env_root(self, tmp_path, monkeypatch):
        monkeypatch.setenv("FEDALIGN_OUT", str(tmp_path / "root"))
        cfg = run_config(tmp_path)
        assert main(["run", "--config", cfg, "--quiet"]) == 0
        assert (tmp_path / "root" / "exp-run" / "summary.json").exists()

    def test_csv_data_source(self, tmp_path):
        gen_spec = write_config(tmp_path, "spec.json", SMALL_DATA["synthetic"])
        data_csv = tmp_path / "suite.csv"
        assert main(["gen-data", "--spec", gen_spec, "--out", str(data_csv), "--quiet"]) == 0
        doc = {
            "target": "dom1",
            "data": {
                "csv": {
                    "path": str(data_csv),
                    "feature_cols": ["x0", "x1"],
                    "label_col": "label",
                    "domain_col": "domain",
                }
            },
            "federation": SMALL_FED,
        }
        cfg = write_config(tmp_path, "csvexp.json", doc)
        out = tmp_path / "out"
        assert main(["run", "--config", cfg, "--out", str(out), "--quiet"]) == 0
        assert json.loads((out / "summary.json").read_text())["target"] == "dom1"


class TestSweep:
    def sweep_config(self, tmp_path, **overrides):
        doc = {
            "sweep": {
                "strategies": ["fedavg", "aligned", "deepall"],
                "seeds": [0, 1],
                "targets": ["dom0", "dom2"],
            },
            "model": {"hidden_dim": 4},
            "data": SMALL_DATA,
            "federation": dict(SMALL_FED),
        }
        doc.update(overrides)
        return write_config(tmp_path, "grid.json", doc)

    def test_writes_sweep_directory(self, tmp_path, capsys):
        cfg = self.sweep_config(tmp_path)
        out = tmp_path / "out"
        assert main(["sweep", "--spec", cfg, "--out", str(out)]) == 0
        with open(out / "results.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 3 * 2 * 2
        assert all(r["error"] == "" for r in rows)
        with open(out / "aggregate.csv") as fh:
            agg = list(csv.DictReader(fh))
        assert [r["strategy"] for r in agg] == ["fedavg", "aligned", "deepall"]
        assert set(agg[0]) == {"strategy", "dom0", "dom2", "average"}
        stdout = capsys.readouterr().out
        assert "average=" in stdout

    def test_summary_json_shape(self, tmp_path):
        cfg = self.sweep_config(tmp_path)
        out = tmp_path / "out"
        main(["sweep", "--spec", cfg, "--out", str(out), "--quiet"])
        doc = json.loads((out / "summary.json").read_text())
        assert doc["strategies"] == ["fedavg", "aligned", "deepall"]
        assert len(doc["cells"]) == 12
        assert len(doc["aggregate"]) == 3

    def test_replay_manifest(self, tmp_path):
        cfg = self.sweep_config(tmp_path)
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["sweep", "--spec", cfg, "--out", str(a), "--quiet"]) == 0
        assert main(["sweep", "--spec", str(a / "manifest.json"), "--out", str(b), "--quiet"]) == 0
        assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()
        assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()

    def test_parallel_jobs_same_results(self, tmp_path):
        cfg = self.sweep_config(tmp_path)
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["sweep", "--spec", cfg, "--out", str(a), "--quiet"]) == 0
        assert main(["sweep", "--spec", cfg, "--out", str(b), "--quiet", "--jobs", "2"]) == 0
        assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()

    def test_empty_seeds_rejected(self, tmp_path, capsys):
        cfg = self.sweep_config(
            tmp_path,
            sweep={"strategies": ["fedavg"], "seeds": [], "targets": ["dom0"]},
        )
        assert main(["sweep", "--spec", cfg]) == 2
        assert "seeds" in capsys.readouterr().err

    def test_unknown_target_rejected_before_running(self, tmp_path, capsys):
        cfg = self.sweep_config(
            tmp_path,
            sweep={"strategies": ["fedavg"], "seeds": [0], "targets": ["domX"]},
        )
        assert main(["sweep", "--spec", cfg]) == 2
        assert "domX" in capsys.readouterr().err

    def test_seed_flag_restricts_grid(self, tmp_path):
        cfg = self.sweep_config(tmp_path)
        out = tmp_path / "out"
        main(["sweep", "--spec", cfg, "--out", str(out), "--seed", "7", "--quiet"])
        with open(out / "results.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert {r["seed"] for r in rows} == {"7"}


class TestGenData:
    def test_default_benchmark_row_count(self, tmp_path):
        spec = write_config(tmp_path, "bench.json", {})  # all defaults
        out = tmp_path / "bench.csv"
        assert main(["gen-data", "--spec", spec, "--out", str(out), "--quiet"]) == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 1 + 4 * 500
        assert lines[0] == "domain,x0,x1,label"

    def test_seed_override_changes_data(self, tmp_path):
        spec = write_config(tmp_path, "s.json", SMALL_DATA["synthetic"])
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["gen-data", "--spec", spec, "--out", str(a), "--quiet"])
        main(["gen-data", "--spec", spec, "--out", str(b), "--seed", "5", "--quiet"])
        assert a.read_text() != b.read_text()

    def test_deterministic(self, tmp_path):
        spec = write_config(tmp_path, "s.json", SMALL_DATA["synthetic"])
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["gen-data", "--spec", spec, "--out", str(a), "--quiet"])
        main(["gen-data", "--spec", spec, "--out", str(b), "--quiet"])
        assert a.read_bytes() == b.read_bytes()

    def test_bad_spec_field(self, tmp_path, capsys):
        spec = write_config(tmp_path, "s.json", {"samples": 10})
        assert main(["gen-data", "--spec", spec]) == 2
        assert "samples" in capsys.readouterr().err

    def test_unwritable_path_is_runtime_error(self, tmp_path, capsys):
        spec = write_config(tmp_path, "s.json", SMALL_DATA["synthetic"])
        code = main(["gen-data", "--spec", spec, "--out", "/proc/nope/data.csv"])
        assert code == 1
        assert "error" in capsys.readouterr().err

    def test_default_out_path_from_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("FEDALIGN_OUT", str(tmp_path / "root"))
        os.makedirs(tmp_path / "root", exist_ok=True)
        spec = write_config(tmp_path, "moons.json", SMALL_DATA["synthetic"])
        assert main(["gen-data", "--spec", spec, "--quiet"]) == 0
        assert (tmp_path / "root" / "moons.csv").exists()


class TestEntryPoint:
    def test_module_invocation(self):
        proc = subprocess.run(
            [sys.executable, "-m", "fedalign.cli", "--version"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        assert "fedalign" in proc.stdout

    def test_missing_subcommand_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2
