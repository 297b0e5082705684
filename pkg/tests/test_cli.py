import json
import shutil
from pathlib import Path

from hiersearch.cli import main

from .helpers import canonical_log_bytes

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def small_config(tmp_path, **engine_overrides):
    raw = json.loads((CONFIGS / "synthetic_small.json").read_text())
    raw["engine"].update(engine_overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(raw))
    return path


def run_ok(args):
    code = main(args)
    assert code == 0, f"expected exit 0, got {code}"


class TestCmdRun:
    def test_bundled_config_runs_clean(self, tmp_path):
        run_ok(["run", "--config", str(CONFIGS / "synthetic_small.json"),
                "--out", str(tmp_path), "--override", "run_name=demo"])
        run_dir = tmp_path / "demo"
        for name in ("manifest.json", "trajectory.jsonl", "summary.json",
                     "trajectory.csv", "checkpoint.json"):
            assert (run_dir / name).exists(), name
        assert (run_dir / "checkpoints" / "ckpt_000020.json").exists()
        assert (run_dir / "checkpoints" / "ckpt_000040.json").exists()
        lines = (run_dir / "trajectory.jsonl").read_text().splitlines()
        assert len(lines) == 40
        summary = json.loads((run_dir / "summary.json").read_text())
        assert len(summary["history"]) == 40
        assert summary["best_reward"] == max(r["reward"] for r in summary["history"])

    def test_same_seed_byte_identical_logs(self, tmp_path):
        cfg = small_config(tmp_path)
        for name in ("a", "b"):
            run_ok(["run", "--config", str(cfg), "--out", str(tmp_path),
                    "--override", f"run_name={name}", "--quiet"])
        assert canonical_log_bytes(tmp_path / "a" / "trajectory.jsonl") == \
            canonical_log_bytes(tmp_path / "b" / "trajectory.jsonl")

    def test_override_iterations(self, tmp_path):
        cfg = small_config(tmp_path)
        run_ok(["run", "--config", str(cfg), "--out", str(tmp_path),
                "--override", "engine.iterations=5", "--override", "run_name=five",
                "--quiet"])
        lines = (tmp_path / "five" / "trajectory.jsonl").read_text().splitlines()
        assert len(lines) == 5

    def test_seed_flag_beats_file(self, tmp_path):
        cfg = small_config(tmp_path)
        run_ok(["run", "--config", str(cfg), "--out", str(tmp_path), "--seed", "3",
                "--override", "run_name=seeded", "--quiet"])
        ckpt = json.loads((tmp_path / "seeded" / "checkpoint.json").read_text())
        assert ckpt["engine_config"]["seed"] == 3
        manifest = json.loads((tmp_path / "seeded" / "manifest.json").read_text())
        assert manifest["seed"] == 3

    def test_two_evaluators_rejected(self, tmp_path, capsys):
        raw = json.loads((CONFIGS / "synthetic_small.json").read_text())
        raw["evaluator"]["external"] = {"command": ["true"]}
        cfg = tmp_path / "two.json"
        cfg.write_text(json.dumps(raw))
        assert main(["run", "--config", str(cfg)]) == 2
        assert "exactly one" in capsys.readouterr().err

    def test_bad_key_named_in_error(self, tmp_path, capsys):
        raw = json.loads((CONFIGS / "synthetic_small.json").read_text())
        raw["engine"]["iterationz"] = 5
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps(raw))
        assert main(["run", "--config", str(cfg)]) == 2
        assert "iterationz" in capsys.readouterr().err

    def test_env_var_out_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("HHNAS_OUT_DIR", str(tmp_path / "envroot"))
        cfg = small_config(tmp_path, iterations=3)
        run_ok(["run", "--config", str(cfg), "--override", "run_name=env", "--quiet"])
        assert (tmp_path / "envroot" / "env" / "summary.json").exists()

    def test_missing_config_file(self, capsys):
        assert main(["run", "--config", "/nonexistent/config.json"]) == 2


class TestCmdResume:
    def make_interrupted(self, tmp_path):
        """Full run A plus a copy B trimmed back to the iteration-20 checkpoint."""
        cfg = small_config(tmp_path)
        run_ok(["run", "--config", str(cfg), "--out", str(tmp_path),
                "--override", "run_name=full", "--quiet"])
        full = tmp_path / "full"
        part = tmp_path / "part"
        part.mkdir()
        (part / "checkpoints").mkdir()
        shutil.copy(full / "checkpoints" / "ckpt_000020.json", part / "checkpoints")
        head = "".join((full / "trajectory.jsonl").read_text().splitlines(keepends=True)[:20])
        (part / "trajectory.jsonl").write_text(head)
        return full, part

    def test_resume_completes_identically(self, tmp_path):
        full, part = self.make_interrupted(tmp_path)
        run_ok(["resume", str(part / "checkpoints" / "ckpt_000020.json"), "--quiet"])
        assert canonical_log_bytes(part / "trajectory.jsonl") == \
            canonical_log_bytes(full / "trajectory.jsonl")
        part_summary = json.loads((part / "summary.json").read_text())
        full_summary = json.loads((full / "summary.json").read_text())
        assert part_summary["best_reward"] == full_summary["best_reward"]
        assert len(part_summary["history"]) == 40

    def test_resume_finished_run_is_noop(self, tmp_path, capsys):
        cfg = small_config(tmp_path, iterations=4)
        run_ok(["run", "--config", str(cfg), "--out", str(tmp_path),
                "--override", "run_name=done", "--quiet"])
        assert main(["resume", str(tmp_path / "done" / "checkpoint.json")]) == 0
        assert "already complete" in capsys.readouterr().out

    def test_bad_path_exits_2(self, capsys):
        assert main(["resume", "/no/such/checkpoint.json"]) == 2


class TestCmdBench:
    def bench_config(self, tmp_path, seeds):
        raw = json.loads((CONFIGS / "bench_skew.json").read_text())
        raw["bench"]["seeds"] = seeds
        raw["bench"]["iterations"] = 30
        path = tmp_path / "bench.json"
        path.write_text(json.dumps(raw))
        return path

    def test_bench_emits_table_and_curves(self, tmp_path):
        cfg = self.bench_config(tmp_path, seeds=[0, 1, 2, 3])
        run_ok(["bench", "--config", str(cfg), "--out", str(tmp_path),
                "--override", "run_name=bench"])
        bench_dir = tmp_path / "bench"
        table = (bench_dir / "bench_table.csv").read_text().splitlines()
        assert len(table) == 4  # header + 3 policies
        curves = (bench_dir / "bench_curves.csv").read_text().splitlines()
        assert len(curves) == 1 + 3 * 30
        report = json.loads((bench_dir / "bench_summary.json").read_text())
        assert {p["label"] for p in report["policies"]} == \
            {"adaptive", "fixed_prob(p=0.5)", "random_search"}

    def test_single_seed_rejected(self, tmp_path, capsys):
        cfg = self.bench_config(tmp_path, seeds=[0])
        assert main(["bench", "--config", str(cfg), "--out", str(tmp_path)]) == 2
        assert "2 seeds" in capsys.readouterr().err

    def test_unreached_threshold_rendered(self, tmp_path):
        raw = json.loads((CONFIGS / "bench_skew.json").read_text())
        raw["bench"].update({"seeds": [0, 1], "iterations": 5, "threshold": 0.9999,
                             "threshold_fraction": None})
        raw["bench"]["policies"] = [{"kind": "random_search"}]
        del raw["bench"]["threshold_fraction"]
        raw["bench"]["threshold"] = 0.9999
        cfg = tmp_path / "never.json"
        cfg.write_text(json.dumps(raw))
        run_ok(["bench", "--config", str(cfg), "--out", str(tmp_path),
                "--override", "run_name=never", "--quiet"])
        table = (tmp_path / "never" / "bench_table.csv").read_text()
        assert "not reached (5)" in table


class TestCmdReport:
    def test_report_round_trip(self, tmp_path, capsys):
        cfg = small_config(tmp_path)
        run_ok(["run", "--config", str(cfg), "--out", str(tmp_path),
                "--override", "run_name=r", "--quiet"])
        run_dir = tmp_path / "r"
        run_ok(["report", str(run_dir)])
        out = capsys.readouterr().out
        report_dir = run_dir / "report"
        assert (report_dir / "mutation_probs.csv").exists()
        assert (report_dir / "gaussians.csv").exists()
        summary = json.loads((run_dir / "summary.json").read_text())
        visited = {rec["candidate"]["arch_index"] for rec in summary["history"]}
        for arch in visited:
            assert (report_dir / f"arch_{arch}_rewards.csv").exists()

    def test_unvisited_arch_noted(self, tmp_path, capsys):
        cfg = small_config(tmp_path, iterations=1)
        run_ok(["run", "--config", str(cfg), "--out", str(tmp_path),
                "--override", "run_name=one", "--quiet"])
        run_ok(["report", str(tmp_path / "one")])
        out = capsys.readouterr().out
        assert "never visited" in out
        missing = [a for a in range(4)
                   if not (tmp_path / "one" / "report" / f"arch_{a}_rewards.csv").exists()]
        assert len(missing) == 3

    def test_empty_dir_exits_2(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        assert main(["report", str(empty)]) == 2

    def test_malformed_log_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad"
        bad.mkdir()
        (bad / "trajectory.jsonl").write_text("{broken\n")
        assert main(["report", str(bad)]) == 2
        assert "malformed" in capsys.readouterr().err

    def test_corrupted_csv_header_exits_2(self, tmp_path, capsys):
        cfg = small_config(tmp_path, iterations=2)
        run_ok(["run", "--config", str(cfg), "--out", str(tmp_path),
                "--override", "run_name=csv", "--quiet"])
        run_dir = tmp_path / "csv"
        (run_dir / "trajectory.csv").write_text("wrong,columns\n1,2\n")
        assert main(["report", str(run_dir)]) == 2
        assert "header" in capsys.readouterr().err
