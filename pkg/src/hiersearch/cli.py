"""Command-line entry point: run | resume | bench | report.

Exit codes: 0 success, 2 configuration error (message names the bad key),
3 evaluator failure, 1 internal error.  The output directory resolves from
--out, then the config's output_dir, then $HHNAS_OUT_DIR, then ./runs.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

from . import __version__
from .engine import (
    IterationRecord,
    SearchEngine,
    compare_policies,
    load_checkpoint,
    resume as engine_resume,
    write_trajectory_csv,
)
from .errors import (
    ConfigError,
    CorruptCheckpoint,
    EvaluatorError,
    EvaluatorFailure,
    HierSearchError,
    SpaceParseError,
    VersionMismatch,
)
from .runconfig import apply_overrides, build_evaluator, load_raw_config, parse_run_config
from .space import space_from_dict

OUT_DIR_ENV = "HHNAS_OUT_DIR"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hiersearch", description=__doc__)
    parser.add_argument("--version", action="version", version=f"hiersearch {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--quiet", action="store_true", help="suppress informational output")

    p_run = sub.add_parser("run", help="execute a search run")
    p_run.add_argument("--config", required=True, help="run config JSON file")
    p_run.add_argument("--override", action="append", default=[], metavar="K=V",
                       help="override a config key (repeatable, dotted paths)")
    p_run.add_argument("--out", help="output directory root")
    p_run.add_argument("--seed", type=int, help="override engine.seed")
    common(p_run)

    p_res = sub.add_parser("resume", help="continue a checkpointed run")
    p_res.add_argument("checkpoint", help="checkpoint JSON file")
    common(p_res)

    p_bench = sub.add_parser("bench", help="compare mutation policies")
    p_bench.add_argument("--config", required=True, help="run config JSON with a bench section")
    p_bench.add_argument("--override", action="append", default=[], metavar="K=V")
    p_bench.add_argument("--out", help="output directory root")
    common(p_bench)

    p_rep = sub.add_parser("report", help="extract plot-ready CSVs from a run directory")
    p_rep.add_argument("run_dir", help="directory produced by a run")
    common(p_rep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "resume":
            return cmd_resume(args)
        if args.command == "bench":
            return cmd_bench(args)
        return cmd_report(args)
    except (ConfigError, SpaceParseError, CorruptCheckpoint, VersionMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (EvaluatorFailure, EvaluatorError) as exc:
        print(f"evaluator error: {exc}", file=sys.stderr)
        return 3
    except HierSearchError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def _resolved_raw(args) -> dict:
    raw = load_raw_config(args.config)
    raw = apply_overrides(raw, args.override)
    if getattr(args, "seed", None) is not None:
        raw = apply_overrides(raw, [f"engine.seed={args.seed}"])
    if getattr(args, "out", None) is not None:
        raw = apply_overrides(raw, [f"output_dir={args.out}"])
    return raw


def _out_root(rc) -> Path:
    if rc.output_dir:
        return Path(rc.output_dir)
    return Path(os.environ.get(OUT_DIR_ENV, "runs"))


def _make_run_dir(rc, prefix: str) -> Path:
    root = _out_root(rc)
    if rc.run_name:
        run_dir = root / rc.run_name
        if run_dir.exists():
            raise ConfigError(f"run_name: directory {run_dir} already exists", key="run_name")
    else:
        stamp = time.strftime("%Y%m%d_%H%M%S") + f"_{time.time_ns() % 1_000_000:06d}"
        run_dir = root / f"{prefix}_{stamp}"
    run_dir.mkdir(parents=True)
    return run_dir


def _write_manifest(run_dir: Path, raw: dict, argv_note: str) -> None:
    import hashlib

    digest = hashlib.sha256(json.dumps(raw, sort_keys=True).encode()).hexdigest()
    manifest = {
        "tool": "hiersearch",
        "version": __version__,
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "command": argv_note,
        "config_digest": digest,
        "seed": raw.get("engine", {}).get("seed", 0),
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def cmd_run(args) -> int:
    raw = _resolved_raw(args)
    rc = parse_run_config(raw, base_dir=Path(args.config).parent)
    run_dir = _make_run_dir(rc, "run")
    _write_manifest(run_dir, raw, "run")

    evaluator = build_evaluator(rc)
    engine = SearchEngine(rc.space, evaluator, rc.engine, out_dir=run_dir,
                          log_path=run_dir / "trajectory.jsonl", config_payload=raw)
    try:
        result = engine.run()
    finally:
        evaluator.close()

    (run_dir / "summary.json").write_text(json.dumps(result.to_summary_dict(), sort_keys=True))
    write_trajectory_csv(result.history, run_dir / "trajectory.csv")
    if not args.quiet:
        print(f"run_dir: {run_dir}")
        print(f"best_reward: {result.best_reward}")
        print(f"best_candidate: {json.dumps(result.best_candidate.micro_values, sort_keys=True)} "
              f"(arch {result.best_candidate.arch_index})")
    return 0


# ---------------------------------------------------------------------------
# resume
# ---------------------------------------------------------------------------

def _run_dir_of_checkpoint(path: Path) -> Path:
    return path.parent.parent if path.parent.name == "checkpoints" else path.parent


def _truncate_log(log_path: Path, max_iteration: int) -> None:
    # drop any lines past the checkpoint so the combined log stays consistent
    if not log_path.exists():
        return
    kept = []
    for line in log_path.read_text().splitlines(keepends=True):
        try:
            if json.loads(line)["iteration"] > max_iteration:
                continue
        except (json.JSONDecodeError, KeyError):
            continue
        kept.append(line)
    log_path.write_text("".join(kept))


def cmd_resume(args) -> int:
    path = Path(args.checkpoint)
    data = load_checkpoint(path)
    payload = data.get("payload")
    if payload is None:
        raise ConfigError("checkpoint carries no embedded run config; cannot rebuild "
                          "the evaluator", key="payload")
    run_dir = _run_dir_of_checkpoint(path)
    rc = parse_run_config(payload, base_dir=run_dir)

    if data["iteration"] >= data["engine_config"]["iterations"]:
        if not args.quiet:
            print("already complete")
        return 0

    log_path = run_dir / "trajectory.jsonl"
    _truncate_log(log_path, data["iteration"])
    result, engine = engine_resume(
        path, lambda: build_evaluator(rc), out_dir=run_dir, log_path=log_path,
    )
    if engine.evaluator is not None:
        engine.evaluator.close()

    records = _load_records(log_path)
    summary = {
        "best_candidate": engine.checkpoint_dict()["best_candidate"],
        "best_reward": engine.best_reward,
        "per_arch_best": engine.checkpoint_dict()["per_arch_best"],
        "history": [rec.to_json_dict() for rec in records],
    }
    (run_dir / "summary.json").write_text(json.dumps(summary, sort_keys=True))
    write_trajectory_csv(records, run_dir / "trajectory.csv")
    if not args.quiet:
        print(f"run_dir: {run_dir}")
        print(f"resumed_iterations: {len(result.history)}")
        print(f"best_reward: {engine.best_reward}")
    return 0


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def cmd_bench(args) -> int:
    raw = _resolved_raw(args)
    rc = parse_run_config(raw, base_dir=Path(args.config).parent)
    if rc.bench is None:
        raise ConfigError("bench: section required for the bench command", key="bench")
    if len(rc.bench.seeds) < 2:
        raise ConfigError("bench.seeds: at least 2 seeds required", key="bench.seeds")

    threshold = rc.bench.threshold
    if rc.bench.threshold_fraction is not None:
        if rc.landscape is None:
            raise ConfigError("bench.threshold_fraction: needs a synthetic evaluator",
                              key="bench.threshold_fraction")
        threshold = rc.bench.threshold_fraction * rc.landscape.optimum_reward()

    run_dir = _make_run_dir(rc, "bench")
    _write_manifest(run_dir, raw, "bench")

    report = compare_policies(
        rc.space, lambda seed: build_evaluator(rc), rc.bench.policies,
        seeds=rc.bench.seeds, n=rc.bench.iterations, threshold=threshold,
        base_cfg=rc.engine,
    )
    (run_dir / "bench_summary.json").write_text(json.dumps(report.to_json_dict(), sort_keys=True))

    with open(run_dir / "bench_curves.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["policy", "iteration", "median_best", "q25", "q75"])
        for pol in report.policies:
            for i, (m, lo, hi) in enumerate(zip(pol.median_curve, pol.q25_curve, pol.q75_curve)):
                writer.writerow([pol.label, i + 1, m, lo, hi])

    not_reached = f"not reached ({report.iterations})"
    with open(run_dir / "bench_table.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["policy", "cells_ok", "median_best", "median_iters_to_threshold",
                         "reached_count"])
        for pol in report.policies:
            its = pol.median_iters_to_threshold
            writer.writerow([pol.label, sum(c.ok for c in pol.cells), pol.median_best,
                             its if its is not None else not_reached, pol.reached_count])

    if not args.quiet:
        print(f"run_dir: {run_dir}")
        header = f"{'policy':<24} {'median best':>12} {'iters-to-threshold':>20} {'reached':>8}"
        print(header)
        print("-" * len(header))
        for pol in report.policies:
            its = pol.median_iters_to_threshold
            its_text = f"{its:.1f}" if its is not None else not_reached
            best_text = f"{pol.median_best:.4f}" if pol.median_best is not None else "n/a"
            print(f"{pol.label:<24} {best_text:>12} {its_text:>20} {pol.reached_count:>8}")
    return 0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def _load_records(log_path: Path) -> list[IterationRecord]:
    records = []
    for lineno, line in enumerate(log_path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(IterationRecord.from_json_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ConfigError(f"{log_path}:{lineno}: malformed trajectory record: {exc}",
                              key=str(log_path)) from exc
    return records


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    log_path = run_dir / "trajectory.jsonl"
    if not log_path.exists():
        raise ConfigError(f"{run_dir}: no trajectory.jsonl found; not a run directory",
                          key=str(run_dir))
    records = _load_records(log_path)
    if not records:
        raise ConfigError(f"{log_path}: trajectory is empty", key=str(log_path))

    summary_path = run_dir / "summary.json"
    if summary_path.exists():
        try:
            summary = json.loads(summary_path.read_text())
            for req in ("best_candidate", "best_reward", "per_arch_best", "history"):
                if req not in summary:
                    raise KeyError(req)
        except (json.JSONDecodeError, KeyError) as exc:
            raise ConfigError(f"{summary_path}: malformed summary: {exc}",
                              key=str(summary_path)) from exc

    manifest_path = run_dir / "manifest.json"
    if manifest_path.exists():
        try:
            manifest = json.loads(manifest_path.read_text())
            if "config_digest" not in manifest or "version" not in manifest:
                raise KeyError("config_digest/version")
        except (json.JSONDecodeError, KeyError) as exc:
            raise ConfigError(f"{manifest_path}: malformed manifest: {exc}",
                              key=str(manifest_path)) from exc

    csv_path = run_dir / "trajectory.csv"
    if csv_path.exists():
        with open(csv_path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0] != ["iteration", "reward", "best_so_far", "arch_index"]:
            raise ConfigError(f"{csv_path}: unexpected header", key=str(csv_path))

    reachable = None
    ckpt_path = run_dir / "checkpoint.json"
    if ckpt_path.exists():
        space = space_from_dict(load_checkpoint(ckpt_path)["space"])
        reachable = list(space.reachable_arch_indices())

    report_dir = run_dir / "report"
    report_dir.mkdir(exist_ok=True)

    visited = sorted({rec.candidate.arch_index for rec in records})
    for arch in visited:
        with open(report_dir / f"arch_{arch}_rewards.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "reward"])
            for rec in records:
                if rec.candidate.arch_index == arch:
                    writer.writerow([rec.iteration, rec.reward])

    with open(report_dir / "mutation_probs.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "feature", "probability"])
        for rec in records:
            for fid, p in sorted(rec.mutation_probs.items()):
                writer.writerow([rec.iteration, fid, p])

    with open(report_dir / "gaussians.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "feature", "mean", "var"])
        for rec in records:
            for fid, g in sorted(rec.gaussian_states.items()):
                writer.writerow([rec.iteration, fid, g.mean, g.var])

    if not args.quiet:
        print(f"report_dir: {report_dir}")
        print(f"visited_archs: {visited}")
        if reachable is not None:
            for arch in reachable:
                if arch not in visited:
                    print(f"arch {arch}: never visited; arch_{arch}_rewards.csv not written")
    return 0


if __name__ == "__main__":
    entrypoint()
