"""Run configuration files: schema, overrides, evaluator construction.

Top-level keys: ``space`` (inline) or ``space_path``, ``engine``,
``evaluator`` ({"synthetic": <landscape>} or {"external": {command, ...}}),
optional ``output_dir``, ``run_name``, and ``bench`` (for the bench command).
Everything is validated up front; errors name the offending key.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .engine import EngineConfig, PolicySpec, engine_config_from_dict
from .errors import ConfigError, SpaceParseError
from .evaluators import (
    DEFAULT_TIMEOUT_S,
    Evaluator,
    ExternalEvaluator,
    SyntheticEvaluator,
    SyntheticLandscape,
    landscape_from_dict,
    load_landscape,
)
from .space import SearchSpace, load_space, space_from_dict

_TOP_KEYS = {"space", "space_path", "engine", "evaluator", "output_dir", "run_name", "bench"}
_BENCH_KEYS = {"policies", "seeds", "iterations", "threshold", "threshold_fraction"}


@dataclass
class BenchConfig:
    policies: list[PolicySpec]
    seeds: list[int]
    iterations: int
    threshold: float | None = None
    threshold_fraction: float | None = None


@dataclass
class RunConfig:
    space: SearchSpace
    engine: EngineConfig
    evaluator_spec: dict
    landscape: SyntheticLandscape | None = None
    output_dir: str | None = None
    run_name: str | None = None
    bench: BenchConfig | None = None


def load_raw_config(path: str | Path) -> dict:
    p = Path(path)
    try:
        raw = json.loads(p.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}", key=str(p)) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {p} is not valid JSON: {exc}", key=str(p)) from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {p} must be a JSON object", key=str(p))
    return raw


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply ``key.path=value`` pairs on top of the raw config dict.

    Values parse as JSON when possible and fall back to bare strings, so
    ``engine.iterations=5`` yields an int and ``run_name=demo`` a string.
    """
    out = json.loads(json.dumps(raw))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key.path=value", key=item)
        dotted, _, text = item.partition("=")
        if not dotted:
            raise ConfigError(f"override {item!r} has an empty key", key=item)
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        node = out
        parts = dotted.split(".")
        for part in parts[:-1]:
            nxt = node.get(part)
            if nxt is None:
                nxt = node[part] = {}
            elif not isinstance(nxt, dict):
                raise ConfigError(f"override {item!r}: {part} is not an object", key=dotted)
            node = nxt
        node[parts[-1]] = value
    return out


def parse_run_config(raw: dict, base_dir: str | Path = ".") -> RunConfig:
    base = Path(base_dir)
    for key in raw:
        if key not in _TOP_KEYS:
            raise ConfigError(f"{key}: unknown top-level key", key=key)

    if ("space" in raw) == ("space_path" in raw):
        raise ConfigError("exactly one of space / space_path is required", key="space")
    try:
        if "space" in raw:
            space = space_from_dict(raw["space"])
        else:
            space = load_space(base / raw["space_path"])
    except SpaceParseError as exc:
        raise ConfigError(f"space: {exc}", key=exc.path) from exc

    engine = engine_config_from_dict(raw.get("engine", {}))

    if "evaluator" not in raw or not isinstance(raw["evaluator"], dict):
        raise ConfigError("evaluator: required object with one evaluator key", key="evaluator")
    ev = raw["evaluator"]
    kinds = [k for k in ("synthetic", "external") if k in ev]
    unknown = set(ev) - {"synthetic", "external"}
    if unknown:
        raise ConfigError(f"evaluator.{sorted(unknown)[0]}: unknown evaluator kind",
                          key=f"evaluator.{sorted(unknown)[0]}")
    if len(kinds) != 1:
        raise ConfigError("evaluator: exactly one of synthetic / external must be set",
                          key="evaluator")

    landscape = None
    if kinds[0] == "synthetic":
        spec = ev["synthetic"]
        try:
            if isinstance(spec, dict) and "path" in spec:
                landscape = load_landscape(base / spec["path"])
            else:
                landscape = landscape_from_dict(spec, path="evaluator.synthetic")
        except SpaceParseError as exc:
            raise ConfigError(str(exc), key=exc.path) from exc
        try:
            landscape.validate_against(space)
        except ValueError as exc:
            raise ConfigError(f"evaluator.synthetic: {exc}", key="evaluator.synthetic") from exc
    else:
        ext = ev["external"]
        if not isinstance(ext, dict) or not isinstance(ext.get("command"), list) or not ext["command"]:
            raise ConfigError("evaluator.external.command: required non-empty argv list",
                              key="evaluator.external.command")
        timeout = ext.get("timeout", DEFAULT_TIMEOUT_S)
        if not isinstance(timeout, (int, float)) or timeout <= 0:
            raise ConfigError("evaluator.external.timeout: must be a positive number",
                              key="evaluator.external.timeout")
        env = ext.get("env")
        if env is not None and not isinstance(env, dict):
            raise ConfigError("evaluator.external.env: must be an object",
                              key="evaluator.external.env")

    bench = None
    if "bench" in raw:
        bench = _parse_bench(raw["bench"])

    output_dir = raw.get("output_dir")
    if output_dir is not None and not isinstance(output_dir, str):
        raise ConfigError("output_dir: must be a string", key="output_dir")
    run_name = raw.get("run_name")
    if run_name is not None and not isinstance(run_name, str):
        raise ConfigError("run_name: must be a string", key="run_name")

    return RunConfig(space=space, engine=engine, evaluator_spec=ev, landscape=landscape,
                     output_dir=output_dir, run_name=run_name, bench=bench)


def _parse_bench(raw: dict) -> BenchConfig:
    if not isinstance(raw, dict):
        raise ConfigError("bench: expected an object", key="bench")
    for key in raw:
        if key not in _BENCH_KEYS:
            raise ConfigError(f"bench.{key}: unknown key", key=f"bench.{key}")
    policies_raw = raw.get("policies")
    if not isinstance(policies_raw, list) or not policies_raw:
        raise ConfigError("bench.policies: required non-empty array", key="bench.policies")
    policies = []
    for i, p in enumerate(policies_raw):
        if not isinstance(p, dict) or "kind" not in p:
            raise ConfigError(f"bench.policies[{i}]: expected an object with a kind",
                              key=f"bench.policies[{i}]")
        try:
            policies.append(PolicySpec(kind=p["kind"], p=p.get("p")))
        except ValueError as exc:
            raise ConfigError(f"bench.policies[{i}]: {exc}", key=f"bench.policies[{i}]") from None
    seeds = raw.get("seeds")
    if (not isinstance(seeds, list) or not all(isinstance(s, int) and s >= 0 for s in seeds)):
        raise ConfigError("bench.seeds: required array of non-negative integers", key="bench.seeds")
    iterations = raw.get("iterations")
    if not isinstance(iterations, int) or iterations < 1:
        raise ConfigError("bench.iterations: required positive integer", key="bench.iterations")
    threshold = raw.get("threshold")
    fraction = raw.get("threshold_fraction")
    if threshold is not None and fraction is not None:
        raise ConfigError("bench: set at most one of threshold / threshold_fraction",
                          key="bench.threshold")
    for label, v in (("threshold", threshold), ("threshold_fraction", fraction)):
        if v is not None and not isinstance(v, (int, float)):
            raise ConfigError(f"bench.{label}: must be a number", key=f"bench.{label}")
    return BenchConfig(policies=policies, seeds=list(seeds), iterations=iterations,
                       threshold=threshold, threshold_fraction=fraction)


def build_evaluator(rc: RunConfig, base_dir: str | Path = ".") -> Evaluator:
    """Fresh evaluator per the config's selection; engine binds the rng."""
    if rc.landscape is not None:
        return SyntheticEvaluator(rc.landscape)
    ext = rc.evaluator_spec["external"]
    return ExternalEvaluator(
        command=[str(a) for a in ext["command"]],
        timeout=float(ext.get("timeout", DEFAULT_TIMEOUT_S)),
        env=ext.get("env"),
        cwd=ext.get("cwd"),
    )
