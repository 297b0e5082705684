"""Reward sources: synthetic landscapes, an external-process protocol, a cache.

Wire protocol (version 1), line-delimited JSON over the child's stdio:

  engine -> child   {"hello": {"protocol": 1}}
  child  -> engine  {"ready": {"protocol": 1}}
  engine -> child   {"id": <u64>, "arch_index": <u32>, "macro": [bits],
                     "params": {<name>: <value>, ...}}
  child  -> engine  {"id": <u64>, "reward": <f64>, "metrics": {...}?}

One request in flight at a time; ids must echo back verbatim.
"""

from __future__ import annotations

import json
import math
import queue
import subprocess
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .errors import (
    ChildExited,
    EvalTimeout,
    EvaluatorFailure,
    ProtocolError,
    SpaceParseError,
)
from .space import Candidate, SearchSpace, Value

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT_S = 600.0


@dataclass(frozen=True)
class EvalResult:
    reward: float
    metrics: Mapping[str, float] = field(default_factory=dict)
    source: str = "synthetic"


class Evaluator:
    """Behavioural interface: total over valid candidates, finite rewards."""

    def evaluate(self, cand: Candidate) -> EvalResult:
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError

    def close(self) -> None:
        pass


def squash(raw: float) -> float:
    """Monotone logistic map of the raw score into (0, 1).

    Fixed on purpose: oracles invert it with unsquash().
    """
    if raw >= 0:
        return 1.0 / (1.0 + math.exp(-raw))
    e = math.exp(raw)
    return e / (1.0 + e)


def unsquash(reward: float) -> float:
    return math.log(reward / (1.0 - reward))


@dataclass(frozen=True)
class ArchLandscape:
    """One architecture's quadratic bowl: bonus minus weighted squared distance."""

    bonus: float
    optimum: Mapping[str, float]
    weights: Mapping[str, float]
    noise_std: float = 0.0

    def __post_init__(self):
        if set(self.optimum) != set(self.weights):
            raise ValueError("optimum and weights must cover the same parameter names")
        if any(w < 0 for w in self.weights.values()):
            raise ValueError("curvature weights must be non-negative")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")


@dataclass(frozen=True)
class SyntheticLandscape:
    """Per-arch quadratic bowls; reward = squash(bonus - sum_i w_i (v_i - opt_i)^2 + noise)."""

    archs: Mapping[int, ArchLandscape]

    def raw_score(self, arch_index: int, micro_values: Mapping[str, Value]) -> float:
        arch = self.archs[arch_index]
        penalty = sum(
            w * (float(micro_values[name]) - arch.optimum[name]) ** 2
            for name, w in arch.weights.items()
        )
        return arch.bonus - penalty

    def best_arch(self) -> int:
        return max(self.archs, key=lambda a: self.archs[a].bonus)

    def optimum_reward(self) -> float:
        """Noise-free global maximum: the best arch's bonus at its optimum."""
        return squash(self.archs[self.best_arch()].bonus)

    def validate_against(self, space: SearchSpace) -> None:
        for arch in space.reachable_arch_indices():
            if arch not in self.archs:
                raise ValueError(f"landscape missing arch index {arch}")
            names = {p.name for p in space.micro_specs(arch)}
            extra = set(self.archs[arch].optimum) - names
            if extra:
                raise ValueError(f"landscape arch {arch} references unknown params {sorted(extra)}")


def synthetic_evaluate(landscape: SyntheticLandscape, cand: Candidate, rng=None) -> EvalResult:
    """Score one candidate; pure and deterministic when noise_std is zero."""
    arch = landscape.archs[cand.arch_index]
    raw = landscape.raw_score(cand.arch_index, cand.micro_values)
    if arch.noise_std > 0:
        if rng is None:
            raise ValueError("noisy landscape needs an rng")
        raw += rng.normal(0.0, arch.noise_std)
    return EvalResult(reward=squash(raw), metrics={"raw_score": raw}, source="synthetic")


class SyntheticEvaluator(Evaluator):
    def __init__(self, landscape: SyntheticLandscape, rng=None):
        self.landscape = landscape
        self.rng = rng

    def bind_rng(self, rng) -> None:
        self.rng = rng

    def evaluate(self, cand: Candidate) -> EvalResult:
        return synthetic_evaluate(self.landscape, cand, self.rng)

    def describe(self) -> dict:
        return {"kind": "synthetic", "archs": sorted(self.landscape.archs)}


# ---------------------------------------------------------------------------
# Caching wrapper
# ---------------------------------------------------------------------------

def cache_key(cand: Candidate) -> tuple:
    """(arch, macro bits, micro values rounded to 12 significant digits)."""
    rounded = tuple(
        (name, "%d" % v if isinstance(v, int) else "%.12g" % v)
        for name, v in sorted(cand.micro_values.items())
    )
    return (cand.arch_index, tuple(cand.macro_vector), rounded)


class CachedEvaluator(Evaluator):
    """Memoises inner results by cache_key; errors are never cached."""

    def __init__(self, inner: Evaluator):
        self.inner = inner
        self.entries: dict[tuple, EvalResult] = {}
        self.inner_calls = 0
        self.hits = 0

    def bind_rng(self, rng) -> None:
        bind = getattr(self.inner, "bind_rng", None)
        if bind is not None:
            bind(rng)

    def evaluate(self, cand: Candidate) -> EvalResult:
        key = cache_key(cand)
        if key in self.entries:
            self.hits += 1
            hit = self.entries[key]
            return EvalResult(reward=hit.reward, metrics=dict(hit.metrics), source="cache")
        self.inner_calls += 1
        result = self.inner.evaluate(cand)
        self.entries[key] = result
        return result

    def describe(self) -> dict:
        return {"kind": "cache", "inner": self.inner.describe()}

    def close(self) -> None:
        self.inner.close()


def cached(inner: Evaluator) -> CachedEvaluator:
    return CachedEvaluator(inner)


# ---------------------------------------------------------------------------
# External process evaluator
# ---------------------------------------------------------------------------

class ExternalEvaluator(Evaluator):
    """Spawns a child process and trades one JSON line per evaluation.

    The child reads requests on stdin and answers on stdout; stderr passes
    through for debugging.  Strictly one request in flight.
    """

    def __init__(self, command: list[str], timeout: float = DEFAULT_TIMEOUT_S,
                 env: Mapping[str, str] | None = None, cwd: str | None = None):
        if not command:
            raise ValueError("external evaluator needs a non-empty command")
        self.command = list(command)
        self.timeout = timeout
        self.extra_env = dict(env) if env else None
        self.cwd = cwd
        self._proc: subprocess.Popen | None = None
        self._lines: queue.Queue = queue.Queue()
        self._next_id = 0

    # -- lifecycle ----------------------------------------------------------

    def start(self) -> None:
        if self._proc is not None:
            return
        env = None
        if self.extra_env is not None:
            import os

            env = dict(os.environ)
            env.update(self.extra_env)
        try:
            self._proc = subprocess.Popen(
                self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                text=True, bufsize=1, env=env, cwd=self.cwd,
            )
        except OSError as exc:
            raise EvaluatorFailure(f"cannot spawn evaluator {self.command!r}: {exc}") from exc
        reader = threading.Thread(target=self._pump, daemon=True)
        reader.start()
        self._send({"hello": {"protocol": PROTOCOL_VERSION}})
        line = self._recv_line()
        try:
            msg = json.loads(line)
        except json.JSONDecodeError:
            raise ProtocolError(f"handshake reply is not JSON: {line!r}", payload=line) from None
        if msg.get("ready", {}).get("protocol") != PROTOCOL_VERSION:
            raise ProtocolError(f"bad handshake reply: {line!r}", payload=line)

    def close(self) -> None:
        proc, self._proc = self._proc, None
        if proc is None:
            return
        try:
            if proc.stdin:
                proc.stdin.close()
            proc.wait(timeout=5.0)
        except (OSError, subprocess.TimeoutExpired):
            proc.kill()
            proc.wait()

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.close()

    # -- evaluation ---------------------------------------------------------

    def evaluate(self, cand: Candidate) -> EvalResult:
        if self._proc is None:
            self.start()
        self._next_id += 1
        req_id = self._next_id
        self._send({
            "id": req_id,
            "arch_index": cand.arch_index,
            "macro": list(cand.macro_vector),
            "params": dict(sorted(cand.micro_values.items())),
        })
        line = self._recv_line()
        try:
            msg = json.loads(line)
        except json.JSONDecodeError:
            raise ProtocolError(f"response is not JSON: {line!r}", payload=line) from None
        if not isinstance(msg, dict):
            raise ProtocolError(f"response is not an object: {line!r}", payload=line)
        if "error" in msg:
            raise ProtocolError(f"evaluator reported an error: {msg['error']}", payload=line)
        if msg.get("id") != req_id:
            raise ProtocolError(
                f"response id {msg.get('id')!r} does not match request id {req_id}", payload=line
            )
        reward = msg.get("reward")
        if not isinstance(reward, (int, float)) or isinstance(reward, bool) or not math.isfinite(reward):
            raise ProtocolError(f"response reward must be a finite number: {line!r}", payload=line)
        metrics = msg.get("metrics", {})
        if not isinstance(metrics, dict):
            raise ProtocolError(f"response metrics must be an object: {line!r}", payload=line)
        return EvalResult(reward=float(reward), metrics=metrics, source="external")

    def describe(self) -> dict:
        return {"kind": "external", "command": self.command, "timeout": self.timeout}

    # -- plumbing -----------------------------------------------------------

    def _pump(self):
        proc = self._proc
        assert proc is not None and proc.stdout is not None
        for line in proc.stdout:
            self._lines.put(line)
        self._lines.put(None)  # EOF sentinel

    def _send(self, obj: dict) -> None:
        proc = self._proc
        if proc is None or proc.stdin is None:
            raise ChildExited("evaluator process is not running")
        try:
            proc.stdin.write(json.dumps(obj, sort_keys=True) + "\n")
            proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ChildExited(f"evaluator stdin closed: {exc}") from exc

    def _recv_line(self) -> str:
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            raise EvalTimeout(f"no response within {self.timeout} s") from None
        if line is None:
            code = None
            if self._proc is not None:
                try:
                    code = self._proc.wait(timeout=5.0)
                except subprocess.TimeoutExpired:
                    code = self._proc.poll()
            raise ChildExited(f"evaluator exited (returncode={code}) while a response was pending")
        return line.rstrip("\n")


def external_evaluate(connection: ExternalEvaluator, cand: Candidate,
                      timeout: float | None = None) -> EvalResult:
    """One request/response round trip on an already-started connection."""
    if timeout is not None:
        connection.timeout = timeout
    return connection.evaluate(cand)


# ---------------------------------------------------------------------------
# Landscape (de)serialisation.  Schema:
#   {"archs": {"<arch index>": {"bonus": f, "optimum": {...}, "weights": {...},
#              "noise_std": f?}, ...}}
# ---------------------------------------------------------------------------

def landscape_from_dict(d: dict, path: str = "landscape") -> SyntheticLandscape:
    if not isinstance(d, dict) or "archs" not in d:
        raise SpaceParseError(f"{path}.archs: missing required key", f"{path}.archs")
    archs_raw = d["archs"]
    if not isinstance(archs_raw, dict) or not archs_raw:
        raise SpaceParseError(f"{path}.archs: expected a non-empty object", f"{path}.archs")
    archs: dict[int, ArchLandscape] = {}
    for key, spec in archs_raw.items():
        kpath = f"{path}.archs.{key}"
        try:
            arch = int(key)
        except ValueError:
            raise SpaceParseError(f"{kpath}: key must be an integer string", kpath) from None
        if not isinstance(spec, dict):
            raise SpaceParseError(f"{kpath}: expected an object", kpath)
        for req in ("bonus", "optimum", "weights"):
            if req not in spec:
                raise SpaceParseError(f"{kpath}.{req}: missing required key", f"{kpath}.{req}")
        for name in ("optimum", "weights"):
            if not isinstance(spec[name], dict):
                raise SpaceParseError(f"{kpath}.{name}: expected an object", f"{kpath}.{name}")
        try:
            archs[arch] = ArchLandscape(
                bonus=float(spec["bonus"]),
                optimum={k: float(v) for k, v in spec["optimum"].items()},
                weights={k: float(v) for k, v in spec["weights"].items()},
                noise_std=float(spec.get("noise_std", 0.0)),
            )
        except (TypeError, ValueError) as exc:
            raise SpaceParseError(f"{kpath}: {exc}", kpath) from None
    return SyntheticLandscape(archs=archs)


def landscape_to_dict(landscape: SyntheticLandscape) -> dict:
    return {
        "archs": {
            str(a): {
                "bonus": arch.bonus,
                "optimum": dict(sorted(arch.optimum.items())),
                "weights": dict(sorted(arch.weights.items())),
                "noise_std": arch.noise_std,
            }
            for a, arch in sorted(landscape.archs.items())
        }
    }


def load_landscape(path: str | Path) -> SyntheticLandscape:
    p = Path(path)
    try:
        raw = json.loads(p.read_text())
    except OSError as exc:
        raise SpaceParseError(f"{p}: cannot read landscape file: {exc}", str(p)) from exc
    except json.JSONDecodeError as exc:
        raise SpaceParseError(f"{p}: invalid JSON: {exc}", str(p)) from exc
    return landscape_from_dict(raw, path=str(p))
