"""The search loop: mutate, evaluate, update Q/mean/variance, accept, record.

State updates within an iteration run in a fixed order: Q-values first, then
mean and variance for the mutated continuous features, then the reward
tracker, so every update sees the running average from *before* the current
observation.  Per-architecture micro values are kept warm in a store so a
macro switch resumes where that architecture left off.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import (
    CheckpointIOError,
    ConfigError,
    CorruptCheckpoint,
    EvaluatorFailure,
    VersionMismatch,
)
from .evaluators import CachedEvaluator, EvalResult, Evaluator, cached
from .policy import (
    ACTION_FLIP,
    ACTION_MINUS,
    ACTION_PLUS,
    MutationPolicyConfig,
    MutationRecord,
    QTable,
    _mutate,
    build_gaussian_store,
    macro_feature,
    micro_feature,
    mutate_candidate,
    mutation_probability,
    update_q_values,
)
from .space import (
    Candidate,
    ParamKind,
    SearchSpace,
    candidate_from_dict,
    candidate_to_dict,
    effective_arch_index,
    initial_candidate,
    space_from_dict,
    space_to_dict,
    validate_candidate,
)
from .stats import (
    GaussianState,
    RewardTracker,
    StatsConfig,
    update_mean,
    update_reward_tracker,
    update_variance,
)

CHECKPOINT_FORMAT = "hiersearch-checkpoint"
CHECKPOINT_VERSION = 1

ACCEPTANCE_MODES = ("always_accept", "greedy_elitist")
POLICY_MODES = ("adaptive", "fixed_prob", "random_search")


@dataclass(frozen=True)
class EngineConfig:
    iterations: int = 50
    acceptance: str = "always_accept"
    policy: MutationPolicyConfig = field(default_factory=MutationPolicyConfig)
    stats: StatsConfig = field(default_factory=StatsConfig)
    eval_cache: bool = False
    checkpoint_every: int = 50
    seed: int = 0
    policy_mode: str = "adaptive"
    fixed_prob: float = 0.5

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.acceptance not in ACCEPTANCE_MODES:
            raise ValueError(f"acceptance must be one of {ACCEPTANCE_MODES}")
        if self.checkpoint_every < 1:
            raise ValueError("checkpoint_every must be >= 1")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ValueError("seed must be a non-negative integer")
        if self.policy_mode not in POLICY_MODES:
            raise ValueError(f"policy_mode must be one of {POLICY_MODES}")
        if not 0.0 < self.fixed_prob <= 1.0:
            raise ValueError("fixed_prob must lie in (0, 1]")


@dataclass(frozen=True)
class IterationRecord:
    """One line of the trajectory log.

    mutation_probs and gaussian_states snapshot the policy state after this
    iteration's updates, for post-hoc analysis.
    """

    iteration: int
    candidate: Candidate
    reward: float
    running_avg: float
    mutation_record: MutationRecord
    q_snapshot_digest: str
    accepted: bool
    wall_time_ms: int
    mutation_probs: Mapping[str, float] = field(default_factory=dict)
    gaussian_states: Mapping[str, GaussianState] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "candidate": candidate_to_dict(self.candidate),
            "reward": self.reward,
            "running_avg": self.running_avg,
            "mutation_record": self.mutation_record.to_jsonable(),
            "q_snapshot_digest": self.q_snapshot_digest,
            "accepted": self.accepted,
            "wall_time_ms": self.wall_time_ms,
            "mutation_probs": dict(sorted(self.mutation_probs.items())),
            "gaussian_states": {
                fid: {"mean": g.mean, "var": g.var}
                for fid, g in sorted(self.gaussian_states.items())
            },
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "IterationRecord":
        return cls(
            iteration=d["iteration"],
            candidate=candidate_from_dict(d["candidate"]),
            reward=d["reward"],
            running_avg=d["running_avg"],
            mutation_record=MutationRecord.from_jsonable(d["mutation_record"]),
            q_snapshot_digest=d["q_snapshot_digest"],
            accepted=d["accepted"],
            wall_time_ms=d["wall_time_ms"],
            mutation_probs=d.get("mutation_probs", {}),
            gaussian_states={
                fid: GaussianState(mean=g["mean"], var=g["var"])
                for fid, g in d.get("gaussian_states", {}).items()
            },
        )


@dataclass(frozen=True)
class RunResult:
    best_candidate: Candidate
    best_reward: float
    history: tuple[IterationRecord, ...]
    per_arch_best: Mapping[int, tuple[Candidate, float]]

    def to_summary_dict(self) -> dict:
        return {
            "best_candidate": candidate_to_dict(self.best_candidate),
            "best_reward": self.best_reward,
            "per_arch_best": {
                str(a): {"candidate": candidate_to_dict(c), "reward": r}
                for a, (c, r) in sorted(self.per_arch_best.items())
            },
            "history": [rec.to_json_dict() for rec in self.history],
        }


def record_to_line(rec: IterationRecord) -> str:
    return json.dumps(rec.to_json_dict(), sort_keys=True, separators=(",", ":"))


def trajectory_csv_rows(records: Sequence[IterationRecord]):
    """(iteration, reward, best_so_far, arch_index) rows for plotting."""
    best = -math.inf
    for rec in records:
        best = max(best, rec.reward)
        yield rec.iteration, rec.reward, best, rec.candidate.arch_index


def write_trajectory_csv(records: Sequence[IterationRecord], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "reward", "best_so_far", "arch_index"])
        writer.writerows(trajectory_csv_rows(records))


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def engine_config_to_dict(cfg: EngineConfig) -> dict:
    p, s = cfg.policy, cfg.stats
    return {
        "iterations": cfg.iterations,
        "acceptance": cfg.acceptance,
        "eval_cache": cfg.eval_cache,
        "checkpoint_every": cfg.checkpoint_every,
        "seed": cfg.seed,
        "policy_mode": cfg.policy_mode,
        "fixed_prob": cfg.fixed_prob,
        "policy": {
            "max_prob": p.max_prob,
            "q_init": p.q_init,
            "q_floor": p.q_floor,
            "q_learning_rate": p.q_learning_rate,
            "rng_seed": p.rng_seed,
            "continuous_mutation": p.continuous_mutation,
            "macro_max_prob": p.macro_max_prob,
            "micro_max_prob": p.micro_max_prob,
        },
        "stats": {
            "k": s.k,
            "variance_strategy": s.variance_strategy,
            "var_floor": s.var_floor,
            "mean_sign_mode": s.mean_sign_mode,
            "init_sigma_fraction": s.init_sigma_fraction,
            "tracker_mode": s.tracker_mode,
            "tracker_beta": s.tracker_beta,
        },
    }


def engine_config_from_dict(d: dict, path: str = "engine") -> EngineConfig:
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: expected an object", key=path)
    known = set(engine_config_to_dict(EngineConfig()))
    for key in d:
        if key not in known:
            raise ConfigError(f"{path}.{key}: unknown key", key=f"{path}.{key}")
    try:
        policy = MutationPolicyConfig(**d.get("policy", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}.policy: {exc}", key=f"{path}.policy") from None
    try:
        stats = StatsConfig(**d.get("stats", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}.stats: {exc}", key=f"{path}.stats") from None
    simple = {k: v for k, v in d.items() if k not in ("policy", "stats")}
    try:
        return EngineConfig(policy=policy, stats=stats, **simple)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}", key=path) from None


def config_digest(cfg: EngineConfig, space: SearchSpace) -> str:
    blob = _canonical({"engine": engine_config_to_dict(cfg), "space": space_to_dict(space)})
    return hashlib.sha256(blob.encode()).hexdigest()


class SearchEngine:
    """Owns all mutable search state; strictly single-threaded.

    Two RNG streams spawn deterministically from the seed: one for mutation
    draws, one for evaluator noise.  Both are checkpointed, so a resumed run
    replays the identical remaining trajectory.
    """

    def __init__(
        self,
        space: SearchSpace,
        evaluator: Evaluator | None,
        cfg: EngineConfig,
        out_dir: str | Path | None = None,
        log_path: str | Path | None = None,
        log_append: bool = False,
        config_payload: dict | None = None,
    ):
        self.space = space
        self.cfg = cfg
        self.config_payload = config_payload
        self.evaluator: Evaluator | None = None
        if evaluator is not None:
            self.attach_evaluator(evaluator)

        children = np.random.SeedSequence(cfg.seed).spawn(2)
        self.rng = np.random.default_rng(children[0])
        self.eval_rng = np.random.default_rng(children[1])
        self._bind_eval_rng()

        self.table = QTable.from_space(space, cfg.policy)
        self.gauss = build_gaussian_store(space, cfg.stats)
        self.tracker = cfg.stats.new_tracker()
        self.arch_store: dict[int, dict] = {}
        self.base = initial_candidate(space)
        self.base_reward: float | None = None
        self.best: Candidate | None = None
        self.best_reward: float | None = None
        self.per_arch_best: dict[int, tuple[Candidate, float]] = {}
        self.history: list[IterationRecord] = []
        self.iteration = 0

        self._feature_specs = self._index_features(space)
        self.out_dir = Path(out_dir) if out_dir is not None else None
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        self.log_path = Path(log_path) if log_path is not None else None
        if self.log_path is not None and not log_append:
            self.log_path.write_text("")

    # -- construction helpers -------------------------------------------------

    def attach_evaluator(self, evaluator: Evaluator) -> None:
        self.evaluator = cached(evaluator) if self.cfg.eval_cache else evaluator
        if hasattr(self, "eval_rng"):
            self._bind_eval_rng()

    def _bind_eval_rng(self) -> None:
        bind = getattr(self.evaluator, "bind_rng", None)
        if bind is not None:
            bind(self.eval_rng)

    @staticmethod
    def _index_features(space: SearchSpace) -> dict:
        specs = {}
        for spec in space.macro_params:
            if not spec.fixed:
                specs[macro_feature(spec.name)] = spec
        for arch in space.reachable_arch_indices():
            for spec in space.micro_specs(arch):
                if not spec.fixed:
                    specs[micro_feature(arch, spec.name)] = spec
        return specs

    @property
    def is_complete(self) -> bool:
        return self.iteration >= self.cfg.iterations

    # -- one iteration --------------------------------------------------------

    def step(self) -> IterationRecord:
        t0 = time.perf_counter()
        mode = self.cfg.policy_mode
        if mode == "random_search":
            mutated, record = self._sample_uniform(), MutationRecord()
        elif mode == "fixed_prob":
            mutated, record = self._mutate_fixed_prob()
        else:
            mutated, record = mutate_candidate(
                self.space, self.base, self.table, self.gauss, self.cfg.policy,
                self.rng, micro_store=self.arch_store,
            )
        validate_candidate(self.space, mutated)

        reward = self._evaluate(mutated).reward
        baseline = self.tracker.running_avg if self.tracker.count > 0 else reward

        if mode == "adaptive":
            update_q_values(self.table, record, reward, baseline, self.cfg.policy)
        if mode != "random_search":
            self._update_gaussians(record, reward)
        self.tracker = update_reward_tracker(self.tracker, reward)

        accepted = True
        if self.cfg.acceptance == "greedy_elitist":
            accepted = self.base_reward is None or reward >= self.base_reward
        if accepted:
            self.base, self.base_reward = mutated, reward

        self.arch_store[mutated.arch_index] = dict(mutated.micro_values)
        if self.best_reward is None or reward > self.best_reward:
            self.best, self.best_reward = mutated, reward
        arch_best = self.per_arch_best.get(mutated.arch_index)
        if arch_best is None or reward > arch_best[1]:
            self.per_arch_best[mutated.arch_index] = (mutated, reward)

        self.iteration += 1
        rec = IterationRecord(
            iteration=self.iteration,
            candidate=mutated,
            reward=reward,
            running_avg=self.tracker.running_avg,
            mutation_record=record,
            q_snapshot_digest=self._table_digest(),
            accepted=accepted,
            wall_time_ms=int((time.perf_counter() - t0) * 1000),
            mutation_probs=self._probs_snapshot(),
            gaussian_states=dict(self.gauss),
        )
        self.history.append(rec)
        self._write_log_line(rec)
        if self.out_dir is not None and self.iteration % self.cfg.checkpoint_every == 0:
            self.save_checkpoint(self.out_dir / "checkpoints" / f"ckpt_{self.iteration:06d}.json")
        return rec

    def run(self) -> RunResult:
        start = len(self.history)
        while not self.is_complete:
            self.step()
        if self.out_dir is not None:
            self.save_checkpoint(self.out_dir / "checkpoint.json")
        assert self.best is not None and self.best_reward is not None
        return RunResult(
            best_candidate=self.best,
            best_reward=self.best_reward,
            history=tuple(self.history[start:]),
            per_arch_best=dict(self.per_arch_best),
        )

    # -- policy variants --------------------------------------------------------

    def _mutate_fixed_prob(self):
        p = self.cfg.fixed_prob

        def prob_of(fid, cap):
            return p

        def action_of(fid, spec):
            if spec.kind is ParamKind.BINARY:
                return ACTION_FLIP
            # 50/50, one uniform draw: same draw pattern as the adaptive policy
            return ACTION_PLUS if self.rng.random() < 0.5 else ACTION_MINUS

        return _mutate(self.space, self.base, prob_of, action_of, self.gauss,
                       self.cfg.policy, self.rng, self.arch_store)

    def _sample_uniform(self) -> Candidate:
        bits = []
        for spec in self.space.macro_params:
            bits.append(spec.initial if spec.fixed else int(self.rng.integers(0, 2)))
        arch = effective_arch_index(bits, self.space.macro_params)
        micro = {}
        for spec in self.space.micro_specs(arch):
            if spec.fixed:
                micro[spec.name] = spec.initial
            elif spec.kind is ParamKind.CONTINUOUS:
                micro[spec.name] = float(self.rng.uniform(spec.lower, spec.upper))
            else:
                micro[spec.name] = int(self.rng.integers(spec.lower, spec.upper + 1))
        return Candidate(tuple(bits), arch, micro, self.iteration + 1)

    # -- state updates ----------------------------------------------------------

    def _update_gaussians(self, record: MutationRecord, reward: float) -> None:
        for entry in record.entries:
            spec = self._feature_specs[entry.feature]
            if spec.kind is not ParamKind.CONTINUOUS:
                continue
            state = self.gauss[entry.feature]
            sampled = float(entry.new)
            state = update_mean(state, sampled, reward, self.tracker, self.cfg.stats,
                                spec.lower, spec.upper)
            state = update_variance(state, sampled, reward, self.tracker, self.cfg.stats)
            self.gauss[entry.feature] = state

    def _evaluate(self, cand: Candidate) -> EvalResult:
        if self.evaluator is None:
            raise EvaluatorFailure("engine has no evaluator attached")
        try:
            result = self.evaluator.evaluate(cand)
            if not math.isfinite(result.reward):
                raise EvaluatorFailure(f"evaluator returned non-finite reward {result.reward!r}")
        except EvaluatorFailure:
            self._abort_checkpoint()
            raise
        except Exception as exc:
            self._abort_checkpoint()
            raise EvaluatorFailure(
                f"evaluator failed at iteration {self.iteration + 1}: {exc}"
            ) from exc
        return result

    def _abort_checkpoint(self) -> None:
        if self.out_dir is not None:
            try:
                self.save_checkpoint(self.out_dir / "checkpoint.json")
            except CheckpointIOError:
                pass  # the original failure matters more

    def _probs_snapshot(self) -> dict[str, float]:
        mode = self.cfg.policy_mode
        if mode == "random_search":
            return {}
        if mode == "fixed_prob":
            return {fid: self.cfg.fixed_prob for fid in self._feature_specs}
        probs = {}
        for fid in self.table.entries:
            cap = self.cfg.policy.macro_cap if fid.startswith("macro:") else self.cfg.policy.micro_cap
            probs[fid] = mutation_probability(self.table, fid, cap)
        return probs

    def _table_digest(self) -> str:
        return hashlib.sha256(_canonical(self.table.to_dict()).encode()).hexdigest()

    def _write_log_line(self, rec: IterationRecord) -> None:
        if self.log_path is None:
            return
        with open(self.log_path, "a") as fh:
            fh.write(record_to_line(rec) + "\n")

    # -- checkpointing ------------------------------------------------------------

    def checkpoint_dict(self) -> dict:
        data = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "config_digest": config_digest(self.cfg, self.space),
            "engine_config": engine_config_to_dict(self.cfg),
            "space": space_to_dict(self.space),
            "payload": self.config_payload,
            "iteration": self.iteration,
            "qtable": self.table.to_dict(),
            "gaussian": {fid: {"mean": g.mean, "var": g.var}
                         for fid, g in sorted(self.gauss.items())},
            "tracker": {"mode": self.tracker.mode, "beta": self.tracker.beta,
                        "running_avg": self.tracker.running_avg, "count": self.tracker.count},
            "arch_store": {str(a): dict(v) for a, v in sorted(self.arch_store.items())},
            "base_candidate": candidate_to_dict(self.base),
            "base_reward": self.base_reward,
            "best_candidate": candidate_to_dict(self.best) if self.best else None,
            "best_reward": self.best_reward,
            "per_arch_best": {
                str(a): {"candidate": candidate_to_dict(c), "reward": r}
                for a, (c, r) in sorted(self.per_arch_best.items())
            },
            "rng": {
                "mutation": _rng_state_to_jsonable(self.rng),
                "eval": _rng_state_to_jsonable(self.eval_rng),
            },
        }
        if isinstance(self.evaluator, CachedEvaluator):
            data["cache"] = [
                [list(key[0:1]) + [list(key[1]), [list(kv) for kv in key[2]]],
                 {"reward": res.reward, "metrics": dict(res.metrics), "source": res.source}]
                for key, res in self.evaluator.entries.items()
            ]
        return data

    def save_checkpoint(self, path: str | Path) -> None:
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps(self.checkpoint_dict(), sort_keys=True))
            tmp.replace(path)
        except OSError as exc:
            raise CheckpointIOError(f"cannot write checkpoint {path}: {exc}") from exc

    @classmethod
    def from_checkpoint(
        cls,
        source: str | Path | dict,
        evaluator_factory: Callable[[], Evaluator] | None = None,
        out_dir: str | Path | None = None,
        log_path: str | Path | None = None,
    ) -> "SearchEngine":
        data = load_checkpoint(source) if not isinstance(source, dict) else source
        try:
            space = space_from_dict(data["space"])
            cfg = engine_config_from_dict(data["engine_config"])
            eng = cls(space, None, cfg, out_dir=out_dir, log_path=log_path,
                      log_append=True, config_payload=data.get("payload"))
            eng.iteration = int(data["iteration"])
            eng.table = QTable.from_dict(data["qtable"])
            eng.gauss = {fid: GaussianState(mean=g["mean"], var=g["var"])
                         for fid, g in data["gaussian"].items()}
            tr = data["tracker"]
            eng.tracker = RewardTracker(mode=tr["mode"], beta=tr["beta"],
                                        running_avg=tr["running_avg"], count=tr["count"])
            eng.arch_store = {int(a): dict(v) for a, v in data["arch_store"].items()}
            eng.base = candidate_from_dict(data["base_candidate"])
            eng.base_reward = data["base_reward"]
            if data["best_candidate"] is not None:
                eng.best = candidate_from_dict(data["best_candidate"])
                eng.best_reward = data["best_reward"]
            eng.per_arch_best = {
                int(a): (candidate_from_dict(v["candidate"]), v["reward"])
                for a, v in data["per_arch_best"].items()
            }
            _restore_rng_state(eng.rng, data["rng"]["mutation"])
            _restore_rng_state(eng.eval_rng, data["rng"]["eval"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptCheckpoint(f"checkpoint is structurally invalid: {exc}") from exc
        if evaluator_factory is not None:
            eng.attach_evaluator(evaluator_factory())
            if isinstance(eng.evaluator, CachedEvaluator):
                for key_parts, res in data.get("cache", []):
                    arch, macro, kvs = key_parts[0], key_parts[1], key_parts[2]
                    key = (arch, tuple(macro), tuple((k, v) for k, v in kvs))
                    eng.evaluator.entries[key] = EvalResult(
                        reward=res["reward"], metrics=res["metrics"], source=res["source"])
        return eng


def _rng_state_to_jsonable(rng) -> dict:
    state = rng.bit_generator.state
    return json.loads(json.dumps(state))


def _restore_rng_state(rng, state: dict) -> None:
    if state.get("bit_generator") != rng.bit_generator.state["bit_generator"]:
        raise ValueError(f"unexpected bit generator {state.get('bit_generator')!r}")
    rng.bit_generator.state = state


def load_checkpoint(path: str | Path) -> dict:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise CorruptCheckpoint(f"cannot read checkpoint {p}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptCheckpoint(f"checkpoint {p} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict) or data.get("format") != CHECKPOINT_FORMAT:
        raise CorruptCheckpoint(f"{p} is not a {CHECKPOINT_FORMAT} file")
    if data.get("version") != CHECKPOINT_VERSION:
        raise VersionMismatch(
            f"checkpoint version {data.get('version')!r} unsupported "
            f"(expected {CHECKPOINT_VERSION})"
        )
    return data


def run_search(
    space: SearchSpace,
    evaluator: Evaluator,
    cfg: EngineConfig,
    out_dir: str | Path | None = None,
    log_path: str | Path | None = None,
    config_payload: dict | None = None,
) -> RunResult:
    """Execute exactly cfg.iterations iterations and return the result."""
    engine = SearchEngine(space, evaluator, cfg, out_dir=out_dir, log_path=log_path,
                          config_payload=config_payload)
    return engine.run()


def resume(
    checkpoint_path: str | Path,
    evaluator_factory: Callable[[], Evaluator],
    out_dir: str | Path | None = None,
    log_path: str | Path | None = None,
) -> tuple[RunResult, "SearchEngine"]:
    """Continue a checkpointed run; the remaining trajectory matches an
    uninterrupted run with the same seed record-for-record."""
    engine = SearchEngine.from_checkpoint(
        checkpoint_path, evaluator_factory, out_dir=out_dir, log_path=log_path
    )
    if engine.is_complete:
        assert engine.best is not None
        result = RunResult(engine.best, engine.best_reward, (), dict(engine.per_arch_best))
        return result, engine
    return engine.run(), engine


# ---------------------------------------------------------------------------
# Policy comparison harness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PolicySpec:
    kind: str  # adaptive | fixed_prob | random_search
    p: float | None = None

    def __post_init__(self):
        if self.kind not in POLICY_MODES:
            raise ValueError(f"policy kind must be one of {POLICY_MODES}")

    @property
    def label(self) -> str:
        if self.kind == "fixed_prob":
            return f"fixed_prob(p={self.p if self.p is not None else 0.5})"
        return self.kind


@dataclass
class PolicyCell:
    seed: int
    ok: bool
    best_reward: float | None = None
    best_curve: list[float] = field(default_factory=list)
    iterations_to_threshold: int | None = None
    final_probs: dict[str, float] = field(default_factory=dict)
    error: str | None = None


@dataclass
class PolicyComparison:
    label: str
    cells: list[PolicyCell]
    median_curve: list[float]
    q25_curve: list[float]
    q75_curve: list[float]
    median_best: float | None
    median_iters_to_threshold: float | None
    reached_count: int


@dataclass
class ComparisonReport:
    iterations: int
    threshold: float | None
    policies: list[PolicyComparison]

    def to_json_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "threshold": self.threshold,
            "policies": [
                {
                    "label": pc.label,
                    "median_best": pc.median_best,
                    "median_iters_to_threshold": pc.median_iters_to_threshold,
                    "reached_count": pc.reached_count,
                    "cells": [
                        {
                            "seed": c.seed,
                            "ok": c.ok,
                            "best_reward": c.best_reward,
                            "iterations_to_threshold": c.iterations_to_threshold,
                            "error": c.error,
                        }
                        for c in pc.cells
                    ],
                }
                for pc in self.policies
            ],
        }


def compare_policies(
    space: SearchSpace,
    evaluator_factory: Callable[[int], Evaluator],
    policies: Sequence[PolicySpec],
    seeds: Sequence[int],
    n: int,
    threshold: float | None = None,
    base_cfg: EngineConfig | None = None,
) -> ComparisonReport:
    """Run every (policy, seed) cell independently and aggregate best-reward
    curves.  Cells share nothing mutable; a failed cell is marked, not fatal."""
    if len(seeds) < 2:
        raise ValueError("compare_policies needs at least 2 seeds")
    base = base_cfg if base_cfg is not None else EngineConfig()
    comparisons = []
    for pol in policies:
        cells = []
        for seed in seeds:
            cfg = replace(
                base, iterations=n, seed=seed, policy_mode=pol.kind,
                fixed_prob=pol.p if pol.p is not None else base.fixed_prob,
            )
            evaluator = evaluator_factory(seed)
            try:
                result = run_search(space, evaluator, cfg)
                curve, best = [], -math.inf
                for rec in result.history:
                    best = max(best, rec.reward)
                    curve.append(best)
                its = None
                if threshold is not None:
                    its = next((i + 1 for i, b in enumerate(curve) if b >= threshold), None)
                cells.append(PolicyCell(
                    seed=seed, ok=True, best_reward=result.best_reward, best_curve=curve,
                    iterations_to_threshold=its,
                    final_probs=dict(result.history[-1].mutation_probs),
                ))
            except Exception as exc:
                cells.append(PolicyCell(seed=seed, ok=False, error=f"{type(exc).__name__}: {exc}"))
            finally:
                evaluator.close()
        comparisons.append(_aggregate(pol.label, cells, n))
    return ComparisonReport(iterations=n, threshold=threshold, policies=comparisons)


def _aggregate(label: str, cells: list[PolicyCell], n: int) -> PolicyComparison:
    ok = [c for c in cells if c.ok]
    if ok:
        curves = np.array([c.best_curve for c in ok])
        median_curve = np.percentile(curves, 50, axis=0).tolist()
        q25 = np.percentile(curves, 25, axis=0).tolist()
        q75 = np.percentile(curves, 75, axis=0).tolist()
        median_best = float(np.median([c.best_reward for c in ok]))
        its = [c.iterations_to_threshold if c.iterations_to_threshold is not None else math.inf
               for c in ok]
        med_its = float(np.median(its))
        median_its = None if math.isinf(med_its) else med_its
        reached = sum(1 for c in ok if c.iterations_to_threshold is not None)
    else:
        median_curve = q25 = q75 = []
        median_best = median_its = None
        reached = 0
    return PolicyComparison(
        label=label, cells=cells, median_curve=median_curve, q25_curve=q25,
        q75_curve=q75, median_best=median_best,
        median_iters_to_threshold=median_its, reached_count=reached,
    )
