"""Q-table mutation policy: per-feature probabilities, action choice, operators.

Feature ids are strings: ``macro:<name>`` for macro bits and
``arch<k>:<name>`` for micro params of architecture k.  Binary features carry
a single ``flip`` action; discrete and continuous features carry ``plus`` and
``minus``.

Draw order is fixed so runs are bit-reproducible: macro bits in declaration
order, then micro features of the resulting architecture in declaration
order; per feature a firing draw, then an action draw (skipped for binary),
then an offset draw (continuous only).  Fixed parameters consume no draws.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

from .errors import EmptyTable, KindMismatch, UnknownFeature
from .space import (
    Candidate,
    ParamKind,
    ParamSpec,
    SearchSpace,
    Value,
    effective_arch_index,
)
from .stats import GaussianState, StatsConfig, initial_gaussian

ACTION_FLIP = "flip"
ACTION_PLUS = "plus"
ACTION_MINUS = "minus"

CONTINUOUS_MUTATION_MODES = ("mean_relative", "value_relative")


def macro_feature(name: str) -> str:
    return f"macro:{name}"


def micro_feature(arch_index: int, name: str) -> str:
    return f"arch{arch_index}:{name}"


@dataclass(frozen=True)
class MutationPolicyConfig:
    """Knobs for the Q-table policy.

    q_floor keeps every Q-value strictly positive so probabilities never
    vanish; macro_max_prob / micro_max_prob override max_prob per level.
    """

    max_prob: float = 0.8
    q_init: float = 1.0
    q_floor: float = 0.05
    q_learning_rate: float = 1.0
    rng_seed: int = 0
    continuous_mutation: str = "mean_relative"
    macro_max_prob: float | None = None
    micro_max_prob: float | None = None

    def __post_init__(self):
        for label, p in (("max_prob", self.max_prob),
                         ("macro_max_prob", self.macro_max_prob),
                         ("micro_max_prob", self.micro_max_prob)):
            if p is not None and not 0.0 < p <= 1.0:
                raise ValueError(f"{label} must lie in (0, 1]")
        if self.q_floor <= 0:
            raise ValueError("q_floor must be positive")
        if self.q_floor > self.q_init:
            raise ValueError("q_floor must not exceed q_init")
        if self.q_learning_rate <= 0:
            raise ValueError("q_learning_rate must be positive")
        if self.continuous_mutation not in CONTINUOUS_MUTATION_MODES:
            raise ValueError(f"continuous_mutation must be one of {CONTINUOUS_MUTATION_MODES}")

    @property
    def macro_cap(self) -> float:
        return self.max_prob if self.macro_max_prob is None else self.macro_max_prob

    @property
    def micro_cap(self) -> float:
        return self.max_prob if self.micro_max_prob is None else self.micro_max_prob


@dataclass
class QTable:
    """Per-(feature, action) utilities; source of mutation probabilities."""

    entries: dict[str, dict[str, float]] = field(default_factory=dict)

    @classmethod
    def from_space(cls, space: SearchSpace, cfg: MutationPolicyConfig) -> "QTable":
        """One entry per mutable feature, all Q-values at q_init."""
        entries: dict[str, dict[str, float]] = {}
        for spec in space.macro_params:
            if not spec.fixed:
                entries[macro_feature(spec.name)] = {ACTION_FLIP: cfg.q_init}
        for arch in space.reachable_arch_indices():
            for spec in space.micro_specs(arch):
                if spec.fixed:
                    continue
                fid = micro_feature(arch, spec.name)
                if spec.kind is ParamKind.BINARY:
                    entries[fid] = {ACTION_FLIP: cfg.q_init}
                else:
                    entries[fid] = {ACTION_PLUS: cfg.q_init, ACTION_MINUS: cfg.q_init}
        return cls(entries=entries)

    def to_dict(self) -> dict:
        return {fid: dict(sorted(acts.items())) for fid, acts in sorted(self.entries.items())}

    @classmethod
    def from_dict(cls, d: dict) -> "QTable":
        return cls(entries={fid: {a: float(q) for a, q in acts.items()} for fid, acts in d.items()})


def build_gaussian_store(space: SearchSpace, cfg: StatsConfig) -> dict[str, GaussianState]:
    """Fresh Gaussian state for every mutable continuous feature in the space."""
    store: dict[str, GaussianState] = {}
    for arch in space.reachable_arch_indices():
        for spec in space.micro_specs(arch):
            if spec.kind is ParamKind.CONTINUOUS and not spec.fixed:
                store[micro_feature(arch, spec.name)] = initial_gaussian(
                    spec.lower, spec.upper, spec.initial, cfg
                )
    return store


def cumulative_q(table: QTable, feature: str) -> float:
    """Sum of the feature's action Q-values."""
    if feature not in table.entries:
        raise UnknownFeature(f"feature {feature!r} not in Q-table")
    return sum(table.entries[feature].values())


def mutation_probability(table: QTable, feature: str, max_prob: float) -> float:
    """P(s) = Q(s) / max_s' Q(s') * max_prob, normalising over the whole table."""
    if not table.entries:
        raise EmptyTable("Q-table has no entries")
    q = cumulative_q(table, feature)
    top = max(sum(acts.values()) for acts in table.entries.values())
    return q / top * max_prob


def select_action(table: QTable, feature: str, rng) -> str:
    """Draw an action proportionally to its Q-value.

    Binary features always flip and consume no draw; +/- features consume
    exactly one uniform draw and return plus with probability
    Q(s,+)/(Q(s,+)+Q(s,-)).
    """
    if feature not in table.entries:
        raise UnknownFeature(f"feature {feature!r} not in Q-table")
    actions = table.entries[feature]
    if set(actions) == {ACTION_FLIP}:
        return ACTION_FLIP
    q_plus = actions[ACTION_PLUS]
    q_minus = actions[ACTION_MINUS]
    return ACTION_PLUS if rng.random() < q_plus / (q_plus + q_minus) else ACTION_MINUS


def mutate_value(
    spec: ParamSpec,
    current: Value,
    action: str,
    gauss: GaussianState | None,
    rng,
    mode: str = "mean_relative",
) -> tuple[Value, float | None]:
    """Apply one mutation operator; returns (new value, sampled offset or None).

    Binary: flip.  Discrete: step by +/-1, clamped to bounds.  Continuous:
    draw x ~ N(0, var) and set the value to anchor +/- |x| clamped to bounds,
    where the anchor is the stored mean (mean_relative) or the current value
    (value_relative).
    """
    if spec.kind is ParamKind.CONTINUOUS:
        if gauss is None:
            raise KindMismatch(f"{spec.name}: continuous mutation needs a GaussianState")
    elif gauss is not None:
        raise KindMismatch(f"{spec.name}: GaussianState supplied for {spec.kind.value} param")

    if spec.kind is ParamKind.BINARY:
        return 1 - int(current), None
    if spec.kind is ParamKind.DISCRETE:
        step = 1 if action == ACTION_PLUS else -1
        return _clamp(int(current) + step, spec.lower, spec.upper), None
    x = rng.normal(0.0, gauss.var ** 0.5)
    anchor = gauss.mean if mode == "mean_relative" else float(current)
    offset = abs(x) if action == ACTION_PLUS else -abs(x)
    return _clamp(anchor + offset, spec.lower, spec.upper), x


@dataclass(frozen=True)
class MutationEntry:
    feature: str
    action: str
    old: Value
    new: Value
    offset: float | None = None


@dataclass(frozen=True)
class MutationRecord:
    """Audit trail of the features whose mutation fired this iteration."""

    entries: tuple[MutationEntry, ...] = ()

    @property
    def is_empty(self) -> bool:
        return not self.entries

    def to_jsonable(self) -> list:
        return [[e.feature, e.action, e.old, e.new, e.offset] for e in self.entries]

    @classmethod
    def from_jsonable(cls, rows: list) -> "MutationRecord":
        return cls(entries=tuple(MutationEntry(*row) for row in rows))


def mutate_candidate(
    space: SearchSpace,
    cand: Candidate,
    table: QTable,
    gauss_store: Mapping[str, GaussianState],
    cfg: MutationPolicyConfig,
    rng,
    micro_store: Mapping[int, Mapping[str, Value]] | None = None,
) -> tuple[Candidate, MutationRecord]:
    """One full mutation pass: macro bits, arch re-decode, then micro features.

    If the macro mutation lands on a different architecture, its micro values
    resume from micro_store (last-seen values per arch), falling back to the
    declared initials.
    """

    def prob_of(feature: str, cap: float) -> float:
        return mutation_probability(table, feature, cap)

    def action_of(feature: str, spec: ParamSpec) -> str:
        return select_action(table, feature, rng)

    return _mutate(space, cand, prob_of, action_of, gauss_store, cfg, rng, micro_store)


def _mutate(
    space: SearchSpace,
    cand: Candidate,
    prob_of: Callable[[str, float], float],
    action_of: Callable[[str, ParamSpec], str],
    gauss_store: Mapping[str, GaussianState],
    cfg: MutationPolicyConfig,
    rng,
    micro_store: Mapping[int, Mapping[str, Value]] | None,
) -> tuple[Candidate, MutationRecord]:
    entries: list[MutationEntry] = []

    new_macro = list(cand.macro_vector)
    for i, spec in enumerate(space.macro_params):
        if spec.fixed:
            continue
        fid = macro_feature(spec.name)
        if rng.random() < prob_of(fid, cfg.macro_cap):
            old = new_macro[i]
            new_macro[i] = 1 - old
            entries.append(MutationEntry(fid, ACTION_FLIP, old, new_macro[i]))

    new_arch = effective_arch_index(new_macro, space.macro_params)
    if new_arch != cand.arch_index:
        stored = (micro_store or {}).get(new_arch, {})
        base = {p.name: stored.get(p.name, p.initial) for p in space.micro_specs(new_arch)}
    else:
        base = dict(cand.micro_values)

    new_micro = dict(base)
    for spec in space.micro_specs(new_arch):
        if spec.fixed:
            continue
        fid = micro_feature(new_arch, spec.name)
        if rng.random() >= prob_of(fid, cfg.micro_cap):
            continue
        action = action_of(fid, spec)
        gauss = gauss_store.get(fid) if spec.kind is ParamKind.CONTINUOUS else None
        old = new_micro[spec.name]
        new_val, offset = mutate_value(spec, old, action, gauss, rng, mode=cfg.continuous_mutation)
        new_micro[spec.name] = new_val
        entries.append(MutationEntry(fid, action, old, new_val, offset))

    mutated = Candidate(
        macro_vector=tuple(new_macro),
        arch_index=new_arch,
        micro_values=new_micro,
        iteration=cand.iteration + 1,
    )
    return mutated, MutationRecord(entries=tuple(entries))


def update_q_values(
    table: QTable,
    record: MutationRecord,
    reward: float,
    baseline: float,
    cfg: MutationPolicyConfig,
) -> None:
    """Q(s,a) <- max(q_floor, Q(s,a) + eta * (reward - baseline)) for each
    (feature, action) pair that fired; untouched features keep their Q."""
    delta = cfg.q_learning_rate * (reward - baseline)
    for entry in record.entries:
        if entry.feature not in table.entries:
            raise UnknownFeature(f"feature {entry.feature!r} not in Q-table")
        acts = table.entries[entry.feature]
        acts[entry.action] = max(cfg.q_floor, acts[entry.action] + delta)


def _clamp(v, lo, hi):
    return lo if v < lo else hi if v > hi else v
