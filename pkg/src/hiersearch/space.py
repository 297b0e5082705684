"""Hierarchical search space: macro bit vector plus per-architecture micro params.

The macro level is an ordered list of binary parameters; reading the non-fixed
bits as a base-2 number (first free bit most significant) yields the effective
architecture index, which selects the micro parameter set to optimise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

from .errors import (
    ArchMismatch,
    FixedBitViolation,
    MissingParam,
    OutOfBounds,
    SpaceParseError,
    UnknownParam,
)

Value = float | int


class ParamKind(str, Enum):
    BINARY = "binary"
    DISCRETE = "discrete"
    CONTINUOUS = "continuous"


@dataclass(frozen=True)
class ParamSpec:
    """One mutable feature: kind, bounds, initial value, optional fixed flag."""

    name: str
    kind: ParamKind
    lower: Value
    upper: Value
    initial: Value
    fixed: bool = False

    def __post_init__(self):
        if not self.name:
            raise ValueError("parameter name must be non-empty")
        if not isinstance(self.kind, ParamKind):
            raise ValueError(f"{self.name}: kind must be a ParamKind")
        if self.kind is ParamKind.BINARY:
            if (self.lower, self.upper) != (0, 1):
                raise ValueError(f"{self.name}: binary bounds must be [0, 1]")
            if self.initial not in (0, 1):
                raise ValueError(f"{self.name}: binary initial must be 0 or 1")
        if self.kind in (ParamKind.BINARY, ParamKind.DISCRETE):
            for label, v in (("lower", self.lower), ("upper", self.upper), ("initial", self.initial)):
                if not _is_integral(v):
                    raise ValueError(f"{self.name}: {label} must be an integer for {self.kind.value} params")
            object.__setattr__(self, "lower", int(self.lower))
            object.__setattr__(self, "upper", int(self.upper))
            object.__setattr__(self, "initial", int(self.initial))
        else:
            object.__setattr__(self, "lower", float(self.lower))
            object.__setattr__(self, "upper", float(self.upper))
            object.__setattr__(self, "initial", float(self.initial))
        if not self.lower <= self.initial <= self.upper:
            raise ValueError(f"{self.name}: need lower <= initial <= upper")

    def contains(self, value: Value) -> bool:
        if self.kind in (ParamKind.BINARY, ParamKind.DISCRETE) and not _is_integral(value):
            return False
        return self.lower <= value <= self.upper


def _is_integral(v) -> bool:
    return isinstance(v, int) or (isinstance(v, float) and v.is_integer())


@dataclass(frozen=True)
class SearchSpace:
    """Macro binary vector spec plus micro parameter sets keyed by arch index.

    Immutable after construction; safe to share across readers.
    """

    macro_params: tuple[ParamSpec, ...]
    micro_params: Mapping[int, tuple[ParamSpec, ...]]

    def __post_init__(self):
        if not self.macro_params:
            raise ValueError("macro_params must not be empty")
        names = [p.name for p in self.macro_params]
        if len(set(names)) != len(names):
            raise ValueError("duplicate macro parameter names")
        for p in self.macro_params:
            if p.kind is not ParamKind.BINARY:
                raise ValueError(f"macro param {p.name} must be binary")
        reachable = set(range(2 ** self.free_bit_count))
        if set(self.micro_params) != reachable:
            raise ValueError(
                f"micro_params keys {sorted(self.micro_params)} must cover exactly "
                f"the reachable arch indices {sorted(reachable)}"
            )
        for arch, specs in self.micro_params.items():
            micro_names = [p.name for p in specs]
            if len(set(micro_names)) != len(micro_names):
                raise ValueError(f"duplicate micro parameter names for arch {arch}")

    @property
    def free_bit_count(self) -> int:
        return sum(1 for p in self.macro_params if not p.fixed)

    def free_macro_indices(self) -> list[int]:
        return [i for i, p in enumerate(self.macro_params) if not p.fixed]

    def micro_specs(self, arch_index: int) -> tuple[ParamSpec, ...]:
        return self.micro_params[arch_index]

    def reachable_arch_indices(self) -> range:
        return range(2 ** self.free_bit_count)


@dataclass(frozen=True)
class Candidate:
    """A fully-assigned configuration: macro bits, decoded arch, micro values."""

    macro_vector: tuple[int, ...]
    arch_index: int
    micro_values: Mapping[str, Value]
    iteration: int = 0


def decode_arch_index(macro_vector: Sequence[int]) -> int:
    """Read an ordered bit vector as a base-2 integer, first bit most significant."""
    if len(macro_vector) == 0:
        raise ValueError("macro_vector must be non-empty")
    index = 0
    for bit in macro_vector:
        if bit not in (0, 1):
            raise ValueError(f"macro_vector entries must be 0 or 1, got {bit!r}")
        index = (index << 1) | bit
    return index


def effective_arch_index(macro_vector: Sequence[int], specs: Sequence[ParamSpec]) -> int:
    """Decode only the non-fixed bits, first free bit most significant.

    Raises FixedBitViolation if a fixed bit differs from its declared initial.
    """
    if len(macro_vector) != len(specs):
        raise ValueError(f"macro_vector length {len(macro_vector)} != specs length {len(specs)}")
    free_bits = []
    for i, (bit, spec) in enumerate(zip(macro_vector, specs)):
        if spec.fixed:
            if bit != spec.initial:
                raise FixedBitViolation(
                    f"fixed macro bit {spec.name} (position {i}) must stay {spec.initial}, got {bit}"
                )
        else:
            free_bits.append(bit)
    if not free_bits:
        return 0
    return decode_arch_index(free_bits)


def validate_candidate(space: SearchSpace, cand: Candidate) -> None:
    """Check every Candidate invariant against the space; raise on the first violation."""
    if len(cand.macro_vector) != len(space.macro_params):
        raise ValueError(
            f"macro_vector length {len(cand.macro_vector)} != space macro length {len(space.macro_params)}"
        )
    if cand.iteration < 0:
        raise ValueError("iteration must be non-negative")
    decoded = effective_arch_index(cand.macro_vector, space.macro_params)
    if decoded != cand.arch_index:
        raise ArchMismatch(
            f"arch_index is {cand.arch_index} but macro vector decodes to {decoded}"
        )
    specs = {p.name: p for p in space.micro_specs(cand.arch_index)}
    for name in cand.micro_values:
        if name not in specs:
            raise UnknownParam(f"micro value {name!r} is not declared for arch {cand.arch_index}")
    for name, spec in specs.items():
        if name not in cand.micro_values:
            raise MissingParam(f"micro value {name!r} missing for arch {cand.arch_index}")
        value = cand.micro_values[name]
        if not spec.contains(value):
            raise OutOfBounds(
                f"{name}={value!r} outside [{spec.lower}, {spec.upper}] "
                f"or non-integral for kind {spec.kind.value}"
            )


def initial_candidate(space: SearchSpace) -> Candidate:
    """Candidate at every parameter's declared initial value, iteration 0."""
    macro = tuple(p.initial for p in space.macro_params)
    arch = effective_arch_index(macro, space.macro_params)
    micro = {p.name: p.initial for p in space.micro_specs(arch)}
    return Candidate(macro_vector=macro, arch_index=arch, micro_values=micro, iteration=0)


# ---------------------------------------------------------------------------
# JSON (de)serialisation.  File schema:
#   {"macro": [<param>, ...],
#    "micro": {"<arch index>": [<param>, ...], ...}}
# where <param> is {"name", "kind", "lower", "upper", "initial", "fixed"?}.
# ---------------------------------------------------------------------------

_PARAM_KEYS = {"name", "kind", "lower", "upper", "initial", "fixed"}


def _param_from_dict(d, path: str) -> ParamSpec:
    if not isinstance(d, dict):
        raise SpaceParseError(f"{path}: expected an object, got {type(d).__name__}", path)
    for key in ("name", "kind", "lower", "upper", "initial"):
        if key not in d:
            raise SpaceParseError(f"{path}.{key}: missing required key", f"{path}.{key}")
    for key in d:
        if key not in _PARAM_KEYS:
            raise SpaceParseError(f"{path}.{key}: unknown key", f"{path}.{key}")
    try:
        kind = ParamKind(d["kind"])
    except ValueError:
        raise SpaceParseError(
            f"{path}.kind: must be one of binary/discrete/continuous, got {d['kind']!r}",
            f"{path}.kind",
        ) from None
    for key in ("lower", "upper", "initial"):
        if not isinstance(d[key], (int, float)) or isinstance(d[key], bool):
            raise SpaceParseError(f"{path}.{key}: expected a number", f"{path}.{key}")
    fixed = d.get("fixed", False)
    if not isinstance(fixed, bool):
        raise SpaceParseError(f"{path}.fixed: expected a boolean", f"{path}.fixed")
    if not isinstance(d["name"], str):
        raise SpaceParseError(f"{path}.name: expected a string", f"{path}.name")
    try:
        return ParamSpec(
            name=d["name"], kind=kind, lower=d["lower"], upper=d["upper"],
            initial=d["initial"], fixed=fixed,
        )
    except ValueError as exc:
        raise SpaceParseError(f"{path}: {exc}", path) from None


def space_from_dict(d: dict, path: str = "space") -> SearchSpace:
    if not isinstance(d, dict):
        raise SpaceParseError(f"{path}: expected an object", path)
    if "macro" not in d:
        raise SpaceParseError(f"{path}.macro: missing required key", f"{path}.macro")
    if "micro" not in d:
        raise SpaceParseError(f"{path}.micro: missing required key", f"{path}.micro")
    macro_raw = d["macro"]
    if not isinstance(macro_raw, list) or not macro_raw:
        raise SpaceParseError(f"{path}.macro: expected a non-empty array", f"{path}.macro")
    macro = tuple(
        _param_from_dict(p, f"{path}.macro[{i}]") for i, p in enumerate(macro_raw)
    )
    micro_raw = d["micro"]
    if not isinstance(micro_raw, dict):
        raise SpaceParseError(f"{path}.micro: expected an object", f"{path}.micro")
    micro: dict[int, tuple[ParamSpec, ...]] = {}
    for key, plist in micro_raw.items():
        kpath = f"{path}.micro.{key}"
        try:
            arch = int(key)
        except ValueError:
            raise SpaceParseError(f"{kpath}: key must be a non-negative integer string", kpath) from None
        if not isinstance(plist, list):
            raise SpaceParseError(f"{kpath}: expected an array", kpath)
        micro[arch] = tuple(
            _param_from_dict(p, f"{kpath}[{i}]") for i, p in enumerate(plist)
        )
    try:
        return SearchSpace(macro_params=macro, micro_params=micro)
    except ValueError as exc:
        raise SpaceParseError(f"{path}: {exc}", path) from None


def load_space(path: str | Path) -> SearchSpace:
    p = Path(path)
    try:
        raw = json.loads(p.read_text())
    except OSError as exc:
        raise SpaceParseError(f"{p}: cannot read space file: {exc}", str(p)) from exc
    except json.JSONDecodeError as exc:
        raise SpaceParseError(f"{p}: invalid JSON: {exc}", str(p)) from exc
    return space_from_dict(raw, path=str(p))


def _param_to_dict(p: ParamSpec) -> dict:
    return {
        "name": p.name, "kind": p.kind.value, "lower": p.lower,
        "upper": p.upper, "initial": p.initial, "fixed": p.fixed,
    }


def space_to_dict(space: SearchSpace) -> dict:
    return {
        "macro": [_param_to_dict(p) for p in space.macro_params],
        "micro": {
            str(arch): [_param_to_dict(p) for p in specs]
            for arch, specs in sorted(space.micro_params.items())
        },
    }


def candidate_to_dict(cand: Candidate) -> dict:
    return {
        "macro": list(cand.macro_vector),
        "arch_index": cand.arch_index,
        "micro": dict(sorted(cand.micro_values.items())),
        "iteration": cand.iteration,
    }


def candidate_from_dict(d: dict) -> Candidate:
    return Candidate(
        macro_vector=tuple(d["macro"]),
        arch_index=d["arch_index"],
        micro_values=dict(d["micro"]),
        iteration=d["iteration"],
    )
