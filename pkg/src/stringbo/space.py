"""Search spaces, candidates and their canonical string forms.

Candidates are plain Python values:

* FLAT: ``dict`` mapping parameter name to value (float, int or label).
* PERMUTATION: sequence ``x`` where ``x[i]`` is the item placed at position ``i``.
* CHOICE: collection of ``k`` distinct indices (serialised ascending).
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping, Sequence

import numpy as np


class ParamKind(str, enum.Enum):
    FLOAT = "FLOAT"
    INT = "INT"
    DISCRETE = "DISCRETE"
    CATEGORICAL = "CATEGORICAL"


class SpaceKind(str, enum.Enum):
    FLAT = "FLAT"
    PERMUTATION = "PERMUTATION"
    CHOICE = "CHOICE"


class InvalidCandidateError(ValueError):
    pass


class UnsupportedSpaceError(ValueError):
    pass


# Names used in metadata lines, matching the upstream Vizier-style spelling.
_META_KIND = {
    ParamKind.FLOAT: "DOUBLE",
    ParamKind.INT: "INTEGER",
    ParamKind.DISCRETE: "DISCRETE",
    ParamKind.CATEGORICAL: "CATEGORICAL",
}


def format_number(value: float) -> str:
    """Format a real with at most 6 significant digits and no trailing zeros."""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"cannot serialise non-finite value {value!r}")
    text = "%.6g" % value
    if text == "-0":
        text = "0"
    return text


@dataclass(frozen=True)
class ParamSpec:
    name: str
    kind: ParamKind
    bounds: tuple[float, float] | None = None
    feasible_values: tuple = ()

    def __post_init__(self):
        kind = ParamKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind in (ParamKind.FLOAT, ParamKind.INT):
            if self.bounds is None:
                raise ValueError(f"{self.name}: {kind.value} parameter needs bounds")
            lo, hi = self.bounds
            if not lo < hi:
                raise ValueError(f"{self.name}: need lo < hi, got [{lo}, {hi}]")
            if kind is ParamKind.INT:
                lo, hi = int(lo), int(hi)
            object.__setattr__(self, "bounds", (lo, hi))
        else:
            values = tuple(self.feasible_values)
            if not values:
                raise ValueError(f"{self.name}: feasible_values must be non-empty")
            if len(set(values)) != len(values):
                raise ValueError(f"{self.name}: feasible_values must be duplicate-free")
            if kind is ParamKind.DISCRETE:
                values = tuple(float(v) for v in values)
            else:
                values = tuple(str(v) for v in values)
            object.__setattr__(self, "feasible_values", values)

    @classmethod
    def float(cls, name, lo, hi):
        return cls(name, ParamKind.FLOAT, bounds=(float(lo), float(hi)))

    @classmethod
    def int(cls, name, lo, hi):
        return cls(name, ParamKind.INT, bounds=(int(lo), int(hi)))

    @classmethod
    def discrete(cls, name, values):
        return cls(name, ParamKind.DISCRETE, feasible_values=tuple(values))

    @classmethod
    def categorical(cls, name, values):
        return cls(name, ParamKind.CATEGORICAL, feasible_values=tuple(values))

    @property
    def cardinality(self) -> int:
        return len(self.feasible_values)

    def to_dict(self) -> dict:
        out = {"name": self.name, "kind": self.kind.value}
        if self.bounds is not None:
            out["bounds"] = list(self.bounds)
        if self.feasible_values:
            out["feasible_values"] = list(self.feasible_values)
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "ParamSpec":
        bounds = data.get("bounds")
        return cls(
            data["name"],
            ParamKind(data["kind"]),
            bounds=tuple(bounds) if bounds is not None else None,
            feasible_values=tuple(data.get("feasible_values", ())),
        )


@dataclass(frozen=True)
class SearchSpace:
    kind: SpaceKind
    params: tuple[ParamSpec, ...] = ()
    n: int = 0
    k: int = 0

    def __post_init__(self):
        kind = SpaceKind(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "params", tuple(self.params))
        if kind is SpaceKind.FLAT:
            if not self.params:
                raise ValueError("FLAT space needs at least one parameter")
            names = [p.name for p in self.params]
            if len(set(names)) != len(names):
                raise ValueError(f"duplicate parameter names in {names}")
        elif kind is SpaceKind.PERMUTATION:
            if self.n < 2:
                raise ValueError(f"PERMUTATION requires n >= 2, got {self.n}")
        elif not 1 <= self.k <= self.n:
            raise ValueError(f"CHOICE requires 1 <= k <= n, got n={self.n}, k={self.k}")

    @classmethod
    def flat(cls, params: Iterable[ParamSpec]) -> "SearchSpace":
        return cls(SpaceKind.FLAT, tuple(params))

    @classmethod
    def permutation(cls, n: int) -> "SearchSpace":
        return cls(SpaceKind.PERMUTATION, n=int(n))

    @classmethod
    def choice(cls, n: int, k: int) -> "SearchSpace":
        return cls(SpaceKind.CHOICE, n=int(n), k=int(k))

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.params]

    @property
    def dim(self) -> int:
        return len(self.params) if self.kind is SpaceKind.FLAT else self.n

    def to_dict(self) -> dict:
        if self.kind is SpaceKind.FLAT:
            return {"kind": "FLAT", "params": [p.to_dict() for p in self.params]}
        if self.kind is SpaceKind.PERMUTATION:
            return {"kind": "PERMUTATION", "n": self.n}
        return {"kind": "CHOICE", "n": self.n, "k": self.k}

    @classmethod
    def from_dict(cls, data: Mapping) -> "SearchSpace":
        kind = SpaceKind(data["kind"])
        if kind is SpaceKind.FLAT:
            return cls.flat(ParamSpec.from_dict(p) for p in data["params"])
        if kind is SpaceKind.PERMUTATION:
            return cls.permutation(data["n"])
        return cls.choice(data["n"], data["k"])


# --------------------------------------------------------------------------
# validation / sampling
# --------------------------------------------------------------------------


def _param_violation(spec: ParamSpec, value) -> str | None:
    if spec.kind is ParamKind.FLOAT:
        try:
            v = float(value)
        except (TypeError, ValueError):
            return f"{spec.name}: {value!r} is not a real number"
        lo, hi = spec.bounds
        if not (lo <= v <= hi):
            return f"{spec.name}: {v} outside [{lo}, {hi}]"
    elif spec.kind is ParamKind.INT:
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
            if not (isinstance(value, (float, np.floating)) and float(value).is_integer()):
                return f"{spec.name}: {value!r} is not an integer"
        lo, hi = spec.bounds
        if not (lo <= value <= hi):
            return f"{spec.name}: {value} outside [{lo}, {hi}]"
    elif spec.kind is ParamKind.DISCRETE:
        try:
            v = float(value)
        except (TypeError, ValueError):
            return f"{spec.name}: {value!r} is not a real number"
        if v not in spec.feasible_values:
            return f"{spec.name}: {v} not in feasible grid"
    else:
        if value not in spec.feasible_values:
            return f"{spec.name}: {value!r} not a feasible category"
    return None


def validate(space: SearchSpace, cand) -> list[str]:
    """Return the list of violated constraints; empty means valid."""
    problems: list[str] = []
    if space.kind is SpaceKind.FLAT:
        if not isinstance(cand, Mapping):
            return ["FLAT candidate must be a name->value mapping"]
        names = set(space.names)
        for extra in sorted(set(cand) - names):
            problems.append(f"unknown parameter {extra!r}")
        for spec in space.params:
            if spec.name not in cand:
                problems.append(f"missing parameter {spec.name!r}")
                continue
            msg = _param_violation(spec, cand[spec.name])
            if msg:
                problems.append(msg)
        return problems

    try:
        items = [int(i) for i in cand]
    except (TypeError, ValueError):
        return ["candidate must be a collection of integer indices"]
    if any(isinstance(i, bool) for i in cand):
        problems.append("boolean index")
    out_of_range = [i for i in items if not 0 <= i < space.n]
    if out_of_range:
        problems.append(f"indices out of range [0, {space.n}): {out_of_range}")
    if len(set(items)) != len(items):
        problems.append("duplicate index")
    expected = space.n if space.kind is SpaceKind.PERMUTATION else space.k
    if len(items) != expected:
        problems.append(f"expected {expected} indices, got {len(items)}")
    return problems


def check(space: SearchSpace, cand) -> None:
    problems = validate(space, cand)
    if problems:
        raise InvalidCandidateError("; ".join(problems))


def sample(space: SearchSpace, rng: np.random.Generator):
    """Draw one candidate uniformly from ``space``."""
    if space.kind is SpaceKind.PERMUTATION:
        return tuple(int(i) for i in rng.permutation(space.n))
    if space.kind is SpaceKind.CHOICE:
        return tuple(sorted(int(i) for i in rng.choice(space.n, size=space.k, replace=False)))
    out: dict[str, Any] = {}
    for spec in space.params:
        if spec.kind is ParamKind.FLOAT:
            out[spec.name] = float(rng.uniform(*spec.bounds))
        elif spec.kind is ParamKind.INT:
            out[spec.name] = int(rng.integers(spec.bounds[0], spec.bounds[1] + 1))
        else:
            out[spec.name] = spec.feasible_values[int(rng.integers(spec.cardinality))]
    return out


# --------------------------------------------------------------------------
# string forms
# --------------------------------------------------------------------------


def _format_value(spec: ParamSpec, value) -> str:
    if spec.kind is ParamKind.CATEGORICAL:
        return json.dumps(value)
    if spec.kind is ParamKind.INT:
        return str(int(value))
    return format_number(float(value))


def candidate_to_string(space: SearchSpace, cand) -> str:
    check(space, cand)
    if space.kind is SpaceKind.FLAT:
        body = ",".join(
            f"{json.dumps(spec.name)}:{_format_value(spec, cand[spec.name])}" for spec in space.params
        )
        return "{" + body + "}"
    items = [int(i) for i in cand]
    if space.kind is SpaceKind.CHOICE:
        items.sort()
    return "{" + ", ".join(f"[{i}]:{v}" for i, v in enumerate(items)) + "}"


def metadata_to_string(space: SearchSpace) -> str:
    if space.kind is SpaceKind.PERMUTATION:
        return f'task:"Permutation"\nsize:{space.n}'
    if space.kind is SpaceKind.CHOICE:
        return f'task:"Choice"\nsize: {space.n}-choose-{space.k}'
    lines = []
    for spec in space.params:
        if spec.bounds is not None:
            body = f"[{format_number(spec.bounds[0])},{format_number(spec.bounds[1])}]"
        elif spec.kind is ParamKind.DISCRETE:
            body = "[" + ",".join(format_number(v) for v in spec.feasible_values) + "]"
        else:
            body = "[" + ",".join(spec.feasible_values) + "]"
        lines.append(f"{spec.name}:{_META_KIND[spec.kind]},{body}")
    return "\n".join(lines)


# --------------------------------------------------------------------------
# renaming
# --------------------------------------------------------------------------


def rename_params(space: SearchSpace, new_names: Sequence[str]) -> SearchSpace:
    if space.kind is not SpaceKind.FLAT:
        raise UnsupportedSpaceError(f"cannot rename parameters of a {space.kind.value} space")
    if len(new_names) != len(space.params):
        raise ValueError("one new name per parameter required")
    return SearchSpace.flat(replace(p, name=n) for p, n in zip(space.params, new_names))


def canonicalize_names(space: SearchSpace) -> tuple[SearchSpace, dict[str, str]]:
    """Rename parameters to ``x0..x(n-1)``.

    Returns the renamed space and a ``{canonical: original}`` map.
    """
    if space.kind is not SpaceKind.FLAT:
        raise UnsupportedSpaceError(f"canonicalize_names needs a FLAT space, got {space.kind.value}")
    canon = [f"x{i}" for i in range(len(space.params))]
    return rename_params(space, canon), dict(zip(canon, space.names))


def rename_candidate(cand: Mapping, name_map: Mapping[str, str]) -> dict:
    """Apply ``name_map`` (old -> new) to a FLAT candidate, preserving values."""
    return {name_map.get(k, k): v for k, v in cand.items()}


def invert(name_map: Mapping[str, str]) -> dict[str, str]:
    return {v: k for k, v in name_map.items()}


# --------------------------------------------------------------------------
# unit-cube encoding used by the continuous acquisition optimizer
# --------------------------------------------------------------------------


def to_unit(space: SearchSpace, cand: Mapping) -> np.ndarray:
    """Encode a FLAT candidate as coordinates in ``[0, 1]``.

    DISCRETE and CATEGORICAL parameters use ``index / (cardinality - 1)``.
    """
    out = np.empty(len(space.params))
    for i, spec in enumerate(space.params):
        value = cand[spec.name]
        if spec.bounds is not None:
            lo, hi = spec.bounds
            out[i] = (float(value) - lo) / (hi - lo)
        else:
            key = float(value) if spec.kind is ParamKind.DISCRETE else value
            idx = spec.feasible_values.index(key)
            out[i] = idx / (spec.cardinality - 1) if spec.cardinality > 1 else 0.0
    return out


def from_unit(space: SearchSpace, u: np.ndarray) -> dict:
    """Inverse of :func:`to_unit`; coordinates are clipped and snapped."""
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    out: dict[str, Any] = {}
    for i, spec in enumerate(space.params):
        if spec.kind is ParamKind.FLOAT:
            lo, hi = spec.bounds
            out[spec.name] = float(min(max(lo + u[i] * (hi - lo), lo), hi))
        elif spec.kind is ParamKind.INT:
            lo, hi = spec.bounds
            out[spec.name] = int(min(max(round(lo + u[i] * (hi - lo)), lo), hi))
        else:
            idx = int(round(u[i] * (spec.cardinality - 1)))
            out[spec.name] = spec.feasible_values[idx]
    return out
