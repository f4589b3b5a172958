"""Benchmark task specifications and the objectives they build."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import space as sp
from ..objectives import bbob
from ..objectives.combinatorial import CombinatorialProblem, ProblemKind, sample_problem
from ..objectives.synthetic import SyntheticObjective, apply_transforms

# sizes used by the combinatorial suite
PERMUTATION_SIZE = 10
CHOICE_SIZE = (20, 5)


@dataclass
class BenchmarkTask:
    """An objective exposed only through ``evaluate``; larger values are better."""

    name: str
    space: sp.SearchSpace
    objective: object
    minimize: bool

    def evaluate(self, cand) -> float:
        value = float(self.objective(cand))
        return -value if self.minimize else value

    def raw_value(self, y: float) -> float:
        """Objective value on its native scale from a maximised ``y``."""
        return -y if self.minimize else y

    def instance(self) -> dict:
        return self.objective.to_dict()


def instance_seed(spec_seed: int, repeat: int) -> int:
    return int(np.random.SeedSequence([spec_seed, repeat, 7]).generate_state(1, dtype=np.uint64)[0])


def build_task(spec: dict, repeat: int = 0) -> BenchmarkTask:
    """Instantiate a task from a JSON spec.

    ``{"type": "bbob", "function": "Sphere", "dim": 3, "seed": 0}`` draws a
    transformed BBOB objective (``"transforms": false`` keeps it plain);
    ``{"type": "combinatorial", "kind": "TSP", "n": 10, "seed": 0}`` draws an
    instance; ``{"type": "instance", "instance": {...}}`` uses stored
    coefficients.  ``dim`` may be ``[lo, hi]`` to draw it per repeat.
    """
    spec = dict(spec)
    kind = spec.get("type")
    rng = np.random.default_rng(instance_seed(int(spec.get("seed", 0)), repeat))
    if kind == "bbob":
        name = spec["function"]
        if name not in bbob.FUNCTIONS:
            raise ValueError(f"unknown BBOB function {name!r}")
        dim = spec.get("dim", 2)
        if isinstance(dim, (list, tuple)):
            dim = int(rng.integers(dim[0], dim[1] + 1))
        if spec.get("transforms", True):
            obj = apply_transforms(name, int(dim), rng)
        else:
            obj = SyntheticObjective.plain(name, int(dim))
        return BenchmarkTask(name, obj.space, obj, minimize=True)
    if kind == "combinatorial":
        pk = ProblemKind(spec["kind"])
        n = int(spec.get("n", PERMUTATION_SIZE if pk.is_permutation else CHOICE_SIZE[0]))
        k = int(spec.get("k", 0 if pk.is_permutation else CHOICE_SIZE[1]))
        prob = sample_problem(pk, n, k, rng)
        return BenchmarkTask(prob.name, prob.space, prob, minimize=False)
    if kind == "instance":
        data = spec["instance"]
        if data.get("type") == "bbob":
            obj = SyntheticObjective.from_dict(data)
            return BenchmarkTask(obj.base_name, obj.space, obj, minimize=True)
        prob = CombinatorialProblem.from_dict(data)
        return BenchmarkTask(prob.name, prob.space, prob, minimize=False)
    raise ValueError(f"unknown task type {kind!r}")


def bbob_suite(seed: int = 0, functions=None, dims=(2, 4)) -> list[dict]:
    names = bbob.BENCHMARK_TEST if functions is None else functions
    return [{"type": "bbob", "function": f, "dim": list(dims), "seed": seed + i} for i, f in enumerate(names)]


def combo_suite(seed: int = 0, kinds=None) -> list[dict]:
    kinds = [k.value for k in ProblemKind] if kinds is None else kinds
    return [{"type": "combinatorial", "kind": k, "seed": seed + i} for i, k in enumerate(kinds)]
