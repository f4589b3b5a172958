"""Synthetic (BBOB-style) and combinatorial objectives."""

from . import bbob
from .combinatorial import (
    CombinatorialProblem,
    ProblemKind,
    SpaceTooLargeError,
    brute_force_optimum,
    enumerate_space,
    sample_problem,
)
from .synthetic import SyntheticObjective, apply_transforms, random_rotation


def objective_from_dict(data):
    """Rebuild an objective from its JSON instance record."""
    if data.get("type") == "bbob":
        return SyntheticObjective.from_dict(data)
    if data.get("type") == "combinatorial":
        return CombinatorialProblem.from_dict(data)
    raise ValueError(f"unknown objective type {data.get('type')!r}")


def eval_synthetic(obj, cand):
    return obj(cand)


def eval_combinatorial(prob, cand):
    return prob(cand)
