"""Permutation and choice problems evaluated in the bandit setting.

Only :meth:`CombinatorialProblem.__call__` (and its batched twin) is meant
to be exposed to search loops; the coefficients stay inside the problem.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .. import space as sp
from ._kernels import evaluate_batch

MAX_PERMUTATIONS = 40320
MAX_SUBSETS = 10_000
PSD_EPS = 1e-3


class ProblemKind(str, enum.Enum):
    TSP = "TSP"
    FLOWSHOP = "FLOWSHOP"
    LINEAR_ORDERING = "LINEAR_ORDERING"
    QAP = "QAP"
    NQUEENS = "NQUEENS"
    MODULAR = "MODULAR"
    COVERAGE = "COVERAGE"
    LOGDET = "LOGDET"

    @property
    def is_permutation(self) -> bool:
        return self in PERMUTATION_KINDS


PERMUTATION_KINDS = frozenset(
    {ProblemKind.TSP, ProblemKind.FLOWSHOP, ProblemKind.LINEAR_ORDERING, ProblemKind.QAP, ProblemKind.NQUEENS}
)


class SpaceTooLargeError(ValueError):
    pass


@dataclass
class CombinatorialProblem:
    kind: ProblemKind
    n: int
    k: int = 0
    coeffs: dict = field(default_factory=dict)

    def __post_init__(self):
        self.kind = ProblemKind(self.kind)
        self.coeffs = {name: np.asarray(v) for name, v in self.coeffs.items()}
        self._check_shapes()

    def _check_shapes(self):
        n = self.n
        expected = {
            ProblemKind.TSP: {"cities": (n, 2)},
            ProblemKind.FLOWSHOP: {"C": (n, n)},
            ProblemKind.LINEAR_ORDERING: {"W": (n, n)},
            ProblemKind.QAP: {"W": (n, n), "D": (n, n)},
            ProblemKind.NQUEENS: {},
            ProblemKind.MODULAR: {"w": (n,)},
            ProblemKind.COVERAGE: {"covers": (n, n), "w": (n,)},
            ProblemKind.LOGDET: {"M": (n, n)},
        }[self.kind]
        for name, shape in expected.items():
            if name not in self.coeffs:
                raise ValueError(f"{self.kind.value} needs coefficient {name!r}")
            if self.coeffs[name].shape != shape:
                raise ValueError(f"{self.kind.value}.{name}: shape {self.coeffs[name].shape} != {shape}")
        if self.kind is ProblemKind.COVERAGE:
            self.coeffs["covers"] = self.coeffs["covers"].astype(bool)
        if self.kind is ProblemKind.LOGDET:
            M = self.coeffs["M"].astype(float)
            if np.max(np.abs(M - M.T)) > 1e-9:
                raise ValueError("LOGDET matrix must be symmetric")
            if np.min(np.linalg.eigvalsh(M)) < -1e-9:
                raise ValueError("LOGDET matrix must be positive semi-definite")
        if not self.kind.is_permutation and not 1 <= self.k <= n:
            raise ValueError(f"choice problem needs 1 <= k <= n, got n={n}, k={self.k}")

    @property
    def space(self) -> sp.SearchSpace:
        if self.kind.is_permutation:
            return sp.SearchSpace.permutation(self.n)
        return sp.SearchSpace.choice(self.n, self.k)

    @property
    def name(self) -> str:
        if self.kind.is_permutation:
            return f"{self.kind.value}({self.n})"
        return f"{self.kind.value}({self.n},{self.k})"

    def evaluate_batch(self, X, use_numba=None) -> np.ndarray:
        return evaluate_batch(self.kind.value, X, self.coeffs, use_numba=use_numba)

    def __call__(self, cand) -> float:
        sp.check(self.space, cand)
        items = sorted(cand) if not self.kind.is_permutation else list(cand)
        return float(self.evaluate_batch(np.asarray([items]))[0])

    def logdet(self, cand) -> tuple[float, bool]:
        """LOGDET value and whether the minor was numerically singular."""
        value = self(cand)
        return value, value == -np.inf

    def to_dict(self) -> dict:
        return {
            "type": "combinatorial",
            "kind": self.kind.value,
            "n": self.n,
            "k": self.k,
            "coeffs": {name: v.tolist() for name, v in self.coeffs.items()},
        }

    @classmethod
    def from_dict(cls, data) -> "CombinatorialProblem":
        return cls(ProblemKind(data["kind"]), int(data["n"]), int(data.get("k", 0)), dict(data["coeffs"]))


def sample_problem(kind, n: int, k: int = 0, rng: np.random.Generator | None = None) -> CombinatorialProblem:
    """Draw random coefficients for a problem of the given kind and size."""
    kind = ProblemKind(kind)
    rng = np.random.default_rng() if rng is None else rng
    if kind is ProblemKind.TSP:
        coeffs = {"cities": rng.uniform(0.0, 1.0, size=(n, 2))}
    elif kind is ProblemKind.FLOWSHOP:
        coeffs = {"C": rng.uniform(0.0, 1.0, size=(n, n))}
    elif kind is ProblemKind.LINEAR_ORDERING:
        coeffs = {"W": rng.uniform(0.0, 1.0, size=(n, n))}
    elif kind is ProblemKind.QAP:
        coeffs = {"W": rng.uniform(0.0, 1.0, size=(n, n)), "D": rng.uniform(0.0, 1.0, size=(n, n))}
    elif kind is ProblemKind.NQUEENS:
        coeffs = {}
    elif kind is ProblemKind.MODULAR:
        coeffs = {"w": rng.uniform(0.0, 1.0, size=n)}
    elif kind is ProblemKind.COVERAGE:
        coeffs = {"covers": rng.random((n, n)) < 2.0 / n, "w": rng.uniform(0.0, 1.0, size=n)}
    else:
        a = rng.standard_normal((n, n))
        M = a @ a.T + PSD_EPS * np.eye(n)
        coeffs = {"M": 0.5 * (M + M.T)}
    if kind.is_permutation:
        k = 0
    return CombinatorialProblem(kind, n, k, coeffs)


def enumerate_space(space: sp.SearchSpace) -> np.ndarray:
    """All candidates of a permutation/choice space in lexicographic order."""
    if space.kind is sp.SpaceKind.PERMUTATION:
        size = math.factorial(space.n)
        if size > MAX_PERMUTATIONS:
            raise SpaceTooLargeError(f"{space.n}! = {size} permutations exceeds {MAX_PERMUTATIONS}")
        return np.array(list(itertools.permutations(range(space.n))), dtype=np.int64)
    if space.kind is sp.SpaceKind.CHOICE:
        size = math.comb(space.n, space.k)
        if size > MAX_SUBSETS:
            raise SpaceTooLargeError(f"C({space.n},{space.k}) = {size} subsets exceeds {MAX_SUBSETS}")
        return np.array(list(itertools.combinations(range(space.n), space.k)), dtype=np.int64)
    raise sp.UnsupportedSpaceError("only permutation and choice spaces can be enumerated")


def brute_force_optimum(prob: CombinatorialProblem):
    """Exhaustive maximiser; ties go to the lexicographically smallest candidate."""
    cands = enumerate_space(prob.space)
    values = prob.evaluate_batch(cands)
    best = int(np.argmax(values))
    return tuple(int(i) for i in cands[best]), float(values[best])
