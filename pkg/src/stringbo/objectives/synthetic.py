"""Randomly transformed BBOB objectives over (possibly discretised) flat spaces."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import space as sp
from . import bbob

BOUND = 5.0
MIN_GRID, MAX_GRID = 2, 16


class DimensionMismatchError(ValueError):
    pass


def random_rotation(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthonormal matrix from the QR factorisation of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))[None, :]


@dataclass
class SyntheticObjective:
    """``f_base(R (v - c))`` over a flat space named ``x0..x(dim-1)``.

    ``grids`` holds, for each DISCRETE/CATEGORICAL parameter, the real value
    behind every feasible point; continuous parameters map to ``None``.
    """

    base_name: str
    dim: int
    shift: np.ndarray
    rotation: np.ndarray
    space: sp.SearchSpace
    grids: tuple = field(default=())

    def __post_init__(self):
        self.shift = np.asarray(self.shift, dtype=float).reshape(self.dim)
        self.rotation = np.asarray(self.rotation, dtype=float).reshape(self.dim, self.dim)
        if not self.grids:
            self.grids = tuple(None for _ in range(self.dim))
        if self.base_name not in bbob.FUNCTIONS:
            raise KeyError(f"unknown BBOB function {self.base_name!r}")
        if len(self.space.params) != self.dim:
            raise DimensionMismatchError(f"space has {len(self.space.params)} params, objective dim {self.dim}")

    @classmethod
    def plain(cls, base_name: str, dim: int) -> "SyntheticObjective":
        params = [sp.ParamSpec.float(f"x{i}", -BOUND, BOUND) for i in range(dim)]
        return cls(base_name, dim, np.zeros(dim), np.eye(dim), sp.SearchSpace.flat(params))

    def decode(self, cand) -> np.ndarray:
        """Numeric vector behind a candidate."""
        if len(cand) != self.dim:
            raise DimensionMismatchError(f"candidate has {len(cand)} values, objective dim {self.dim}")
        v = np.empty(self.dim)
        for i, spec in enumerate(self.space.params):
            if spec.name not in cand:
                raise DimensionMismatchError(f"candidate lacks parameter {spec.name!r}")
            value = cand[spec.name]
            grid = self.grids[i]
            if grid is None:
                v[i] = float(value)
            else:
                key = float(value) if spec.kind is sp.ParamKind.DISCRETE else value
                v[i] = grid[spec.feasible_values.index(key)]
        return v

    def evaluate_vectors(self, v: np.ndarray) -> np.ndarray:
        v = np.atleast_2d(np.asarray(v, dtype=float))
        if v.shape[1] != self.dim:
            raise DimensionMismatchError(f"vectors have dim {v.shape[1]}, objective dim {self.dim}")
        z = (v - self.shift[None, :]) @ self.rotation.T
        return bbob.evaluate(self.base_name, z)

    def __call__(self, cand) -> float:
        return float(self.evaluate_vectors(self.decode(cand))[0])

    def sample_vectors(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform draws from the (discretised) domain, as numeric vectors."""
        out = rng.uniform(-BOUND, BOUND, size=(n, self.dim))
        for i, grid in enumerate(self.grids):
            if grid is not None:
                out[:, i] = np.asarray(grid)[rng.integers(len(grid), size=n)]
        return out

    def reference_minimum(self, rng: np.random.Generator, n_samples: int = 20000) -> float:
        """Estimate of the minimum over the domain: dense sampling then local polish.

        Only used to offset optimality gaps, so it needs to be a tight but not
        certified bound; callers take the min with any observed value.
        """
        from scipy.optimize import minimize

        vecs = self.sample_vectors(n_samples, rng)
        vals = self.evaluate_vectors(vecs)
        best = float(vals.min())
        cont = [i for i, g in enumerate(self.grids) if g is None]
        if not cont:
            return best
        for start in vecs[np.argsort(vals)[:5]]:
            def fn(u, start=start):
                x = start.copy()
                x[cont] = u
                return float(self.evaluate_vectors(x)[0])

            res = minimize(fn, start[cont], method="L-BFGS-B", bounds=[(-BOUND, BOUND)] * len(cont))
            best = min(best, float(res.fun))
        if all(g is None for g in self.grids):
            # continuous optimum of base functions placed at the origin
            x_star = self.shift.copy()
            if np.all(np.abs(x_star) <= BOUND):
                best = min(best, float(self.evaluate_vectors(x_star)[0]))
        return best

    def to_dict(self) -> dict:
        return {
            "type": "bbob",
            "base_name": self.base_name,
            "dim": self.dim,
            "shift": self.shift.tolist(),
            "rotation": self.rotation.tolist(),
            "space": self.space.to_dict(),
            "grids": [None if g is None else list(g) for g in self.grids],
        }

    @classmethod
    def from_dict(cls, data) -> "SyntheticObjective":
        return cls(
            data["base_name"],
            int(data["dim"]),
            np.asarray(data["shift"]),
            np.asarray(data["rotation"]),
            sp.SearchSpace.from_dict(data["space"]),
            tuple(None if g is None else tuple(g) for g in data["grids"]),
        )


def apply_transforms(
    base_name: str,
    dim: int,
    rng: np.random.Generator,
    *,
    shift: bool = True,
    rotate: bool = True,
    discretize: bool = True,
    rotate_prob: float = 0.5,
    discretize_prob: float = 0.5,
) -> SyntheticObjective:
    """Sample shift, rotation and per-parameter discretisation for ``base_name``.

    The shift is uniform in ``[-5, 5]^dim``; a rotation is drawn with
    probability ``rotate_prob``; each parameter is independently discretised
    with probability ``discretize_prob`` into a DISCRETE or CATEGORICAL
    parameter (equally likely) over a uniform grid of 2..16 points.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    c = rng.uniform(-BOUND, BOUND, size=dim) if shift else np.zeros(dim)
    if rotate and rng.random() < rotate_prob:
        rot = random_rotation(dim, rng)
    else:
        rot = np.eye(dim)
    params, grids = [], []
    for i in range(dim):
        name = f"x{i}"
        if discretize and rng.random() < discretize_prob:
            m = int(rng.integers(MIN_GRID, MAX_GRID + 1))
            grid = tuple(float(g) for g in np.linspace(-BOUND, BOUND, m))
            if rng.random() < 0.5:
                params.append(sp.ParamSpec.discrete(name, grid))
            else:
                params.append(sp.ParamSpec.categorical(name, [sp.format_number(g) for g in grid]))
            grids.append(grid)
        else:
            params.append(sp.ParamSpec.float(name, -BOUND, BOUND))
            grids.append(None)
    return SyntheticObjective(base_name, dim, c, rot, sp.SearchSpace.flat(params), tuple(grids))
