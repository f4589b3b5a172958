"""UCB scoring and the acquisition optimizers.

Flat spaces are searched with a firefly optimizer in unit coordinates;
permutation and choice spaces use Regularized Evolution, optionally picking
the best of several evolution proposals by UCB.
"""

from __future__ import annotations

import collections
import math
from dataclasses import dataclass

import numpy as np

from . import _accel
from . import normalizer as nz
from . import space as sp
from ._accel import maybe_njit


@dataclass(frozen=True)
class AcquisitionConfig:
    sqrt_beta: float = 1.8
    eval_budget: int = 1000
    best_of_k: int = 5
    ranking_start_trial: int = 20
    flat_warmup: int = 5
    population: int = 20
    alpha: float = 0.2
    alpha_decay: float = 0.97
    beta0: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.sqrt_beta < 0:
            raise ValueError("sqrt_beta must be >= 0")
        if self.eval_budget < 1:
            raise ValueError("eval_budget must be >= 1")
        if self.best_of_k < 1:
            raise ValueError("best_of_k must be >= 1")


def ucb(mu, sigma, sqrt_beta: float = 1.8):
    return np.asarray(mu) + sqrt_beta * np.asarray(sigma) if np.ndim(mu) else float(mu) + sqrt_beta * float(sigma)


def first_argmax(scores) -> int:
    """Index of the maximum score; the earliest index wins ties."""
    return int(np.argmax(np.asarray(scores, dtype=float)))


# --------------------------------------------------------------------------
# firefly
# --------------------------------------------------------------------------


@maybe_njit
def _firefly_move_loop(U, scores, is_cat, card, jitter, copy_draw, resample_draw, resample_idx, alpha, beta0, gamma):
    P, dim = U.shape
    out = U.copy()
    for i in range(P):
        for j in range(P):
            if scores[j] <= scores[i]:
                continue
            r2 = 0.0
            for d in range(dim):
                if is_cat[d]:
                    if out[i, d] != U[j, d]:
                        r2 += 1.0
                else:
                    diff = out[i, d] - U[j, d]
                    r2 += diff * diff
            beta = beta0 * math.exp(-gamma * r2)
            for d in range(dim):
                if is_cat[d]:
                    if copy_draw[i, j, d] < beta:
                        out[i, d] = U[j, d]
                    if resample_draw[i, j, d] < alpha:
                        out[i, d] = math.floor(resample_idx[i, j, d] * card[d])
                else:
                    v = out[i, d] + beta * (U[j, d] - out[i, d]) + alpha * (jitter[i, j, d] - 0.5)
                    out[i, d] = min(max(v, 0.0), 1.0)
    return out


def _firefly_move_np(U, scores, is_cat, card, jitter, copy_draw, resample_draw, resample_idx, alpha, beta0, gamma):
    out = U.copy()
    cont = ~is_cat
    for j in range(U.shape[0]):
        movers = scores[j] > scores
        if not movers.any():
            continue
        diff = out - U[j][None, :]
        r2 = np.sum(np.where(cont[None, :], diff * diff, 0.0), axis=1)
        r2 = r2 + np.sum(is_cat[None, :] & (out != U[j][None, :]), axis=1)
        beta = beta0 * np.exp(-gamma * r2)
        moved = out + beta[:, None] * (U[j][None, :] - out) + alpha * (jitter[:, j, :] - 0.5)
        moved = np.minimum(np.maximum(moved, 0.0), 1.0)
        cat = np.where(copy_draw[:, j, :] < beta[:, None], U[j][None, :], out)
        cat = np.where(resample_draw[:, j, :] < alpha, np.floor(resample_idx[:, j, :] * card[None, :]), cat)
        new = np.where(is_cat[None, :], cat, moved)
        out = np.where(movers[:, None], new, out)
    return out


def firefly_move(U, scores, is_cat, card, draws, alpha, beta0=1.0, gamma=1.0, use_numba=None):
    """One synchronous firefly sweep; every member moves toward each brighter one.

    Continuous coordinates live in ``[0, 1]``; categorical coordinates hold a
    feasible-value index.  ``draws`` holds four ``(P, P, dim)`` uniform arrays.
    """
    if use_numba is None:
        use_numba = _accel.USE_NUMBA
    fn = _firefly_move_loop if use_numba else _firefly_move_np
    return fn(
        np.ascontiguousarray(U, dtype=np.float64),
        np.ascontiguousarray(scores, dtype=np.float64),
        np.ascontiguousarray(is_cat, dtype=np.bool_),
        np.ascontiguousarray(card, dtype=np.float64),
        *draws,
        float(alpha),
        float(beta0),
        float(gamma),
    )


class _FlatCodec:
    """Maps flat candidates to mixed unit/index coordinates and back."""

    def __init__(self, space: sp.SearchSpace):
        if space.kind is not sp.SpaceKind.FLAT:
            raise sp.UnsupportedSpaceError(f"firefly needs a FLAT space, got {space.kind.value}")
        self.space = space
        self.is_cat = np.array([p.bounds is None for p in space.params], dtype=bool)
        self.card = np.array([p.cardinality if p.bounds is None else 0 for p in space.params], dtype=np.float64)

    def sample(self, n, rng):
        U = rng.random((n, len(self.is_cat)))
        return np.where(self.is_cat[None, :], np.floor(U * self.card[None, :]), U)

    def decode(self, row) -> dict:
        out = {}
        for d, spec in enumerate(self.space.params):
            if self.is_cat[d]:
                out[spec.name] = spec.feasible_values[int(row[d])]
            elif spec.kind is sp.ParamKind.FLOAT:
                lo, hi = spec.bounds
                out[spec.name] = float(min(max(lo + row[d] * (hi - lo), lo), hi))
            else:
                lo, hi = spec.bounds
                out[spec.name] = int(min(max(round(lo + row[d] * (hi - lo)), lo), hi))
        return out


def firefly_maximize(acq_batch, space: sp.SearchSpace, budget: int = 1000, rng=None, config=None, use_numba=None):
    """Maximise ``acq_batch`` (list of candidates -> scores) over a flat space.

    Spends at most ``budget`` acquisition evaluations and returns
    ``(best_candidate, best_score, evaluations)``.
    """
    config = AcquisitionConfig() if config is None else config
    rng = np.random.default_rng() if rng is None else rng
    codec = _FlatCodec(space)
    P = config.population
    if budget < P:
        raise ValueError(f"budget {budget} is smaller than the population {P}")
    dim = len(codec.is_cat)
    U = codec.sample(P, rng)
    cands = [codec.decode(row) for row in U]
    scores = np.asarray(acq_batch(cands), dtype=float)
    evals = P
    best = first_argmax(scores)
    best_cand, best_score = cands[best], float(scores[best])
    alpha = config.alpha
    while evals < budget:
        draws = tuple(rng.random((P, P, dim)) for _ in range(4))
        moved = firefly_move(U, scores, codec.is_cat, codec.card, draws, alpha, config.beta0, config.gamma, use_numba)
        m = min(P, budget - evals)
        new_cands = [codec.decode(row) for row in moved[:m]]
        new_scores = np.asarray(acq_batch(new_cands), dtype=float)
        evals += m
        U[:m] = moved[:m]
        scores[:m] = new_scores
        top = first_argmax(new_scores)
        if new_scores[top] > best_score:
            best_cand, best_score = new_cands[top], float(new_scores[top])
        alpha *= config.alpha_decay
    return best_cand, best_score, evals


# --------------------------------------------------------------------------
# regularized evolution
# --------------------------------------------------------------------------


class EvolutionState:
    """Aging population: a FIFO of ``(candidate, fitness)`` pairs."""

    def __init__(self, capacity: int = 50, tournament: int = 7):
        if capacity < 1 or tournament < 1:
            raise ValueError("capacity and tournament size must be positive")
        self.capacity = capacity
        self.tournament = tournament
        self.members: collections.deque = collections.deque()

    def __len__(self):
        return len(self.members)

    @property
    def full(self) -> bool:
        return len(self.members) >= self.capacity

    def insert(self, cand, fitness: float):
        """Append a member; the oldest is evicted once at capacity."""
        self.members.append((cand, float(fitness)))
        if len(self.members) > self.capacity:
            self.members.popleft()

    def select_parent(self, rng):
        if not self.members:
            raise ValueError("cannot select from an empty population")
        size = min(self.tournament, len(self.members))
        picks = np.sort(rng.choice(len(self.members), size=size, replace=False))
        fits = [self.members[i][1] for i in picks]
        return self.members[int(picks[first_argmax(fits)])][0]


def mutate_permutation(cand, rng):
    x = list(cand)
    i, j = rng.choice(len(x), size=2, replace=False)
    x[i], x[j] = x[j], x[i]
    return tuple(int(v) for v in x)


def mutate_choice(cand, n: int, rng):
    chosen = sorted(cand)
    unchosen = [i for i in range(n) if i not in set(chosen)]
    if not unchosen:
        return tuple(chosen)
    out_pos = int(rng.integers(len(chosen)))
    chosen[out_pos] = unchosen[int(rng.integers(len(unchosen)))]
    return tuple(sorted(int(v) for v in chosen))


def mutate_flat(cand, space: sp.SearchSpace, rng):
    """Resample one uniformly chosen parameter."""
    out = dict(cand)
    spec = space.params[int(rng.integers(len(space.params)))]
    out[spec.name] = sp.sample(sp.SearchSpace.flat([spec]), rng)[spec.name]
    return out


def mutator(space: sp.SearchSpace):
    if space.kind is sp.SpaceKind.PERMUTATION:
        return mutate_permutation
    if space.kind is sp.SpaceKind.CHOICE:
        return lambda cand, rng: mutate_choice(cand, space.n, rng)
    return lambda cand, rng: mutate_flat(cand, space, rng)


def regevo_step(state: EvolutionState, mutate, rng):
    """Tournament-select a parent and return its mutated child."""
    return mutate(state.select_parent(rng), rng)


def regevo_propose(state: EvolutionState, space: sp.SearchSpace, rng):
    """Uniform samples until the population is full, then evolution."""
    if not state.full:
        return sp.sample(space, rng)
    return regevo_step(state, mutator(space), rng)


def rank_best_of(proposals, acq_batch, k: int | None = None):
    """Proposal with the highest acquisition score (earliest wins ties)."""
    proposals = list(proposals)
    if k is not None and len(proposals) != k:
        raise ValueError(f"expected {k} proposals, got {len(proposals)}")
    if not proposals:
        raise ValueError("no proposals to rank")
    if len(proposals) == 1:
        return proposals[0]
    return proposals[first_argmax(acq_batch(proposals))]


# --------------------------------------------------------------------------
# model-based suggestion
# --------------------------------------------------------------------------


def finite_values(ys: np.ndarray) -> np.ndarray:
    """Replace -inf sentinels (e.g. singular LOGDET minors) by a value below the worst finite one."""
    ok = np.isfinite(ys)
    if ok.all():
        return ys
    if not ok.any():
        return np.zeros_like(ys)
    finite = ys[ok]
    spread = float(finite.max() - finite.min()) or 1.0
    return np.where(ok, ys, finite.min() - spread)


class UCBAcquisition:
    """UCB of regressor predictions conditioned on a fixed history."""

    def __init__(self, history, space: sp.SearchSpace, regressor, embedder, sqrt_beta: float = 1.8):
        self.space = space
        self.regressor = regressor
        self.embedder = embedder
        self.sqrt_beta = sqrt_beta
        self.evaluations = 0
        if space.kind is sp.SpaceKind.FLAT:
            self.model_space, name_map = sp.canonicalize_names(space)
            self.to_model = sp.invert(name_map)
        else:
            self.model_space, self.to_model = space, None
        cands = [c for c, _ in history]
        ys = finite_values(np.array([y for _, y in history], dtype=float))
        self.state = nz.fit(ys)
        y_norm = nz.apply(self.state, ys)
        self.meta = None
        if regressor.config.use_metadata:
            self.meta = embedder.embed(sp.metadata_to_string(self.model_space))
        x = embedder.embed_batch(self.strings(cands))
        self.encoding = regressor.encode_history(x, y_norm, self.meta)

    def strings(self, cands):
        if self.to_model is not None:
            cands = [sp.rename_candidate(c, self.to_model) for c in cands]
        return [sp.candidate_to_string(self.model_space, c) for c in cands]

    def predict(self, cands):
        x = self.embedder.embed_uncached(self.strings(cands))
        return self.regressor.predict_encoded(self.encoding, x, self.meta)

    def __call__(self, cands):
        self.evaluations += len(cands)
        mu, sigma = self.predict(cands)
        return ucb(mu, sigma, self.sqrt_beta)


def suggest(history, space, regressor, embedder, config=None, rng=None, evolution=None, trial_index=None):
    """Next candidate to evaluate.

    ``history`` is a list of ``(candidate, y)`` pairs with y to be maximised.
    Combinatorial spaces need an :class:`EvolutionState` that the caller
    keeps updated with every evaluated trial.
    """
    config = AcquisitionConfig() if config is None else config
    rng = np.random.default_rng() if rng is None else rng
    trial_index = len(history) if trial_index is None else trial_index
    if space.kind is sp.SpaceKind.FLAT:
        if regressor is None or len(history) < max(config.flat_warmup, 2):
            return sp.sample(space, rng)
        acq = UCBAcquisition(history, space, regressor, embedder, config.sqrt_beta)
        best, _, _ = firefly_maximize(acq, space, config.eval_budget, rng, config)
        return best
    if evolution is None:
        raise ValueError("combinatorial suggestion needs an EvolutionState")
    if regressor is None or trial_index < config.ranking_start_trial or len(history) < 2:
        return regevo_propose(evolution, space, rng)
    proposals = [regevo_propose(evolution, space, rng) for _ in range(config.best_of_k)]
    acq = UCBAcquisition(history, space, regressor, embedder, config.sqrt_beta)
    return rank_best_of(proposals, acq, config.best_of_k)
