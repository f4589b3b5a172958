import itertools
import math
import zlib

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stringbo import space as sp
from stringbo.objectives import (
    CombinatorialProblem,
    ProblemKind,
    SpaceTooLargeError,
    SyntheticObjective,
    apply_transforms,
    bbob,
    brute_force_optimum,
    eval_combinatorial,
    eval_synthetic,
    objective_from_dict,
    sample_problem,
)
from stringbo.objectives._kernels import evaluate_batch

K = ProblemKind


def perm_matrix(x):
    n = len(x)
    P = np.zeros((n, n))
    P[np.arange(n), list(x)] = 1.0
    return P


# Independent oracles written straight from the formulas, one candidate at a time.
def oracle(prob, x):
    c = prob.coeffs
    n = prob.n
    if prob.kind is K.TSP:
        return -sum(math.dist(c["cities"][x[i]], c["cities"][x[i + 1]]) for i in range(n - 1))
    if prob.kind is K.FLOWSHOP:
        return -sum(c["C"][i, x[i]] for i in range(n))
    if prob.kind is K.LINEAR_ORDERING:
        P = perm_matrix(x)
        return float(np.triu(P @ c["W"] @ P.T, k=1).sum())
    if prob.kind is K.QAP:
        P = perm_matrix(x)
        return -float(np.trace(c["W"] @ P @ c["D"] @ P.T))
    if prob.kind is K.NQUEENS:
        return -sum(1 for i, j in itertools.combinations(range(n), 2) if abs(x[i] - x[j]) == j - i)
    if prob.kind is K.MODULAR:
        return float(sum(c["w"][i] for i in x))
    if prob.kind is K.COVERAGE:
        union = set()
        for i in x:
            union |= {j for j in range(n) if c["covers"][i, j]}
        return float(sum(c["w"][j] for j in union))
    sign, logabs = np.linalg.slogdet(c["M"][np.ix_(list(x), list(x))])
    return logabs if sign > 0 else -math.inf


ALL_KINDS = list(K)


class TestSyntheticExamples:
    def test_sphere_origin(self):
        obj = SyntheticObjective.plain("Sphere", 3)
        assert eval_synthetic(obj, {"x0": 0.0, "x1": 0.0, "x2": 0.0}) == 0.0

    def test_rastrigin_origin(self):
        obj = SyntheticObjective.plain("Rastrigin", 2)
        assert obj({"x0": 0.0, "x1": 0.0}) == pytest.approx(0.0, abs=1e-12)

    def test_sphere_shift(self):
        obj = SyntheticObjective.plain("Sphere", 2)
        obj.shift = np.array([1.5, -2.0])
        assert obj({"x0": 1.5, "x1": -2.0}) == 0.0

    def test_no_transforms_is_base(self):
        obj = apply_transforms("Ellipsoidal", 3, np.random.default_rng(0), shift=False, rotate=False, discretize=False)
        x = np.array([[0.3, -1.2, 2.0]])
        assert obj.evaluate_vectors(x)[0] == bbob.evaluate("Ellipsoidal", x)[0]

    def test_dimension_mismatch(self):
        obj = SyntheticObjective.plain("Sphere", 2)
        with pytest.raises(ValueError):
            obj({"x0": 0.0})
        with pytest.raises(ValueError):
            obj.evaluate_vectors(np.zeros((1, 3)))

    def test_orthonormal_and_grids(self):
        rng = np.random.default_rng(1)
        sizes = set()
        for _ in range(300):
            obj = apply_transforms("Sphere", 4, rng)
            assert np.max(np.abs(obj.rotation @ obj.rotation.T - np.eye(4))) <= 1e-9
            assert np.all(np.abs(obj.shift) <= 5.0)
            for spec, grid in zip(obj.space.params, obj.grids):
                if grid is not None:
                    assert 2 <= len(spec.feasible_values) <= 16
                    sizes.add(len(grid))
        assert min(sizes) == 2 and max(sizes) == 16

    def test_both_discrete_kinds_appear(self):
        rng = np.random.default_rng(2)
        kinds = {p.kind for _ in range(50) for p in apply_transforms("Sphere", 4, rng).space.params}
        assert kinds == {sp.ParamKind.FLOAT, sp.ParamKind.DISCRETE, sp.ParamKind.CATEGORICAL}

    def test_categorical_decodes_to_grid(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            obj = apply_transforms("Sphere", 3, rng)
            cand = sp.sample(obj.space, rng)
            v = obj.decode(cand)
            for i, grid in enumerate(obj.grids):
                if grid is not None:
                    assert v[i] in grid

    def test_json_round_trip(self):
        obj = apply_transforms("Rastrigin", 3, np.random.default_rng(4))
        back = objective_from_dict(obj.to_dict())
        cand = sp.sample(obj.space, np.random.default_rng(5))
        assert back(cand) == obj(cand)

    @pytest.mark.parametrize("name", sorted(bbob.FUNCTIONS))
    def test_rotation_property(self, name):
        rng = np.random.default_rng(zlib.crc32(name.encode()))
        obj = apply_transforms(name, 3, rng, discretize=False, rotate_prob=1.0)
        x = rng.uniform(-5, 5, size=(100, 3))
        expected = bbob.evaluate(name, (obj.rotation @ (x - obj.shift).T).T)
        got = obj.evaluate_vectors(x)
        assert np.allclose(got, expected, rtol=1e-12, atol=1e-12)

    @pytest.mark.parametrize("name", sorted(bbob.FUNCTIONS))
    def test_finite(self, name):
        x = np.random.default_rng(0).uniform(-5, 5, size=(64, 4))
        assert np.all(np.isfinite(bbob.evaluate(name, x)))

    def test_train_test_sets(self):
        for name in ("Sphere", "Ellipsoidal", "Rastrigin", "Discus", "BentCigar"):
            assert name in bbob.TRAIN
        for name in ("LinearSlope", "RosenbrockRotated", "SharpRidge", "DifferentPowers", "NegativeSphere"):
            assert name in bbob.TEST
        assert not set(bbob.TRAIN) & set(bbob.TEST)
        assert len(bbob.BENCHMARK_TEST) == 9


class TestCombinatorialExamples:
    def test_tsp(self):
        prob = CombinatorialProblem(K.TSP, 3, coeffs={"cities": [[0, 0], [3, 0], [3, 4]]})
        assert eval_combinatorial(prob, (0, 1, 2)) == pytest.approx(-7.0)
        assert prob((1, 0, 2)) == pytest.approx(-8.0)

    def test_qap_identity(self):
        prob = CombinatorialProblem(K.QAP, 2, coeffs={"W": np.eye(2), "D": np.eye(2)})
        assert prob((0, 1)) == -2.0 and prob((1, 0)) == -2.0

    def test_nqueens_diagonal(self):
        assert CombinatorialProblem(K.NQUEENS, 4)((0, 1, 2, 3)) == -6.0

    def test_modular(self):
        prob = CombinatorialProblem(K.MODULAR, 4, 2, {"w": [1, 2, 3, 4]})
        assert prob((0, 3)) == 5.0

    def test_coverage(self):
        covers = np.zeros((4, 4), dtype=bool)
        covers[0, [0, 1]] = True
        covers[1, [1, 2]] = True
        prob = CombinatorialProblem(K.COVERAGE, 4, 2, {"covers": covers, "w": np.ones(4)})
        assert prob((0, 1)) == 3.0

    def test_logdet(self):
        prob = CombinatorialProblem(K.LOGDET, 3, 2, {"M": 2 * np.eye(3)})
        assert prob((0, 1)) == pytest.approx(2 * math.log(2), abs=1e-12)

    def test_logdet_singular(self):
        M = np.zeros((3, 3))
        M[0, 0] = 1.0
        prob = CombinatorialProblem(K.LOGDET, 3, 2, {"M": M})
        value, singular = prob.logdet((0, 1))
        assert value == -math.inf and singular

    def test_invalid_candidate(self):
        with pytest.raises(sp.InvalidCandidateError):
            CombinatorialProblem(K.NQUEENS, 4)((0, 0, 1, 2))

    def test_shape_checks(self):
        with pytest.raises(ValueError):
            CombinatorialProblem(K.QAP, 3, coeffs={"W": np.eye(2), "D": np.eye(3)})
        with pytest.raises(ValueError):
            CombinatorialProblem(K.LOGDET, 2, 1, {"M": [[1.0, 2.0], [0.0, 1.0]]})
        with pytest.raises(ValueError):
            CombinatorialProblem(K.LOGDET, 2, 1, {"M": -np.eye(2)})


class TestSampleProblem:
    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_deterministic(self, kind):
        a = sample_problem(kind, 6, 3, np.random.default_rng(9))
        b = sample_problem(kind, 6, 3, np.random.default_rng(9))
        assert a.to_dict() == b.to_dict()

    def test_logdet_psd(self):
        for seed in range(20):
            M = sample_problem(K.LOGDET, 8, 3, np.random.default_rng(seed)).coeffs["M"]
            assert np.allclose(M, M.T) and np.linalg.eigvalsh(M).min() >= -1e-9

    def test_tsp_cities_unit_square(self):
        cities = sample_problem(K.TSP, 10, rng=np.random.default_rng(0)).coeffs["cities"]
        assert cities.shape == (10, 2) and np.all((cities >= 0) & (cities <= 1))

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_json_round_trip(self, kind):
        prob = sample_problem(kind, 5, 2, np.random.default_rng(1))
        back = objective_from_dict(prob.to_dict())
        cand = sp.sample(prob.space, np.random.default_rng(2))
        assert back(cand) == prob(cand)


class TestOracle:
    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_matches_oracle(self, kind):
        rng = np.random.default_rng(100 + ALL_KINDS.index(kind))
        for _ in range(100):
            n = int(rng.integers(2, 7))
            k = int(rng.integers(1, n + 1))
            prob = sample_problem(kind, n, k, rng)
            for _ in range(5):
                cand = sp.sample(prob.space, rng)
                got, want = prob(cand), oracle(prob, sorted(cand) if not kind.is_permutation else cand)
                if want == -math.inf:
                    assert got == -math.inf
                else:
                    assert abs(got - want) <= 1e-9

    @pytest.mark.parametrize("kind", [k for k in ALL_KINDS if k is not K.LOGDET])
    def test_numba_numpy_agree(self, kind):
        prob = sample_problem(kind, 7, 3, np.random.default_rng(5))
        rng = np.random.default_rng(6)
        X = np.array([sorted(c) if not kind.is_permutation else c for c in (sp.sample(prob.space, rng) for _ in range(200))])
        a = evaluate_batch(kind.value, X, prob.coeffs, use_numba=True)
        b = evaluate_batch(kind.value, X, prob.coeffs, use_numba=False)
        assert np.allclose(a, b, rtol=0, atol=1e-12)


class TestBruteForce:
    def test_nqueens_4(self):
        x, value = brute_force_optimum(CombinatorialProblem(K.NQUEENS, 4))
        assert value == 0.0 and x == (1, 3, 0, 2)

    def test_modular(self):
        x, value = brute_force_optimum(CombinatorialProblem(K.MODULAR, 4, 2, {"w": [1, 2, 3, 4]}))
        assert x == (2, 3) and value == 7.0

    def test_flowshop(self):
        x, value = brute_force_optimum(CombinatorialProblem(K.FLOWSHOP, 2, coeffs={"C": np.eye(2)}))
        assert x == (1, 0) and value == 0.0

    def test_lexicographic_tie(self):
        x, _ = brute_force_optimum(CombinatorialProblem(K.MODULAR, 4, 2, {"w": np.ones(4)}))
        assert x == (0, 1)

    def test_too_large(self):
        with pytest.raises(SpaceTooLargeError, match="40320"):
            brute_force_optimum(CombinatorialProblem(K.NQUEENS, 9))
        with pytest.raises(SpaceTooLargeError):
            brute_force_optimum(sample_problem(K.MODULAR, 30, 10, np.random.default_rng(0)))

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_dominates_random(self, kind):
        rng = np.random.default_rng(7)
        prob = sample_problem(kind, 6, 3, rng)
        _, best = brute_force_optimum(prob)
        for _ in range(1000):
            assert best >= prob(sp.sample(prob.space, rng))


class TestInvariants:
    @given(st.integers(2, 7), st.integers(0, 2**32 - 1))
    def test_linear_ordering(self, n, seed):
        rng = np.random.default_rng(seed)
        prob = sample_problem(K.LINEAR_ORDERING, n, rng=rng)
        W = prob.coeffs["W"]
        assert prob(tuple(range(n))) == pytest.approx(np.triu(W, 1).sum(), abs=1e-12)
        x = tuple(int(i) for i in rng.permutation(n))
        P = perm_matrix(x)
        Wp = P @ W @ P.T
        off = np.triu(Wp, 1).sum() + np.tril(Wp, -1).sum()
        assert off == pytest.approx(np.triu(W, 1).sum() + np.tril(W, -1).sum(), abs=1e-9)

    @given(st.integers(2, 9), st.integers(0, 2**32 - 1))
    def test_nqueens_range(self, n, seed):
        prob = CombinatorialProblem(K.NQUEENS, n)
        x = tuple(int(i) for i in np.random.default_rng(seed).permutation(n))
        assert -n * (n - 1) / 2 <= prob(x) <= 0

    @given(st.integers(0, 2**32 - 1), st.floats(1e-3, 10.0))
    def test_logdet_monotone(self, seed, delta):
        rng = np.random.default_rng(seed)
        prob = sample_problem(K.LOGDET, 6, 3, rng)
        bumped = CombinatorialProblem(K.LOGDET, 6, 3, {"M": prob.coeffs["M"] + delta * np.eye(6)})
        cand = sp.sample(prob.space, rng)
        assert bumped(cand) > prob(cand)
