"""Time the numba kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--repeats 5]

Each row reports the best wall time of the compiled loop and of the
vectorised fallback after one warm-up call, plus a check that both agree.
Set ``STRINGBO_DISABLE_NUMBA=1`` to see the loops run as plain Python.
"""

import argparse
import time

import numpy as np

from stringbo import _accel
from stringbo import space as sp
from stringbo.acquisition import firefly_move
from stringbo.embedder.hashing import signed_counts
from stringbo.harness.tasks import build_task
from stringbo.objectives import ProblemKind, sample_problem
from stringbo.objectives._kernels import evaluate_batch


def best_time(fn, repeats):
    fn()
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def cases(rng):
    space = build_task({"type": "bbob", "function": "Rastrigin", "dim": 4, "seed": 0}).space
    texts = [sp.candidate_to_string(space, sp.sample(space, rng)) for _ in range(2000)]
    yield "hash 2000 strings", lambda u: signed_counts(texts, 256, 3, use_numba=u)[0]

    P, dim = 20, 6
    U = rng.random((P, dim))
    is_cat = np.array([False, False, False, True, True, True])
    card = np.array([0, 0, 0, 4.0, 8.0, 16.0])
    U[:, is_cat] = np.floor(U[:, is_cat] * card[is_cat])
    scores = rng.standard_normal(P)
    draws = [rng.random((P, P, dim)) for _ in range(4)]
    yield "firefly sweep P=20", lambda u: firefly_move(U, scores, is_cat, card, draws, 0.2, use_numba=u)

    for kind in ProblemKind:
        if kind is ProblemKind.LOGDET:
            continue  # shares one slogdet path on both backends
        n, k = (10, None) if kind.is_permutation else (20, 5)
        prob = sample_problem(kind, n, k, rng)
        X = np.array([sorted(c) if not kind.is_permutation else c for c in (sp.sample(prob.space, rng) for _ in range(5000))])
        yield f"{kind.value} x5000", lambda u, kind=kind, X=X, prob=prob: evaluate_batch(kind.value, X, prob.coeffs, use_numba=u)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    print(f"loop backend: {_accel.backend_name()}")
    print(f"{'kernel':<26}{'loop ms':>10}{'numpy ms':>10}{'speedup':>9}  agree")
    for name, fn in cases(np.random.default_rng(0)):
        agree = np.allclose(fn(True), fn(False), rtol=0, atol=1e-12)
        fast, slow = best_time(lambda: fn(True), args.repeats), best_time(lambda: fn(False), args.repeats)
        print(f"{name:<26}{fast * 1e3:>10.3f}{slow * 1e3:>10.3f}{slow / fast:>9.1f}  {agree}")


if __name__ == "__main__":
    main()
