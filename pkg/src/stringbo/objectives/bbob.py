"""BBOB-style base functions, evaluated row-wise on ``(n, dim)`` arrays.

The functions follow the usual BBOB definitions with the optimum placed at
the origin and the suite's own rotations set to identity; instance-level
shift and rotation are applied separately by
:class:`stringbo.objectives.synthetic.SyntheticObjective`.  All functions are
minimised.
"""

import functools

import numpy as np


def _as_rows(x):
    x = np.asarray(x, dtype=float)
    return x[None, :] if x.ndim == 1 else x


def _exponents(dim, power=1.0):
    if dim == 1:
        return np.zeros(1)
    return power * np.arange(dim) / (dim - 1)


def lambda_diag(alpha, dim):
    """Diagonal of the conditioning matrix with entries ``alpha**(i/(2(D-1)))``."""
    return np.power(alpha, _exponents(dim, 0.5))


def t_osz(x):
    x = np.asarray(x, dtype=float)
    nz = x != 0
    xhat = np.where(nz, np.log(np.abs(np.where(nz, x, 1.0))), 0.0)
    c1 = np.where(x > 0, 10.0, 5.5)
    c2 = np.where(x > 0, 7.9, 3.1)
    return np.sign(x) * np.exp(xhat + 0.049 * (np.sin(c1 * xhat) + np.sin(c2 * xhat)))


def t_asy(x, beta):
    x = _as_rows(x)
    dim = x.shape[1]
    expo = 1.0 + beta * _exponents(dim) * np.sqrt(np.maximum(x, 0.0))
    return np.where(x > 0, np.power(np.maximum(x, 0.0), expo), x)


def f_pen(x):
    return np.sum(np.maximum(0.0, np.abs(x) - 5.0) ** 2, axis=-1)


def sphere(x):
    x = _as_rows(x)
    return np.sum(x * x, axis=1)


def ellipsoidal(x):
    x = _as_rows(x)
    z = t_osz(x)
    w = np.power(10.0, 6.0 * _exponents(x.shape[1]))
    return np.sum(w * z * z, axis=1)


def rastrigin(x):
    x = _as_rows(x)
    dim = x.shape[1]
    z = lambda_diag(10.0, dim) * t_asy(t_osz(x), 0.2)
    return 10.0 * (dim - np.sum(np.cos(2 * np.pi * z), axis=1)) + np.sum(z * z, axis=1)


def bueche_rastrigin(x):
    x = _as_rows(x)
    dim = x.shape[1]
    z = t_osz(x)
    s = np.tile(np.power(10.0, _exponents(dim, 0.5)), (x.shape[0], 1))
    odd = (np.arange(dim) % 2 == 0)[None, :]  # 1-based odd positions
    s = np.where(odd & (z > 0), 10.0 * s, s)
    z = s * z
    return (
        10.0 * (dim - np.sum(np.cos(2 * np.pi * z), axis=1))
        + np.sum(z * z, axis=1)
        + 100.0 * f_pen(x)
    )


def linear_slope(x):
    x = _as_rows(x)
    dim = x.shape[1]
    xopt = 5.0
    z = np.where(xopt * x < 25.0, x, xopt)
    s = np.power(10.0, _exponents(dim))
    return np.sum(5.0 * np.abs(s) - s * z, axis=1)


def attractive_sector(x):
    x = _as_rows(x)
    z = lambda_diag(10.0, x.shape[1]) * x
    s = np.where(z > 0, 100.0, 1.0)
    return np.power(t_osz(np.sum((s * z) ** 2, axis=1)), 0.9)


def step_ellipsoidal(x):
    x = _as_rows(x)
    dim = x.shape[1]
    zhat = lambda_diag(10.0, dim) * x
    ztil = np.where(np.abs(zhat) > 0.5, np.floor(0.5 + zhat), np.floor(0.5 + 10.0 * zhat) / 10.0)
    w = np.power(10.0, 2.0 * _exponents(dim))
    return 0.1 * np.maximum(np.abs(zhat[:, 0]) / 1e4, np.sum(w * ztil * ztil, axis=1)) + f_pen(x)


def _rosen_sum(z):
    return np.sum(100.0 * (z[:, :-1] ** 2 - z[:, 1:]) ** 2 + (z[:, :-1] - 1.0) ** 2, axis=1)


def rosenbrock(x):
    x = _as_rows(x)
    dim = x.shape[1]
    z = max(1.0, np.sqrt(dim) / 8.0) * x + 1.0
    return _rosen_sum(z) if dim > 1 else (z[:, 0] - 1.0) ** 2


def rosenbrock_rotated(x):
    x = _as_rows(x)
    dim = x.shape[1]
    z = max(1.0, np.sqrt(dim) / 8.0) * x + 0.5
    return _rosen_sum(z) if dim > 1 else (z[:, 0] - 1.0) ** 2


def discus(x):
    x = _as_rows(x)
    z = t_osz(x)
    return 1e6 * z[:, 0] ** 2 + np.sum(z[:, 1:] ** 2, axis=1)


def bent_cigar(x):
    x = _as_rows(x)
    z = t_asy(x, 0.5)
    return z[:, 0] ** 2 + 1e6 * np.sum(z[:, 1:] ** 2, axis=1)


def sharp_ridge(x):
    x = _as_rows(x)
    z = lambda_diag(10.0, x.shape[1]) * x
    return z[:, 0] ** 2 + 100.0 * np.sqrt(np.sum(z[:, 1:] ** 2, axis=1))


def different_powers(x):
    x = _as_rows(x)
    expo = 2.0 + 4.0 * _exponents(x.shape[1])
    return np.sqrt(np.sum(np.power(np.abs(x), expo), axis=1))


_WEIER_K = np.arange(12)
_WEIER_F0 = float(np.sum(0.5**_WEIER_K * np.cos(np.pi * 3.0**_WEIER_K)))


def weierstrass(x):
    x = _as_rows(x)
    dim = x.shape[1]
    z = lambda_diag(0.01, dim) * t_osz(x)
    terms = (0.5**_WEIER_K) * np.cos(2 * np.pi * (3.0**_WEIER_K) * (z[..., None] + 0.5))
    inner = np.sum(terms, axis=(1, 2)) / dim - _WEIER_F0
    return 10.0 * inner**3 + 10.0 / dim * f_pen(x)


def _schaffers(x, cond):
    x = _as_rows(x)
    dim = x.shape[1]
    z = lambda_diag(cond, dim) * t_asy(x, 0.5)
    if dim == 1:
        s = np.abs(z)
    else:
        s = np.sqrt(z[:, :-1] ** 2 + z[:, 1:] ** 2)
    m = s.shape[1]
    val = np.sum(np.sqrt(s) + np.sqrt(s) * np.sin(50.0 * np.power(s, 0.2)) ** 2, axis=1) / m
    return val**2 + 10.0 * f_pen(x)


def schaffers_f7(x):
    return _schaffers(x, 10.0)


def schaffers_f7_ill_conditioned(x):
    return _schaffers(x, 1000.0)


def griewank_rosenbrock(x):
    x = _as_rows(x)
    dim = x.shape[1]
    z = max(1.0, np.sqrt(dim) / 8.0) * x + 0.5
    if dim == 1:
        s = 100.0 * (z**2 - z) ** 2 + (z - 1.0) ** 2
    else:
        s = 100.0 * (z[:, :-1] ** 2 - z[:, 1:]) ** 2 + (z[:, :-1] - 1.0) ** 2
    m = s.shape[1]
    return 10.0 / m * np.sum(s / 4000.0 - np.cos(s), axis=1) + 10.0


_SCHWEFEL_XOPT = 4.2096874633 / 2.0


def schwefel(x):
    x = _as_rows(x)
    dim = x.shape[1]
    xhat = 2.0 * x
    zhat = xhat.copy()
    zhat[:, 1:] = xhat[:, 1:] + 0.25 * (xhat[:, :-1] - 2.0 * _SCHWEFEL_XOPT)
    z = 100.0 * (lambda_diag(10.0, dim) * (zhat - 2.0 * _SCHWEFEL_XOPT) + 2.0 * _SCHWEFEL_XOPT)
    return (
        -np.sum(z * np.sin(np.sqrt(np.abs(z))), axis=1) / (100.0 * dim)
        + 4.189828872724339
        + 100.0 * f_pen(z / 100.0)
    )


@functools.lru_cache(maxsize=64)
def _gallagher_peaks(n_peaks, dim, seed):
    rng = np.random.default_rng(seed)
    if n_peaks == 101:
        w = np.concatenate([[10.0], 1.1 + 8.0 * np.arange(n_peaks - 1) / (n_peaks - 2)])
        alphas = np.concatenate([[1000.0**2], 1000.0 ** (2.0 * rng.permutation(n_peaks - 1) / (n_peaks - 2))])
        spread = 5.0
    else:
        w = np.concatenate([[10.0], 1.1 + 8.0 * np.arange(n_peaks - 1) / (n_peaks - 2)])
        alphas = np.concatenate([[1000.0], 1000.0 ** (2.0 * rng.permutation(n_peaks - 1) / (n_peaks - 2))])
        spread = 4.9
    y = rng.uniform(-spread, spread, size=(n_peaks, dim))
    y[0] = rng.uniform(-0.8 * spread, 0.8 * spread, size=dim)
    scales = np.empty((n_peaks, dim))
    for i, a in enumerate(alphas):
        scales[i] = rng.permutation(lambda_diag(a, dim)) / a**0.25
    for arr in (w, y, scales):
        arr.setflags(write=False)
    return w, y, scales


def _gallagher(x, n_peaks):
    x = _as_rows(x)
    dim = x.shape[1]
    w, y, scales = _gallagher_peaks(n_peaks, dim, seed=1000 + n_peaks * 31 + dim)
    diff = x[:, None, :] - y[None, :, :]
    quad = np.sum(scales[None] * diff * diff, axis=2)
    peak = np.max(w[None, :] * np.exp(-quad / (2.0 * dim)), axis=1)
    return t_osz(10.0 - peak) ** 2 + f_pen(x)


def gallagher_101(x):
    return _gallagher(x, 101)


def gallagher_21(x):
    return _gallagher(x, 21)


def katsuura(x):
    x = _as_rows(x)
    dim = x.shape[1]
    z = lambda_diag(100.0, dim) * x
    two_j = 2.0 ** np.arange(1, 33)
    prod_terms = two_j * z[..., None]
    frac = np.sum(np.abs(prod_terms - np.round(prod_terms)) / two_j, axis=2)
    idx = np.arange(1, dim + 1)
    factors = np.power(1.0 + idx * frac, 10.0 / dim**1.2)
    return 10.0 / dim**2 * np.prod(factors, axis=1) - 10.0 / dim**2 + f_pen(x)


def lunacek(x):
    x = _as_rows(x)
    dim = x.shape[1]
    mu0, d = 2.5, 1.0
    # the usual formula is undefined for dim == 1
    s = 1.0 - 1.0 / (2.0 * np.sqrt(max(dim, 2) + 20.0) - 8.2)
    mu1 = -np.sqrt((mu0**2 - d) / s)
    xhat = 2.0 * x
    z = lambda_diag(100.0, dim) * (xhat - mu0)
    first = np.sum((xhat - mu0) ** 2, axis=1)
    second = d * dim + s * np.sum((xhat - mu1) ** 2, axis=1)
    return (
        np.minimum(first, second)
        + 10.0 * (dim - np.sum(np.cos(2 * np.pi * z), axis=1))
        + 1e4 * f_pen(x)
    )


def negative_sphere(x):
    x = _as_rows(x)
    return 100.0 + np.sum(x * x, axis=1) - 2.0 * x[:, 0] ** 2


def negative_min_difference(x):
    x = _as_rows(x)
    if x.shape[1] < 2:
        return 10.0 + 1e-8 * x[:, 0]
    diff = x[:, 1:] - x[:, :-1]
    return 10.0 - np.min(diff, axis=1) + 1e-8 * np.sum(x, axis=1)


def fonseca_fleming(x):
    x = _as_rows(x)
    dim = x.shape[1]
    return 1.0 - np.exp(-np.sum((x - 1.0 / np.sqrt(dim)) ** 2, axis=1))


FUNCTIONS = {
    "Sphere": sphere,
    "Ellipsoidal": ellipsoidal,
    "Rastrigin": rastrigin,
    "AttractiveSector": attractive_sector,
    "StepEllipsoidal": step_ellipsoidal,
    "Discus": discus,
    "BentCigar": bent_cigar,
    "Weierstrass": weierstrass,
    "Schwefel": schwefel,
    "Gallagher101Me": gallagher_101,
    "BuecheRastrigin": bueche_rastrigin,
    "LinearSlope": linear_slope,
    "RosenbrockRotated": rosenbrock_rotated,
    "SharpRidge": sharp_ridge,
    "DifferentPowers": different_powers,
    "SchaffersF7": schaffers_f7,
    "SchaffersF7IllConditioned": schaffers_f7_ill_conditioned,
    "GriewankRosenbrock": griewank_rosenbrock,
    "Gallagher21Me": gallagher_21,
    "Katsuura": katsuura,
    "Lunacek": lunacek,
    "NegativeSphere": negative_sphere,
    "NegativeMinDifference": negative_min_difference,
    "FonsecaFleming": fonseca_fleming,
    "Rosenbrock": rosenbrock,
}

# Landscape-balanced split used for pretraining vs. evaluation.
TRAIN = (
    "Sphere",
    "Ellipsoidal",
    "Rastrigin",
    "AttractiveSector",
    "StepEllipsoidal",
    "Discus",
    "BentCigar",
    "Weierstrass",
    "Schwefel",
    "Gallagher101Me",
)
TEST = (
    "BuecheRastrigin",
    "LinearSlope",
    "RosenbrockRotated",
    "SharpRidge",
    "DifferentPowers",
    "SchaffersF7",
    "SchaffersF7IllConditioned",
    "GriewankRosenbrock",
    "Gallagher21Me",
    "Katsuura",
    "Lunacek",
    "NegativeSphere",
    "NegativeMinDifference",
    "FonsecaFleming",
)
# The nine test functions used for the optimisation benchmark, in list order.
BENCHMARK_TEST = TEST[:9]


def evaluate(name, x):
    try:
        fn = FUNCTIONS[name]
    except KeyError:
        raise KeyError(f"unknown BBOB function {name!r}; known: {sorted(FUNCTIONS)}") from None
    return fn(x)
