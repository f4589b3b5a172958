import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stringbo import autodiff as ad
from stringbo.autodiff import Tensor


def leaf(rng, *shape, positive=False):
    data = rng.uniform(0.5, 2.0, size=shape) if positive else rng.standard_normal(shape)
    return Tensor(data, requires_grad=True)


def weighted(out, rng_seed=0):
    # contract with fixed random weights so every output entry matters
    w = np.random.default_rng(rng_seed).standard_normal(out.shape)
    return ad.sum_(ad.mul(out, Tensor(w)))


OPS = {
    "add": (lambda a, b: ad.add(a, b), [(3, 4), (4,)], False),
    "sub": (lambda a, b: ad.sub(a, b), [(3, 4), (3, 1)], False),
    "mul": (lambda a, b: ad.mul(a, b), [(2, 3, 4), (3, 4)], False),
    "div": (lambda a, b: ad.div(a, b), [(3, 4), (3, 4)], True),
    "scale": (lambda a: ad.scale(a, -1.7), [(5,)], False),
    "square": (lambda a: ad.square(a), [(3, 3)], False),
    "exp": (lambda a: ad.exp(a), [(3, 3)], False),
    "log": (lambda a: ad.log(a), [(3, 3)], True),
    "softplus": (lambda a: ad.softplus(a), [(4, 3)], False),
    "gelu": (lambda a: ad.gelu(a), [(4, 3)], False),
    "sum_axis": (lambda a: ad.sum_(a, axis=1, keepdims=True), [(3, 4)], False),
    "mean_axis": (lambda a: ad.mean(a, axis=0), [(3, 4)], False),
    "reshape": (lambda a: ad.reshape(a, (6, 2)), [(3, 4)], False),
    "transpose": (lambda a: ad.transpose(a, (0, 2, 1)), [(2, 3, 4)], False),
    "concat": (lambda a, b: ad.concat([a, b], axis=-1), [(2, 3), (2, 5)], False),
    "matmul": (lambda a, b: ad.matmul(a, b), [(2, 3, 4), (4, 5)], False),
    "affine": (lambda x, w, b: ad.affine(x, w, b), [(3, 4), (4, 2), (2,)], False),
    "masked_softmax": (
        lambda a: ad.masked_softmax(a, np.tril(np.ones((4, 4), dtype=bool))),
        [(2, 4, 4)],
        False,
    ),
    "layer_norm": (lambda x, g, b: ad.layer_norm(x, g, b), [(3, 6), (6,), (6,)], False),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradcheck(name):
    fn, shapes, positive = OPS[name]
    rng = np.random.default_rng(len(name))
    inputs = [leaf(rng, *s, positive=positive) for s in shapes]
    err = ad.gradcheck(lambda xs: weighted(fn(*xs)), inputs, h=1e-6)
    assert err <= 1e-6, f"{name}: relative error {err:.2e}"


@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 5))
def test_matmul_gradcheck_random_shapes(seed, n, m):
    rng = np.random.default_rng(seed)
    inputs = [leaf(rng, n, m), leaf(rng, m, 3)]
    assert ad.gradcheck(lambda xs: weighted(ad.matmul(*xs)), inputs) <= 1e-6


class TestForward:
    def test_matmul_identity(self):
        out = ad.matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor(np.eye(2)))
        assert np.array_equal(out.data, [[1, 2], [3, 4]])

    def test_masked_softmax_example(self):
        p = ad.masked_softmax(Tensor([0.0, 0.0, 0.0]), [True, True, False])
        assert np.array_equal(p.data, [0.5, 0.5, 0.0])

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        mask = rng.random((5, 7)) < 0.5
        mask[:, 0] = True
        p = ad.masked_softmax(Tensor(rng.standard_normal((5, 7)) * 20), mask)
        assert np.allclose(p.data.sum(axis=-1), 1.0)
        assert np.all(p.data[~mask] == 0.0)

    def test_fully_masked_row(self):
        with pytest.raises(ValueError):
            ad.masked_softmax(Tensor(np.zeros((2, 3))), [[True, False, False], [False, False, False]])

    def test_layer_norm_constant(self):
        out = ad.layer_norm(Tensor(np.full((2, 5), 3.0)))
        assert np.array_equal(out.data, np.zeros((2, 5)))

    def test_shape_error_names_shapes(self):
        with pytest.raises(ad.ShapeError, match=r"\(2, 3\).*\(4, 5\)"):
            ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))
        with pytest.raises(ad.ShapeError, match=r"\(2, 3\).*\(4,\)"):
            ad.add(Tensor(np.ones((2, 3))), Tensor(np.ones(4)))

    def test_overflow_is_error(self):
        with pytest.raises(ad.NonFiniteError), np.errstate(over="ignore"):
            ad.exp(Tensor([1000.0]))


class TestBackward:
    def test_square_sum(self):
        x = Tensor([1.0, -2.0], requires_grad=True)
        (g,) = ad.backward(ad.sum_(ad.mul(x, x)), [x])
        assert np.array_equal(g, [2.0, -4.0])

    def test_constant_loss(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        y = Tensor([3.0], requires_grad=True)
        loss = ad.sum_(ad.add(ad.scale(x, 0.0), 4.0))
        gx, gy = ad.backward(loss, [x, y])
        assert np.array_equal(gx, [0.0, 0.0]) and np.array_equal(gy, [0.0])

    def test_non_scalar(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(ad.ShapeError):
            ad.backward(ad.mul(x, x))

    def test_shared_node_visited_once(self):
        x = Tensor([3.0], requires_grad=True)
        y = ad.mul(x, x)
        loss = ad.sum_(ad.add(y, y))
        (g,) = ad.backward(loss, [x])
        assert g[0] == 12.0

    def test_masked_positions_zero_grad(self):
        rng = np.random.default_rng(1)
        mask = np.tril(np.ones((5, 5), dtype=bool))
        x = Tensor(rng.standard_normal((5, 5)), requires_grad=True)
        (g,) = ad.backward(weighted(ad.masked_softmax(x, mask)), [x])
        assert np.all(g[~mask] == 0.0)

    def test_no_grad(self):
        x = Tensor([1.0], requires_grad=True)
        with ad.no_grad():
            y = ad.mul(x, x)
        assert not y.requires_grad


class TestAdamW:
    def test_zero_grad_decay_only(self):
        p = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
        opt = ad.AdamW([p], lr=5e-4, weight_decay=1e-5)
        opt.step([np.zeros(3)])
        assert np.array_equal(p.data, np.array([1.0, -2.0, 3.0]) * (1 - 5e-4 * 1e-5))

    def test_clipping(self):
        grads, norm = ad.clip_gradients([np.array([3.0]), np.array([4.0])], 0.5)
        assert norm == 5.0
        assert np.sqrt(sum(float(np.sum(g * g)) for g in grads)) == pytest.approx(0.5, abs=1e-15)

    def test_step_reports_pre_clip_norm(self):
        p = Tensor(np.zeros(2), requires_grad=True)
        assert ad.AdamW([p]).step([np.array([3.0, 4.0])]) == 5.0

    def test_non_finite_names_param(self):
        p = Tensor(np.zeros(2), requires_grad=True, name="blocks.0.wq")
        with pytest.raises(ad.NonFiniteError, match="blocks.0.wq"):
            ad.AdamW([p]).step([np.array([np.nan, 0.0])])

    def test_moment_shapes(self):
        params = [Tensor(np.zeros((2, 3)), requires_grad=True), Tensor(np.zeros(4), requires_grad=True)]
        opt = ad.AdamW(params)
        assert [m.shape for m in opt.m] == [(2, 3), (4,)] and [v.shape for v in opt.v] == [(2, 3), (4,)]

    @given(st.lists(st.floats(-10, 10, allow_nan=False).filter(lambda v: abs(v) > 1e-3), min_size=1, max_size=6))
    def test_convex_decrease(self, values):
        p = Tensor(np.array(values), requires_grad=True)
        before = float(np.sum(p.data**2))
        opt = ad.AdamW([p], lr=1e-3, clip_norm=None)
        (g,) = ad.backward(ad.sum_(ad.square(p)), [p])
        opt.step([g])
        assert float(np.sum(p.data**2)) < before

    def test_deterministic(self):
        def run():
            rng = np.random.default_rng(7)
            p = Tensor(rng.standard_normal((3, 3)), requires_grad=True)
            target = rng.standard_normal((3, 3))
            opt = ad.AdamW([p], lr=1e-2)
            for _ in range(20):
                opt.zero_grad()
                (g,) = ad.backward(ad.sum_(ad.square(ad.sub(p, target))), [p])
                opt.step([g])
            return p.data

        assert np.array_equal(run(), run())
