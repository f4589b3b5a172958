"""A small reverse-mode autodiff over numpy arrays, plus AdamW.

Only the operations the regressor needs are provided.  Every forward op
checks its output for NaN/Inf so overflow surfaces as an error at the op
that produced it.
"""

from __future__ import annotations

import contextlib
import math

import numpy as np

_GRAD_ENABLED = True


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64) if not isinstance(data, np.ndarray) else data
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.shape}, name={self.name!r})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _result(op, data, parents, backward):
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{op}: non-finite value in forward output")
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shapes(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# --------------------------------------------------------------------------
# elementwise
# --------------------------------------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shapes("add", a, b)
    return _result(
        "add",
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shapes("sub", a, b)
    return _result(
        "sub",
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shapes("mul", a, b)
    return _result(
        "mul",
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shapes("div", a, b)
    out = a.data / b.data
    return _result(
        "div",
        out,
        (a, b),
        lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)),
    )


def scale(a, c: float):
    a = as_tensor(a)
    return _result("scale", a.data * c, (a,), lambda g: (g * c,))


def square(a):
    a = as_tensor(a)
    return _result("square", a.data * a.data, (a,), lambda g: (2.0 * a.data * g,))


def exp(a):
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return _result("exp", out, (a,), lambda g: (g * out,))


def log(a):
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)
    return _result("log", out, (a,), lambda g: (g / a.data,))


def softplus(a):
    a = as_tensor(a)
    x = a.data
    out = np.logaddexp(0.0, x)

    def backward(g):
        return (g * (0.5 * (1.0 + np.tanh(0.5 * x))),)

    return _result("softplus", out, (a,), backward)


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a):
    """GELU with the tanh approximation."""
    a = as_tensor(a)
    x = a.data
    inner = _GELU_C * (x + 0.044715 * (x * x * x))
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def backward(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * (x * x))
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner),)

    return _result("gelu", out, (a,), backward)


# --------------------------------------------------------------------------
# shape / reduction
# --------------------------------------------------------------------------


def sum_(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = np.sum(a.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _result("sum", np.asarray(out), (a,), backward)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = np.mean(a.data, axis=axis, keepdims=keepdims)
    count = a.data.size / np.asarray(out).size

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, a.shape).copy(),)

    return _result("mean", np.asarray(out), (a,), backward)


def reshape(a, shape):
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {a.shape} into {tuple(shape)}") from None
    return _result("reshape", out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None):
    a = as_tensor(a)
    axes = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _result("transpose", a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),))


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in tensors]} on axis {axis}") from None
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, sizes, axis=axis))

    return _result("concat", out, tuple(tensors), backward)


# --------------------------------------------------------------------------
# linear algebra / transformer pieces
# --------------------------------------------------------------------------


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        out = a.data @ b.data
    except ValueError:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}") from None

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return (_unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape))

    return _result("matmul", out, (a, b), backward)


def affine(x, weight, bias=None):
    """``x @ weight + bias``."""
    out = matmul(x, weight)
    return out if bias is None else add(out, bias)


def masked_softmax(x, mask, axis=-1):
    """Softmax along ``axis`` restricted to positions where ``mask`` is true.

    Disallowed positions get probability exactly 0.  A row with no allowed
    position raises ``ValueError``.
    """
    x = as_tensor(x)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    if not np.all(np.any(mask, axis=axis)):
        raise ValueError("masked_softmax: a row has every position masked")
    logits = np.where(mask, x.data, -np.inf)
    shifted = logits - np.max(logits, axis=axis, keepdims=True)
    e = np.where(mask, np.exp(shifted), 0.0)
    p = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g):
        return (p * (g - np.sum(g * p, axis=axis, keepdims=True)),)

    return _result("masked_softmax", p, (x,), backward)


def layer_norm(x, gain=None, bias=None, eps=1e-5):
    """Normalise over the last axis, then apply the optional affine map."""
    x = as_tensor(x)
    mu = np.mean(x.data, axis=-1, keepdims=True)
    centred = x.data - mu
    var = np.mean(centred * centred, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centred * inv
    parents = [x]
    out = xhat
    g_data = b_data = None
    if gain is not None:
        gain = as_tensor(gain)
        g_data = gain.data
        parents.append(gain)
        out = out * g_data
    if bias is not None:
        bias = as_tensor(bias)
        b_data = bias.data
        parents.append(bias)
        out = out + b_data

    def backward(g):
        dxhat = g * g_data if g_data is not None else g
        dx = inv * (
            dxhat
            - np.mean(dxhat, axis=-1, keepdims=True)
            - xhat * np.mean(dxhat * xhat, axis=-1, keepdims=True)
        )
        grads = [dx]
        if gain is not None:
            grads.append(_unbroadcast(g * xhat, gain.shape))
        if bias is not None:
            grads.append(_unbroadcast(g, bias.shape))
        return tuple(grads)

    return _result("layer_norm", out, tuple(parents), backward)


# --------------------------------------------------------------------------
# backward pass
# --------------------------------------------------------------------------


def _topological(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor, params=None):
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf.

    If ``params`` is given, returns their gradients in order; parameters the
    loss does not depend on get zeros.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topological(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg
    if params is None:
        return None
    return [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]


# --------------------------------------------------------------------------
# optimiser
# --------------------------------------------------------------------------


def clip_gradients(grads, max_norm):
    """Scale ``grads`` so their global L2 norm is at most ``max_norm``.

    Returns the clipped list and the norm before clipping.
    """
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if max_norm is not None and total > max_norm:
        factor = max_norm / total
        grads = [g * factor for g in grads]
    return grads, total


class AdamW:
    """AdamW with bias correction, decoupled weight decay and global-norm clipping."""

    def __init__(self, params, lr=5e-4, betas=(0.9, 0.999), eps=1e-8, weight_decay=1e-5, clip_norm=0.5):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.clip_norm = clip_norm
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, grads):
        """Apply one update; returns the pre-clipping gradient norm."""
        if len(grads) != len(self.params):
            raise ValueError("one gradient per parameter required")
        for p, g in zip(self.params, grads):
            if g.shape != p.data.shape:
                raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.data.shape} for {p.name}")
            if not np.all(np.isfinite(g)):
                raise NonFiniteError(f"non-finite gradient for parameter {p.name!r}")
        grads, norm = clip_gradients(grads, self.clip_norm)
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for i, (p, g) in enumerate(zip(self.params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            update = (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps)
            p.data = p.data - self.lr * self.weight_decay * p.data - self.lr * update
        return norm

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def gradcheck(fn, inputs, h=1e-6, indices=None, rng=None):
    """Max relative error between autodiff and central differences.

    ``fn`` maps the list of ``inputs`` (Tensors with requires_grad) to a
    scalar Tensor.  ``indices`` optionally restricts probing to a list of
    ``(input_index, flat_index)`` pairs.
    """
    for t in inputs:
        t.grad = None
    loss = fn(inputs)
    analytic = backward(loss, inputs)
    if indices is None:
        indices = [(i, j) for i, t in enumerate(inputs) for j in range(t.data.size)]
    worst = 0.0
    with no_grad():
        for i, j in indices:
            flat = inputs[i].data.reshape(-1)
            orig = flat[j]
            flat[j] = orig + h
            plus = float(fn(inputs).data)
            flat[j] = orig - h
            minus = float(fn(inputs).data)
            flat[j] = orig
            numeric = (plus - minus) / (2 * h)
            a = float(analytic[i].reshape(-1)[j])
            denom = max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, abs(a - numeric) / denom)
    return worst
