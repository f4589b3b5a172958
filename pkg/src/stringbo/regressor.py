"""In-context Transformer regressor over embedded trials.

Each trial becomes one token: ``concat(x_embed, [meta_embed], y, is_target)``
projected to ``d_model``.  History tokens attend to all history tokens;
target tokens attend to the history only, and nothing attends to targets,
so a target's prediction never depends on the other targets.  There is no
positional encoding over trials, which makes predictions invariant to the
order of the history.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from . import autodiff as ad

LOG_2PI = math.log(2.0 * math.pi)


class NonFiniteActivationError(FloatingPointError):
    pass


@dataclass(frozen=True)
class RegressorConfig:
    d_model: int = 64
    n_layers: int = 4
    n_heads: int = 4
    d_ff: int = 256
    d_embed: int = 256
    use_metadata: bool = False
    sigma_floor: float = 1e-3

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        for field_name in ("d_model", "n_layers", "n_heads", "d_ff", "d_embed"):
            if getattr(self, field_name) < 1:
                raise ValueError(f"{field_name} must be positive")
        if self.sigma_floor <= 0:
            raise ValueError("sigma_floor must be positive")

    @classmethod
    def full_scale(cls, d_embed=2048):
        return cls(d_model=1024, n_layers=8, n_heads=16, d_ff=4096, d_embed=d_embed)

    @property
    def d_input(self) -> int:
        return self.d_embed * (2 if self.use_metadata else 1) + 2

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads

    def to_dict(self):
        return asdict(self)


class GaussianPrediction(NamedTuple):
    mu: float
    sigma: float


def param_shapes(config: RegressorConfig) -> dict[str, tuple]:
    D, F = config.d_model, config.d_ff
    shapes = {"in.w": (config.d_input, D), "in.b": (D,)}
    for l in range(config.n_layers):
        p = f"layer{l}."
        shapes.update(
            {
                p + "ln1.g": (D,),
                p + "ln1.b": (D,),
                p + "wq": (D, D),
                p + "wk": (D, D),
                p + "wv": (D, D),
                p + "wo": (D, D),
                p + "bo": (D,),
                p + "ln2.g": (D,),
                p + "ln2.b": (D,),
                p + "ff1.w": (D, F),
                p + "ff1.b": (F,),
                p + "ff2.w": (F, D),
                p + "ff2.b": (D,),
            }
        )
    shapes.update(
        {
            "out.ln.g": (D,),
            "out.ln.b": (D,),
            "head.mu.w": (D, 1),
            "head.mu.b": (1,),
            "head.sigma.w": (D, 1),
            "head.sigma.b": (1,),
        }
    )
    return shapes


def init_params(config: RegressorConfig, seed: int = 0) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    residual_scale = 1.0 / math.sqrt(2.0 * config.n_layers)
    params = {}
    for name, shape in param_shapes(config).items():
        leaf = name.rsplit(".", 1)[-1]
        if name.endswith(".g"):
            params[name] = np.ones(shape)
        elif len(shape) == 1:
            params[name] = np.zeros(shape)
        else:
            std = math.sqrt(2.0 / (shape[0] + shape[1]))
            if leaf in ("wo",) or name.endswith("ff2.w"):
                std *= residual_scale
            if name.startswith("head."):
                std = 0.02
            params[name] = rng.normal(0.0, std, size=shape)
    params["head.mu.b"][:] = 0.5
    params["head.sigma.b"][:] = math.log(math.expm1(0.3))
    return params


def attention_mask(t: int, k: int) -> np.ndarray:
    """Boolean ``(t+k, t+k)`` mask; ``[i, j]`` allows token ``i`` to read token ``j``.

    Every token reads every history token and no token reads a target.  With
    an empty history each token reads only itself.
    """
    if t < 0 or k < 0 or t + k < 1:
        raise ValueError(f"need t >= 0, k >= 0 and t + k >= 1, got t={t}, k={k}")
    if t == 0:
        return np.eye(k, dtype=bool)
    mask = np.zeros((t + k, t + k), dtype=bool)
    mask[:, :t] = True
    return mask


def build_tokens(history_x, history_y, target_x, meta=None, config: RegressorConfig | None = None):
    """Stack raw token rows ``[x, (meta), y, is_target]`` and the matching mask.

    ``history_y`` must already be normalised.  Target rows carry ``y = 0`` and
    ``is_target = 1``.
    """
    target_x = np.asarray(target_x, dtype=np.float64)
    t = len(history_y)
    if t == 0:
        history_x = np.zeros((0, target_x.shape[-1]))
    else:
        history_x = np.asarray(history_x, dtype=np.float64).reshape(t, -1)
    k = target_x.shape[0] if target_x.size else 0
    if t and k and history_x.shape[1] != target_x.shape[1]:
        raise ValueError(f"mixed embedding dims: history {history_x.shape[1]} vs targets {target_x.shape[1]}")
    if config is not None:
        d = history_x.shape[1] if t else target_x.shape[1]
        if d != config.d_embed:
            raise ValueError(f"embedding dim {d} != configured d_embed {config.d_embed}")
    x = np.concatenate([history_x, target_x.reshape(k, -1)], axis=0) if k else history_x
    y = np.concatenate([np.asarray(history_y, dtype=np.float64), np.zeros(k)])
    flag = np.concatenate([np.zeros(t), np.ones(k)])
    cols = [x]
    if meta is not None:
        cols.append(np.broadcast_to(np.asarray(meta, dtype=np.float64), (t + k, np.shape(meta)[-1])))
    elif config is not None and config.use_metadata:
        raise ValueError("config.use_metadata is set but no metadata embedding was given")
    cols.extend([y[:, None], flag[:, None]])
    return np.concatenate(cols, axis=1), attention_mask(t, k)


# --------------------------------------------------------------------------
# autograd forward (training and gradient checks)
# --------------------------------------------------------------------------


def _split_heads(x, B, T, H, dh):
    return ad.transpose(ad.reshape(x, (B, T, H, dh)), (0, 2, 1, 3))


def forward(params: dict[str, ad.Tensor], config: RegressorConfig, tokens, mask):
    """Batched forward pass on ``(B, T, d_input)`` tokens and ``(B, T, T)`` mask.

    Returns ``(mu, sigma)`` tensors of shape ``(B, T)``.
    """
    tokens = np.asarray(tokens, dtype=np.float64)
    if tokens.ndim == 2:
        tokens, mask = tokens[None], np.asarray(mask)[None]
    B, T, _ = tokens.shape
    H, dh, D = config.n_heads, config.d_head, config.d_model
    mask4 = np.asarray(mask, dtype=bool)[:, None, :, :]
    h = ad.affine(ad.Tensor(tokens), params["in.w"], params["in.b"])
    inv_sqrt = 1.0 / math.sqrt(dh)
    for l in range(config.n_layers):
        p = f"layer{l}."
        x = ad.layer_norm(h, params[p + "ln1.g"], params[p + "ln1.b"])
        q = _split_heads(ad.matmul(x, params[p + "wq"]), B, T, H, dh)
        k = _split_heads(ad.matmul(x, params[p + "wk"]), B, T, H, dh)
        v = _split_heads(ad.matmul(x, params[p + "wv"]), B, T, H, dh)
        scores = ad.scale(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))), inv_sqrt)
        attn = ad.matmul(ad.masked_softmax(scores, mask4), v)
        merged = ad.reshape(ad.transpose(attn, (0, 2, 1, 3)), (B, T, D))
        h = ad.add(h, ad.affine(merged, params[p + "wo"], params[p + "bo"]))
        x = ad.layer_norm(h, params[p + "ln2.g"], params[p + "ln2.b"])
        ff = ad.gelu(ad.affine(x, params[p + "ff1.w"], params[p + "ff1.b"]))
        h = ad.add(h, ad.affine(ff, params[p + "ff2.w"], params[p + "ff2.b"]))
    h = ad.layer_norm(h, params["out.ln.g"], params["out.ln.b"])
    mu = ad.reshape(ad.affine(h, params["head.mu.w"], params["head.mu.b"]), (B, T))
    raw = ad.reshape(ad.affine(h, params["head.sigma.w"], params["head.sigma.b"]), (B, T))
    sigma = ad.add(ad.softplus(raw), config.sigma_floor)
    return mu, sigma


def nll_terms(mu, sigma, y):
    """Elementwise Gaussian negative log-likelihood (works on Tensors)."""
    resid = ad.sub(y, mu)
    return ad.add(
        ad.add(ad.log(sigma), 0.5 * LOG_2PI),
        ad.div(ad.square(resid), ad.scale(ad.square(sigma), 2.0)),
    )


def batch_nll_loss(mu, sigma, y, target_weights, sigma_floor=None):
    """Sum of target NLLs per task, averaged over the batch."""
    if sigma_floor is not None and np.min(sigma.data) < sigma_floor * (1 - 1e-12):
        raise ValueError(f"sigma {np.min(sigma.data)} below floor {sigma_floor}")
    terms = nll_terms(mu, sigma, ad.Tensor(np.asarray(y, dtype=np.float64)))
    weighted = ad.mul(terms, ad.Tensor(np.asarray(target_weights, dtype=np.float64)))
    per_task = ad.sum_(weighted, axis=1)
    return ad.mean(per_task)


def nll_loss(mu, sigma, y, sigma_floor=None) -> float:
    """Summed Gaussian NLL of ``y`` under ``N(mu, sigma^2)``."""
    mu, sigma, y = (np.asarray(a, dtype=np.float64) for a in (mu, sigma, y))
    if mu.shape != sigma.shape or mu.shape != y.shape or mu.size == 0:
        raise ValueError("nll_loss needs equal, non-empty lengths")
    if sigma_floor is not None and np.min(sigma) < sigma_floor:
        raise ValueError(f"sigma {np.min(sigma)} below floor {sigma_floor}")
    return float(np.sum(np.log(sigma) + 0.5 * LOG_2PI + (y - mu) ** 2 / (2.0 * sigma**2)))


# --------------------------------------------------------------------------
# numpy inference with cached history keys/values
# --------------------------------------------------------------------------


def _layer_norm(x, g, b, eps=1e-5):
    mu = np.mean(x, axis=-1, keepdims=True)
    c = x - mu
    var = np.mean(c * c, axis=-1, keepdims=True)
    return c / np.sqrt(var + eps) * g + b


def _gelu(x):
    return 0.5 * x * (1.0 + np.tanh(ad._GELU_C * (x + 0.044715 * (x * x * x))))


def _softplus(x):
    return np.logaddexp(0.0, x)


def _softmax(scores):
    scores = scores - np.max(scores, axis=-1, keepdims=True)
    e = np.exp(scores)
    return e / np.sum(e, axis=-1, keepdims=True)


class HistoryEncoding:
    """Per-layer keys and values of an encoded history, reusable across targets."""

    def __init__(self, keys, values, t):
        self.keys = keys
        self.values = values
        self.t = t


class Regressor:
    def __init__(self, params: dict[str, np.ndarray], config: RegressorConfig):
        expected = param_shapes(config)
        missing = set(expected) - set(params)
        extra = set(params) - set(expected)
        if missing or extra:
            raise ValueError(f"parameter set mismatch: missing={sorted(missing)}, unexpected={sorted(extra)}")
        for name, shape in expected.items():
            if tuple(np.shape(params[name])) != shape:
                raise ValueError(f"{name}: shape {np.shape(params[name])} != {shape}")
        self.params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}
        self.config = config

    @classmethod
    def initialise(cls, config: RegressorConfig, seed: int = 0) -> "Regressor":
        return cls(init_params(config, seed), config)

    def tensors(self, requires_grad=True) -> dict[str, ad.Tensor]:
        return {k: ad.Tensor(v, requires_grad=requires_grad, name=k) for k, v in self.params.items()}

    def _project(self, x_embed, y, flag, meta):
        cols = [x_embed]
        if self.config.use_metadata:
            if meta is None:
                raise ValueError("config.use_metadata is set but no metadata embedding was given")
            cols.append(np.broadcast_to(meta, (x_embed.shape[0], meta.shape[-1])))
        cols.extend([y[:, None], flag[:, None]])
        return np.concatenate(cols, axis=1) @ self.params["in.w"] + self.params["in.b"]

    def _heads(self, x):
        B, D = x.shape[0], self.config.d_model
        return x.reshape(B, self.config.n_heads, self.config.d_head).transpose(1, 0, 2)

    def _block_rest(self, h, attn, p):
        P = self.params
        merged = attn.transpose(1, 0, 2).reshape(h.shape[0], self.config.d_model)
        h = h + merged @ P[p + "wo"] + P[p + "bo"]
        x = _layer_norm(h, P[p + "ln2.g"], P[p + "ln2.b"])
        return h + _gelu(x @ P[p + "ff1.w"] + P[p + "ff1.b"]) @ P[p + "ff2.w"] + P[p + "ff2.b"]

    def encode_history(self, history_x, history_y, meta=None) -> HistoryEncoding:
        history_x = np.asarray(history_x, dtype=np.float64)
        history_y = np.asarray(history_y, dtype=np.float64)
        t = history_y.size
        if t == 0:
            return HistoryEncoding([], [], 0)
        if history_x.shape != (t, self.config.d_embed):
            raise ValueError(f"history embeddings shape {history_x.shape} != ({t}, {self.config.d_embed})")
        P = self.params
        h = self._project(history_x, history_y, np.zeros(t), meta)
        scale = 1.0 / math.sqrt(self.config.d_head)
        keys, values = [], []
        for l in range(self.config.n_layers):
            p = f"layer{l}."
            x = _layer_norm(h, P[p + "ln1.g"], P[p + "ln1.b"])
            q, k, v = self._heads(x @ P[p + "wq"]), self._heads(x @ P[p + "wk"]), self._heads(x @ P[p + "wv"])
            keys.append(k)
            values.append(v)
            attn = _softmax(q @ k.transpose(0, 2, 1) * scale) @ v
            h = self._block_rest(h, attn, p)
        return HistoryEncoding(keys, values, t)

    def predict_encoded(self, enc: HistoryEncoding, target_x, meta=None):
        """Means and deviations for ``target_x`` given an encoded history."""
        target_x = np.asarray(target_x, dtype=np.float64)
        if target_x.ndim != 2 or target_x.shape[1] != self.config.d_embed:
            raise ValueError(f"target embeddings shape {target_x.shape} incompatible with d_embed={self.config.d_embed}")
        k = target_x.shape[0]
        P = self.params
        h = self._project(target_x, np.zeros(k), np.ones(k), meta)
        scale = 1.0 / math.sqrt(self.config.d_head)
        for l in range(self.config.n_layers):
            p = f"layer{l}."
            x = _layer_norm(h, P[p + "ln1.g"], P[p + "ln1.b"])
            if enc.t == 0:
                attn = self._heads(x @ P[p + "wv"])  # each target reads only itself
            else:
                q = self._heads(x @ P[p + "wq"])
                attn = _softmax(q @ enc.keys[l].transpose(0, 2, 1) * scale) @ enc.values[l]
            h = self._block_rest(h, attn, p)
        h = _layer_norm(h, P["out.ln.g"], P["out.ln.b"])
        mu = (h @ P["head.mu.w"] + P["head.mu.b"])[:, 0]
        sigma = _softplus((h @ P["head.sigma.w"] + P["head.sigma.b"])[:, 0]) + self.config.sigma_floor
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
            raise NonFiniteActivationError("non-finite regressor output")
        return mu, sigma

    def predict(self, history_x, history_y, target_x, meta=None):
        """Gaussian predictions ``(mu, sigma)`` for each target row."""
        return self.predict_encoded(self.encode_history(history_x, history_y, meta), target_x, meta)

    def predict_gaussians(self, history_x, history_y, target_x, meta=None) -> list[GaussianPrediction]:
        mu, sigma = self.predict(history_x, history_y, target_x, meta)
        return [GaussianPrediction(float(m), float(s)) for m, s in zip(mu, sigma)]

    def predict_masked(self, history_x, history_y, target_x, meta=None):
        """Reference path: full masked forward over history and targets together."""
        tokens, mask = build_tokens(history_x, history_y, target_x, meta, self.config)
        with ad.no_grad():
            mu, sigma = forward(self.tensors(requires_grad=False), self.config, tokens, mask)
        t = len(history_y)
        return mu.data[0, t:], sigma.data[0, t:]
