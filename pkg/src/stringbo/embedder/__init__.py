"""String embedders: hashed n-grams (default) and an HTTP client for LM embedders."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .cache import EmbeddingCache
from .hashing import hash_embed, hash_embed_batch
from .remote import EmbeddingProtocolError, RemoteEmbeddingError, remote_embed

__all__ = [
    "Backend",
    "EmbedderConfig",
    "EmbeddingCache",
    "HashedEmbedder",
    "RemoteEmbedder",
    "hash_embed",
    "hash_embed_batch",
    "make_embedder",
    "remote_embed",
    "RemoteEmbeddingError",
    "EmbeddingProtocolError",
]

MAX_TEXT = 100_000


class Backend(str, enum.Enum):
    HASHED = "HASHED"
    REMOTE = "REMOTE"


@dataclass(frozen=True)
class EmbedderConfig:
    backend: Backend = Backend.HASHED
    d: int = 256
    ngram_n: int = 3
    endpoint: str = ""
    model: str = ""
    timeout: float = 30.0
    cache_path: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "backend", Backend(self.backend))
        if self.d < 8:
            raise ValueError(f"embedding dim must be >= 8, got {self.d}")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.backend is Backend.REMOTE and not self.endpoint:
            raise ValueError("REMOTE backend needs an endpoint")


class _Embedder:
    backend_id = ""
    dim = 0

    def __init__(self, cache: EmbeddingCache | None = None):
        self.cache = cache

    def _compute(self, texts):
        raise NotImplementedError

    def embed(self, text: str) -> np.ndarray:
        return self.embed_batch([text])[0]

    def embed_uncached(self, texts) -> np.ndarray:
        """Embed without touching the cache, for one-off strings such as acquisition probes."""
        texts = list(texts)
        self._check_lengths(texts)
        return self._compute(texts) if texts else np.zeros((0, self.dim))

    @staticmethod
    def _check_lengths(texts):
        for t in texts:
            if len(t) > MAX_TEXT:
                raise ValueError(f"text of {len(t)} characters exceeds {MAX_TEXT}")

    def embed_batch(self, texts) -> np.ndarray:
        texts = list(texts)
        self._check_lengths(texts)
        if self.cache is None:
            return self._compute(texts) if texts else np.zeros((0, self.dim))
        out = [self.cache.get(self.backend_id, t) for t in texts]
        missing = sorted({t for t, v in zip(texts, out) if v is None})
        if missing:
            fresh = self._compute(missing)
            with self.cache._lock:
                self.cache.computes += len(missing)
            stored = {t: self.cache.put(self.backend_id, t, v) for t, v in zip(missing, fresh)}
            out = [stored[t] if v is None else v for t, v in zip(texts, out)]
        return np.stack(out) if out else np.zeros((0, self.dim))


class HashedEmbedder(_Embedder):
    def __init__(self, d=256, n=3, cache=None):
        super().__init__(cache)
        if d < 8 or n < 1:
            raise ValueError(f"need d >= 8 and n >= 1, got d={d}, n={n}")
        self.dim = d
        self.n = n
        self.backend_id = f"hashed:d={d}:n={n}"

    def _compute(self, texts):
        return hash_embed_batch(texts, self.dim, self.n)


class RemoteEmbedder(_Embedder):
    def __init__(self, endpoint, model="", timeout=30.0, cache=None, max_batch=64, backoff=0.5, max_attempts=3):
        super().__init__(cache)
        self.endpoint = endpoint
        self.model = model
        self.timeout = timeout
        self.max_batch = max_batch
        self.backoff = backoff
        self.max_attempts = max_attempts
        self.backend_id = f"remote:{endpoint}:{model}"
        self.dim = 0

    def _compute(self, texts):
        chunks = []
        for i in range(0, len(texts), self.max_batch):
            part = remote_embed(
                texts[i : i + self.max_batch],
                self.endpoint,
                self.model,
                timeout=self.timeout,
                backoff=self.backoff,
                max_attempts=self.max_attempts,
            )
            if self.dim and part.shape[1] != self.dim:
                raise EmbeddingProtocolError(f"service dimension changed from {self.dim} to {part.shape[1]}")
            self.dim = part.shape[1]
            chunks.append(part)
        return np.concatenate(chunks, axis=0)


def make_embedder(config: EmbedderConfig):
    cache = EmbeddingCache(config.cache_path) if config.cache_path else EmbeddingCache()
    if config.backend is Backend.HASHED:
        return HashedEmbedder(config.d, config.ngram_n, cache=cache)
    return RemoteEmbedder(config.endpoint, config.model, config.timeout, cache=cache)
