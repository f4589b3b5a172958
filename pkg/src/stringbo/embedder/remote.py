"""Client for an HTTP embedding service.

Protocol: ``POST {endpoint}/v1/embed`` with ``{"model": str, "texts": [str]}``;
the reply is ``{"dim": int, "embeddings": [[float]]}``.  Any non-2xx status
is a failure.
"""

import logging
import time

import numpy as np
import requests

logger = logging.getLogger(__name__)


class RemoteEmbeddingError(RuntimeError):
    def __init__(self, message, status=None, body=""):
        super().__init__(message)
        self.status = status
        self.body = body


class EmbeddingProtocolError(RemoteEmbeddingError):
    pass


def remote_embed(
    texts,
    endpoint,
    model,
    timeout=30.0,
    max_attempts=3,
    backoff=0.5,
    session=None,
):
    """Embed ``texts`` in one request, retrying failures with exponential backoff."""
    texts = list(texts)
    if not texts:
        raise ValueError("remote_embed needs a non-empty batch")
    if any(not t for t in texts):
        raise ValueError("remote_embed texts must be non-empty")
    if timeout <= 0:
        raise ValueError("timeout must be positive")
    url = endpoint.rstrip("/") + "/v1/embed"
    http = session or requests
    last = None
    for attempt in range(max_attempts):
        if attempt:
            time.sleep(backoff * 2 ** (attempt - 1))
        try:
            resp = http.post(url, json={"model": model, "texts": texts}, timeout=timeout)
        except requests.Timeout as exc:
            last = RemoteEmbeddingError(f"timeout after {timeout}s calling {url}")
            last.__cause__ = exc
            continue
        except requests.RequestException as exc:
            last = RemoteEmbeddingError(f"request to {url} failed: {exc}")
            continue
        if not 200 <= resp.status_code < 300:
            excerpt = resp.text[:200]
            last = RemoteEmbeddingError(
                f"embedding service returned HTTP {resp.status_code}: {excerpt}", resp.status_code, excerpt
            )
            logger.warning("attempt %d/%d: HTTP %d from %s", attempt + 1, max_attempts, resp.status_code, url)
            continue
        return _parse(resp.json(), len(texts))
    raise last


def _parse(payload, expected):
    try:
        dim = int(payload["dim"])
        rows = payload["embeddings"]
    except (KeyError, TypeError, ValueError) as exc:
        raise EmbeddingProtocolError(f"malformed embedding response: {exc}") from None
    if len(rows) != expected:
        raise EmbeddingProtocolError(f"expected {expected} embeddings, got {len(rows)}")
    lengths = {len(r) for r in rows}
    if lengths != {dim}:
        raise EmbeddingProtocolError(f"embedding dimensions {sorted(lengths)} disagree with dim={dim}")
    out = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise EmbeddingProtocolError("non-finite values in embedding response")
    return out
