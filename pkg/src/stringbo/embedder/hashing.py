"""Deterministic hashed character n-gram embeddings.

Features of a text: it is split on whitespace; every token contributes its
character n-grams (tokens shorter than ``n`` contribute themselves).  When
the text holds two or more tokens, each whole token is also a feature, so
that e.g. ``[0]:2,`` binds a position to its value.  A token made of two or
more non-empty comma-separated fields also contributes each field, which
binds a parameter name to its value inside a whitespace-free JSON string;
without it, swapping two values can leave the n-gram bag unchanged.
Each feature is hashed
with 64-bit FNV-1a over its UTF-8 bytes and adds ``+1`` or ``-1`` (bit 63)
at index ``hash % d``.  The signed counts are averaged over the feature count
and L2-normalised.
"""

import numpy as np

from .. import _accel
from .._accel import maybe_njit

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK64 = (1 << 64) - 1
MAX_CHARS = 1600

WHITESPACE = frozenset(
    [9, 10, 11, 12, 13, 28, 29, 30, 31, 32, 133, 160, 5760, 8232, 8233, 8239, 8287, 12288]
    + list(range(8192, 8203))
)
_WS_ARRAY = np.array(sorted(WHITESPACE), dtype=np.uint32)


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & MASK64
    return h


def clip_text(text: str) -> str:
    return text[:MAX_CHARS]


# --------------------------------------------------------------------------
# reference implementation (pure Python)
# --------------------------------------------------------------------------


def _tokens(text):
    out, cur = [], []
    for ch in text:
        if ord(ch) in WHITESPACE:
            if cur:
                out.append("".join(cur))
                cur = []
        else:
            cur.append(ch)
    if cur:
        out.append("".join(cur))
    return out


def features(text: str, n: int = 3) -> list[str]:
    """The feature multiset of ``text`` in extraction order."""
    tokens = _tokens(clip_text(text))
    multi = len(tokens) >= 2
    feats = []
    for tok in tokens:
        if len(tok) < n:
            feats.append(tok)
        else:
            feats.extend(tok[i : i + n] for i in range(len(tok) - n + 1))
            if multi:
                feats.append(tok)
        fields = [f for f in tok.split(",") if f]
        if len(fields) >= 2:
            feats.extend(fields)
    return feats


def _signed_counts_py(texts, d, n):
    counts = np.zeros((len(texts), d), dtype=np.int64)
    totals = np.zeros(len(texts), dtype=np.int64)
    for row, text in enumerate(texts):
        for feat in features(text, n):
            h = fnv1a_64(feat.encode("utf-8"))
            counts[row, h % d] += -1 if h >> 63 else 1
            totals[row] += 1
    return counts, totals


# --------------------------------------------------------------------------
# compiled kernel over code points
# --------------------------------------------------------------------------


@maybe_njit
def _fnv_codepoints(cps, start, stop):
    h = np.uint64(0xCBF29CE484222325)
    prime = np.uint64(0x100000001B3)
    for i in range(start, stop):
        cp = cps[i]
        if cp < 0x80:
            h = (h ^ np.uint64(cp)) * prime
        elif cp < 0x800:
            h = (h ^ np.uint64(0xC0 | (cp >> 6))) * prime
            h = (h ^ np.uint64(0x80 | (cp & 0x3F))) * prime
        elif cp < 0x10000:
            h = (h ^ np.uint64(0xE0 | (cp >> 12))) * prime
            h = (h ^ np.uint64(0x80 | ((cp >> 6) & 0x3F))) * prime
            h = (h ^ np.uint64(0x80 | (cp & 0x3F))) * prime
        else:
            h = (h ^ np.uint64(0xF0 | (cp >> 18))) * prime
            h = (h ^ np.uint64(0x80 | ((cp >> 12) & 0x3F))) * prime
            h = (h ^ np.uint64(0x80 | ((cp >> 6) & 0x3F))) * prime
            h = (h ^ np.uint64(0x80 | (cp & 0x3F))) * prime
    return h


@maybe_njit
def _add_feature(counts, row, cps, start, stop, d):
    h = _fnv_codepoints(cps, start, stop)
    idx = np.int64(h % np.uint64(d))
    if (h >> np.uint64(63)) & np.uint64(1):
        counts[row, idx] -= 1
    else:
        counts[row, idx] += 1


@maybe_njit
def _signed_counts_kernel(cps, offsets, ws, d, n):
    B = offsets.shape[0] - 1
    counts = np.zeros((B, d), dtype=np.int64)
    totals = np.zeros(B, dtype=np.int64)
    starts = np.empty(cps.shape[0] + 1, dtype=np.int64)
    stops = np.empty(cps.shape[0] + 1, dtype=np.int64)
    for row in range(B):
        lo = offsets[row]
        hi = offsets[row + 1]
        # token boundaries
        n_tok = 0
        i = lo
        while i < hi:
            while i < hi and _is_ws(cps[i], ws):
                i += 1
            if i >= hi:
                break
            j = i
            while j < hi and not _is_ws(cps[j], ws):
                j += 1
            starts[n_tok] = i
            stops[n_tok] = j
            n_tok += 1
            i = j
        for t in range(n_tok):
            a = starts[t]
            b = stops[t]
            if b - a < n:
                _add_feature(counts, row, cps, a, b, d)
                totals[row] += 1
            else:
                for s in range(a, b - n + 1):
                    _add_feature(counts, row, cps, s, s + n, d)
                    totals[row] += 1
                if n_tok >= 2:
                    _add_feature(counts, row, cps, a, b, d)
                    totals[row] += 1
            # comma-separated fields, only when there are at least two
            n_fields = 0
            f = a
            for s in range(a, b + 1):
                if s == b or cps[s] == 44:
                    if s > f:
                        n_fields += 1
                    f = s + 1
            if n_fields >= 2:
                f = a
                for s in range(a, b + 1):
                    if s == b or cps[s] == 44:
                        if s > f:
                            _add_feature(counts, row, cps, f, s, d)
                            totals[row] += 1
                        f = s + 1
    return counts, totals


@maybe_njit
def _is_ws(cp, ws):
    for w in ws:
        if cp == w:
            return True
    return False


def _pack(texts):
    encoded = [np.frombuffer(clip_text(t).encode("utf-32-le"), dtype=np.uint32) for t in texts]
    offsets = np.zeros(len(texts) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([len(e) for e in encoded])
    cps = np.concatenate(encoded) if encoded else np.zeros(0, dtype=np.uint32)
    return cps.astype(np.int64), offsets


def signed_counts(texts, d, n, use_numba=None):
    if use_numba is None:
        use_numba = _accel.USE_NUMBA
    if use_numba:
        cps, offsets = _pack(texts)
        return _signed_counts_kernel(cps, offsets, _WS_ARRAY.astype(np.int64), d, n)
    return _signed_counts_py(texts, d, n)


def hash_embed_batch(texts, d=256, n=3, use_numba=None) -> np.ndarray:
    """Embed a list of texts; returns an array of shape ``(len(texts), d)``."""
    if d < 8 or n < 1:
        raise ValueError(f"need d >= 8 and n >= 1, got d={d}, n={n}")
    texts = list(texts)
    if not texts:
        return np.zeros((0, d))
    counts, totals = signed_counts(texts, d, n, use_numba=use_numba)
    pooled = counts / np.maximum(totals, 1)[:, None]
    norms = np.sqrt(np.sum(pooled * pooled, axis=1))
    out = np.where(norms[:, None] > 0, pooled / np.where(norms > 0, norms, 1.0)[:, None], 0.0)
    return out


def hash_embed(text, d=256, n=3, use_numba=None) -> np.ndarray:
    return hash_embed_batch([text], d, n, use_numba=use_numba)[0]
