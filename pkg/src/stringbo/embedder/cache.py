"""In-process embedding memo with optional append-only file persistence.

File layout (little-endian)::

    b"ETRC"  u16 version
    repeated records:
        u64 key hash   u32 d   d x f64 values   u32 crc32(key hash | d | values)

The key hash is FNV-1a 64 of ``backend_id + "\\0" + text``.
"""

import logging
import os
import struct
import threading
import zlib

import numpy as np

from .hashing import fnv1a_64

logger = logging.getLogger(__name__)

MAGIC = b"ETRC"
VERSION = 1
_HEADER = struct.Struct("<4sH")
_REC_HEAD = struct.Struct("<QI")
_CRC = struct.Struct("<I")
MAX_DIM = 1 << 20


def key_hash(backend_id: str, text: str) -> int:
    return fnv1a_64((backend_id + "\0" + text).encode("utf-8"))


class EmbeddingCache:
    def __init__(self, path=None):
        self.path = os.fspath(path) if path is not None else None
        self._memory = {}
        self._persisted = {}
        self._lock = threading.Lock()
        self.computes = 0
        if self.path is not None:
            self._load()

    def __len__(self):
        return len(self._memory) + len(self._persisted)

    def _load(self):
        if not os.path.exists(self.path) or os.path.getsize(self.path) == 0:
            return
        with open(self.path, "rb") as fh:
            blob = fh.read()
        if len(blob) < _HEADER.size:
            logger.warning("embedding cache %s: truncated header, ignoring file", self.path)
            return
        magic, version = _HEADER.unpack_from(blob, 0)
        if magic != MAGIC or version != VERSION:
            logger.warning(
                "embedding cache %s: bad header (magic=%r, version=%d), ignoring file", self.path, magic, version
            )
            return
        pos = _HEADER.size
        while pos < len(blob):
            if pos + _REC_HEAD.size > len(blob):
                logger.warning("embedding cache %s: truncated record at byte %d", self.path, pos)
                break
            h, d = _REC_HEAD.unpack_from(blob, pos)
            end = pos + _REC_HEAD.size + 8 * d + _CRC.size
            if d == 0 or d > MAX_DIM or end > len(blob):
                logger.warning("embedding cache %s: corrupt record at byte %d, stopping", self.path, pos)
                break
            body = blob[pos : end - _CRC.size]
            (crc,) = _CRC.unpack_from(blob, end - _CRC.size)
            if zlib.crc32(body) != crc:
                logger.warning("embedding cache %s: checksum mismatch at byte %d, skipping record", self.path, pos)
            else:
                values = np.frombuffer(body, dtype="<f8", offset=_REC_HEAD.size).astype(np.float64)
                self._persisted[h] = values
            pos = end

    def _append(self, h, vec):
        payload = _REC_HEAD.pack(h, vec.size) + np.asarray(vec, dtype="<f8").tobytes()
        new_file = not os.path.exists(self.path) or os.path.getsize(self.path) == 0
        with open(self.path, "ab") as fh:
            if new_file:
                fh.write(_HEADER.pack(MAGIC, VERSION))
            fh.write(payload + _CRC.pack(zlib.crc32(payload)))

    def get(self, backend_id, text):
        key = (backend_id, text)
        with self._lock:
            hit = self._memory.get(key)
            if hit is None and self._persisted:
                hit = self._persisted.get(key_hash(backend_id, text))
                if hit is not None:
                    self._memory[key] = hit
            return hit

    def put(self, backend_id, text, vec):
        """Store ``vec`` unless a value is already present; returns the stored value."""
        vec = np.asarray(vec, dtype=np.float64)
        key = (backend_id, text)
        with self._lock:
            existing = self._memory.get(key)
            if existing is not None:
                return existing
            vec.setflags(write=False)
            self._memory[key] = vec
            if self.path is not None:
                self._append(key_hash(backend_id, text), vec)
            return vec

    def get_or_compute(self, backend_id, text, compute):
        hit = self.get(backend_id, text)
        if hit is not None:
            return hit
        value = compute(text)
        with self._lock:
            self.computes += 1
        return self.put(backend_id, text, value)
