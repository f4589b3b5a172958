import logging
import threading

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stringbo import space as sp
from stringbo.embedder import (
    EmbedderConfig,
    EmbeddingCache,
    EmbeddingProtocolError,
    HashedEmbedder,
    RemoteEmbedder,
    RemoteEmbeddingError,
    hash_embed,
    hash_embed_batch,
    make_embedder,
    remote_embed,
)
from stringbo.embedder import hashing
from stringbo.embedder.cache import MAGIC
from stringbo.embedder.stub import serve_in_thread
from stringbo.objectives import apply_transforms, bbob


def fnv(data: bytes) -> int:
    h = 14695981039346656037
    for b in data:
        h = ((h ^ b) * 1099511628211) % 2**64
    return h


def reference_embed(text, d=256, n=3):
    """Hand-rolled oracle: per-token n-grams, whole tokens when there are several,
    comma fields when a token has several."""
    tokens = text[:1600].split()
    feats = []
    for tok in tokens:
        if len(tok) < n:
            feats.append(tok)
        else:
            feats += [tok[i : i + n] for i in range(len(tok) - n + 1)]
            if len(tokens) > 1:
                feats.append(tok)
        fields = [f for f in tok.split(",") if f]
        if len(fields) > 1:
            feats += fields
    v = np.zeros(d)
    for f in feats:
        h = fnv(f.encode())
        v[h % d] += -1.0 if h >> 63 else 1.0
    if feats:
        v /= len(feats)
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else v


@pytest.fixture
def stub():
    server = serve_in_thread()
    yield server, f"http://127.0.0.1:{server.server_port}"
    server.shutdown()
    server.server_close()


class TestHashed:
    def test_fnv_vectors(self):
        assert hashing.fnv1a_64(b"") == 0xCBF29CE484222325
        assert hashing.fnv1a_64(b"a") == 0xAF63DC4C8601EC8C
        assert hashing.fnv1a_64(b"foobar") == 0x85944171F73967E8

    def test_unit_norm(self):
        assert np.linalg.norm(hash_embed('{"p0":0.3}')) == pytest.approx(1.0, abs=1e-9)

    def test_distinct_values(self):
        assert np.any(hash_embed('{"p0":0.3}') != hash_embed('{"p0":0.4}'))

    def test_empty(self):
        assert np.array_equal(hash_embed(""), np.zeros(256))

    def test_repeated_feature_direction(self):
        assert np.allclose(hash_embed("aaaa"), hash_embed("aaaaaaa"), atol=1e-15)

    def test_swapped_values_differ(self):
        assert np.any(hash_embed('{"x0":"-5","x1":"5"}') != hash_embed('{"x0":"5","x1":"-5"}'))
        assert np.any(hash_embed('{"x0":1.5,"x1":2.5,"x2":0}') != hash_embed('{"x0":2.5,"x1":1.5,"x2":0}'))

    def test_token_permutation(self):
        assert np.array_equal(hash_embed("alpha beta"), hash_embed("beta alpha"))

    def test_deterministic(self):
        s = '{"x0":1.5,"x1":"tanh"}'
        assert np.array_equal(hash_embed(s), hash_embed(s))

    @pytest.mark.parametrize("text", ['{"p0":0.3}', "{[0]:2, [1]:0}", "task:\"Choice\"\nsize: 4-choose-2", "ab", "héllo wörld ☃ 𝄞", "a,,b", ",x,", '{"x0":1,"x1":2} q,r'])
    def test_matches_oracle(self, text):
        assert np.allclose(hash_embed(text), reference_embed(text), atol=1e-12)

    @given(st.text(max_size=60))
    def test_numba_numpy_parity(self, text):
        a = hash_embed(text, use_numba=True)
        b = hash_embed(text, use_numba=False)
        assert np.array_equal(a, b)
        norm = np.linalg.norm(a)
        assert norm == 0.0 or abs(norm - 1.0) <= 1e-9

    def test_clip(self):
        long = "x" * 1600
        assert np.array_equal(hash_embed(long), hash_embed(long + "yz" * 50))

    def test_bad_params(self):
        with pytest.raises(ValueError):
            hash_embed("a", d=4)
        with pytest.raises(ValueError):
            HashedEmbedder(d=256, n=0)

    def test_too_long(self):
        with pytest.raises(ValueError):
            HashedEmbedder().embed("a" * 100_001)

    def test_no_duplicates_on_bbob_corpus(self):
        rng = np.random.default_rng(0)
        strings = set()
        while len(strings) < 10_000:
            obj = apply_transforms(bbob.TRAIN[rng.integers(len(bbob.TRAIN))], int(rng.integers(2, 5)), rng)
            for _ in range(20):
                strings.add(sp.candidate_to_string(obj.space, sp.sample(obj.space, rng)))
        strings = sorted(strings)
        vecs = hash_embed_batch(strings)
        assert len({v.tobytes() for v in vecs}) == len(strings)


class TestCache:
    def test_memoization(self):
        calls = []
        cache = EmbeddingCache()

        def compute(text):
            calls.append(text)
            return hash_embed(text)

        a = cache.get_or_compute("hashed", "abc", compute)
        b = cache.get_or_compute("hashed", "abc", compute)
        assert calls == ["abc"] and a is b and cache.computes == 1

    def test_backend_in_key(self):
        cache = EmbeddingCache()
        cache.put("one", "abc", np.ones(8))
        assert cache.get("two", "abc") is None
        cache.put("two", "abc", np.zeros(8))
        assert cache.get("one", "abc")[0] == 1.0 and cache.get("two", "abc")[0] == 0.0

    def test_cache_never_changes_results(self):
        texts = ['{"x0":0.1}', '{"x0":0.2}', '{"x0":0.1}', ""]
        with_cache = HashedEmbedder(cache=EmbeddingCache()).embed_batch(texts)
        without = HashedEmbedder().embed_batch(texts)
        assert np.array_equal(with_cache, without)

    def test_persistence(self, tmp_path):
        path = tmp_path / "emb.etrc"
        first = HashedEmbedder(cache=EmbeddingCache(path))
        texts = ["alpha", "beta gamma", "delta"]
        a = first.embed_batch(texts)
        assert path.read_bytes()[:4] == MAGIC
        cold = EmbeddingCache(path)
        second = HashedEmbedder(cache=cold)
        b = second.embed_batch(texts)
        assert np.array_equal(a, b) and cold.computes == 0

    def test_corrupt_record_skipped(self, tmp_path, caplog):
        path = tmp_path / "emb.etrc"
        emb = HashedEmbedder(cache=EmbeddingCache(path))
        emb.embed_batch(["alpha", "beta"])
        blob = bytearray(path.read_bytes())
        blob[6 + 12 + 3] ^= 0xFF  # a byte inside the first record's values
        path.write_bytes(bytes(blob))
        with caplog.at_level(logging.WARNING):
            cache = EmbeddingCache(path)
        assert "checksum" in caplog.text
        again = HashedEmbedder(cache=cache)
        vecs = again.embed_batch(["alpha", "beta"])
        assert cache.computes == 1
        assert np.array_equal(vecs, hash_embed_batch(["alpha", "beta"]))

    def test_concurrent_single_value(self):
        cache = EmbeddingCache()
        emb = HashedEmbedder(cache=cache)
        results = []

        def worker():
            results.append(emb.embed("shared text"))

        threads = [threading.Thread(target=worker) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert all(np.array_equal(r, results[0]) for r in results)
        assert len(cache) == 1


class TestRemote:
    def test_batch(self, stub):
        _, url = stub
        out = remote_embed(["ab", "cd"], url, "m")
        assert out.shape == (2, 256)

    def test_stub_equals_hashed(self, stub):
        _, url = stub
        texts = ['{"p0":0.3}', "{[0]:1, [1]:0}", "x0:DOUBLE,[-5,5]"]
        assert np.array_equal(remote_embed(texts, url, "m"), hash_embed_batch(texts))

    def test_remote_embedder_matches(self, stub):
        _, url = stub
        emb = make_embedder(EmbedderConfig(backend="REMOTE", endpoint=url))
        texts = [f"t{i}" for i in range(70)]
        assert np.array_equal(emb.embed_batch(texts), hash_embed_batch(texts))
        assert emb.dim == 256

    def test_retries_then_fail(self):
        server = serve_in_thread(fail_first=3, fail_status=500)
        try:
            url = f"http://127.0.0.1:{server.server_port}"
            with pytest.raises(RemoteEmbeddingError, match="500") as info:
                remote_embed(["a"], url, "m", backoff=0.01)
            assert info.value.status == 500 and server.stats["requests"] == 3
        finally:
            server.shutdown()
            server.server_close()

    def test_recovers_after_failure(self):
        server = serve_in_thread(fail_first=2)
        try:
            out = remote_embed(["a"], f"http://127.0.0.1:{server.server_port}", "m", backoff=0.01)
            assert np.array_equal(out[0], hash_embed("a"))
        finally:
            server.shutdown()
            server.server_close()

    def test_dimension_disagreement(self):
        class Resp:
            status_code = 200
            text = ""

            def json(self):
                return {"dim": 3, "embeddings": [[1, 2, 3], [1, 2]]}

        class Session:
            def post(self, *a, **k):
                return Resp()

        with pytest.raises(EmbeddingProtocolError):
            remote_embed(["a", "b"], "http://unused", "m", session=Session())

    def test_timeout(self):
        import requests

        class Session:
            def post(self, *a, **k):
                raise requests.Timeout("slow")

        with pytest.raises(RemoteEmbeddingError, match="timeout"):
            remote_embed(["a"], "http://unused", "m", session=Session(), backoff=0.0)

    def test_preconditions(self):
        with pytest.raises(ValueError):
            remote_embed([], "http://unused", "m")
        with pytest.raises(ValueError):
            remote_embed([""], "http://unused", "m")

    def test_config_validation(self):
        with pytest.raises(ValueError):
            EmbedderConfig(d=4)
        with pytest.raises(ValueError):
            EmbedderConfig(timeout=0)
        with pytest.raises(ValueError):
            EmbedderConfig(backend="REMOTE")
        assert isinstance(RemoteEmbedder("http://x"), RemoteEmbedder)
