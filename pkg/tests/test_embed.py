"""Hashed-TF embeddings and cosine similarity."""

from __future__ import annotations

import json

import httpx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from assocmine.embed import (
    DEFAULT_DIM,
    HashedTfProvider,
    HttpEmbeddingProvider,
    cosine,
    fnv1a_64,
    make_provider,
)


class TestFnv1a:
    """Reference values for the 64-bit FNV-1a hash."""

    @pytest.mark.parametrize("data,expected", [
        (b"", 0xCBF29CE484222325),
        (b"a", 0xAF63DC4C8601EC8C),
        (b"foobar", 0x85944171F73967E8),
    ])
    def test_reference_vectors(self, data, expected):
        assert fnv1a_64(data) == expected

    def test_distinct_tokens_usually_differ(self):
        hashes = {fnv1a_64(w.encode()) for w in
                  ("fund", "bond", "etf", "derivative", "brand")}
        assert len(hashes) == 5


class TestHashedTfProvider:
    def test_dim_and_norm(self, provider):
        vec = provider.embed_text("markets rallied strongly today")
        assert vec.shape == (DEFAULT_DIM,)
        assert np.isclose(np.linalg.norm(vec), 1.0)

    def test_deterministic(self, provider):
        a = provider.embed_text("the quick brown fox")
        b = provider.embed_text("the quick brown fox")
        assert np.array_equal(a, b)

    def test_stopwords_and_case_ignored(self, provider):
        a = provider.embed_text("The Fund Launched")
        b = provider.embed_text("fund launched")
        assert np.array_equal(a, b)

    def test_empty_text_is_zero_vector(self, provider):
        assert not provider.embed_text("").any()
        assert not provider.embed_text("the of and").any()

    def test_token_order_irrelevant(self, provider):
        a = provider.embed_text("bond fund launched")
        b = provider.embed_text("launched bond fund")
        assert np.array_equal(a, b)

    def test_embed_texts_matches_embed_text(self, provider):
        texts = ["alpha beta", "gamma delta", ""]
        batch = provider.embed_texts(texts)
        for text, row in zip(texts, batch):
            assert np.array_equal(row, provider.embed_text(text))

    def test_custom_dim(self):
        vec = HashedTfProvider(dim=32).embed_text("growth fund")
        assert vec.shape == (32,)

    @given(st.text(max_size=60))
    @settings(max_examples=100, deadline=None)
    def test_unit_norm_or_zero(self, text):
        vec = HashedTfProvider(dim=64).embed_text(text)
        norm = np.linalg.norm(vec)
        assert np.isclose(norm, 1.0) or norm == 0.0


class TestCosine:
    def test_identical_is_one(self):
        v = np.array([0.5, 0.5, 0.0])
        assert cosine(v, v) == pytest.approx(1.0)

    def test_orthogonal_is_zero(self):
        assert cosine(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0

    def test_known_value(self):
        got = cosine(np.array([1.0, 2.0]), np.array([2.0, 1.0]))
        assert got == pytest.approx(0.8)

    def test_zero_vector_yields_zero(self):
        assert cosine(np.zeros(3), np.array([1.0, 2.0, 3.0])) == 0.0

    def test_dim_mismatch_rejected(self):
        with pytest.raises(ValueError):
            cosine(np.ones(3), np.ones(4))


class TestMakeProvider:
    def test_hashed_tf(self):
        provider = make_provider("hashed-tf", dim=128)
        assert provider.dim == 128

    def test_http_requires_url(self):
        with pytest.raises(ValueError, match="url"):
            make_provider("http")

    def test_unknown_name(self):
        with pytest.raises(ValueError, match="unknown embedding provider"):
            make_provider("word2vec")


class TestHttpProvider:
    """The HTTP provider is exercised against a mock transport."""

    def _provider(self, handler, dim=4):
        transport = httpx.MockTransport(handler)
        client = httpx.Client(transport=transport)
        return HttpEmbeddingProvider(url="http://embed.local/v1",
                                     dim=dim, client=client)

    def test_posts_texts_and_reads_vectors(self):
        seen = {}

        def handler(request):
            seen["payload"] = json.loads(request.content)
            return httpx.Response(200, json={
                "vectors": [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]]})

        provider = self._provider(handler)
        batch = provider.embed_texts(["a b", "c d"])
        assert seen["payload"] == {"texts": ["a b", "c d"]}
        assert np.array_equal(batch[0], np.array([1.0, 0.0, 0.0, 0.0]))

    def test_wrong_dim_rejected(self):
        def handler(request):
            return httpx.Response(200, json={"vectors": [[1.0, 2.0]]})

        provider = self._provider(handler, dim=4)
        with pytest.raises(ValueError, match="dim"):
            provider.embed_texts(["a"])
