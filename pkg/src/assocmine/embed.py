"""Embedding providers and cosine similarity.

Semantic filtering and deduplication only ever talk to the
:class:`EmbeddingProvider` contract, so models can be swapped without
touching either stage. The built-in provider is a hashed term-frequency
embedding: no model files, bit-for-bit reproducible everywhere. An HTTP
provider satisfies the same contract for callers that do run a model
server.
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod

import httpx
import numpy as np

from .corpus import PosHint, _raw_tokens

logger = logging.getLogger(__name__)

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64 = 0xFFFFFFFFFFFFFFFF

DEFAULT_DIM = 256


def fnv1a_64(data: bytes) -> int:
    """FNV-1a 64-bit hash (portable, no dependencies)."""
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _U64
    return h


class EmbeddingProvider(ABC):
    """Deterministic text -> fixed-dim vector contract."""

    id: str
    dim: int

    @abstractmethod
    def embed_text(self, text: str) -> np.ndarray:
        """Embed one text into a float64 vector of length ``dim``."""

    def embed_texts(self, texts: list[str]) -> list[np.ndarray]:
        return [self.embed_text(t) for t in texts]


class HashedTfProvider(EmbeddingProvider):
    """Hashed term counts, L2-normalized.

    Casefolds and tokenizes with the corpus rules, drops stopword, numeric
    and punctuation tokens, hashes each remaining norm with FNV-1a 64 and
    buckets it modulo ``dim``. A text with no content tokens embeds to the
    zero vector.
    """

    id = "hashed-tf"

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim

    def embed_text(self, text: str) -> np.ndarray:
        counts = np.zeros(self.dim, dtype=np.float64)
        for _, norm, _, _, _, hint in _raw_tokens(text):
            if hint is not PosHint.CONTENT:
                continue
            counts[fnv1a_64(norm.encode("utf-8")) % self.dim] += 1.0
        norm_val = float(np.linalg.norm(counts))
        if norm_val == 0.0:
            return counts
        return counts / norm_val


class HttpEmbeddingProvider(EmbeddingProvider):
    """Client for an external embedding server.

    Wire contract: POST ``{"texts": [...]}`` to the configured URL, read
    ``{"vectors": [[...], ...]}`` back. Optional; nothing in the shipped
    pipeline requires it.
    """

    id = "http"

    def __init__(self, url: str, dim: int, timeout: float = 30.0,
                 client: httpx.Client | None = None):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.url = url
        self.dim = dim
        self._client = client or httpx.Client(timeout=timeout)

    def embed_text(self, text: str) -> np.ndarray:
        return self.embed_texts([text])[0]

    def embed_texts(self, texts: list[str]) -> list[np.ndarray]:
        response = self._client.post(self.url, json={"texts": texts})
        response.raise_for_status()
        vectors = response.json().get("vectors")
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise ValueError(f"embedding server returned {len(vectors or [])} vectors for {len(texts)} texts")
        out = []
        for vec in vectors:
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (self.dim,):
                raise ValueError(f"embedding server returned dim {arr.shape}, expected ({self.dim},)")
            if not np.all(np.isfinite(arr)):
                raise ValueError("embedding server returned non-finite components")
            out.append(arr)
        return out


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity; 0.0 when either vector has zero norm."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def make_provider(name: str, dim: int = DEFAULT_DIM, url: str | None = None) -> EmbeddingProvider:
    if name == "hashed-tf":
        return HashedTfProvider(dim=dim)
    if name == "http":
        if not url:
            raise ValueError("embedding.url is required for the http provider")
        return HttpEmbeddingProvider(url=url, dim=dim)
    raise ValueError(f"unknown embedding provider {name!r}")
