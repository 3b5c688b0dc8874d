"""Embedding providers and batch normalisation."""

from __future__ import annotations

import hashlib
import logging
import os
import re
import time
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import httpx
import numpy as np

logger = logging.getLogger(__name__)


class EmbeddingError(Exception):
    """Provider failed after its retry budget."""


class EmbeddingProtocolError(EmbeddingError):
    """Provider returned data violating the embedding contract."""


class EmbeddingProvider(ABC):
    name: str
    dimension: int

    @abstractmethod
    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        """Return one raw (unnormalised) vector per text, in input order."""


class HttpEmbeddingProvider(EmbeddingProvider):
    """OpenAI-style ``/embeddings`` client: ``{"model", "input"}`` -> ``{"data": [...]}``."""

    def __init__(
        self,
        base_url: str,
        model: str,
        dimension: int,
        timeout: float = 30.0,
        retries: int = 2,
        backoff: float = 0.5,
        api_key: str | None = None,
        client: httpx.Client | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.dimension = dimension
        self.name = f"http:{model}"
        self.retries = retries
        self.backoff = backoff
        self.api_key = api_key if api_key is not None else os.environ.get("EMBED_API_KEY")
        self._client = client or httpx.Client(timeout=timeout)

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        payload = {"model": self.model, "input": list(texts)}
        last_exc: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff)
            try:
                resp = self._client.post(f"{self.base_url}/embeddings", json=payload, headers=headers)
                resp.raise_for_status()
                body = resp.json()
            except (httpx.HTTPError, ValueError) as exc:
                last_exc = exc
                logger.warning("embedding attempt %d failed: %s", attempt + 1, exc)
                continue
            try:
                data = body["data"]
                vectors = [item["embedding"] for item in data]
            except (KeyError, TypeError) as exc:
                raise EmbeddingProtocolError(f"malformed embedding response: {exc}") from exc
            if len(vectors) != len(texts):
                raise EmbeddingProtocolError(f"expected {len(texts)} embeddings, got {len(vectors)}")
            return vectors
        raise EmbeddingError(f"embedding request failed after {self.retries + 1} attempts: {last_exc}")


_TOKEN_RE = re.compile(r"<[^<>\s]+>|\w+")


class HashingEmbeddingProvider(EmbeddingProvider):
    """Deterministic offline embedder: signed feature hashing of unigrams and bigrams.

    Texts with the same bag of tokens map to the same vector, which is enough
    for templated-question retrieval on small fixture sets.
    """

    def __init__(self, dimension: int = 256, bigrams: bool = True):
        self.dimension = dimension
        self.bigrams = bigrams
        self.name = f"hashing:{dimension}{':bigram' if bigrams else ''}"

    @staticmethod
    def tokens(text: str) -> list[str]:
        return [t.lower() for t in _TOKEN_RE.findall(text)]

    def _bucket(self, feature: str) -> tuple[int, float]:
        digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=8).digest()
        value = int.from_bytes(digest, "little")
        return value % self.dimension, (1.0 if (value >> 63) & 1 else -1.0)

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        out = []
        for text in texts:
            vec = np.zeros(self.dimension)
            toks = self.tokens(text)
            feats = toks + ([f"{a} {b}" for a, b in zip(toks, toks[1:])] if self.bigrams else [])
            for feat in feats or ["<empty>"]:
                idx, sign = self._bucket(feat)
                vec[idx] += sign
            out.append(vec.tolist())
        return out


def normalize_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise EmbeddingProtocolError("provider returned a zero vector")
    return matrix / norms


def embed_batch(
    provider: EmbeddingProvider,
    texts: Sequence[str],
    batch_size: int = 64,
    parallelism: int = 1,
) -> np.ndarray:
    """Embed ``texts`` and L2-normalise; returns a float64 ``(n, dimension)`` array."""
    if not texts:
        raise ValueError("texts must be non-empty")
    batches = [list(texts[i:i + batch_size]) for i in range(0, len(texts), batch_size)]
    if parallelism > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(provider.embed, batches))
    else:
        results = [provider.embed(b) for b in batches]
    rows = []
    for batch, vectors in zip(batches, results):
        if len(vectors) != len(batch):
            raise EmbeddingProtocolError(f"expected {len(batch)} embeddings, got {len(vectors)}")
        for vec in vectors:
            if len(vec) != provider.dimension:
                raise EmbeddingProtocolError(
                    f"dimension mismatch: expected {provider.dimension}, got {len(vec)}"
                )
            rows.append(vec)
    return normalize_rows(np.asarray(rows, dtype=np.float64))
