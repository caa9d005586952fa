"""Signed feature-hashing bag-of-words embedder.

Tokens are lowercase runs of letters and digits. Each token is hashed with
64-bit FNV-1a (offset basis XOR ``hash_seed``); the low bits modulo ``dims``
pick a bucket and bit 63 picks the sign (set -> -1). Bucket sums are
L2-normalized, so every nonzero embedding has unit norm and cosine reduces
to a dot product.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DimensionMismatch

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1
_TOKEN = re.compile(r"[^\W_]+")


@dataclass(frozen=True)
class EmbedderConfig:
    dims: int = 384
    hash_seed: int = 0

    def __post_init__(self):
        if isinstance(self.dims, bool) or not isinstance(self.dims, int) or self.dims < 2:
            raise ValueError(f"dims must be an integer >= 2, got {self.dims!r}")
        if not (0 <= self.hash_seed <= _MASK64):
            raise ValueError("hash_seed must fit in 64 unsigned bits")


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


@lru_cache(maxsize=65536)
def fnv1a64(token: str, seed: int = 0) -> int:
    h = FNV_OFFSET ^ seed
    for byte in token.encode("utf-8"):
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


@lru_cache(maxsize=65536)
def _bucket(token: str, dims: int, seed: int) -> tuple[int, int]:
    h = fnv1a64(token, seed)
    return h % dims, (-1 if (h >> 63) & 1 else 1)


@lru_cache(maxsize=131072)
def _embed_cached(text: str, dims: int, seed: int) -> np.ndarray:
    vec = np.zeros(dims, dtype=np.float64)
    for tok in tokenize(text):
        idx, sign = _bucket(tok, dims, seed)
        vec[idx] += sign
    norm = math.sqrt(float(np.dot(vec, vec)))
    if norm > 0.0:
        vec /= norm
    vec.setflags(write=False)
    return vec


def embed(text: str, cfg: EmbedderConfig = EmbedderConfig()) -> np.ndarray:
    """Embed ``text``; returns a read-only float64 vector of length ``cfg.dims``."""
    return _embed_cached(text, cfg.dims, cfg.hash_seed)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"cannot compare vectors of shape {a.shape} and {b.shape}")
    na = math.sqrt(float(np.dot(a, a)))
    nb = math.sqrt(float(np.dot(b, b)))
    if na == 0.0 or nb == 0.0:
        return 0.0
    value = float(np.dot(a, b)) / (na * nb)
    return min(1.0, max(-1.0, value))
