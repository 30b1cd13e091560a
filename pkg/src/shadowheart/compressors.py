"""Sparsifying compressors: unbiased Rand-K and biased Top-K.

Indices in a ``CompressedVector`` are 1-based, as in the trace dumps.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class Kind(str, Enum):
    IDENTITY = "identity"
    RAND_K = "rand_k"
    TOP_K = "top_k"


@dataclass(frozen=True)
class CompressorSpec:
    kind: Kind
    k: int
    d: int

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.d < 1:
            raise ValueError(f"d must be positive, got {self.d}")
        if self.kind is Kind.IDENTITY:
            object.__setattr__(self, "k", self.d)
        if not 1 <= self.k <= self.d:
            raise ValueError(f"k must lie in [1, d={self.d}], got {self.k}")

    @classmethod
    def identity(cls, d: int) -> "CompressorSpec":
        return cls(Kind.IDENTITY, d, d)

    @classmethod
    def rand_k(cls, k: int, d: int) -> "CompressorSpec":
        return cls(Kind.RAND_K, k, d)

    @classmethod
    def top_k(cls, k: int, d: int) -> "CompressorSpec":
        return cls(Kind.TOP_K, k, d)

    @property
    def lossless(self) -> bool:
        return self.k == self.d


@dataclass(frozen=True)
class CompressedVector:
    indices: tuple[int, ...]
    values: tuple[float, ...]
    d: int

    def __post_init__(self):
        if len(self.indices) != len(self.values):
            raise ValueError("indices and values differ in length")
        prev = 0
        for i in self.indices:
            if not prev < i <= self.d:
                raise ValueError(f"indices must be strictly increasing in [1, {self.d}]")
            prev = i

    def dense(self) -> np.ndarray:
        out = np.zeros(self.d)
        if self.indices:
            out[np.asarray(self.indices) - 1] = self.values
        return out

    def to_string(self) -> str:
        return ";".join(f"{i}:{v!r}" for i, v in zip(self.indices, self.values))

    @classmethod
    def from_string(cls, text: str, d: int) -> "CompressedVector":
        if not text:
            return cls((), (), d)
        pairs = [item.split(":") for item in text.split(";")]
        return cls(tuple(int(i) for i, _ in pairs), tuple(float(v) for _, v in pairs), d)


def omega_of(spec: CompressorSpec) -> float:
    if spec.kind is Kind.TOP_K:
        raise ValueError("Top-K is biased; it has a contraction alpha, not omega")
    return spec.d / spec.k - 1.0


def alpha_of(spec: CompressorSpec) -> float:
    if spec.kind is Kind.RAND_K:
        raise ValueError("Rand-K is unbiased; it has omega, not a contraction alpha")
    return spec.k / spec.d


def transmit_cost(spec: CompressorSpec) -> int:
    """Coordinates carried by one message."""
    return spec.k


def _check_dim(spec: CompressorSpec, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.d,):
        raise ValueError(f"expected a vector of length {spec.d}, got shape {x.shape}")
    return x


def sample_subset(d: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform k-subset of range(d) by partial Fisher-Yates, sorted.

    Only displaced positions are stored, so state is O(k).
    """
    swapped: dict[int, int] = {}
    chosen = np.empty(k, dtype=np.int64)
    for t in range(k):
        j = int(rng.integers(t, d))
        chosen[t] = swapped.get(j, j)
        swapped[j] = swapped.get(t, t)
    chosen.sort()
    return chosen


def compress_unbiased(spec: CompressorSpec, x, rng: np.random.Generator) -> CompressedVector:
    if spec.kind is Kind.TOP_K:
        raise ValueError("compress_unbiased needs an identity or Rand-K spec")
    x = _check_dim(spec, x)
    if spec.lossless:
        return CompressedVector(tuple(range(1, spec.d + 1)), tuple(x.tolist()), spec.d)
    idx = sample_subset(spec.d, spec.k, rng)
    scale = spec.d / spec.k
    return CompressedVector(tuple((idx + 1).tolist()), tuple((scale * x[idx]).tolist()), spec.d)


def compress_biased(spec: CompressorSpec, x) -> CompressedVector:
    if spec.kind is Kind.RAND_K:
        raise ValueError("compress_biased needs an identity or Top-K spec")
    x = _check_dim(spec, x)
    # stable sort on -|x| puts the lowest index first among ties
    idx = np.sort(np.argsort(-np.abs(x), kind="stable")[: spec.k])
    return CompressedVector(tuple((idx + 1).tolist()), tuple(x[idx].tolist()), spec.d)


def top_k_dense(spec: CompressorSpec, x) -> np.ndarray:
    return compress_biased(spec, x).dense()


def randk_hit_counts(spec: CompressorSpec, messages: int, rng: np.random.Generator) -> np.ndarray:
    """How often each coordinate is kept across ``messages`` independent Rand-K draws.

    The sum of the densified compressions of one vector x is
    ``(d/k) * counts * x``, so engines only need these counts.
    """
    d, k = spec.d, spec.k
    if messages <= 0:
        return np.zeros(d, dtype=np.int64)
    if spec.lossless:
        return np.full(d, messages, dtype=np.int64)
    if k == 1:
        return np.bincount(rng.integers(0, d, size=messages), minlength=d)
    counts = np.zeros(d, dtype=np.int64)
    chunk = max(1, 2_000_000 // d)
    rows_left = messages
    while rows_left:
        rows = min(chunk, rows_left)
        rows_left -= rows
        perm = np.tile(np.arange(d), (rows, 1))
        r = np.arange(rows)
        for t in range(k):
            j = rng.integers(t, d, size=rows)
            a, b = perm[r, t].copy(), perm[r, j]
            perm[r, t] = b
            perm[r, j] = a
        counts += np.bincount(perm[:, :k].ravel(), minlength=d)
    return counts
