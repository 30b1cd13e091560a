"""Tridiagonal quadratic objective and its stochastic-gradient oracles.

f(x) = 1/2 x^T A x - b^T x with A = tridiag(-1, 2, -1) / 4 and
b = (-1/4, 0, ..., 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.linalg import solve_banded

DIAG = 0.5
OFF = -0.25


class NoiseKind(str, Enum):
    NONE = "none"
    MULTIPLICATIVE = "multiplicative"
    ADDITIVE = "additive"


@dataclass(frozen=True)
class NoiseModel:
    kind: NoiseKind = NoiseKind.NONE
    p: float = 1.0
    sigma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        if not 0 < self.p <= 1:
            raise ValueError(f"p must lie in (0, 1], got {self.p}")
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")

    @classmethod
    def none(cls) -> "NoiseModel":
        return cls()

    @classmethod
    def multiplicative(cls, p: float) -> "NoiseModel":
        return cls(NoiseKind.MULTIPLICATIVE, p=p)

    @classmethod
    def additive(cls, sigma: float) -> "NoiseModel":
        return cls(NoiseKind.ADDITIVE, sigma=sigma)


class QuadraticProblem:
    def __init__(self, d: int):
        if d < 1:
            raise ValueError(f"d must be positive, got {d}")
        self.d = d
        self.b = np.zeros(d)
        self.b[0] = -0.25
        self.L = 0.5 * (1.0 + math.cos(math.pi / (d + 1)))
        self._x_star = None

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            raise ValueError(f"expected a vector of length {self.d}, got shape {x.shape}")
        return x

    def matvec(self, x) -> np.ndarray:
        x = self._check(x)
        out = DIAG * x
        out[1:] += OFF * x[:-1]
        out[:-1] += OFF * x[1:]
        return out

    def value(self, x) -> float:
        x = self._check(x)
        return float(0.5 * x @ self.matvec(x) - self.b @ x)

    def minimizer(self) -> np.ndarray:
        if self._x_star is None:
            bands = np.zeros((3, self.d))
            bands[0, 1:] = OFF
            bands[1, :] = DIAG
            bands[2, :-1] = OFF
            self._x_star = solve_banded((1, 1), bands, self.b)
        return self._x_star.copy()

    def f_star(self) -> float:
        return self.value(self.minimizer())

    def delta(self, x0) -> float:
        return self.value(x0) - self.f_star()

    def start_point(self, name: str) -> np.ndarray:
        if name == "ones":
            return np.ones(self.d)
        if name == "sqrt_d_e1":
            x = np.zeros(self.d)
            x[0] = math.sqrt(self.d)
            return x
        raise ValueError(f"unknown start point {name!r}")

    def variance_bound(self, noise: NoiseModel) -> float:
        """sigma^2 for engine configuration; only defined for additive noise."""
        if noise.kind is NoiseKind.ADDITIVE:
            return self.d * noise.sigma**2
        if noise.kind is NoiseKind.NONE:
            return 0.0
        raise ValueError("multiplicative noise has no uniform variance bound")


def full_grad(problem: QuadraticProblem, x) -> np.ndarray:
    return problem.matvec(x) - problem.b


def prog(x) -> int:
    nz = np.flatnonzero(np.asarray(x))
    return int(nz[-1]) + 1 if nz.size else 0


def metrics(problem: QuadraticProblem, x) -> tuple[float, float]:
    g = full_grad(problem, x)
    return problem.value(x), float(g @ g)


def stoch_grad(problem: QuadraticProblem, noise: NoiseModel, x, rng: np.random.Generator) -> np.ndarray:
    g = full_grad(problem, x)
    return g + noise_sum(problem, noise, x, g, 1, rng)


def noise_sum(problem, noise: NoiseModel, x, grad: np.ndarray, count: int, rng) -> np.ndarray:
    """Sum over ``count`` oracle calls of (stochastic gradient - grad).

    Sampled directly from the distribution of the sum: a Binomial count of
    Bernoulli successes for multiplicative noise, a sqrt(count)-scaled normal
    for additive noise.
    """
    if count <= 0 or noise.kind is NoiseKind.NONE:
        return np.zeros_like(grad)
    if noise.kind is NoiseKind.ADDITIVE:
        return math.sqrt(count) * noise.sigma * rng.standard_normal(grad.size)
    hits = rng.binomial(count, noise.p) if count > 1 else int(rng.random() < noise.p)
    out = np.zeros_like(grad)
    tail = prog(x)
    out[tail:] = grad[tail:] * (hits / noise.p - count)
    return out


def noise_rows(problem, noise: NoiseModel, x, grad: np.ndarray, counts, rng) -> np.ndarray:
    """Row i holds ``noise_sum`` for counts[i] calls; one vectorized draw per call site."""
    counts = np.asarray(counts, dtype=np.int64)
    out = np.zeros((counts.size, grad.size))
    if noise.kind is NoiseKind.NONE:
        return out
    if noise.kind is NoiseKind.ADDITIVE:
        z = rng.standard_normal((counts.size, grad.size))
        return np.sqrt(np.maximum(counts, 0))[:, None] * noise.sigma * z
    hits = rng.binomial(np.maximum(counts, 0), noise.p)
    tail = prog(x)
    out[:, tail:] = (hits / noise.p - counts)[:, None] * grad[tail:]
    return out
