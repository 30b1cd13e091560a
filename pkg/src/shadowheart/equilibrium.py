"""Equilibrium time t* and the per-iteration plan derived from it.

Workers are sorted by max(h, tau). For each prefix j the fixed point

    s = ( sum_{i<=j} 1 / (2 tau_i w + 4 tau_i h_i r w / s + 2 h_i r) )^-1

is found by bisection (w is the compressor variance omega, r the noise ratio
sigma^2/eps), and t* = min_j max(max(h, tau)_(j), s*(j)).
Arithmetic follows the projective convention 1/0 = inf, 1/inf = 0, and a
product with a zero factor is zero even when the other factor is infinite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

REL_TOL = 1e-12
MAX_BISECT = 200
MAX_DOUBLINGS = 2100


@dataclass(frozen=True)
class WorkerProfile:
    h: float
    tau: float

    def __post_init__(self):
        if not (self.h >= 0 and self.tau >= 0):
            raise ValueError(f"worker times must be nonnegative, got h={self.h}, tau={self.tau}")


@dataclass(frozen=True)
class EquilibriumQuery:
    omega: float
    noise_ratio: float
    workers: tuple[WorkerProfile, ...]

    def __post_init__(self):
        object.__setattr__(self, "workers", tuple(self.workers))
        if not self.workers:
            raise ValueError("at least one worker is required")
        if not (self.omega >= 0 and self.noise_ratio >= 0):
            raise ValueError("omega and noise_ratio must be nonnegative")

    @classmethod
    def from_arrays(cls, omega, noise_ratio, h, tau) -> "EquilibriumQuery":
        h = np.broadcast_to(np.asarray(h, dtype=float), np.shape(tau) or np.shape(h))
        tau = np.broadcast_to(np.asarray(tau, dtype=float), h.shape)
        workers = tuple(WorkerProfile(float(a), float(b)) for a, b in zip(h, tau))
        return cls(float(omega), float(noise_ratio), workers)

    @property
    def h(self) -> np.ndarray:
        return np.array([w.h for w in self.workers], dtype=float)

    @property
    def tau(self) -> np.ndarray:
        return np.array([w.tau for w in self.workers], dtype=float)


@dataclass(frozen=True)
class EquilibriumResult:
    t_star: float
    j_star: int
    s_values: tuple[float, ...]
    permutation: tuple[int, ...]


@dataclass(frozen=True)
class IterationPlan:
    t_star: float
    b: np.ndarray
    m: np.ndarray
    w: np.ndarray
    active: np.ndarray = field(repr=False)

    @property
    def active_ids(self) -> tuple[int, ...]:
        return tuple(np.flatnonzero(self.active).tolist())

    @property
    def normalizer(self) -> float:
        a = self.active
        return float(np.sum(self.w[a] * self.m[a] * self.b[a]))


def _zero_safe_product(a, b):
    """Elementwise a*b with 0*inf taken as 0."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(invalid="ignore"):
        out = a * b
    return np.where((a == 0) | (b == 0), 0.0, out)


def sort_workers(workers) -> tuple[int, ...]:
    """Stable permutation ordering workers by max(h, tau)."""
    keys = [max(w.h, w.tau) for w in workers]
    return tuple(np.argsort(keys, kind="stable").tolist())


class _Prefixes:
    """Sorted worker coefficients shared by all prefix solves."""

    def __init__(self, omega: float, noise_ratio: float, h, tau):
        h = np.asarray(h, dtype=float)
        tau = np.asarray(tau, dtype=float)
        self.perm = np.argsort(np.maximum(h, tau), kind="stable")
        h, tau = h[self.perm], tau[self.perm]
        self.top = np.maximum(h, tau)
        self.alpha = _zero_safe_product(tau, omega)
        self.beta = _zero_safe_product(h, noise_ratio)
        # a worker with alpha = beta = 0 forces s* = 0 for every prefix containing it
        self.first_free = self._first(np.flatnonzero((self.alpha == 0) & (self.beta == 0)))
        finite = np.isfinite(self.alpha) & np.isfinite(self.beta)
        self.first_finite = self._first(np.flatnonzero(finite))
        self.alpha_f = np.where(finite, self.alpha, 0.0)
        self.beta_f = np.where(finite, self.beta, 0.0)
        self.finite = finite
        self.ab4 = 4.0 * self.alpha_f * self.beta_f
        self.lin = 2.0 * (self.alpha_f + self.beta_f)
        # bracket start for prefix j: largest finite time among its own workers
        finite_max = np.maximum(np.where(np.isfinite(h), h, 0.0), np.where(np.isfinite(tau), tau, 0.0))
        self.start = np.maximum(1.0, np.maximum.accumulate(finite_max))

    @staticmethod
    def _first(idx) -> int:
        return int(idx[0]) if idx.size else -1

    def phi(self, s: float, j: int) -> float:
        """phi_j(s) for prefix length j; contributions of infinite summands are 0."""
        fin = self.finite[:j]
        lin = self.lin[:j][fin]
        ab4 = self.ab4[:j][fin]
        with np.errstate(over="ignore", divide="ignore"):
            if s == 0.0:
                inv = np.where(ab4 > 0, 0.0, 1.0 / np.where(ab4 > 0, 1.0, lin))
            elif math.isinf(s):
                inv = 1.0 / lin
            else:
                inv = 1.0 / (lin + ab4 / s)
        total = float(np.sum(inv))
        return math.inf if total == 0.0 else 1.0 / total

    def solve(self, j: int) -> float:
        if 0 <= self.first_free < j:
            return 0.0
        if not 0 <= self.first_finite < j:
            return math.inf
        hi = float(self.start[j - 1])
        for _ in range(MAX_DOUBLINGS):
            if self.phi(hi, j) <= hi:
                break
            hi *= 2.0
        else:
            return math.inf
        # walk down too so tiny fixed points get a relative bracket
        for _ in range(MAX_DOUBLINGS):
            half = 0.5 * hi
            if half == 0.0 or self.phi(half, j) > half:
                break
            hi = half
        lo = 0.5 * hi
        for _ in range(MAX_BISECT):
            if hi - lo <= REL_TOL * hi:
                break
            mid = 0.5 * (lo + hi)
            if self.phi(mid, j) <= mid:
                hi = mid
            else:
                lo = mid
        # hi always satisfies phi(hi) <= hi, which keeps the variance budget <= 1
        return hi


def solve_s(query: EquilibriumQuery, j: int) -> float:
    n = len(query.workers)
    if not 1 <= j <= n:
        raise ValueError(f"prefix length must lie in [1, {n}], got {j}")
    return _Prefixes(query.omega, query.noise_ratio, query.h, query.tau).solve(j)


def equilibrium_time(query: EquilibriumQuery) -> EquilibriumResult:
    pre = _Prefixes(query.omega, query.noise_ratio, query.h, query.tau)
    n = len(query.workers)
    s_values = tuple(pre.solve(j) for j in range(1, n + 1))
    values = [max(float(pre.top[j]), s_values[j]) for j in range(n)]
    best = min(values)
    j_star = values.index(best) + 1
    return EquilibriumResult(best, j_star, s_values, tuple(pre.perm.tolist()))


def t_star(omega: float, noise_ratio: float, h, tau) -> float:
    """t* alone, using O(log n) prefix solves.

    max(h, tau) grows along the sorted prefixes while s*(j) shrinks, so the
    minimum sits where the two sequences cross and a binary search finds it.
    """
    pre = _Prefixes(omega, noise_ratio, h, tau)
    n = pre.top.size
    if n == 0:
        raise ValueError("at least one worker is required")
    cache: dict[int, float] = {}

    def s(j: int) -> float:
        if j not in cache:
            cache[j] = pre.solve(j)
        return cache[j]

    lo, hi = 1, n + 1  # smallest j with top_j >= s_j, n + 1 when none
    while lo < hi:
        mid = (lo + hi) // 2
        if pre.top[mid - 1] >= s(mid):
            hi = mid
        else:
            lo = mid + 1
    j0 = lo
    best = math.inf
    if j0 <= n:
        best = float(pre.top[j0 - 1])
    if j0 >= 2:
        best = min(best, s(j0 - 1))
    return best


def plan_iteration(query: EquilibriumQuery, t_star_value: float) -> IterationPlan:
    return plan_from_arrays(query.omega, query.noise_ratio, query.h, query.tau, t_star_value)


def _counts(budget: float, times: np.ndarray, label: str) -> np.ndarray:
    if budget == 0:
        return np.zeros(times.size, dtype=np.int64)
    if math.isinf(budget):
        raise ValueError("cannot plan an iteration with an infinite time budget")
    if np.any(times == 0):
        raise ValueError(f"a zero {label} with a positive budget gives an unbounded count")
    with np.errstate(divide="ignore"):
        return np.floor(budget / times).astype(np.int64)


def plan_from_arrays(omega, noise_ratio, h, tau, t_star_value) -> IterationPlan:
    if not t_star_value >= 0:
        raise ValueError(f"time budget must be nonnegative, got {t_star_value}")
    h = np.asarray(h, dtype=float)
    tau = np.asarray(tau, dtype=float)
    b = _counts(t_star_value, h, "computation time")
    m = _counts(t_star_value, tau, "communication time")
    active = (b > 0) & (m > 0)
    w = np.zeros(h.size)
    if omega == 0 and noise_ratio == 0:
        w[active] = 1.0
    else:
        bf, mf = b[active].astype(float), m[active].astype(float)
        w[active] = 1.0 / (bf * omega + omega * noise_ratio + mf * noise_ratio)
    return IterationPlan(float(t_star_value), b, m, w, active)


def variance_budget(omega: float, noise_ratio: float, b, m) -> float:
    """(sum over workers with b, m > 0 of b m / (b w + w r + m r))^-1."""
    b = np.asarray(b, dtype=float)
    m = np.asarray(m, dtype=float)
    act = (b > 0) & (m > 0)
    if omega == 0 and noise_ratio == 0:
        return 0.0 if act.any() else math.inf
    b, m = b[act], m[act]
    total = float(np.sum(b * m / (b * omega + omega * noise_ratio + m * noise_ratio)))
    return math.inf if total == 0.0 else 1.0 / total


def check_variance_budget(query: EquilibriumQuery, plan: IterationPlan) -> float:
    return variance_budget(query.omega, query.noise_ratio, plan.b, plan.m)
