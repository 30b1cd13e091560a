"""Closed-form time complexities of the methods, in seconds.

Every calculator multiplies by ``ld_eps`` (the factor L*Delta/eps, default 1)
so results are either seconds or per-unit times. ``with_constants`` adds the
numerical constants of the convergence theorems; the default drops them so
that ratios between methods are comparable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .equilibrium import t_star
from .rng import Purpose, stream

TABLE1_RATIOS = (1.0, 1e3, 1e6)


@dataclass(frozen=True)
class ComplexityInputs:
    d: int
    h: tuple[float, ...]
    tau_dot: tuple[float, ...]
    noise_ratio: float
    ld_eps: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "h", tuple(float(v) for v in np.atleast_1d(self.h)))
        object.__setattr__(self, "tau_dot", tuple(float(v) for v in np.atleast_1d(self.tau_dot)))
        if len(self.h) != len(self.tau_dot) or not self.h:
            raise ValueError("h and tau_dot must be nonempty and of equal length")
        if self.d < 1:
            raise ValueError("d must be positive")
        values = self.h + self.tau_dot + (self.noise_ratio, self.ld_eps)
        if any(not v >= 0 for v in values):
            raise ValueError("all inputs must be nonnegative")

    @property
    def n(self) -> int:
        return len(self.h)

    @property
    def h_arr(self) -> np.ndarray:
        return np.asarray(self.h)

    @property
    def tau_arr(self) -> np.ndarray:
        return np.asarray(self.tau_dot)


def _times_ld(value: float, ld_eps: float) -> float:
    # keeps inf * 0 at inf rather than nan
    if math.isinf(value):
        return math.inf
    return value * ld_eps


def t_minibatch(inputs: ComplexityInputs) -> float:
    h, td = inputs.h_arr, inputs.tau_arr
    with np.errstate(invalid="ignore"):
        step = float(np.max(h + inputs.d * td))
    return _times_ld(step * (1 + inputs.noise_ratio / inputs.n), inputs.ld_eps)


def t_qsgd(inputs: ComplexityInputs) -> float:
    omega = inputs.d - 1
    n = inputs.n
    step = float(np.max(inputs.h_arr + inputs.tau_arr))
    factor = (omega / n + 1) + (omega + 1) * inputs.noise_ratio / n
    return _times_ld(step * factor, inputs.ld_eps)


def t_rennala_lower(inputs: ComplexityInputs) -> float:
    with np.errstate(invalid="ignore"):
        tau = np.where(inputs.tau_arr == 0, 0.0, inputs.d * inputs.tau_arr)
    return _times_ld(t_star(0.0, inputs.noise_ratio, inputs.h_arr, tau), inputs.ld_eps)


def t_shadowheart(inputs: ComplexityInputs, *, with_constants: bool = False, tau_serv_full: float = 0.0) -> float:
    ts = t_star(inputs.d - 1, inputs.noise_ratio, inputs.h_arr, inputs.tau_arr)
    value = 16 * (tau_serv_full + 2 * ts) if with_constants else tau_serv_full + ts
    return _times_ld(value, inputs.ld_eps)


def t_sgd_one(inputs: ComplexityInputs) -> float:
    if inputs.noise_ratio < 1:
        raise ValueError("the single-worker formula assumes noise_ratio >= 1")
    return _times_ld(float(np.min(inputs.h_arr)) * inputs.noise_ratio, inputs.ld_eps)


def t_bidirectional(
    inputs: ComplexityInputs, alpha: float, tau_serv: float, *, omega: float | None = None, with_constants: bool = False
) -> float:
    """Compressed broadcast in both directions; omega defaults to Rand-1's d - 1."""
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    w = inputs.d - 1 if omega is None else omega
    ts = t_star(w, inputs.noise_ratio, inputs.h_arr, inputs.tau_arr)
    value = 768 / alpha * (tau_serv + 2 * ts) if with_constants else (tau_serv + ts) / alpha
    return _times_ld(value, inputs.ld_eps)


def t_adaptive(
    inputs: ComplexityInputs, ratios, *, omega: float | None = None, with_constants: bool = False
) -> float:
    """Adaptive variant: worker i behaves like (max(h, tau), min(tau * r_i, max(h, tau)))."""
    r = np.asarray(ratios, dtype=float)
    if r.shape != inputs.h_arr.shape or np.any(~(r >= 1)):
        raise ValueError("ratios must be one value >= 1 per worker")
    w = inputs.d - 1 if omega is None else omega
    h, tau = inputs.h_arr, inputs.tau_arr
    top = np.maximum(h, tau)
    with np.errstate(invalid="ignore"):
        scaled = np.where(tau == 0, 0.0, tau * r)
    ts = t_star(w, inputs.noise_ratio, top, np.minimum(scaled, top))
    return _times_ld(2048 * ts if with_constants else ts, inputs.ld_eps)


@dataclass(frozen=True)
class FactorTable:
    ratios: tuple[float, ...]
    minibatch: tuple[float, ...]
    qsgd: tuple[float, ...]
    rennala: tuple[float, ...]
    shadowheart: tuple[float, ...]
    seeds: int

    def rows(self) -> dict[str, tuple[float, ...]]:
        return {
            "minibatch": self.minibatch,
            "qsgd": self.qsgd,
            "rennala": self.rennala,
            "shadowheart": self.shadowheart,
        }


def table1_comparison(seeds=range(10), *, d: int = 10**6, n: int = 10**3, ratios=TABLE1_RATIOS) -> FactorTable:
    """Baseline complexity divided by Shadowheart's, averaged over seeds.

    Times h_i and tau_dot_i are i.i.d. Uniform(0.1, 1) per seed.
    """
    seeds = list(seeds)
    if not seeds:
        raise ValueError("at least one seed is required")
    acc = {name: np.zeros(len(ratios)) for name in ("minibatch", "qsgd", "rennala", "shadowheart")}
    for seed in seeds:
        rng = stream(seed, Purpose.SCHEDULE)
        h = rng.uniform(0.1, 1.0, size=n)
        td = rng.uniform(0.1, 1.0, size=n)
        for col, r in enumerate(ratios):
            inp = ComplexityInputs(d, h, td, r)
            base = t_shadowheart(inp)
            acc["minibatch"][col] += t_minibatch(inp) / base
            acc["qsgd"][col] += t_qsgd(inp) / base
            acc["rennala"][col] += t_rennala_lower(inp) / base
            acc["shadowheart"][col] += base / base
    k = len(seeds)
    return FactorTable(
        tuple(ratios),
        *(tuple((acc[name] / k).tolist()) for name in ("minibatch", "qsgd", "rennala", "shadowheart")),
        seeds=k,
    )
