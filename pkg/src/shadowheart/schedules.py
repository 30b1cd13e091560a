"""Worker time schedules: static arrays or per-iteration random draws."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .rng import Purpose, stream


@dataclass(frozen=True)
class TimeSource:
    """Either fixed per-worker values or scale * Uniform(low, high) drawn every iteration."""

    values: tuple[float, ...] | None = None
    low: float = 0.1
    high: float = 1.0
    scale: float = 1.0

    @property
    def random(self) -> bool:
        return self.values is None

    @classmethod
    def fixed(cls, values) -> "TimeSource":
        return cls(values=tuple(float(v) for v in np.atleast_1d(values)))

    @classmethod
    def uniform(cls, low: float = 0.1, high: float = 1.0, scale: float = 1.0) -> "TimeSource":
        return cls(values=None, low=low, high=high, scale=scale)

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.values is None:
            return self.scale * rng.uniform(self.low, self.high, size=n)
        out = np.asarray(self.values, dtype=float)
        return out if out.size == n else np.broadcast_to(out, (n,)).copy()


def sqrt_i(n: int, scale: float = 1.0) -> TimeSource:
    return TimeSource.fixed(scale * np.sqrt(np.arange(1, n + 1)))


def sqrt_i_over_d_pow(n: int, d: int, power: float) -> TimeSource:
    return TimeSource.fixed(np.sqrt(np.arange(1, n + 1)) / d**power)


@dataclass(frozen=True)
class TimeSchedule:
    """Per-worker computation times h and per-coordinate send times tau_dot.

    A message carrying k coordinates takes k * tau_dot seconds. ``tau_serv``
    is the compressed broadcast time and ``tau_serv_full`` the uncompressed one.
    """

    n: int
    h: TimeSource
    tau_dot: TimeSource
    tau_serv: float = 0.0
    tau_serv_full: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("a schedule needs at least one worker")
        for name, src in (("h", self.h), ("tau_dot", self.tau_dot)):
            if src.values is not None:
                if len(src.values) not in (1, self.n):
                    raise ValueError(f"{name} has {len(src.values)} entries for n={self.n} workers")
                if any(not v >= 0 for v in src.values):
                    raise ValueError(f"{name} entries must be nonnegative")
            elif not 0 <= src.low <= src.high or src.scale < 0:
                raise ValueError(f"{name} uniform range is invalid")
        if self.tau_serv < 0 or self.tau_serv_full < 0:
            raise ValueError("broadcast times must be nonnegative")

    @property
    def per_iteration(self) -> bool:
        return self.h.random or self.tau_dot.random

    @classmethod
    def static(cls, h, tau_dot, **kw) -> "TimeSchedule":
        h = np.atleast_1d(np.asarray(h, dtype=float))
        return cls(h.size, TimeSource.fixed(h), TimeSource.fixed(tau_dot), **kw)

    def times(self, seed: int, iteration: int) -> tuple[np.ndarray, np.ndarray]:
        """(h, tau_dot) for one iteration; one draw per (worker, iteration)."""
        return _times(self, seed, iteration)

    def nominal_h(self) -> np.ndarray:
        if self.h.values is not None:
            return self.h.draw(self.n, None)
        return np.full(self.n, self.h.scale * 0.5 * (self.h.low + self.h.high))

    def positive(self) -> bool:
        """True when every time that can occur is strictly positive and finite."""
        for src in (self.h, self.tau_dot):
            if src.values is not None:
                if any(not 0 < v < math.inf for v in src.values):
                    return False
            elif not (src.low > 0 and src.scale > 0):
                return False
        return True


@lru_cache(maxsize=4096)
def _times(schedule: TimeSchedule, seed: int, iteration: int):
    rng = stream(seed, Purpose.SCHEDULE, iteration=iteration) if schedule.per_iteration else None
    h = schedule.h.draw(schedule.n, rng)
    tau_dot = schedule.tau_dot.draw(schedule.n, rng)
    h.flags.writeable = False
    tau_dot.flags.writeable = False
    return h, tau_dot


def fluctuation_ratio_proxy(schedule: TimeSchedule, seed: int, iterations: int, window: int = 10) -> np.ndarray:
    """Empirical stand-in for the per-worker fluctuation ratio r_i.

    Largest max/min ratio of worker i's computation times inside any window of
    ``window`` consecutive iterations. Static schedules give exactly 1.
    """
    if iterations < 1 or window < 1:
        raise ValueError("iterations and window must be positive")
    if not schedule.per_iteration:
        return np.ones(schedule.n)
    h = np.stack([schedule.times(seed, k)[0] for k in range(iterations)])
    w = min(window, iterations)
    views = np.lib.stride_tricks.sliding_window_view(h, w, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = views.max(axis=-1) / views.min(axis=-1)
    return np.max(ratios, axis=0)
