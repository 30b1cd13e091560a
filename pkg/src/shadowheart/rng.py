"""Keyed counter-based random streams.

Every random draw in the simulator comes from a Philox stream whose 128-bit
key packs (seed, worker, iteration, message, purpose). Any stream can be
rebuilt in isolation from its key, which keeps asynchronous replays exact.
"""

from __future__ import annotations

from enum import IntEnum

import numpy as np


class Purpose(IntEnum):
    GRADIENT = 1
    COMPRESS = 2
    SCHEDULE = 3
    SERVER = 4
    TEST = 15


# bit widths of the packed key fields, total 128
_SEED_BITS = 32
_WORKER_BITS = 24
_ITER_BITS = 40
_MSG_BITS = 24
_PURPOSE_BITS = 8

ALL_WORKERS = (1 << _WORKER_BITS) - 1


def _check(name: str, value: int, bits: int) -> int:
    value = int(value)
    if not 0 <= value < (1 << bits):
        raise ValueError(f"{name}={value} does not fit in {bits} bits")
    return value


def stream_key(seed: int, worker: int, iteration: int, message: int, purpose: int) -> int:
    key = _check("seed", seed, _SEED_BITS)
    key = (key << _WORKER_BITS) | _check("worker", worker, _WORKER_BITS)
    key = (key << _ITER_BITS) | _check("iteration", iteration, _ITER_BITS)
    key = (key << _MSG_BITS) | _check("message", message, _MSG_BITS)
    key = (key << _PURPOSE_BITS) | _check("purpose", purpose, _PURPOSE_BITS)
    return key


def stream(
    seed: int,
    purpose: int,
    *,
    worker: int = ALL_WORKERS,
    iteration: int = 0,
    message: int = 0,
) -> np.random.Generator:
    """Fresh generator for one key. The counter always starts at zero."""
    key = stream_key(seed, worker, iteration, message, purpose)
    return np.random.Generator(np.random.Philox(key=key))
