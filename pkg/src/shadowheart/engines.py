"""Simulated-time execution of Shadowheart SGD, its variants, and the baselines.

Every estimator is evaluated in centered form: the exact gradient plus the
weighted sum of noise and compression errors. This is algebraically the same
estimator, but noiseless lossless runs then reproduce gradient descent
bit for bit.
"""

from __future__ import annotations

import csv
import heapq
import io
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import compressors as cmp
from .compressors import CompressorSpec, Kind
from .equilibrium import IterationPlan, plan_from_arrays, t_star
from .problems import NoiseModel, QuadraticProblem, full_grad, metrics, noise_rows, noise_sum
from .rng import Purpose, stream
from .schedules import TimeSchedule


class NumericalFailure(RuntimeError):
    pass


class Method(str, Enum):
    SHADOWHEART = "shadowheart"
    ADAPTIVE = "adaptive"
    BIDIRECTIONAL = "bidirectional"
    MINIBATCH = "minibatch"
    QSGD = "qsgd"
    ASYNC = "async"
    RENNALA = "rennala"
    SGD_ONE = "sgd_one"


FULL_VECTOR_METHODS = {Method.MINIBATCH, Method.RENNALA, Method.ASYNC, Method.SGD_ONE}
ASYNC_POLICY = "constant-stepsize delayed SGD, one server step per arrival"


@dataclass(frozen=True)
class EngineConfig:
    method: Method
    gamma: float | None = None
    noise_ratio: float = 0.0
    compressor: CompressorSpec | None = None
    server_compressor: CompressorSpec | None = None
    rennala_batch: int = 1
    max_iters: int | None = 1000
    time_budget: float | None = None
    grad_tol: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not self.noise_ratio >= 0:
            raise ValueError("noise_ratio must be nonnegative")
        if self.max_iters is None and self.time_budget is None and self.grad_tol is None:
            raise ValueError("at least one stop criterion is required")
        if self.compressor is not None and self.compressor.kind is Kind.TOP_K:
            raise ValueError(f"{self.method.value} needs an unbiased compressor, got top_k")
        if self.server_compressor is not None and self.server_compressor.kind is Kind.RAND_K:
            raise ValueError("the server compressor must be biased (top_k or identity)")
        if self.rennala_batch < 1:
            raise ValueError("rennala_batch must be at least 1")

    def compressor_for(self, d: int) -> CompressorSpec:
        c = self.compressor or CompressorSpec.identity(d)
        if c.d != d:
            raise ValueError(f"compressor dimension {c.d} does not match problem dimension {d}")
        return c

    def server_compressor_for(self, d: int) -> CompressorSpec:
        c = self.server_compressor or CompressorSpec.identity(d)
        if c.d != d:
            raise ValueError(f"server compressor dimension {c.d} does not match problem dimension {d}")
        return c

    def stepsize(self, problem: QuadraticProblem) -> float:
        if self.gamma is not None:
            return self.gamma
        if self.method is Method.BIDIRECTIONAL:
            return cmp.alpha_of(self.server_compressor_for(problem.d)) / (16 * problem.L)
        return 1.0 / (2 * problem.L)


@dataclass(frozen=True)
class Record:
    t: float
    k: int
    f: float
    gnorm2: float
    sum_b: int = 0
    sum_m: int = 0
    note: str = ""


COLUMNS = ("t_seconds", "iteration", "f", "grad_norm_sq", "sum_b", "sum_m", "event_note")


@dataclass
class RunTrace:
    records: list[Record] = field(default_factory=list)
    stop_reason: str = ""
    metadata: dict = field(default_factory=dict)

    def time_to_threshold(self, threshold: float) -> float:
        for r in self.records:
            if r.gnorm2 <= threshold:
                return r.t
        return math.inf

    def csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        for r in self.records:
            writer.writerow([repr(r.t), r.k, repr(r.f), repr(r.gnorm2), r.sum_b, r.sum_m, r.note])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.csv_text())


# ---------------------------------------------------------------- Shadowheart


def _compression_errors(spec: CompressorSpec, sums: np.ndarray, m: np.ndarray, rng) -> np.ndarray:
    """Row i: sum over m_i independent compressions of sums[i], minus m_i * sums[i]."""
    if spec.lossless:
        return np.zeros_like(sums)
    d, k = spec.d, spec.k
    if k == 1:
        labels = np.repeat(np.arange(m.size), m)
        idx = rng.integers(0, d, size=labels.size)
        counts = np.bincount(labels * d + idx, minlength=m.size * d).reshape(m.size, d)
    else:
        counts = np.stack([cmp.randk_hit_counts(spec, int(mi), rng) for mi in m]) if m.size else np.zeros((0, d))
    return sums * ((d / k) * counts - m[:, None])


def shadowheart_step(
    x,
    plan: IterationPlan,
    problem: QuadraticProblem,
    noise: NoiseModel,
    rng: np.random.Generator,
    *,
    h,
    tau,
    compressor: CompressorSpec | None = None,
    tau_serv_full: float = 0.0,
) -> tuple[np.ndarray, float]:
    """One round of the weighted estimator; returns (g, elapsed seconds)."""
    act = np.flatnonzero(plan.active)
    if act.size == 0:
        raise NumericalFailure("no worker fits in the time budget; the plan has an empty active set")
    spec = compressor or CompressorSpec.identity(problem.d)
    grad = full_grad(problem, x)
    b, m, w = plan.b[act], plan.m[act], plan.w[act]
    grad_noise = noise_rows(problem, noise, x, grad, b, rng)
    sums = b[:, None] * grad + grad_noise
    err = _compression_errors(spec, sums, m, rng) + m[:, None] * grad_noise
    g = grad + (w @ err) / float(np.sum(w * m * b))
    h, tau = np.asarray(h, dtype=float)[act], np.asarray(tau, dtype=float)[act]
    elapsed = tau_serv_full + float(np.max(h * b + tau * m))
    return g, elapsed


# ---------------------------------------------------------------- Adaptive


@dataclass
class AdaptiveWorkerState:
    l: int = 0
    m_per_grad: list[int] = field(default_factory=list)
    partial_sum: np.ndarray | None = None


@dataclass
class AdaptiveOutcome:
    g: np.ndarray
    elapsed: float
    states: list[AdaptiveWorkerState]
    condition_history: list[float]


def adaptive_condition(omega: float, ratio: float, l: np.ndarray, inv_m_sum: np.ndarray) -> float:
    """Stop statistic of the adaptive server; the loop ends once it is <= 1/4."""
    act = l > 0
    if not act.any():
        return math.inf
    lf = l[act].astype(float)
    a = inv_m_sum[act]
    term = omega * a / lf**2 + omega * ratio * a / lf**3 + ratio / lf
    if np.any(term == 0):
        return 0.0
    return 1.0 / float(np.sum(1.0 / term))


def adaptive_step(
    x,
    h,
    tau,
    problem: QuadraticProblem,
    noise: NoiseModel,
    *,
    omega_ratio: tuple[float, float],
    compressor: CompressorSpec | None = None,
    seed: int = 0,
    iteration: int = 0,
    tau_serv_full: float = 0.0,
    max_events: int = 10_000_000,
) -> AdaptiveOutcome:
    """Event-driven round where workers overlap computing and sending.

    ``omega_ratio`` is (omega, sigma^2/eps) used by the server's stop rule.
    Events at equal times go to the lowest worker id; a gradient finishing at
    the same instant as a send counts as finished.
    """
    omega, ratio = omega_ratio
    h = np.asarray(h, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if np.any(h <= 0) or np.any(tau <= 0):
        raise ValueError("adaptive rounds need strictly positive worker times")
    spec = compressor or CompressorSpec.identity(problem.d)
    n = h.size
    worker_l = np.zeros(n, dtype=np.int64)  # gradients folded into the worker's partial sum
    next_done = np.full(n, math.inf)
    server_l = np.zeros(n, dtype=np.int64)
    inv_m = np.zeros(n)
    m_lists: list[list[int]] = [[] for _ in range(n)]
    events: list[tuple[float, int]] = []
    for i in range(n):
        if math.isfinite(h[i]) and math.isfinite(tau[i]):
            worker_l[i] = 1
            next_done[i] = 2 * h[i]
            heapq.heappush(events, (h[i] + tau[i], i))
    history: list[float] = []
    now = 0.0
    for _ in range(max_events):
        if not events:
            raise NumericalFailure("adaptive round ran out of events before the stop rule fired")
        now, i = heapq.heappop(events)
        li = int(worker_l[i])
        ms = m_lists[i]
        if li > server_l[i]:
            server_l[i] = li
            ms.append(1)
            inv_m[i] += 1.0
        else:
            inv_m[i] += 1.0 / (ms[-1] + 1) - 1.0 / ms[-1]
            ms[-1] += 1
        value = adaptive_condition(omega, ratio, server_l, inv_m)
        history.append(value)
        if value <= 0.25:
            break
        if next_done[i] <= now:
            worker_l[i] += 1
            next_done[i] = now + h[i]
        heapq.heappush(events, (now + tau[i], i))
    else:
        raise NumericalFailure("adaptive round exceeded its event cap")

    grad = full_grad(problem, x)
    total = np.zeros(problem.d)
    weights = np.zeros(n)
    norm = 0.0
    states = []
    for i in range(n):
        l = int(server_l[i])
        if l == 0:
            states.append(AdaptiveWorkerState())
            continue
        m = np.asarray(m_lists[i], dtype=np.int64)
        rng = stream(seed, Purpose.GRADIENT, worker=i, iteration=iteration)
        per_grad = noise_rows(problem, noise, x, grad, np.ones(l, dtype=np.int64), rng)
        cum_noise = np.cumsum(per_grad, axis=0)
        partial = np.arange(1, l + 1)[:, None] * grad + cum_noise
        err = cum_noise.sum(axis=0)
        if not spec.lossless:
            for j in range(l):
                crng = stream(seed, Purpose.COMPRESS, worker=i, iteration=iteration, message=j)
                e = _compression_errors(spec, partial[j : j + 1], m[j : j + 1], crng)[0]
                err += e / m[j]
        a = float(np.sum(1.0 / m))
        if omega == 0 and ratio == 0:
            wi = 1.0
        else:
            wi = 1.0 / (omega * a + omega * ratio * a / l + l * ratio)
        weights[i] = wi
        total += wi * err
        norm += wi * l * (l + 1) / 2
        states.append(AdaptiveWorkerState(l, m.tolist(), partial[-1].copy()))
    g = grad + total / norm
    return AdaptiveOutcome(g, now + tau_serv_full, states, history)


# ---------------------------------------------------------------- Bidirectional


def bidirectional_step(
    x,
    w_server,
    plan: IterationPlan,
    problem: QuadraticProblem,
    noise: NoiseModel,
    spec_serv: CompressorSpec,
    rng: np.random.Generator,
    *,
    gamma: float,
    h,
    tau,
    compressor: CompressorSpec | None = None,
    tau_serv: float = 0.0,
):
    """Workers estimate the gradient at the shifted point w; the server
    broadcasts a Top-K compressed correction p. Returns (x_next, w_next, p, elapsed)."""
    g, elapsed = shadowheart_step(w_server, plan, problem, noise, rng, h=h, tau=tau, compressor=compressor)
    x_next = x - gamma * g
    if spec_serv.lossless:
        p = x_next - w_server
        w_next = x_next.copy()
    else:
        p = cmp.top_k_dense(spec_serv, x_next - w_server)
        w_next = w_server + p
    return x_next, w_next, p, elapsed + tau_serv


# ---------------------------------------------------------------- baselines


def rennala_arrivals(cycle, batch: int) -> tuple[float, np.ndarray]:
    """First ``batch`` arrivals when worker i delivers every cycle[i] seconds.

    Returns the time of the last needed arrival and per-worker counts.
    """
    cycle = np.asarray(cycle, dtype=float)
    heap = [(c, i) for i, c in enumerate(cycle) if math.isfinite(c)]
    heapq.heapify(heap)
    counts = np.zeros(cycle.size, dtype=np.int64)
    t = math.inf
    for _ in range(batch):
        if not heap:
            return math.inf, counts
        t, i = heapq.heappop(heap)
        counts[i] += 1
        heapq.heappush(heap, ((counts[i] + 1) * cycle[i], i))
    return t, counts


def baseline_step(
    method: Method,
    x,
    problem: QuadraticProblem,
    noise: NoiseModel,
    schedule_times: tuple[np.ndarray, np.ndarray],
    rng: np.random.Generator,
    *,
    gamma: float,
    compressor: CompressorSpec | None = None,
    rennala_batch: int = 1,
    worker: int = 0,
    tau_serv_full: float = 0.0,
) -> tuple[np.ndarray, float, tuple[int, int]]:
    """One synchronous baseline step; returns (x_next, elapsed, (sum_b, sum_m))."""
    method = Method(method)
    h, tau_dot = schedule_times
    d = problem.d
    grad = full_grad(problem, x)
    n = h.size
    if method is Method.MINIBATCH:
        # the batch mean needs only the distribution of the summed noise
        g = grad + noise_sum(problem, noise, x, grad, n, rng) / n
        elapsed = float(np.max(h + d * tau_dot)) + tau_serv_full
        counts = (n, n)
    elif method is Method.QSGD:
        spec = compressor or CompressorSpec.identity(d)
        ones = np.ones(n, dtype=np.int64)
        gn = noise_rows(problem, noise, x, grad, ones, rng)
        err = gn + _compression_errors(spec, grad + gn, ones, rng)
        g = grad + err.mean(axis=0)
        elapsed = float(np.max(h + cmp.transmit_cost(spec) * tau_dot)) + tau_serv_full
        counts = (n, n)
    elif method is Method.RENNALA:
        t, got = rennala_arrivals(h + d * tau_dot, rennala_batch)
        if not math.isfinite(t):
            raise NumericalFailure("rennala batch cannot be filled by finite workers")
        err = noise_rows(problem, noise, x, grad, got, rng)
        g = grad + err.sum(axis=0) / rennala_batch
        elapsed = t + tau_serv_full
        counts = (rennala_batch, rennala_batch)
    elif method is Method.SGD_ONE:
        err = noise_rows(problem, noise, x, grad, np.ones(1, dtype=np.int64), rng)
        g = grad + err[0]
        elapsed = float(h[worker])
        counts = (1, 0)
    else:
        raise ValueError(f"{method.value} is not a synchronous baseline")
    return x - gamma * g, elapsed, counts


# ---------------------------------------------------------------- run loop


class _Stopper:
    def __init__(self, config: EngineConfig):
        self.config = config

    def __call__(self, trace: RunTrace) -> str:
        c = self.config
        r = trace.records[-1]
        if not (math.isfinite(r.f) and math.isfinite(r.gnorm2)):
            return "diverged"
        if c.grad_tol is not None and r.gnorm2 <= c.grad_tol:
            return "grad_tol"
        if not math.isfinite(r.t):
            return "stalled"
        if c.time_budget is not None and r.t >= c.time_budget:
            return "time_budget"
        if c.max_iters is not None and r.k >= c.max_iters:
            return "max_iters"
        return ""


def _record(problem, x, t, k, sum_b=0, sum_m=0, note="") -> Record:
    with np.errstate(over="ignore", invalid="ignore"):
        f, g2 = metrics(problem, x)
    return Record(float(t), int(k), f, g2, int(sum_b), int(sum_m), note)


def run(
    config: EngineConfig,
    problem: QuadraticProblem,
    noise: NoiseModel,
    schedule: TimeSchedule,
    seed: int,
    x0=None,
) -> RunTrace:
    """Simulate ``config.method`` until a stop criterion fires."""
    x = np.ones(problem.d) if x0 is None else np.array(x0, dtype=float)
    if x.shape != (problem.d,):
        raise ValueError("start point dimension does not match the problem")
    if config.method in FULL_VECTOR_METHODS and config.compressor is not None and not config.compressor.lossless:
        raise ValueError(f"{config.method.value} sends full vectors and takes no compressor")
    if not schedule.positive():
        raise ValueError("engines need strictly positive, finite worker times")
    gamma = config.stepsize(problem)
    trace = RunTrace(
        metadata={
            "method": config.method.value,
            "gamma": gamma,
            "noise_ratio": config.noise_ratio,
            "seed": seed,
        }
    )
    if config.method is Method.ASYNC:
        trace.metadata["async_policy"] = ASYNC_POLICY
    trace.records.append(_record(problem, x, 0.0, 0, note="start"))
    stop = _Stopper(config)
    reason = stop(trace)
    if reason:
        trace.stop_reason = reason
        return trace
    with np.errstate(over="ignore", invalid="ignore"):
        if config.method is Method.ASYNC:
            trace.stop_reason = _run_async(config, problem, noise, schedule, seed, x, gamma, trace, stop)
        else:
            trace.stop_reason = _run_rounds(config, problem, noise, schedule, seed, x, gamma, trace, stop)
    return trace


def _run_rounds(config, problem, noise, schedule, seed, x, gamma, trace, stop) -> str:
    method = config.method
    d = problem.d
    spec = config.compressor_for(d)
    omega = cmp.omega_of(spec)
    ratio = config.noise_ratio
    w_server = x.copy()
    spec_serv = config.server_compressor_for(d) if method is Method.BIDIRECTIONAL else None
    fixed_worker = int(np.argmin(schedule.nominal_h()))
    plan_cache = None
    t = 0.0
    k = 0
    while True:
        h, tau_dot = schedule.times(seed, k if schedule.per_iteration else 0)
        tau = cmp.transmit_cost(spec) * tau_dot
        rng = stream(seed, Purpose.GRADIENT, iteration=k)
        note = ""
        if method in (Method.SHADOWHEART, Method.BIDIRECTIONAL):
            if plan_cache is None or schedule.per_iteration:
                ts = t_star(omega, ratio, h, tau)
                if not math.isfinite(ts):
                    return "stalled"
                plan_cache = plan_from_arrays(omega, ratio, h, tau, ts)
            plan = plan_cache
            act = plan.active
            sums = (int(plan.b[act].sum()), int(plan.m[act].sum()))
            if method is Method.SHADOWHEART:
                g, elapsed = shadowheart_step(
                    x, plan, problem, noise, rng, h=h, tau=tau, compressor=spec, tau_serv_full=schedule.tau_serv_full
                )
                x = x - gamma * g
            else:
                x, w_server, _, elapsed = bidirectional_step(
                    x, w_server, plan, problem, noise, spec_serv, rng,
                    gamma=gamma, h=h, tau=tau, compressor=spec, tau_serv=schedule.tau_serv,
                )
        elif method is Method.ADAPTIVE:
            out = adaptive_step(
                x, h, tau, problem, noise, omega_ratio=(omega, ratio), compressor=spec,
                seed=seed, iteration=k, tau_serv_full=schedule.tau_serv_full,
            )
            x = x - gamma * out.g
            elapsed = out.elapsed
            sums = (sum(s.l for s in out.states), sum(sum(s.m_per_grad) for s in out.states))
        else:
            x, elapsed, sums = baseline_step(
                method, x, problem, noise, (h, tau_dot), rng,
                gamma=gamma, compressor=spec, rennala_batch=config.rennala_batch,
                worker=fixed_worker, tau_serv_full=schedule.tau_serv_full,
            )
        t += elapsed
        k += 1
        trace.records.append(_record(problem, x, t, k, sums[0], sums[1], note))
        reason = stop(trace)
        if reason:
            return reason


def _run_async(config, problem, noise, schedule, seed, x, gamma, trace, stop) -> str:
    d = problem.d
    n = schedule.n
    jobs = np.zeros(n, dtype=np.int64)
    pending: list[tuple[float, int]] = []
    grads: dict[int, np.ndarray] = {}

    def launch(i: int, now: float, point: np.ndarray) -> None:
        j = int(jobs[i])
        h, tau_dot = schedule.times(seed, j if schedule.per_iteration else 0)
        rng = stream(seed, Purpose.GRADIENT, worker=i, iteration=j)
        grad = full_grad(problem, point)
        grads[i] = grad + noise_rows(problem, noise, point, grad, np.ones(1, dtype=np.int64), rng)[0]
        jobs[i] += 1
        heapq.heappush(pending, (now + h[i] + d * tau_dot[i], i))

    for i in range(n):
        launch(i, 0.0, x)
    k = 0
    while True:
        now, i = heapq.heappop(pending)
        x = x - gamma * grads.pop(i)
        k += 1
        trace.records.append(_record(problem, x, now, k, 1, 1, f"worker={i}"))
        reason = stop(trace)
        if reason:
            return reason
        launch(i, now, x)
