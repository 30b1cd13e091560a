import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shadowheart.problems import (
    NoiseModel,
    QuadraticProblem,
    full_grad,
    metrics,
    noise_rows,
    noise_sum,
    prog,
    stoch_grad,
)
from shadowheart.rng import Purpose, stream


def dense_matrix(d):
    return (2 * np.eye(d) - np.eye(d, k=1) - np.eye(d, k=-1)) / 4


def test_grad_at_zero():
    assert np.array_equal(full_grad(QuadraticProblem(3), np.zeros(3)), np.array([0.25, 0.0, 0.0]))


def test_grad_vanishes_at_minimizer():
    p = QuadraticProblem(50)
    x = np.linalg.solve(dense_matrix(50), p.b)
    assert np.allclose(p.minimizer(), x, atol=1e-10)
    assert metrics(p, p.minimizer())[1] < 1e-20


def test_one_dimensional_metrics():
    p = QuadraticProblem(1)
    assert p.L == 0.5
    _, g2 = metrics(p, np.array([1.0]))
    assert g2 == 9 / 16


def test_matvec_matches_dense():
    rng = np.random.default_rng(0)
    for d in (1, 2, 7, 40):
        x = rng.standard_normal(d)
        assert np.allclose(QuadraticProblem(d).matvec(x), dense_matrix(d) @ x, rtol=0, atol=1e-14)


def test_smoothness_constant():
    for d in (1, 5, 64):
        p = QuadraticProblem(d)
        assert p.L == pytest.approx(np.linalg.eigvalsh(dense_matrix(d)).max(), rel=1e-12)
        assert p.L < 1
    p = QuadraticProblem(30)
    rng = np.random.default_rng(1)
    for _ in range(100):
        v = rng.standard_normal(30)
        assert np.linalg.norm(p.matvec(v)) <= p.L * np.linalg.norm(v) * (1 + 1e-12)


def test_grad_finite_differences():
    p = QuadraticProblem(12)
    rng = np.random.default_rng(2)
    x = rng.standard_normal(12)
    eps = 1e-5
    fd = np.array([(p.value(x + eps * e) - p.value(x - eps * e)) / (2 * eps) for e in np.eye(12)])
    assert np.allclose(fd, full_grad(p, x), atol=1e-6)


def test_delta_positive_and_start_points():
    p = QuadraticProblem(16)
    assert p.delta(p.start_point("ones")) > 0
    x = p.start_point("sqrt_d_e1")
    assert x[0] == 4.0 and prog(x) == 1
    with pytest.raises(ValueError):
        p.start_point("zeros")


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        full_grad(QuadraticProblem(3), np.zeros(4))


@pytest.mark.parametrize(
    "x,expected",
    [(np.zeros(4), 0), (np.array([1.0, 0, 3, 0]), 3), (np.r_[np.zeros(9), 5.0], 10)],
)
def test_prog(x, expected):
    assert prog(x) == expected


def test_noiseless_oracle_is_exact():
    p = QuadraticProblem(5)
    x = np.arange(5.0)
    assert np.array_equal(stoch_grad(p, NoiseModel.none(), x, stream(0, Purpose.TEST)), full_grad(p, x))


def test_multiplicative_miss_zeroes_tail():
    p = QuadraticProblem(6)
    x = np.array([1.0, 2.0, 0, 0, 0, 0])
    g = full_grad(p, x)
    noise = NoiseModel.multiplicative(1e-12)  # the Bernoulli draw misses for any practical seed
    out = stoch_grad(p, noise, x, stream(0, Purpose.TEST))
    assert np.array_equal(out[:2], g[:2])
    assert np.array_equal(out[2:], np.zeros(4))


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel.multiplicative(0.0)
    with pytest.raises(ValueError):
        NoiseModel.additive(-1.0)


@pytest.mark.parametrize("noise", [NoiseModel.additive(0.3), NoiseModel.multiplicative(0.2)], ids=["additive", "multiplicative"])
def test_oracle_unbiased_monte_carlo(noise):
    d, N = 8, 100_000
    p = QuadraticProblem(d)
    x = np.r_[np.random.default_rng(3).standard_normal(3), np.zeros(d - 3)]
    g = full_grad(p, x)
    rng = stream(7, Purpose.TEST)
    draws = np.stack([stoch_grad(p, noise, x, rng) for _ in range(N)])
    se = draws.std(axis=0, ddof=1) / math.sqrt(N)
    assert np.all(np.abs(draws.mean(axis=0) - g) <= 4 * se + 1e-10 * np.abs(g))


def test_additive_variance():
    d, N, sigma = 10, 100_000, 0.5
    p = QuadraticProblem(d)
    x = np.ones(d)
    g = full_grad(p, x)
    rng = stream(8, Purpose.TEST)
    sq = np.array([np.sum((stoch_grad(p, NoiseModel.additive(sigma), x, rng) - g) ** 2) for _ in range(N)])
    assert abs(sq.mean() - p.variance_bound(NoiseModel.additive(sigma))) <= 4 * sq.std(ddof=1) / math.sqrt(N)


def test_multiplicative_variance_bound():
    p = QuadraticProblem(10)
    rng = np.random.default_rng(4)
    gen = stream(9, Purpose.TEST)
    q = 0.3
    for _ in range(5):
        x = np.r_[rng.standard_normal(4), np.zeros(6)]
        g = full_grad(p, x)
        sq = np.array([np.sum((stoch_grad(p, NoiseModel.multiplicative(q), x, gen) - g) ** 2) for _ in range(20_000)])
        assert sq.mean() <= (1 / q - 1) * (g @ g) * (1 + 4 / math.sqrt(20_000))


@given(st.integers(1, 50), st.floats(0.05, 1.0), st.integers(0, 2**31 - 1))
@settings(max_examples=60, deadline=None)
def test_noise_sum_distribution_shape(count, p_hit, seed):
    # the summed oracle noise lives only on the coordinates past prog(x)
    p = QuadraticProblem(6)
    x = np.array([1.0, -1.0, 0, 0, 0, 0])
    g = full_grad(p, x)
    s = noise_sum(p, NoiseModel.multiplicative(p_hit), x, g, count, stream(seed, Purpose.TEST))
    assert np.array_equal(s[:2], np.zeros(2))
    ratio = s[2] / g[2]
    hits = (ratio + count) * p_hit
    assert abs(hits - round(hits)) < 1e-6 and 0 <= round(hits) <= count


def test_noise_sum_additive_matches_sum_of_calls():
    # variance of a summed draw equals count times the single-call variance
    p = QuadraticProblem(4)
    x, g = np.ones(4), full_grad(p, np.ones(4))
    rng = stream(10, Purpose.TEST)
    draws = np.stack([noise_sum(p, NoiseModel.additive(1.0), x, g, 9, rng) for _ in range(40_000)])
    assert abs(draws.var() - 9.0) <= 4 * 9.0 * math.sqrt(2 / draws.size)


def test_noise_rows_zero_counts():
    p = QuadraticProblem(4)
    x, g = np.ones(4), full_grad(p, np.ones(4))
    rows = noise_rows(p, NoiseModel.additive(1.0), x, g, [0, 3], stream(0, Purpose.TEST))
    assert np.array_equal(rows[0], np.zeros(4))
    assert np.any(rows[1] != 0)
