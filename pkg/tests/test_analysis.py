from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergodic_mkv.analysis import (
    chaos_error,
    ergodic_mean_bias,
    estimate_mse,
    fit_rate,
    gaussian_expectation,
    invariant_moment,
    invariant_samples,
    linear_euler_moments,
    linear_mean,
    linear_variance,
    mse_report,
    w2_1d,
    w2_decay,
)
from ergodic_mkv.config import parse_config_text
from ergodic_mkv.dynamics import TimeGrid
from ergodic_mkv.errors import ConfigurationError, PreconditionError
from ergodic_mkv.model import coordinate, linear_model, polynomial_model

from oracles import linear_moments_rk4, rk4, w2_brute

samples = st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=6)


def test_linear_mean_examples():
    assert linear_mean(1, 0.5, 1, 2) == pytest.approx(math.exp(-1))
    assert rk4(lambda t, y: -0.5 * y, [1.0], 2.0, 1e-3)[0] == pytest.approx(math.exp(-1), abs=1e-10)
    assert linear_mean(1, 0.5, 0, 3.7) == 0
    assert linear_mean(2, 0, 3, 0) == 3
    with pytest.raises(ConfigurationError):
        linear_mean(0.5, 1, 1, 1)


def test_linear_variance_examples():
    assert linear_variance(1, 0.5, 4.2) == 0.5
    v20 = rk4(lambda t, y: -2 * y + 1, [0.0], 20.0, 1e-3)[0]
    assert linear_variance(1, 0, 20) == pytest.approx(v20, abs=1e-8)
    assert linear_variance(1, 0, 20) == pytest.approx(0.5, abs=1e-8)
    assert linear_variance(1, 0, 0) == 0


def test_invariant_moment_examples():
    assert invariant_moment(1, 0.5, 1) == 0
    assert invariant_moment(1, 0.5, 2) == 0.5
    assert invariant_moment(2, 0, 2) == 0.25
    assert invariant_moment(1, 0.5, 2) == pytest.approx(linear_variance(1, 0, 60) + linear_mean(1, 0.5, 1, 60) ** 2)
    with pytest.raises(ConfigurationError):
        invariant_moment(1, 2, 2)
    with pytest.raises(ConfigurationError):
        invariant_moment(1, 0.5, 3)


def test_linear_moments_match_rk4():
    times = np.linspace(0, 10, 21)
    for alpha, beta, m0, v0 in ((1.0, 0.5, 1.0, 0.0), (2.0, -1.0, -3.0, 2.0), (0.7, 0.69, 0.4, 0.1)):
        ode = linear_moments_rk4(alpha, beta, m0, v0, times)
        closed = np.array([[linear_mean(alpha, beta, m0, t), linear_variance(alpha, v0, t)] for t in times])
        assert np.max(np.abs(ode - closed)) <= 1e-6


def test_euler_moments_converge_to_continuous():
    m, v = linear_euler_moments(1.0, 0.5, 1.0, 0.0, 1 / 1000, 3000)
    assert m[-1] == pytest.approx(linear_mean(1, 0.5, 1, 3), abs=1e-3)
    assert v[-1] == pytest.approx(linear_variance(1, 0, 3), abs=1e-3)


def test_ergodic_bias_decays_like_one_over_t():
    for t in (5.0, 10.0, 20.0, 40.0):
        ratio = ergodic_mean_bias(1, 0.5, 1, t) * t / (ergodic_mean_bias(1, 0.5, 1, 2 * t) * 2 * t)
        assert 0.5 <= ratio <= 2


def test_gaussian_expectation():
    assert gaussian_expectation("x^2", [1.0], [[2.0]]) == 3.0
    assert gaussian_expectation("coordinate:1", [1.0, 4.0], np.eye(2)) == 4.0
    assert gaussian_expectation("poly:1,0,0,0,1", [0.0], [[2.0]]) == pytest.approx(1 + 3 * 4)
    assert gaussian_expectation("poly:0,0,1", [2.0], [[0.5]]) == pytest.approx(4.5)
    with pytest.raises(ConfigurationError):
        gaussian_expectation("sin", [0.0], [[1.0]])


def test_w2_examples():
    assert w2_1d([1, 2, 3], [3, 1, 2]) == 0
    assert w2_1d([0], [1]) == 1
    assert w2_1d([0, 2], [1, 3]) == 1
    assert w2_brute([0, 2], [1, 3]) == 1
    with pytest.raises(PreconditionError):
        w2_1d([], [1.0])


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6).flatmap(lambda n: st.tuples(*[st.lists(st.floats(-50, 50), min_size=n, max_size=n)] * 2)))
def test_w2_equals_exhaustive_pairing(pair):
    a, b = pair
    assert w2_1d(a, b) == pytest.approx(w2_brute(a, b), abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 20).flatmap(lambda n: st.tuples(*[st.lists(st.floats(-50, 50), min_size=n, max_size=n)] * 3)))
def test_w2_metric(triple):
    a, b, c = triple
    assert w2_1d(a, b) == w2_1d(b, a)
    assert w2_1d(a, a) == 0
    assert (w2_1d(a, b) == 0) == (sorted(a) == sorted(b))
    assert w2_1d(a, c) <= w2_1d(a, b) + w2_1d(b, c) + 1e-9


def test_w2_unequal_sizes():
    # duplicating every atom leaves the empirical measure unchanged
    a = np.array([0.3, -1.0, 2.0])
    assert w2_1d(a, np.repeat(a, 2)) == pytest.approx(0.0, abs=1e-15)
    assert w2_1d([0.0], [1.0, 1.0, 1.0]) == pytest.approx(1.0)
    # two-point vs three-point measure by hand
    expected = math.sqrt((1 / 3) * 0 + (1 / 6) * 1 + (1 / 6) * 0 + (1 / 3) * 0)
    assert w2_1d([0.0, 1.0], [0.0, 1.0, 1.0]) == pytest.approx(expected)
    rng = np.random.default_rng(0)
    assert w2_1d(rng.normal(size=3000), rng.normal(size=7000)) < 0.1


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=2, max_size=40))
def test_mse_identities(values):
    rep = mse_report(values, 0.3)
    R = rep.R
    assert rep.mse + 1e-12 >= rep.bias
    assert rep.mse**2 == pytest.approx(rep.bias**2 + rep.std**2 * (R - 1) / R, abs=1e-9)


def test_fit_rate_examples():
    fit = fit_rate([(t, math.exp(-2 * t)) for t in (1, 2, 3)])
    assert fit.slope == pytest.approx(-2) and fit.r2 == pytest.approx(1)
    fit = fit_rate([(math.log(N), N**-0.5) for N in (8, 16, 32, 64)])
    assert fit.slope == pytest.approx(-0.5)
    fit = fit_rate([(x, 0.3) for x in (1, 2, 3)])
    assert fit.slope == 0 and 0 <= fit.r2 <= 1


def test_fit_rate_errors():
    with pytest.raises(PreconditionError):
        fit_rate([(1, 0.1), (2, 0.2)])
    with pytest.raises(PreconditionError):
        fit_rate([(1, 0.1), (2, 0.0), (3, 0.2)])
    with pytest.raises(PreconditionError):
        fit_rate([(1, 0.1), (2, -0.1), (3, 0.2)])


ZERO = """
[model]
name = zero
x0 = {c}
[dynamics]
t = 1
n = 2
N = 3
[estimator]
algorithm = {alg}
observable = x
reference = {ref}
[execution]
seed = 4
replications = 3
"""


@pytest.mark.parametrize("alg", ["EA", "MCA", "AEA", "C_AEA"])
def test_estimate_mse_zero_dynamics(alg):
    cfg = parse_config_text(ZERO.format(c=2.0, alg=alg, ref=2.0))
    assert estimate_mse(cfg).mse == 0
    assert estimate_mse(cfg, reference=3.0).mse == 1


def test_estimate_mse_needs_two_replications():
    cfg = parse_config_text(ZERO.format(c=2.0, alg="MCA", ref=2.0))
    with pytest.raises(PreconditionError):
        estimate_mse(cfg, R=1)


def test_chaos_error_no_interaction_is_unbiased():
    model = linear_model(1.0, 0.0, 1.0)
    pts = chaos_error(model, TimeGrid(10, 1.0), [4, 8, 16], R=50, seed=3, observable=coordinate(0))
    for p in pts:
        assert abs(p.weak_bias) <= 3 * p.weak_stderr + 1e-15
        assert p.strong_error == 0.0


def test_chaos_error_shrinks_with_N():
    pts = chaos_error(linear_model(1.0, 0.5, 1.0), TimeGrid(10, 1.0), [4, 16, 64], R=100, seed=1)
    strong = [p.strong_error for p in pts]
    weak = [p.weak_bias for p in pts]
    assert strong[0] > strong[1] > strong[2]
    assert weak[0] > weak[2]
    with pytest.raises(ConfigurationError):
        chaos_error(polynomial_model([0, 1], 0.1), TimeGrid(10, 1.0), [4, 8, 16], R=2)


def test_invariant_samples_and_decay():
    model = linear_model(1.0, 0.5, 1.0)
    z = invariant_samples(model, 20_000, seed=2)
    assert abs(z.var() - 0.5) < 0.03
    pts = w2_decay(model, [0.5, 2.0, 4.0], N=128, M=4, n=20, seed=2)
    assert pts[0][1] > pts[1][1] > pts[2][1]


def test_self_interacting_bias_does_not_grow_with_time():
    from ergodic_mkv.dynamics import SELF, ParticleSchedule, simulate

    model = linear_model(1.0, 0.5, 1.0)
    M = 4096
    biases, errs = [], []
    for t in (5.0, 10.0, 20.0):
        cloud, _ = simulate(model, TimeGrid(20, t), M, ParticleSchedule.constant(1), SELF, seed=6, fast=True)
        x2 = cloud.states[:, 0, 0] ** 2
        biases.append(abs(x2.mean() - invariant_moment(1.0, 0.5, 2)))
        errs.append(x2.std() / math.sqrt(M))
    for early, late, err in zip(biases, biases[1:], errs[1:]):
        assert late <= early + 3 * err
