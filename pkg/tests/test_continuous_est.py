import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from capstream.continuous import ContinuousConfig, ContinuousSample, sample_fixed_tau_continuous
from capstream.continuous_est import (
    ContinuousEstimatorContext,
    beta_array,
    beta_continuous,
    cv_bound_one_pass,
    cv_bound_two_pass,
    estimate_continuous_1pass,
    estimate_continuous_2pass,
    inclusion_probability_array,
    inclusion_probability_continuous,
)
from capstream.core import INF, FrequencyFunction, KeySet


def test_inclusion_probability_regimes():
    assert inclusion_probability_continuous(3.0, 0.5, 4.0) == pytest.approx(1 - math.exp(-1.5))
    assert inclusion_probability_continuous(1e6, 0.5, 1.0) == pytest.approx(0.5)
    # tau * l = 1: both branches give 1 - exp(-w/l)
    assert inclusion_probability_continuous(2.0, 0.25, 4.0) == pytest.approx(1 - math.exp(-0.5))
    assert inclusion_probability_continuous(2.0, INF, 4.0) == 1.0
    assert inclusion_probability_continuous(0.0, 0.2, 4.0) == 0.0
    w = np.array([0.0, 1.0, 7.0])
    assert np.allclose(
        inclusion_probability_array(w, 0.1, 3.0), [inclusion_probability_continuous(v, 0.1, 3.0) for v in w]
    )


def test_beta_cap_formula():
    for tau, ell, T in [(0.05, 10.0, 3.0), (0.5, 1.0, 5.0), (0.01, 1000.0, 100.0)]:
        ctx = ContinuousEstimatorContext(tau, ell, FrequencyFunction.cap(T))
        for c in [0.3, T - 1e-9, T, 2 * T]:
            expect = min(T, c) / min(1.0, ell * tau) + (1.0 / tau if c < T else 0.0)
            assert beta_continuous(c, ctx) == pytest.approx(expect)


def test_beta_sum_ppswor_regime():
    ctx = ContinuousEstimatorContext(0.2, 100.0, FrequencyFunction.sum())
    assert beta_continuous(3.5, ctx) == pytest.approx(3.5 + 5.0)
    # with l huge this is the weighted sample-and-hold estimator c + 1/tau
    c = np.array([0.1, 2.0, 40.0])
    assert np.allclose(beta_array(c, 0.2, 1e12, FrequencyFunction.sum()), c + 5.0)


@pytest.mark.parametrize(
    "w,ell,tau,T", [(5.0, 10.0, 0.05, 3.0), (20.0, 10.0, 0.2, 12.0), (3.0, 1.0, 0.5, 1.0), (2.0, 0.5, 0.4, 5.0)]
)
def test_beta_unbiased_by_integration(w, ell, tau, T):
    """E[beta(c) 1{sampled}] computed against the count density equals f(w)."""
    f = FrequencyFunction.cap(T)
    r = max(1 / ell, tau)
    ctx = ContinuousEstimatorContext(tau, ell, f)
    # c = w - y where y has density tau * exp(-r y) on [0, w)
    pts = [w - T] if 0 < w - T < w else None
    val, _ = integrate.quad(lambda y: beta_continuous(w - y, ctx) * tau * math.exp(-r * y), 0, w, points=pts)
    assert val == pytest.approx(f(w), rel=1e-8)
    mass, _ = integrate.quad(lambda y: tau * math.exp(-r * y), 0, w)
    assert mass == pytest.approx(inclusion_probability_continuous(w, tau, ell))


def test_estimate_empty_and_never_full():
    f = FrequencyFunction.cap(5)
    assert estimate_continuous_1pass(ContinuousSample(2.0, 0.3, {}), f) == 0
    s = ContinuousSample(2.0, INF, {"a": 3.0, "b": 9.0}, k=5, mode="k")
    assert estimate_continuous_1pass(s, f) == 8.0
    assert estimate_continuous_1pass(s, f, KeySet(["b"])) == 5.0
    assert estimate_continuous_2pass({}, f, tau=0.3, ell=2.0) == 0
    assert estimate_continuous_2pass({"a": 3.0}, f, tau=INF, ell=2.0) == 3.0
    # always-sampled key
    assert estimate_continuous_2pass({"a": 500.0}, f, tau=1.0, ell=5.0) == pytest.approx(5.0)


def test_table_function_needs_derivative():
    s = ContinuousSample(2.0, 0.3, {"a": 1.0})
    with pytest.raises(ValueError):
        estimate_continuous_1pass(s, FrequencyFunction.table([0, 1, 1]))


def _mc(weights, ell, tau, fs, reps, seed, split=2):
    stream = []
    for r in range(reps):
        for x, w in weights.items():
            stream += [((r, x), w / split)] * split
    s = sample_fixed_tau_continuous(stream, ContinuousConfig(ell=ell, tau=tau, seed=seed))
    one = np.zeros((reps, len(fs)))
    two = np.zeros((reps, len(fs)))
    for j, f in enumerate(fs):
        for (r, x), c in s.counts.items():
            one[r, j] += beta_continuous(c, ContinuousEstimatorContext(tau, ell, f))
            two[r, j] += f(weights[x]) / inclusion_probability_continuous(weights[x], tau, ell)
    return one, two


@pytest.mark.parametrize("ell,tau", [(5.0, 0.2), (5.0, 0.05), (5.0, 1.0), (2.0, 0.5)])
def test_small_dataset_unbiased(ell, tau):
    w = {"a": 1.0, "b": 4.0, "c": 100.0}
    fs = [FrequencyFunction.cap(1), FrequencyFunction.cap(ell), FrequencyFunction.sum()]
    one, two = _mc(w, ell, tau, fs, 20_000, seed=int(ell * 100 + tau * 1000))
    Q = np.array([sum(f(v) for v in w.values()) for f in fs])
    for est in (one, two):
        se = est.std(0) / math.sqrt(len(est))
        assert np.all(np.abs(est.mean(0) - Q) < 4 * se)
    assert np.all(two.var(0) <= one.var(0) * 1.05)


def test_cv_bounds():
    assert cv_bound_two_pass(101, 5, 5) == pytest.approx(math.sqrt(math.e / (math.e - 1) / 100))
    assert cv_bound_two_pass(101, 10, 5) == pytest.approx(math.sqrt(2 * math.e / (math.e - 1) / 100))
    assert cv_bound_one_pass(101) == pytest.approx(math.sqrt((2 * math.e - 1) / (math.e - 1) / 100))
    assert cv_bound_one_pass(101, 0.25) == pytest.approx(2 * cv_bound_one_pass(101))


@settings(max_examples=80)
@given(
    st.floats(1e-4, 1e4),
    st.floats(1e-3, 10),
    st.floats(1e-2, 1e4),
    st.sampled_from(["cap", "sum", "moment"]),
    st.floats(0.1, 1e3),
)
def test_beta_nonnegative(c, tau, ell, kind, T):
    f = {"cap": FrequencyFunction.cap(T), "sum": FrequencyFunction.sum(), "moment": FrequencyFunction.moment(0.7)}[kind]
    assert beta_continuous(c, ContinuousEstimatorContext(tau, ell, f)) >= 0


@settings(max_examples=60)
@given(st.floats(0.01, 1e3), st.floats(1e-3, 10), st.floats(1e-2, 1e3))
def test_inclusion_probability_in_unit_interval_and_monotone(w, tau, ell):
    p = inclusion_probability_continuous(w, tau, ell)
    assert 0 < p <= 1
    assert inclusion_probability_continuous(2 * w, tau, ell) >= p
    assert p <= min(1.0, tau * ell) + 1e-15
