import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from capstream.core import INF, InputError, KeyedDraws, KeyHasher, key_id
from capstream.discrete import (
    DiscreteConfig,
    DiscreteSample,
    DiscreteSampler,
    check_counts,
    make_scorer,
    sample_discrete,
    sample_fixed_k_discrete,
    sample_fixed_tau_discrete,
)
from capstream.discrete_est import DiscreteCoefficients


def brute_force_scores(keys, ell, hash_seed):
    """Per-key list of keyed element scores, computed without the sampler."""
    h = KeyHasher(hash_seed)
    seen = Counter()
    out = {}
    for x in keys:
        seen[x] += 1
        n = seen[x]
        if ell == 1:
            s = h.bucket(0, x)
        elif ell == INF:
            s = h.element(x, n)
        else:
            b = min(int(ell * h.element(x, n)), ell - 1)
            s = h.bucket(b, x)
        out.setdefault(x, []).append(s)
    return out


def zipf_keys(seed, n_keys=60, alpha=1.4, cap=40):
    rng = np.random.default_rng(seed)
    w = np.minimum(rng.zipf(alpha, n_keys), cap)
    keys = np.repeat(np.arange(n_keys), w)
    return rng.permutation(keys).tolist(), dict(enumerate(w.tolist()))


def test_ell_one_scores_constant_per_key():
    h = KeyHasher(3)
    score, _ = make_scorer(1, h, KeyedDraws(h))
    assert len({score("a") for _ in range(20)}) == 1


def test_ell_four_at_most_four_scores():
    h = KeyHasher(3)
    score, _ = make_scorer(4, h, KeyedDraws(h))
    vals = {score("a") for _ in range(500)}
    assert 1 < len(vals) <= 4


def test_ell_inf_scores_uniform():
    h = KeyHasher(5)
    score, _ = make_scorer(INF, h, KeyedDraws(h))
    vals = [score("a") for _ in range(10_000)]
    assert stats.kstest(vals, "uniform").pvalue > 0.01


def test_tau_one_keeps_everything():
    s = sample_fixed_tau_discrete([("a", 1)] * 3, DiscreteConfig(ell=3, tau=1.0))
    assert s.counts == {"a": 3}


def test_weights_must_be_unit():
    with pytest.raises(InputError):
        sample_fixed_tau_discrete([("a", 2.0)], DiscreteConfig(ell=3, tau=0.5))


def test_config_validation():
    with pytest.raises(ValueError):
        DiscreteConfig(ell=2.5, tau=0.5)
    with pytest.raises(ValueError):
        DiscreteConfig(ell=2, tau=0.5, k=3)
    with pytest.raises(ValueError):
        DiscreteConfig(ell=2, tau=1.5)
    with pytest.raises(ValueError):
        DiscreteConfig(ell=2, k=0)


@pytest.mark.parametrize("tau", [0.05, 0.3])
def test_ell_one_counts_are_exact(tau):
    keys, w = zipf_keys(1)
    s = sample_discrete(keys, DiscreteConfig(ell=1, tau=tau, seed=2))
    assert s.counts and all(c == w[x] for x, c in s.counts.items())


def test_ell_inf_unit_key_inclusion_rate():
    # one sampler over many disjoint unit keys: each is an independent trial
    tau, n = 0.2, 10_000
    s = sample_discrete(range(n), DiscreteConfig(ell=INF, tau=tau, seed=4))
    sd = math.sqrt(n * tau * (1 - tau))
    assert abs(len(s) - n * tau) < 3 * sd


@pytest.mark.parametrize("ell", [1, 3, INF])
def test_fixed_tau_inclusion_matches_phi(ell):
    w, tau, n = 6, 0.15, 6000
    keys = [x for x in range(n) for _ in range(w)]
    s = sample_discrete(keys, DiscreteConfig(ell=ell, tau=tau, seed=8))
    p = float(DiscreteCoefficients.for_counts(ell, tau, w).Phi(w))
    assert abs(len(s) - n * p) < 3 * math.sqrt(n * p * (1 - p))


def test_fixed_k_small_population():
    keys, w = zipf_keys(2, n_keys=10)
    s = sample_fixed_k_discrete(((x, 1) for x in keys), DiscreteConfig(ell=5, k=10, seed=1))
    assert s.tau == 1.0
    assert s.counts == w


@pytest.mark.parametrize("ell", [1, 4, 30, INF])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_fixed_k_matches_brute_force_bottom_k(ell, seed):
    keys, w = zipf_keys(seed)
    k = 12
    cfg = DiscreteConfig(ell=ell, k=k, hash_seed=seed + 100, randomness="keyed")
    s = sample_discrete(keys, cfg)
    scores = brute_force_scores(keys, ell, seed + 100)
    order = sorted(scores, key=lambda x: (min(scores[x]), key_id(x)))
    assert set(s.counts) == set(order[:k])
    assert s.tau == min(scores[order[k]])
    for x, c in s.counts.items():
        first = next(i for i, v in enumerate(scores[x]) if v < s.tau)
        assert c == w[x] - first
        assert s.seeds[x] == scores[x][first]
    check_counts(s, w)


def test_ell_one_fixed_k_is_distinct_reservoir():
    keys, w = zipf_keys(5)
    cfg = DiscreteConfig(ell=1, k=15, hash_seed=9)
    s = sample_discrete(keys, cfg)
    h = KeyHasher(9)
    assert set(s.counts) == set(sorted(w, key=h.unit)[:15])


def test_k_one_picks_argmin_seed():
    keys = ["a", "b", "a", "b", "b"]
    cfg = DiscreteConfig(ell=INF, k=1, hash_seed=3, randomness="keyed")
    s = sample_discrete(keys, cfg)
    scores = brute_force_scores(keys, INF, 3)
    assert set(s.counts) == {min(scores, key=lambda x: min(scores[x]))}


def test_fixed_k_tau_decreases():
    keys, _ = zipf_keys(7, n_keys=200)
    cfg = DiscreteConfig(ell=8, k=10, seed=3)
    sampler = DiscreteSampler(cfg)
    taus = [sampler.tau]
    for i in range(0, len(keys), 50):
        sampler.process_keys(keys[i : i + 50])
        taus.append(sampler.tau)
    assert all(a >= b for a, b in zip(taus, taus[1:]))
    assert taus[-1] < 1.0
    assert all(s < sampler.tau for s in sampler.seeds.values())


def test_fixed_k_conditional_count_law():
    """Given tau, a sampled key's count follows the fixed-threshold law.

    Randomized probability integral transform of c_x under phi at the
    realized tau must be uniform.
    """
    w = {"a": 7, "b": 4, "c": 9}
    stream = [x for x in "abcabcacacacbcbaaccc"]
    assert Counter(stream) == w
    ell, k = 3, 2
    rng = np.random.default_rng(0)
    pits = []
    for r in range(3000):
        s = sample_discrete(stream, DiscreteConfig(ell=ell, k=k, seed=r))
        co = DiscreteCoefficients.for_counts(ell, s.tau, 9)
        for x, c in s.counts.items():
            i = w[x] - c + 1  # first counted index
            Phi = co.Phi(w[x])
            # law of c given sampled: P[c] = phi_{w-c+1} / Phi(w); CDF in c
            lo = (Phi - co.Phi(i)) / Phi
            hi = (Phi - co.Phi(i - 1)) / Phi
            pits.append(lo + rng.random() * (hi - lo))
    assert stats.kstest(pits, "uniform").pvalue > 0.01


def test_determinism():
    keys, _ = zipf_keys(3)
    cfg = DiscreteConfig(ell=6, k=10, seed=11)
    assert sample_discrete(keys, cfg).counts == sample_discrete(keys, cfg).counts


def test_serialization_roundtrip():
    keys, _ = zipf_keys(3)
    for cfg in [DiscreteConfig(ell=6, k=10, seed=1), DiscreteConfig(ell=INF, tau=0.3, seed=1)]:
        s = sample_discrete([f"k{x}" for x in keys], cfg)
        text = s.dumps()
        assert text.startswith(f"#shl-discrete ell={'inf' if cfg.ell == INF else cfg.ell} mode={cfg.mode}")
        back = DiscreteSample.loads(text)
        assert back.counts == s.counts and back.tau == s.tau and back.ell == s.ell
        assert back.mode == s.mode and back.k == s.k


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.integers(0, 15), min_size=1, max_size=200),
    st.sampled_from([1, 2, 5, INF]),
    st.integers(1, 6),
    st.integers(0, 2**32),
)
def test_count_bounds_property(keys, ell, k, seed):
    w = Counter(keys)
    s = sample_discrete(keys, DiscreteConfig(ell=ell, k=k, seed=seed))
    assert len(s) == min(k, len(w))
    check_counts(s, w)
    if len(w) <= k:
        assert s.counts == dict(w)
