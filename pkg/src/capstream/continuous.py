"""Continuous SH_l samplers for streams with arbitrary positive weights.

Each key has a base hash KeyBase(x) = Hash(x)/l. An element (x, w) draws
v ~ Exp[w]; its score is KeyBase(x) when v <= 1/l and v otherwise. A cached
key's count accumulates the weight of every element after the point where
the key entered, measured on the continuous weight line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Iterable, Mapping

from .core import (
    INF,
    InputError,
    KeyHasher,
    RandomSource,
    check_weight,
    format_float,
    key_id,
    make_draws,
    parse_float,
)
from .discrete import _parse_header


@dataclass(frozen=True)
class ContinuousConfig:
    """Sampler parameters; exactly one of ``tau`` and ``k`` is set.

    ``delta`` is the batch eviction fraction: each eviction event removes
    ceil(delta * k) keys (one key when delta = 0).
    """

    ell: float
    tau: float | None = None
    k: int | None = None
    delta: float = 0.0
    seed: int = 0
    hash_seed: int | None = None
    randomness: str = "fresh"

    def __post_init__(self):
        if not self.ell > 0:
            raise ValueError("ell must be positive")
        if (self.tau is None) == (self.k is None):
            raise ValueError("set exactly one of tau and k")
        if self.tau is not None and not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.k is not None and self.k < 1:
            raise ValueError("k must be at least 1")
        if not 0 <= self.delta < 1:
            raise ValueError("delta must lie in [0, 1)")

    @property
    def mode(self) -> str:
        return "tau" if self.tau is not None else "k"

    def hasher(self) -> KeyHasher:
        if self.hash_seed is not None:
            return KeyHasher(self.hash_seed)
        return RandomSource(self.seed).hasher()


@dataclass(frozen=True)
class ContinuousSampleEntry:
    key: Hashable
    count: float
    key_base: float


@dataclass
class ContinuousSample:
    ell: float
    tau: float
    counts: dict
    k: int | None = None
    mode: str = "tau"
    hash_seed: int | None = None

    def __len__(self):
        return len(self.counts)

    @property
    def entries(self) -> dict:
        h = KeyHasher(self.hash_seed or 0)
        return {
            x: ContinuousSampleEntry(x, c, h.unit(x) / self.ell) for x, c in self.counts.items()
        }

    def dumps(self) -> str:
        lines = [
            f"#shl-continuous ell={format_float(self.ell)} mode={self.mode} "
            f"tau={format_float(self.tau)} k={self.k or 0}"
        ]
        lines += [f"{x}\t{format_float(c)}" for x, c in self.counts.items()]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "ContinuousSample":
        lines = text.splitlines()
        head = _parse_header(lines[0], "#shl-continuous")
        counts = {}
        for line in lines[1:]:
            if line and not line.startswith("#"):
                key, _, c = line.rpartition("\t")
                counts[key] = float(c)
        k = int(head["k"]) or None
        return cls(parse_float(head["ell"]), parse_float(head["tau"]), counts, k, head["mode"])


def score_element_continuous(key, w: float, ell: float, hasher: KeyHasher, u: float) -> float:
    """Score of one element given its uniform draw u (v = -ln(1-u)/w)."""
    v = -math.log1p(-u) / w
    if v <= 1.0 / ell:
        return hasher.unit(key) / ell
    return v


class ContinuousSampler:
    """Streaming continuous SH_l sampler (fixed threshold or fixed size)."""

    def __init__(self, config: ContinuousConfig):
        self.config = config
        self.ell = float(config.ell)
        self.hasher = config.hasher()
        source = RandomSource(config.seed)
        self.draws = make_draws(config.randomness, source, self.hasher)
        self._evict_rng = source.rng("eviction-draws")
        self.counts: dict = {}
        self.tau = float(config.tau) if config.tau is not None else INF
        self.evictions = 0
        self.eviction_events = 0
        k = config.k
        self._batch = 1 if k is None else max(1, math.ceil(config.delta * k))

    def key_base(self, key) -> float:
        return self.hasher.unit(key) / self.ell

    def process(self, stream: Iterable[tuple]) -> "ContinuousSampler":
        if self.config.tau is not None:
            self._run_fixed_tau(stream)
        else:
            self._run_fixed_k(stream)
        return self

    def _run_fixed_tau(self, stream):
        counts = self.counts
        nxt = self.draws.next
        log1p = math.log1p
        unit = self.hasher.unit
        ell = self.ell
        tau = self.tau
        rate = max(tau, 1.0 / ell)
        # admission also needs Hash(x) < tau * l when tau < 1/l
        gate = tau * ell if tau * ell < 1.0 else None
        for x, w in stream:
            if not (w > 0 and w < INF):
                check_weight(w)
            u = nxt(x)
            if x in counts:
                counts[x] += w
                continue
            delta = -log1p(-u) / rate
            if delta < w and (gate is None or unit(x) < gate):
                counts[x] = w - delta

    def _run_fixed_k(self, stream):
        counts = self.counts
        nxt = self.draws.next
        log1p = math.log1p
        unit = self.hasher.unit
        ell = self.ell
        inv_ell = 1.0 / ell
        k = self.config.k
        tau = self.tau
        for x, w in stream:
            if not (w > 0 and w < INF):
                check_weight(w)
            u = nxt(x)
            if x in counts:
                counts[x] += w
                continue
            if tau == INF:
                counts[x] = w
            else:
                delta = -log1p(-u) / (tau if tau > inv_ell else inv_ell)
                if delta >= w:
                    continue
                if tau * ell <= 1.0 and unit(x) >= tau * ell:
                    continue
                counts[x] = w - delta
            if len(counts) > k:
                self.tau = tau
                self._evict()
                tau = self.tau
        self.tau = tau

    def _evict(self):
        """One eviction event on an overfull cache (see :func:`evict_batch`)."""
        tau, evicted = evict_batch(
            self.counts, self.tau, self.ell, self._batch, self._evict_rng, self.hasher
        )
        self.tau = tau
        self.evictions += len(evicted)
        self.eviction_events += 1

    def result(self) -> ContinuousSample:
        cfg = self.config
        return ContinuousSample(
            ell=self.ell,
            tau=self.tau,
            counts=dict(self.counts),
            k=cfg.k,
            mode=cfg.mode,
            hash_seed=self.hasher.seed,
        )


def evict_batch(counts: dict, tau: float, ell: float, n_evict: int, rng, hasher: KeyHasher):
    """Lower the threshold until n_evict cached keys drop out.

    Every cached key gets fresh u, r ~ U[0,1) and the threshold z at which it
    would leave the sample: z = min(tau*u, -ln(1-r)/c), replaced by KeyBase
    when z <= 1/l. The n_evict keys with the largest z are evicted and the
    new threshold is the smallest of their z values. Survivors whose first
    counted point is thinned away (u > max(tau', 1/l)/tau) lose an Exp
    amount of count at the new rate. ``counts`` is updated in place.

    Returns (new tau, list of evicted keys).
    """
    inv_ell = 1.0 / ell
    rnd = rng.random
    log1p = math.log1p
    unit = hasher.unit
    zs = []
    for x, c in counts.items():
        u = rnd()
        e = -log1p(-rnd())
        z = e / c
        if tau != INF and tau * u < z:
            z = tau * u
        if z <= inv_ell:
            z = unit(x) * inv_ell
        zs.append((z, key_id(x), x, u, e))
    zs.sort(reverse=True)
    n_evict = min(n_evict, len(zs))
    new_tau = zs[n_evict - 1][0]
    evicted = [t[2] for t in zs[:n_evict]]
    for x in evicted:
        del counts[x]
    rate = new_tau if new_tau > inv_ell else inv_ell
    cut = 0.0 if tau == INF else rate / tau
    for z, _, x, u, e in zs[n_evict:]:
        if u > cut:
            c = counts[x] - e / rate
            if not c > 0:
                raise AssertionError(f"eviction left a nonpositive count for {x!r}")
            counts[x] = c
    return new_tau, evicted


def sample_fixed_tau_continuous(stream: Iterable[tuple], config: ContinuousConfig) -> ContinuousSample:
    if config.tau is None:
        raise ValueError("fixed-threshold sampling needs tau")
    return ContinuousSampler(config).process(stream).result()


def sample_fixed_k_continuous(stream: Iterable[tuple], config: ContinuousConfig) -> ContinuousSample:
    if config.k is None:
        raise ValueError("fixed-size sampling needs k")
    return ContinuousSampler(config).process(stream).result()


def check_counts(sample: ContinuousSample, weights: Mapping) -> None:
    """Assert 0 < c_x <= w_x for every sampled key."""
    for x, c in sample.counts.items():
        if not 0 < c <= weights[x] * (1 + 1e-12):
            raise AssertionError(f"count {c} of {x!r} outside (0, {weights[x]}]")


__all__ = [
    "ContinuousConfig",
    "ContinuousSample",
    "ContinuousSampleEntry",
    "ContinuousSampler",
    "InputError",
    "evict_batch",
    "sample_fixed_k_continuous",
    "sample_fixed_tau_continuous",
    "score_element_continuous",
]
