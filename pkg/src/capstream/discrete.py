"""Discrete SH_l samplers for streams of unit-weight elements.

An element of key x gets the score Hash(b, x), where the bucket b is drawn
uniformly from {0, ..., l-1}. With l = 1 every element of a key has the same
score and the sampler is distinct (reservoir) sampling; with l = INF every
element gets an independent uniform score, which is classic sample-and-hold.
A key is cached at its first element scoring below the threshold and counts
every element from then on.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping

from .core import (
    INF,
    InputError,
    KeyHasher,
    RandomSource,
    format_float,
    key_id,
    make_draws,
    parse_float,
)


@dataclass(frozen=True)
class DiscreteConfig:
    """Sampler parameters.

    Exactly one of ``tau`` (fixed threshold) and ``k`` (fixed size) is set.
    ``randomness`` is "fresh" (sequential draws) or "keyed" (draws are a
    function of key and element ordinal, see :class:`core.KeyedDraws`).
    """

    ell: float
    tau: float | None = None
    k: int | None = None
    seed: int = 0
    hash_seed: int | None = None
    randomness: str = "fresh"

    def __post_init__(self):
        if self.ell != INF and (self.ell < 1 or int(self.ell) != self.ell):
            raise ValueError("ell must be a positive integer or INF")
        if (self.tau is None) == (self.k is None):
            raise ValueError("set exactly one of tau and k")
        if self.tau is not None and not 0 < self.tau <= 1:
            raise ValueError("tau must lie in (0, 1]")
        if self.k is not None and self.k < 1:
            raise ValueError("k must be at least 1")

    @property
    def mode(self) -> str:
        return "tau" if self.tau is not None else "k"

    def hasher(self) -> KeyHasher:
        if self.hash_seed is not None:
            return KeyHasher(self.hash_seed)
        return RandomSource(self.seed).hasher()


@dataclass(frozen=True)
class DiscreteSampleEntry:
    key: Hashable
    count: int
    seed: float | None = None


@dataclass
class DiscreteSample:
    ell: float
    tau: float
    counts: dict
    k: int | None = None
    mode: str = "tau"
    seeds: dict | None = field(default=None, repr=False)

    @property
    def entries(self) -> dict:
        seeds = self.seeds or {}
        return {x: DiscreteSampleEntry(x, c, seeds.get(x)) for x, c in self.counts.items()}

    def __len__(self):
        return len(self.counts)

    def dumps(self) -> str:
        ell = "inf" if self.ell == INF else str(int(self.ell))
        lines = [
            f"#shl-discrete ell={ell} mode={self.mode} tau={format_float(self.tau)} k={self.k or 0}"
        ]
        lines += [f"{x}\t{c}" for x, c in self.counts.items()]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "DiscreteSample":
        lines = text.splitlines()
        head = _parse_header(lines[0], "#shl-discrete")
        counts = {}
        for line in lines[1:]:
            if line and not line.startswith("#"):
                key, _, c = line.rpartition("\t")
                counts[key] = int(c)
        k = int(head["k"]) or None
        ell = parse_float(head["ell"])
        ell = ell if ell == INF else int(ell)
        return cls(ell, parse_float(head["tau"]), counts, k, head["mode"])


def _parse_header(line: str, tag: str) -> dict:
    parts = line.split()
    if not parts or parts[0] != tag:
        raise InputError(f"expected a {tag} header")
    return dict(p.split("=", 1) for p in parts[1:])


def make_scorer(ell: float, hasher: KeyHasher, draws):
    """Return (score, rescore) closures for the discrete element score.

    ``rescore(key, c)`` scores the element that becomes the first counted
    one once the key's count drops to c.
    """
    if ell == 1:
        bucket0 = hasher.bucket

        def score(x):
            return bucket0(0, x)

        def rescore(x, c):
            return bucket0(0, x)

        return score, rescore

    if ell == INF:
        return draws.next, draws.earlier

    ell = int(ell)
    top = ell - 1
    bucket = hasher.bucket
    nxt, earlier = draws.next, draws.earlier

    def score(x):
        b = int(ell * nxt(x))
        return bucket(b if b < ell else top, x)

    def rescore(x, c):
        b = int(ell * earlier(x, c))
        return bucket(b if b < ell else top, x)

    return score, rescore


def score_element_discrete(key, ell, hasher: KeyHasher, draws) -> float:
    return make_scorer(ell, hasher, draws)[0](key)


class DiscreteSampler:
    """Streaming discrete SH_l sampler (fixed threshold or fixed size)."""

    def __init__(self, config: DiscreteConfig):
        self.config = config
        self.ell = config.ell
        self.hasher = config.hasher()
        self.draws = make_draws(config.randomness, RandomSource(config.seed), self.hasher)
        self._score, self._rescore = make_scorer(config.ell, self.hasher, self.draws)
        # ell=1 never consumes draws, so keyed ordinals need no bookkeeping
        self._tick = self.draws.keyed and config.ell != 1
        self.counts: dict = {}
        self.seeds: dict = {}
        self._heap: list = []
        self.tau = config.tau if config.tau is not None else 1.0
        self.evictions = 0

    def process(self, stream: Iterable[tuple]) -> "DiscreteSampler":
        """Consume (key, weight) pairs; every weight must be exactly 1."""

        def keys():
            for x, w in stream:
                if w != 1:
                    raise InputError(f"discrete sampling needs unit weights, got {w!r}")
                yield x

        return self.process_keys(keys())

    def process_keys(self, keys: Iterable) -> "DiscreteSampler":
        if self.config.tau is not None:
            self._run_fixed_tau(keys)
        else:
            self._run_fixed_k(keys)
        return self

    def _run_fixed_tau(self, keys):
        counts = self.counts
        score = self._score
        tau = self.tau
        tick = self._tick
        seen = self.draws._seen if tick else None
        for x in keys:
            if x in counts:
                counts[x] += 1
                if tick:
                    seen[x] += 1
            elif score(x) < tau:
                counts[x] = 1

    def _run_fixed_k(self, keys):
        counts = self.counts
        seeds = self.seeds
        heap = self._heap
        score, rescore = self._score, self._rescore
        push, pop = heapq.heappush, heapq.heappop
        k = self.config.k
        tau = self.tau
        tick = self._tick
        seen = self.draws._seen if tick else None
        evictions = 0
        for x in keys:
            if x in counts:
                counts[x] += 1
                if tick:
                    seen[x] += 1
                continue
            s = score(x)
            if s >= tau:
                continue
            counts[x] = 1
            seeds[x] = s
            push(heap, (-s, -key_id(x), x))
            while len(counts) > k:
                _, negid, y = pop(heap)
                tau = seeds[y]
                c = counts[y]
                while True:
                    c -= 1
                    if c == 0:
                        break
                    sy = rescore(y, c)
                    if sy < tau:
                        break
                if c == 0:
                    del counts[y]
                    del seeds[y]
                    evictions += 1
                else:
                    counts[y] = c
                    seeds[y] = sy
                    push(heap, (-sy, negid, y))
        self.tau = tau
        self.evictions += evictions

    def result(self) -> DiscreteSample:
        cfg = self.config
        return DiscreteSample(
            ell=self.ell,
            tau=self.tau,
            counts=dict(self.counts),
            k=cfg.k,
            mode=cfg.mode,
            seeds=dict(self.seeds) if cfg.k is not None else None,
        )


def sample_fixed_tau_discrete(stream: Iterable[tuple], config: DiscreteConfig) -> DiscreteSample:
    if config.tau is None:
        raise ValueError("fixed-threshold sampling needs tau")
    return DiscreteSampler(config).process(stream).result()


def sample_fixed_k_discrete(stream: Iterable[tuple], config: DiscreteConfig) -> DiscreteSample:
    if config.k is None:
        raise ValueError("fixed-size sampling needs k")
    return DiscreteSampler(config).process(stream).result()


def sample_discrete(keys: Iterable, config: DiscreteConfig) -> DiscreteSample:
    """Sample a stream given as bare keys (each element has weight 1)."""
    return DiscreteSampler(config).process_keys(keys).result()


def check_counts(sample: DiscreteSample, weights: Mapping) -> None:
    """Assert 1 <= c_x <= w_x for every sampled key."""
    for x, c in sample.counts.items():
        if not 1 <= c <= weights[x]:
            raise AssertionError(f"count {c} of {x!r} outside [1, {weights[x]}]")


def expected_inclusion_sh(w: int, tau: float) -> float:
    """Classic sample-and-hold inclusion probability 1 - (1 - tau)^w."""
    return -math.expm1(w * math.log1p(-tau)) if tau < 1 else 1.0
