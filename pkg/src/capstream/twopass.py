"""Two-pass sampling with mergeable summaries.

Pass I finds the sampled keys from element scores: a key's seed is the
minimum score over its elements, and the sample is either the keys with
seed < tau or the k keys of smallest seed, with tau the (k+1)-st seed. Pass II
sums the exact weights of the sampled keys.

Element scores are a pure function of (hash seed, key, element ordinal
within the key), so shards that split the stream by key produce summaries
whose merge is bit-identical to the unsharded run. When elements of one key
may land on different shards, give each shard a distinct ``shard`` number;
the merged sample is then still a valid sample but no longer equal to the
unsharded one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping

import numpy as np

from .core import (
    INF,
    InputError,
    KeyedDraws,
    KeyHasher,
    check_weight,
    format_float,
    key_id,
    parse_float,
)
from .discrete import make_scorer

SCHEMES = ("discrete", "continuous")


@dataclass(frozen=True)
class PassOneConfig:
    scheme: str
    ell: float
    tau: float | None = None
    k: int | None = None
    hash_seed: int = 0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if (self.tau is None) == (self.k is None):
            raise ValueError("set exactly one of tau and k")
        if self.scheme == "discrete" and self.ell != INF and int(self.ell) != self.ell:
            raise ValueError("discrete ell must be an integer or INF")

    @property
    def mode(self) -> str:
        return "tau" if self.tau is not None else "k"

    @property
    def supremum(self) -> float:
        """Score supremum: the threshold of a fixed-size sample that never filled."""
        return 1.0 if self.scheme == "discrete" else INF


@dataclass
class PassOneSummary:
    config: PassOneConfig
    entries: dict = field(default_factory=dict)
    tau: float = INF
    tau_key: Hashable | None = None

    @property
    def keys(self) -> set:
        return set(self.entries)

    def __eq__(self, other):
        if not isinstance(other, PassOneSummary):
            return NotImplemented
        return (
            self.config == other.config
            and self.tau == other.tau
            and self.tau_key == other.tau_key
            and self.entries == other.entries
        )

    def dumps(self) -> str:
        c = self.config
        size = f"k={c.k}" if c.mode == "k" else f"tau={format_float(c.tau)}"
        head = (
            f"#pass1 scheme={c.scheme[0]} ell={format_float(float(c.ell))} mode={c.mode} "
            f"{size} hashseed={c.hash_seed}"
        )
        lines = [head]
        if c.mode == "k":
            lines.append(f"#threshold\t{format_float(self.tau)}")
            if self.tau_key is not None:
                lines.append(f"#taukey\t{self.tau_key}\t{format_float(self.tau)}")
        e = self.entries
        order = sorted(e, key=lambda z: (e[z], key_id(z)))
        lines += [f"{x}\t{format_float(e[x])}" for x in order]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "PassOneSummary":
        lines = text.splitlines()
        parts = lines[0].split()
        if not parts or parts[0] != "#pass1":
            raise InputError("expected a #pass1 header")
        head = dict(p.split("=", 1) for p in parts[1:])
        scheme = {"d": "discrete", "c": "continuous"}[head["scheme"]]
        ell = parse_float(head["ell"])
        if scheme == "discrete" and ell != INF:
            ell = int(ell)
        if head["mode"] == "k":
            config = PassOneConfig(scheme, ell, k=int(head["k"]), hash_seed=int(head["hashseed"]))
        else:
            config = PassOneConfig(
                scheme, ell, tau=parse_float(head["tau"]), hash_seed=int(head["hashseed"])
            )
        summary = cls(config, tau=config.tau if config.mode == "tau" else config.supremum)
        for line in lines[1:]:
            if line.startswith("#threshold\t"):
                summary.tau = parse_float(line.split("\t")[1])
            elif line.startswith("#taukey\t"):
                _, key, s = line.split("\t")
                summary.tau_key = key
                summary.tau = parse_float(s)
            elif line and not line.startswith("#"):
                key, _, s = line.rpartition("\t")
                summary.entries[key] = parse_float(s)
        return summary


def _element_scorer(config: PassOneConfig, shard: int = 0):
    """Return score(key, weight) for the keyed element score."""
    hasher = KeyHasher(config.hash_seed)
    draws = KeyedDraws(hasher, shard)
    ell = config.ell
    if config.scheme == "discrete":
        score, _ = make_scorer(ell, hasher, draws)

        def discrete_score(x, w):
            if w != 1:
                raise InputError(f"discrete sampling needs unit weights, got {w!r}")
            return score(x)

        return discrete_score

    inv_ell = 1.0 / ell
    nxt = draws.next
    unit = hasher.unit
    log1p = math.log1p

    def continuous_score(x, w):
        if not (w > 0 and w < INF):
            check_weight(w)
        v = -log1p(-nxt(x)) / w
        return unit(x) * inv_ell if v <= inv_ell else v

    return continuous_score


class PassOne:
    """Streaming pass I; feed elements with :meth:`process`, then :meth:`summary`."""

    def __init__(self, config: PassOneConfig, shard: int = 0):
        self.config = config
        self._score = _element_scorer(config, shard)
        self.entries: dict = {}
        self.tau = config.tau if config.mode == "tau" else config.supremum
        self.tau_key = None

    def process(self, stream: Iterable[tuple]) -> "PassOne":
        entries = self.entries
        score = self._score
        tau = self.tau
        k = self.config.k
        fixed_k = k is not None
        for x, w in stream:
            s = score(x, w)
            old = entries.get(x)
            if old is not None:
                if s < old:
                    entries[x] = s
            elif s < tau:
                entries[x] = s
                if fixed_k and len(entries) > k:
                    y = max(entries, key=lambda z: (entries[z], key_id(z)))
                    tau = entries.pop(y)
                    self.tau_key = y
        self.tau = tau
        return self

    def summary(self) -> PassOneSummary:
        return PassOneSummary(self.config, dict(self.entries), self.tau, self.tau_key)


def pass_one(stream: Iterable[tuple], config: PassOneConfig, shard: int = 0) -> PassOneSummary:
    return PassOne(config, shard).process(stream).summary()


def empty_summary(config: PassOneConfig) -> PassOneSummary:
    tau = config.tau if config.mode == "tau" else config.supremum
    return PassOneSummary(config, {}, tau, None)


def merge_pass_one(a: PassOneSummary, b: PassOneSummary) -> PassOneSummary:
    """Union of two pass-I summaries over the same configuration."""
    if a.config != b.config:
        raise ValueError("cannot merge summaries with different parameters or seeds")
    pool = dict(a.entries)
    for x, s in b.entries.items():
        if x not in pool or s < pool[x]:
            pool[x] = s
    cfg = a.config
    if cfg.mode == "tau":
        return PassOneSummary(cfg, pool, cfg.tau, None)
    # the (k+1)-st entries take part so that the merge stays exact
    for src in (a, b):
        x = src.tau_key
        if x is not None and (x not in pool or src.tau < pool[x]):
            pool[x] = src.tau
    order = sorted(pool, key=lambda z: (pool[z], key_id(z)))
    k = cfg.k
    entries = {x: pool[x] for x in order[:k]}
    if len(order) > k:
        y = order[k]
        return PassOneSummary(cfg, entries, pool[y], y)
    return PassOneSummary(cfg, entries, cfg.supremum, None)


def pass_two(stream: Iterable[tuple], keys: Iterable) -> dict:
    """Exact weights of the given keys."""
    weights = {x: 0.0 for x in keys}
    for x, w in stream:
        if x in weights:
            weights[x] += w
    return weights


def merge_pass_two(a: Mapping, b: Mapping) -> dict:
    out = dict(a)
    for x, w in b.items():
        out[x] = out.get(x, 0.0) + w
    return out


@dataclass
class TwoPassSample:
    """Sampled keys with exact weights plus the threshold used to estimate."""

    scheme: str
    ell: float
    tau: float
    weights: dict

    def estimate(self, f, segment=None) -> float:
        from .core import ALL
        from .continuous_est import estimate_continuous_2pass
        from .discrete_est import estimate_discrete_2pass

        segment = ALL if segment is None else segment
        if self.scheme == "discrete":
            return estimate_discrete_2pass(self.weights, f, segment, ell=self.ell, tau=self.tau)
        return estimate_continuous_2pass(self.weights, f, segment, tau=self.tau, ell=self.ell)


def two_pass(stream_factory, config: PassOneConfig) -> TwoPassSample:
    """Run both passes; ``stream_factory()`` must return a fresh iterable each call."""
    s1 = pass_one(stream_factory(), config)
    weights = pass_two(stream_factory(), s1.entries)
    return TwoPassSample(config.scheme, config.ell, s1.tau, weights)


# ---------------------------------------------------------------------------
# vectorized pass I for integer-keyed streams held in memory


def keyed_seeds(keys: np.ndarray, scheme: str, ell: float, hasher: KeyHasher, weights=None):
    """Per-key seeds of an integer-keyed stream, computed with numpy.

    Returns (unique keys, total weights, seeds). Scores agree with the
    streaming :class:`PassOne` up to the last-bit rounding of log1p.
    """
    keys = np.asarray(keys)
    n = len(keys)
    order = np.argsort(keys, kind="stable")
    sk = keys[order]
    starts = np.flatnonzero(np.r_[True, sk[1:] != sk[:-1]])
    group = np.cumsum(np.r_[True, sk[1:] != sk[:-1]]) - 1
    ordinal = np.arange(n) - starts[group] + 1
    kids = sk.astype(np.int64).view(np.uint64)
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)[order]
    if scheme == "discrete":
        if ell == 1:
            score = hasher.unit_array(kids)
        else:
            u = hasher.element_array(kids, ordinal)
            if ell == INF:
                score = u
            else:
                b = np.minimum(np.floor(u * ell), ell - 1).astype(np.uint64)
                score = hasher.bucket_array(b, kids)
    else:
        u = hasher.element_array(kids, ordinal)
        v = -np.log1p(-u) / w
        inv_ell = 1.0 / ell
        score = np.where(v <= inv_ell, hasher.unit_array(kids) * inv_ell, v)
    seeds = np.minimum.reduceat(score, starts)
    totals = np.add.reduceat(w, starts)
    return sk[starts], totals, seeds


def bottom_k(ukeys: np.ndarray, seeds: np.ndarray, k: int, supremum: float):
    """Indices of the k smallest seeds (ties by key id) and the (k+1)-st seed."""
    if len(seeds) <= k:
        return np.arange(len(seeds)), supremum
    kids = ukeys.astype(np.int64).view(np.uint64)
    part = np.argpartition(seeds, k)[: k + 1]
    if np.count_nonzero(seeds == seeds[part].max()) > 1:
        # an exact tie at the boundary: fall back to a full ordered sort
        part = np.lexsort((kids, seeds))[: k + 1]
    else:
        part = part[np.lexsort((kids[part], seeds[part]))]
    return part[:k], float(seeds[part[k]])
