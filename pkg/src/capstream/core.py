"""Shared building blocks: frequency functions, segments, hashing and randomness.

Every sampler in the package draws its randomness from two places:

* a :class:`KeyHasher`, a seeded 64-bit mixer mapping keys (and optionally
  a small integer such as a bucket index or element ordinal) to U[0,1);
* a :class:`RandomSource`, which derives independent, reproducible
  ``random.Random`` / ``numpy`` generators from a master seed and a label.
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Iterable, Iterator, Mapping, Sequence

import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_UNIT = 2.0 ** -53

INF = math.inf


class InputError(ValueError):
    """Raised for malformed stream input (bad weights, bad lines)."""


# ---------------------------------------------------------------------------
# hashing


def mix64(z: int) -> int:
    """splitmix64 finalizer on a 64-bit integer."""
    z = (z + _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def mix64_array(z: np.ndarray) -> np.ndarray:
    """Vectorized :func:`mix64` over a uint64 array (wrapping arithmetic)."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = z + np.uint64(_GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def key_id(key: Hashable) -> int:
    """Canonical 64-bit identifier of a key.

    Integers map to themselves modulo 2**64; strings and bytes go through an
    8-byte blake2b digest. Anything else is hashed through its ``repr``.
    """
    if isinstance(key, (int, np.integer)) and not isinstance(key, bool):
        return int(key) & MASK64
    if isinstance(key, str):
        key = key.encode("utf-8")
    elif not isinstance(key, (bytes, bytearray)):
        key = repr(key).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "big")


def derive_seed(*parts: Any) -> int:
    """Deterministic 64-bit seed from an arbitrary tuple of labels/ints."""
    text = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "big")


class KeyHasher:
    """Seeded hash family mapping keys to U[0,1).

    ``unit(x)`` is Hash(x); ``bucket(b, x)`` is Hash(b, x) and
    ``unit(x) == bucket(0, x)``. ``element(x, i)`` is the draw used for the
    i-th element of key x under keyed randomness; it is independent of the
    bucket family.
    """

    __slots__ = ("seed", "_base_bucket", "_base_elem")

    def __init__(self, seed: int = 0):
        self.seed = int(seed) & MASK64
        self._base_bucket = mix64(self.seed ^ 0x5BD1E995)
        self._base_elem = mix64(self.seed ^ 0x1B873593CC9E2D51)

    def __eq__(self, other):
        return isinstance(other, KeyHasher) and other.seed == self.seed

    def __hash__(self):
        return hash(("KeyHasher", self.seed))

    def __repr__(self):
        return f"KeyHasher(seed={self.seed})"

    # scalar forms
    def bucket_of_id(self, b: int, kid: int) -> float:
        z = mix64(mix64(self._base_bucket ^ kid) ^ (b & MASK64))
        return (z >> 11) * _UNIT

    def bucket(self, b: int, key: Hashable) -> float:
        return self.bucket_of_id(b, key_id(key))

    def unit(self, key: Hashable) -> float:
        return self.bucket_of_id(0, key_id(key))

    def element_of_id(self, kid: int, ordinal: int) -> float:
        z = mix64(mix64(self._base_elem ^ kid) ^ (ordinal & MASK64))
        return (z >> 11) * _UNIT

    def element(self, key: Hashable, ordinal: int) -> float:
        return self.element_of_id(key_id(key), ordinal)

    # vectorized forms over uint64 key identifiers
    def bucket_array(self, b, kids: np.ndarray) -> np.ndarray:
        z = mix64_array(np.uint64(self._base_bucket) ^ np.asarray(kids, dtype=np.uint64))
        z = mix64_array(z ^ np.asarray(b, dtype=np.uint64))
        return (z >> np.uint64(11)).astype(np.float64) * _UNIT

    def unit_array(self, kids: np.ndarray) -> np.ndarray:
        return self.bucket_array(0, kids)

    def element_array(self, kids: np.ndarray, ordinals: np.ndarray) -> np.ndarray:
        z = mix64_array(np.uint64(self._base_elem) ^ np.asarray(kids, dtype=np.uint64))
        z = mix64_array(z ^ np.asarray(ordinals, dtype=np.uint64))
        return (z >> np.uint64(11)).astype(np.float64) * _UNIT


@dataclass(frozen=True)
class RandomSource:
    """Master seed from which per-purpose generators are derived."""

    seed: int = 0

    def derive(self, purpose: str, *index: Any) -> int:
        return derive_seed(self.seed, purpose, *index)

    def rng(self, purpose: str, *index: Any) -> random.Random:
        return random.Random(self.derive(purpose, *index))

    def numpy(self, purpose: str, *index: Any) -> np.random.Generator:
        return np.random.default_rng(self.derive(purpose, *index))

    def hasher(self, purpose: str = "hash", *index: Any) -> KeyHasher:
        return KeyHasher(self.derive(purpose, *index))


# ---------------------------------------------------------------------------
# per-element randomness


class FreshDraws:
    """Independent U[0,1) per call, from one sequential stream.

    Re-scoring an earlier element simply takes a new draw, which has the
    same law as the score that element would have received.
    """

    keyed = False

    def __init__(self, rng: random.Random):
        self._random = rng.random

    def next(self, key: Hashable) -> float:
        return self._random()

    def earlier(self, key: Hashable, back: int) -> float:
        return self._random()


class KeyedDraws:
    """U[0,1) as a pure function of (hash seed, key, element ordinal).

    ``earlier(key, c)`` returns the draw of the element ``c - 1`` places
    before the most recent one, i.e. ordinal ``n - c + 1``. Needs one
    counter per distinct key seen.
    """

    keyed = True

    def __init__(self, hasher: KeyHasher, shard: int = 0):
        self.hasher = hasher
        self._seen: dict = {}
        # shards that may hold elements of the same key must use distinct salts
        self._salt = (int(shard) & 0xFFFFFFFF) << 32

    def next(self, key: Hashable) -> float:
        n = self._seen.get(key, 0) + 1
        self._seen[key] = n
        return self.hasher.element(key, self._salt | n)

    def earlier(self, key: Hashable, back: int) -> float:
        n = self._seen[key]
        return self.hasher.element(key, self._salt | (n - back + 1))


def make_draws(randomness: str, source: RandomSource, hasher: KeyHasher, shard: int = 0):
    if randomness == "fresh":
        return FreshDraws(source.rng("element-draws"))
    if randomness == "keyed":
        return KeyedDraws(hasher, shard)
    raise ValueError(f"unknown randomness mode {randomness!r}")


# ---------------------------------------------------------------------------
# frequency functions


@dataclass(frozen=True)
class FrequencyFunction:
    """A nonnegative function f with f(0) = 0, applied to key frequencies.

    Use the constructors :meth:`cap`, :meth:`moment`, :meth:`distinct`,
    :meth:`sum`, :meth:`table` and :meth:`custom`.
    """

    kind: str
    param: float | None = None
    values: tuple | None = None
    fn: Callable[[float], float] | None = field(default=None, compare=False)
    dfn: Callable[[float], float] | None = field(default=None, compare=False)
    monotone: bool = True

    @classmethod
    def cap(cls, T: float) -> "FrequencyFunction":
        if not T > 0:
            raise ValueError("cap parameter must be positive")
        return cls("cap", float(T))

    @classmethod
    def moment(cls, p: float) -> "FrequencyFunction":
        if not p > 0:
            raise ValueError("moment parameter must be positive")
        return cls("moment", float(p))

    @classmethod
    def distinct(cls) -> "FrequencyFunction":
        return cls("distinct")

    @classmethod
    def sum(cls) -> "FrequencyFunction":
        return cls("sum")

    @classmethod
    def table(cls, values: Sequence[float]) -> "FrequencyFunction":
        """f_i = values[i] for integer i; values[0] must be 0."""
        vals = tuple(values)
        if not vals or vals[0] != 0:
            raise ValueError("table must start with f_0 = 0")
        if any(v < 0 for v in vals):
            raise ValueError("table values must be nonnegative")
        mono = all(a <= b for a, b in zip(vals, vals[1:]))
        return cls("table", values=vals, monotone=mono)

    @classmethod
    def custom(cls, fn, dfn=None, monotone: bool = False) -> "FrequencyFunction":
        return cls("custom", fn=fn, dfn=dfn, monotone=monotone)

    @classmethod
    def parse(cls, spec: str) -> "FrequencyFunction":
        """Parse ``cap:T``, ``sum``, ``distinct`` or ``moment:p``."""
        name, _, arg = spec.strip().partition(":")
        if name == "cap":
            return cls.cap(float(arg))
        if name == "moment":
            return cls.moment(float(arg))
        if name == "sum" and not arg:
            return cls.sum()
        if name == "distinct" and not arg:
            return cls.distinct()
        raise ValueError(f"unknown frequency function {spec!r}")

    @property
    def spec(self) -> str:
        if self.kind in ("cap", "moment"):
            return f"{self.kind}:{self.param:g}"
        return self.kind

    @property
    def has_derivative(self) -> bool:
        return self.kind != "table" and (self.kind != "custom" or self.dfn is not None)

    def __call__(self, w: float) -> float:
        if w <= 0:
            return 0.0
        k = self.kind
        if k == "cap":
            return w if w < self.param else self.param
        if k == "sum":
            return float(w)
        if k == "distinct":
            return w if w < 1.0 else 1.0
        if k == "moment":
            return float(w) ** self.param
        if k == "table":
            i = int(w)
            if i != w:
                raise ValueError("table functions are defined on integers only")
            if i >= len(self.values):
                raise ValueError(f"table has no value for {i}")
            return self.values[i]
        return self.fn(w)

    def derivative(self, c: float) -> float:
        """f'(c); at a kink of cap the right derivative (0) is returned."""
        k = self.kind
        if k == "cap":
            return 1.0 if c < self.param else 0.0
        if k == "sum":
            return 1.0
        if k == "distinct":
            return 1.0 if c < 1.0 else 0.0
        if k == "moment":
            return self.param * float(c) ** (self.param - 1.0)
        if k == "custom" and self.dfn is not None:
            return self.dfn(c)
        raise ValueError(f"{self.spec} has no derivative; the continuous path needs one")

    def array(self, w) -> np.ndarray:
        """Vectorized evaluation."""
        w = np.asarray(w, dtype=np.float64)
        k = self.kind
        if k == "cap":
            out = np.minimum(w, self.param)
        elif k == "sum":
            out = w.copy()
        elif k == "distinct":
            out = np.minimum(w, 1.0)
        elif k == "moment":
            out = np.power(np.maximum(w, 0.0), self.param)
        else:
            return np.array([self(x) for x in w.ravel()], dtype=np.float64).reshape(w.shape)
        return np.where(w > 0, out, 0.0)

    def derivative_array(self, c) -> np.ndarray:
        c = np.asarray(c, dtype=np.float64)
        k = self.kind
        if k == "cap":
            return (c < self.param).astype(np.float64)
        if k == "sum":
            return np.ones_like(c)
        if k == "distinct":
            return (c < 1.0).astype(np.float64)
        if k == "moment":
            return self.param * np.power(c, self.param - 1.0)
        return np.array([self.derivative(x) for x in c.ravel()], dtype=np.float64).reshape(c.shape)

    def integer_values(self, n: int) -> list:
        """[f_0, f_1, ..., f_n]."""
        if self.kind == "table":
            if n >= len(self.values):
                raise ValueError(f"table has no value for {n}")
            return list(self.values[: n + 1])
        return [0.0] + [self(i) for i in range(1, n + 1)]


def evaluate(f: FrequencyFunction, w: float) -> float:
    return f(w)


def derivative(f: FrequencyFunction, c: float) -> float:
    return f.derivative(c)


# ---------------------------------------------------------------------------
# segments


class Segment:
    """Key predicate selecting the segment H of a query."""

    spec = "custom"

    def __contains__(self, key) -> bool:  # pragma: no cover - interface
        raise NotImplementedError

    def mask(self, keys: Iterable) -> np.ndarray:
        return np.fromiter((k in self for k in keys), dtype=bool)


class AllKeys(Segment):
    spec = "all"

    def __contains__(self, key) -> bool:
        return True

    def mask(self, keys) -> np.ndarray:
        return np.ones(len(keys), dtype=bool)


class KeySet(Segment):
    def __init__(self, keys: Iterable, spec: str = "keys"):
        self.keys = frozenset(keys)
        self.spec = spec

    def __contains__(self, key) -> bool:
        return key in self.keys


class HashRange(Segment):
    """Pseudo-random segment {x : a <= Hash'(x) < b} for an independent hash."""

    def __init__(self, a: float, b: float, seed: int = 0):
        if not 0.0 <= a <= b <= 1.0:
            raise ValueError("need 0 <= a <= b <= 1")
        self.a, self.b = a, b
        self.hasher = KeyHasher(derive_seed("segment", seed))
        self.spec = f"range:{a:g}:{b:g}:{seed}"

    def __contains__(self, key) -> bool:
        return self.a <= self.hasher.unit(key) < self.b


ALL = AllKeys()


# ---------------------------------------------------------------------------
# streams


def check_weight(w: float) -> float:
    w = float(w)
    if not (w > 0 and math.isfinite(w)):
        raise InputError(f"element weight must be positive and finite, got {w!r}")
    return w


def elements(keys: Iterable, weights: Iterable | None = None) -> Iterator[tuple]:
    """Zip keys and weights into (key, weight) pairs; missing weights are 1."""
    if weights is None:
        for k in keys:
            yield k, 1.0
    else:
        for k, w in zip(keys, weights):
            yield k, w


def read_stream(lines: Iterable[str]) -> Iterator[tuple]:
    """Parse ``key[<TAB>weight]`` lines into (key, weight) pairs."""
    for n, line in enumerate(lines, 1):
        line = line.rstrip("\r\n")
        if not line:
            continue
        key, sep, w = line.partition("\t")
        if sep:
            try:
                weight = check_weight(w)
            except ValueError as e:
                raise InputError(f"line {n}: {e}") from None
        else:
            weight = 1.0
        yield key, weight


def aggregate(stream: Iterable[tuple]) -> dict:
    """Exact key -> total weight map."""
    out: dict = {}
    for k, w in stream:
        out[k] = out.get(k, 0.0) + w
    return out


def exact_query(weights: Mapping, f: FrequencyFunction, segment: Segment = ALL) -> float:
    """Q(f, H) = sum of f(w_x) over keys of the segment."""
    return math.fsum(f(w) for k, w in weights.items() if k in segment)


def format_float(x: float) -> str:
    if x == INF:
        return "inf"
    return format(x, ".17g")


def parse_float(s: str) -> float:
    return INF if s == "inf" else float(s)
