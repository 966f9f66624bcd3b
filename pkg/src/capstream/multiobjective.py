"""Multi-objective sampling: one sample serving every cap parameter in a set L.

All samples share per-key randomness: h_x = Hash(x) and y_x, the minimum of
the Exp[w] draws of the key's elements (the continuous scheme's draws). For
each l the seed is h_x/l when y_x <= 1/l and y_x otherwise, S_l holds the k
smallest seeds, and the union S_L is the multi-objective sample. A key of
S_L is kept with an inclusion probability computed from leave-one-out
thresholds, and estimates are inverse-probability sums over S_L.

L is either a finite list of l values or :data:`INTERVAL`, all l > 0.
"""

from __future__ import annotations

import heapq
import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .core import ALL, INF, FrequencyFunction, KeyedDraws, KeyHasher, Segment, format_float, key_id
from .twopass import pass_two

INTERVAL = "interval"


def geometric_grid(a: float, n: int, ratio: float = 2.0) -> list:
    """[a, a*ratio, ..., a*ratio**(n-1)]."""
    return [a * ratio**i for i in range(n)]


@dataclass
class GridThreshold:
    """Bottom-(k+1) structure of one l: members of S_l, their seeds, tau."""

    ell: float
    members: dict
    tau: float
    kth: float

    def leave_one_out(self, x) -> float:
        """k-th smallest seed among keys other than x."""
        return self.tau if x in self.members else self.kth


@dataclass
class MultiSample:
    k: int
    L: object
    weights: dict
    phi: dict
    thresholds: list = field(default_factory=list)
    hash_seed: int = 0

    @property
    def keys(self) -> set:
        return set(self.weights)

    def __len__(self):
        return len(self.weights)

    def dumps(self) -> str:
        L = INTERVAL if self.L == INTERVAL else ",".join(format_float(float(l)) for l in self.L)
        lines = [f"#shl-mo k={self.k} L={L}"]
        lines += [
            f"{x}\t{format_float(w)}\t{format_float(self.phi[x])}" for x, w in self.weights.items()
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "MultiSample":
        lines = text.splitlines()
        parts = lines[0].split()
        if not parts or parts[0] != "#shl-mo":
            raise ValueError("expected a #shl-mo header")
        head = dict(p.split("=", 1) for p in parts[1:])
        L = head["L"]
        L = INTERVAL if L == INTERVAL else [float(v) for v in L.split(",")]
        weights, phi = {}, {}
        for line in lines[1:]:
            if line and not line.startswith("#"):
                key, w, p = line.rsplit("\t", 2)
                weights[key] = float(w)
                phi[key] = float(p)
        return cls(int(head["k"]), L, weights, phi)


# ---------------------------------------------------------------------------
# inclusion probabilities


def union_inclusion_probability(rects: Iterable[tuple], w: float) -> float:
    """P[(y, h) falls in a union of origin-anchored rectangles].

    y ~ Exp[w] and h ~ U[0,1); each rectangle (Y, H) is [0, Y) x [0, H).
    """
    rects = sorted(((Y, min(H, 1.0)) for Y, H in rects), reverse=True)
    if not rects:
        raise ValueError("empty set of rectangles")

    def F(y):
        return 1.0 if y == INF else -math.expm1(-w * y)

    total = 0.0
    hmax = 0.0
    for i, (Y, H) in enumerate(rects):
        hmax = max(hmax, H)
        nxt = rects[i + 1][0] if i + 1 < len(rects) else 0.0
        total += (F(Y) - F(nxt)) * hmax
    return total


def threshold_rectangles(pairs: Iterable[tuple]) -> list:
    """Rectangles (max(t, 1/l), min(1, l t)) for (l, leave-one-out t) pairs."""
    out = []
    for ell, t in pairs:
        if t == INF:
            out.append((INF, 1.0))
        else:
            out.append((max(t, 1.0 / ell), min(1.0, ell * t)))
    return out


def mo_inclusion_probability(x, w: float, ms: MultiSample) -> float:
    """Probability that a key of weight w, with the other keys fixed, is in S_L."""
    if ms.L == INTERVAL:
        return ms.phi[x]
    if not ms.thresholds:
        raise ValueError("empty L")
    pairs = [(g.ell, g.leave_one_out(x)) for g in ms.thresholds]
    return union_inclusion_probability(threshold_rectangles(pairs), w)


# ---------------------------------------------------------------------------
# coordinated randomness


class _Coordinated:
    """Per-element Exp draws keyed like the continuous pass I."""

    def __init__(self, hash_seed: int):
        self.hasher = KeyHasher(hash_seed)
        self.draws = KeyedDraws(self.hasher)

    def element(self, x, w) -> float:
        return -math.log1p(-self.draws.next(x)) / w


def coordinated_values(elements: Iterable[tuple], hash_seed: int) -> tuple:
    """Exact (weights, h, y) maps for every key of the stream."""
    c = _Coordinated(hash_seed)
    weights: dict = {}
    y: dict = {}
    for x, w in elements:
        v = c.element(x, w)
        if x in weights:
            weights[x] += w
            if v < y[x]:
                y[x] = v
        else:
            weights[x] = w
            y[x] = v
    h = {x: c.hasher.unit(x) for x in weights}
    return weights, h, y


class GridSampler:
    """Streaming pass I for a finite L.

    Keeps, for each l, the k+1 keys of smallest h among keys with
    y_x <= 1/l, plus the k+1 keys of smallest y overall; together these
    determine the k+1 smallest seeds of every l.
    """

    def __init__(self, k: int, ells: Sequence[float], hash_seed: int = 0):
        if not ells:
            raise ValueError("empty L")
        self.k = k
        self.ells = sorted(float(l) for l in ells)
        self.hash_seed = hash_seed
        self._c = _Coordinated(hash_seed)
        self._inv = [1.0 / l for l in self.ells]
        self.ymin: dict = {}
        self._ymax = None
        self.hsets = [dict() for _ in self.ells]
        self._heaps = [[] for _ in self.ells]

    def process(self, elements: Iterable[tuple]) -> "GridSampler":
        cap = self.k + 1
        ymin = self.ymin
        inv = self._inv
        hsets, heaps = self.hsets, self._heaps
        element = self._c.element
        unit = self._c.hasher.unit
        push, pushpop = heapq.heappush, heapq.heappushpop
        for x, w in elements:
            v = element(x, w)
            # smallest y overall
            old = ymin.get(x)
            if old is not None:
                if v < old:
                    ymin[x] = v
                    if old == self._ymax:
                        self._ymax = None
            elif len(ymin) < cap:
                ymin[x] = v
                self._ymax = None
            else:
                if self._ymax is None:
                    self._ymax = max(ymin.values())
                if v < self._ymax:
                    y = max(ymin, key=lambda z: (ymin[z], key_id(z)))
                    del ymin[y]
                    ymin[x] = v
                    self._ymax = None
            # smallest h among keys qualified for each l with v <= 1/l
            h = None
            for i, t in enumerate(inv):
                if v > t:
                    break
                hs = hsets[i]
                if x in hs:
                    continue
                if h is None:
                    h = unit(x)
                heap = heaps[i]
                if len(hs) < cap:
                    hs[x] = h
                    push(heap, (-h, -key_id(x), x))
                elif h < -heap[0][0]:
                    _, _, y = pushpop(heap, (-h, -key_id(x), x))
                    del hs[y]
                    hs[x] = h
        return self

    def thresholds(self) -> list:
        out = []
        k = self.k
        for ell, inv, hs in zip(self.ells, self._inv, self.hsets):
            seeds = sorted((h * inv, key_id(x), x) for x, h in hs.items())
            if len(seeds) < k + 1:
                extra = sorted(
                    (y, key_id(x), x) for x, y in self.ymin.items() if x not in hs and y > inv
                )
                seeds += extra[: k + 1 - len(seeds)]
            members = {x: s for s, _, x in seeds[:k]}
            tau = seeds[k][0] if len(seeds) > k else INF
            kth = seeds[k - 1][0] if len(seeds) >= k else INF
            out.append(GridThreshold(ell, members, tau, kth))
        return out


def _elements_of(data) -> Callable[[], Iterable[tuple]]:
    if isinstance(data, Mapping):
        return lambda: iter(data.items())
    if callable(data):
        return data
    if isinstance(data, Sequence):
        return lambda: iter(data)
    raise TypeError("data must be a mapping of weights, a sequence of elements, or a stream factory")


def build_multi_sample(data, k: int, L, hash_seed: int = 0) -> MultiSample:
    """Two-pass multi-objective sample.

    ``data`` is an aggregated key -> weight mapping, a sequence of
    (key, weight) elements, or a zero-argument callable returning a fresh
    element iterator (it is called twice). ``L`` is a finite list of l
    values or :data:`INTERVAL`.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    stream = _elements_of(data)
    if isinstance(L, str):
        if L != INTERVAL:
            raise ValueError(f"unknown L {L!r}")
        return _build_interval(stream, k, hash_seed)
    L = list(L)
    if not L:
        raise ValueError("empty L")
    sampler = GridSampler(k, L, hash_seed).process(stream())
    grid = sampler.thresholds()
    keys = set()
    for g in grid:
        keys.update(g.members)
    weights = pass_two(stream(), keys)
    phi = {}
    for x, w in weights.items():
        pairs = [(g.ell, g.leave_one_out(x)) for g in grid]
        p = union_inclusion_probability(threshold_rectangles(pairs), w)
        if not p > 0:
            raise AssertionError(f"zero inclusion probability for sampled key {x!r}")
        phi[x] = p
    return MultiSample(k, sorted(L), weights, phi, grid, hash_seed)


@dataclass
class IntervalStructure:
    """Keys in y order with running k-th / (k+1)-st smallest h of each prefix."""

    keys: list
    y: np.ndarray
    h: np.ndarray
    kth: np.ndarray
    kth1: np.ndarray
    k: int

    def members(self) -> list:
        """Positions of keys that belong to S_l for some l > 0."""
        k = self.k
        n = len(self.keys)
        pos = np.arange(n)
        inside = (pos < k) | (self.h <= self.kth[np.minimum(pos + 1, n)])
        return np.flatnonzero(inside).tolist()

    def inclusion(self, p: int, w: float) -> float:
        """Leave-one-out inclusion probability of the key at position p."""
        k = self.k
        n = len(self.keys)
        if n - 1 < k:
            return 1.0
        others_y = np.concatenate([self.y[:p], self.y[p + 1 :], [INF]])
        j = np.arange(k, n)
        full = np.where(j <= p, j, j + 1)
        hx = self.h[p]
        H = np.where(
            j <= p,
            self.kth[full],
            np.where(hx <= self.kth[full], self.kth1[full], self.kth[full]),
        )
        Fy = -np.expm1(-w * others_y[: n - 1])
        Fy = np.append(Fy, 1.0)
        # F(oy[k-1]) + sum_j H_j (F(oy[j]) - F(oy[j-1]))
        return float(Fy[k - 1] + np.dot(np.minimum(H, 1.0), Fy[k:n] - Fy[k - 1 : n - 1]))


def interval_structure(h: Mapping, y: Mapping, k: int) -> IntervalStructure:
    keys = sorted(y, key=lambda z: (y[z], key_id(z)))
    n = len(keys)
    ys = np.array([y[x] for x in keys])
    hs = np.array([h[x] for x in keys])
    kth = np.full(n + 1, INF)
    kth1 = np.full(n + 1, INF)
    low: list = []  # max-heap of the k smallest h so far
    nxt = INF  # (k+1)-st smallest h so far
    for i in range(n):
        v = hs[i]
        if len(low) < k:
            heapq.heappush(low, -v)
        elif v < -low[0]:
            out = -heapq.heappushpop(low, -v)
            nxt = min(nxt, out)
        else:
            nxt = min(nxt, v)
        if len(low) == k:
            kth[i + 1] = -low[0]
        kth1[i + 1] = nxt
    return IntervalStructure(keys, ys, hs, kth, kth1, k)


def _build_interval(stream, k: int, hash_seed: int) -> MultiSample:
    weights, h, y = coordinated_values(stream(), hash_seed)
    st = interval_structure(h, y, k)
    sample_w, phi = {}, {}
    for p in st.members():
        x = st.keys[p]
        w = weights[x]
        prob = st.inclusion(p, w)
        if not prob > 0:
            raise AssertionError(f"zero inclusion probability for sampled key {x!r}")
        sample_w[x] = w
        phi[x] = prob
    ms = MultiSample(k, INTERVAL, sample_w, phi, [], hash_seed)
    ms.structure = st
    return ms


def estimate_multi(ms: MultiSample, f: FrequencyFunction, segment: Segment = ALL) -> float:
    """Sum of f(w_x) / Phi(x) over keys of S_L in the segment."""
    return math.fsum(f(w) / ms.phi[x] for x, w in ms.weights.items() if x in segment)
