"""Simulation harness: Zipf streams, exact aggregation and (l x T) error grids.

Each repetition draws a fresh stream and fresh randomness, runs the 1-pass
sampler and the 2-pass pipeline for every l in the grid with sample size k,
and estimates the cap_T statistic over the whole population for every T.
Errors are recorded relative to the exact value of that repetition. All l
values of one repetition share the same seeds, which leaves each cell's
distribution unchanged and makes comparisons between rows less noisy.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import repeat
from typing import Mapping, Sequence

import numpy as np

from .continuous import ContinuousConfig, ContinuousSampler
from .continuous_est import beta_array, inclusion_probability_array
from .core import ALL, INF, FrequencyFunction, KeyHasher, RandomSource, Segment
from .core import exact_query as _exact_query
from .discrete import DiscreteConfig, DiscreteSampler
from .discrete_est import DiscreteCoefficients
from .twopass import bottom_k, keyed_seeds

PAPER_ELLS = [1, 5, 20, 50, 100, 500, 1000, 10000]
PAPER_CAPS = [1, 5, 20, 50, 100, 500, 1000, 10000]


@dataclass(frozen=True)
class ExperimentConfig:
    scheme: str
    k: int
    ells: tuple
    caps: tuple
    alpha: float
    m: int = 100_000
    rep: int = 200
    seed: int = 0
    universe: int | None = None

    def __post_init__(self):
        if self.scheme not in ("discrete", "continuous"):
            raise ValueError("scheme must be 'discrete' or 'continuous'")
        if self.m < 1 or self.rep < 1 or not self.alpha > 0:
            raise ValueError("need m >= 1, rep >= 1 and alpha > 0")
        if self.universe is None and not self.alpha > 1:
            raise ValueError("an unbounded Zipf needs alpha > 1; pass a finite universe")
        object.__setattr__(self, "ells", tuple(self.ells))
        object.__setattr__(self, "caps", tuple(self.caps))


def generate_zipf_stream(alpha: float, m: int, seed=0, universe: int | None = None) -> np.ndarray:
    """m i.i.d. Zipf(alpha) ranks (>= 1) as an int64 array.

    Without ``universe`` ranks are unbounded (numpy's Zipf sampler). With a
    universe of size N, ranks are drawn from P[r] proportional to r^-alpha on
    1..N by inverse CDF.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if universe is None:
        return rng.zipf(alpha, m).astype(np.int64)
    r = np.arange(1, universe + 1, dtype=np.float64)
    cdf = np.cumsum(r**-alpha)
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, rng.random(m), side="right")
    return (np.minimum(idx, universe - 1) + 1).astype(np.int64)


class ExactAggregate:
    """Exact key -> w_x map of a stream."""

    def __init__(self, weights: Mapping):
        self.weights = dict(weights)

    @classmethod
    def from_keys(cls, keys: np.ndarray) -> "ExactAggregate":
        uk, counts = np.unique(np.asarray(keys), return_counts=True)
        return cls(dict(zip(uk.tolist(), counts.astype(float).tolist())))

    def query(self, f: FrequencyFunction, segment: Segment = ALL) -> float:
        return exact_query(self, f, segment)

    @property
    def total(self) -> float:
        return math.fsum(self.weights.values())

    def __len__(self):
        return len(self.weights)


def exact_query(agg, f: FrequencyFunction, segment: Segment = ALL) -> float:
    weights = agg.weights if isinstance(agg, ExactAggregate) else agg
    return _exact_query(weights, f, segment)


@dataclass
class ErrorGrid:
    """Signed relative errors (estimate - Q)/Q for every run and cell.

    ``errors`` has shape (2, rep, len(ells), len(caps)); index 0 is 1-pass
    and index 1 is 2-pass.
    """

    config: ExperimentConfig
    errors: np.ndarray
    extra: dict = field(default_factory=dict)

    @property
    def ells(self):
        return list(self.config.ells)

    @property
    def caps(self):
        return list(self.config.caps)

    def _metric(self, passes: int, kind: str) -> np.ndarray:
        e = self.errors[passes - 1]
        if kind == "relerr":
            return np.mean(np.abs(e), axis=0)
        if kind == "nrmse":
            return np.sqrt(np.mean(e**2, axis=0))
        if kind == "bias":
            return np.mean(e, axis=0)
        raise ValueError(f"unknown metric {kind!r}")

    def relerr(self, passes: int = 1) -> np.ndarray:
        return self._metric(passes, "relerr")

    def nrmse(self, passes: int = 1) -> np.ndarray:
        return self._metric(passes, "nrmse")

    def bias(self, passes: int = 1) -> np.ndarray:
        return self._metric(passes, "bias")

    def cell(self, ell, T, passes: int = 1, kind: str = "nrmse") -> float:
        i, j = self.ells.index(ell), self.caps.index(T)
        return float(self._metric(passes, kind)[i, j])

    def table(self, passes: int = 1, kind: str = "nrmse", fmt: str = "tsv") -> str:
        vals = self._metric(passes, kind)
        head = ["ell\\T"] + [_num(T) for T in self.caps]
        rows = [[_num(l)] + [f"{v:.3f}" for v in vals[i]] for i, l in enumerate(self.ells)]
        if fmt == "tsv":
            return "\n".join("\t".join(r) for r in [head] + rows) + "\n"
        if fmt == "markdown":
            out = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
            out += ["| " + " | ".join(r) + " |" for r in rows]
            return "\n".join(out) + "\n"
        raise ValueError(f"unknown format {fmt!r}")

    def report(self, fmt: str = "tsv") -> str:
        c = self.config
        parts = []
        for passes in (1, 2):
            for kind in ("relerr", "nrmse"):
                title = f"{c.scheme} k={c.k} alpha={c.alpha:g} m={c.m} rep={c.rep}: {kind} {passes}-pass"
                parts.append(("# " if fmt == "tsv" else "### ") + title + "\n")
                parts.append(self.table(passes, kind, fmt))
        return "\n".join(parts)


def _num(v) -> str:
    return "inf" if v == INF else f"{v:g}"


def run_repetition(config: ExperimentConfig, r: int) -> np.ndarray:
    """Signed relative errors of one repetition, shape (2, len(ells), len(caps))."""
    src = RandomSource(config.seed)
    keys = generate_zipf_stream(config.alpha, config.m, src.numpy("zipf", r), config.universe)
    uk, counts = np.unique(keys, return_counts=True)
    caps = [FrequencyFunction.cap(T) for T in config.caps]
    Q = np.array([float(np.sum(np.minimum(counts, T))) for T in config.caps])
    keys_list = keys.tolist()
    out = np.empty((2, len(config.ells), len(caps)))
    # common random numbers across l: rows of one repetition share seeds
    hash_seed = src.derive("hash", r)
    draw_seed = src.derive("draws", r)
    for i, ell in enumerate(config.ells):
        if config.scheme == "discrete":
            est1 = _discrete_one_pass(keys_list, ell, config.k, hash_seed, draw_seed, caps)
        else:
            est1 = _continuous_one_pass(keys_list, ell, config.k, hash_seed, draw_seed, caps)
        est2 = _two_pass(keys, config.scheme, ell, config.k, hash_seed, caps)
        out[0, i] = (est1 - Q) / Q
        out[1, i] = (est2 - Q) / Q
    return out


def _discrete_one_pass(keys, ell, k, hash_seed, draw_seed, caps) -> np.ndarray:
    cfg = DiscreteConfig(ell=ell, k=k, seed=draw_seed, hash_seed=hash_seed)
    s = DiscreteSampler(cfg).process_keys(keys)
    counts = np.fromiter(s.counts.values(), dtype=np.int64)
    coeffs = DiscreteCoefficients.for_counts(ell, s.tau, int(counts.max()))
    distinct, mult = np.unique(counts, return_counts=True)
    est = []
    for f in caps:
        beta = coeffs.beta(f)
        est.append(float(sum(beta(int(c)) * m for c, m in zip(distinct, mult))))
    return np.array(est)


def _continuous_one_pass(keys, ell, k, hash_seed, draw_seed, caps) -> np.ndarray:
    cfg = ContinuousConfig(ell=ell, k=k, seed=draw_seed, hash_seed=hash_seed)
    s = ContinuousSampler(cfg).process(zip(keys, repeat(1.0)))
    c = np.fromiter(s.counts.values(), dtype=np.float64)
    if s.tau == INF:
        return np.array([float(np.sum(f.array(c))) for f in caps])
    return np.array([float(np.sum(beta_array(c, s.tau, ell, f))) for f in caps])


def _two_pass(keys, scheme, ell, k, hash_seed, caps) -> np.ndarray:
    uk, w, seeds = keyed_seeds(keys, scheme, ell, KeyHasher(hash_seed))
    sup = 1.0 if scheme == "discrete" else INF
    idx, tau = bottom_k(uk, seeds, k, sup)
    ws = w[idx]
    if scheme == "discrete":
        p = DiscreteCoefficients.for_counts(ell, tau, int(ws.max())).Phi_array(ws.astype(np.int64))
    else:
        p = inclusion_probability_array(ws, tau, ell)
    return np.array([float(np.sum(f.array(ws) / p)) for f in caps])


def run_error_grid(config: ExperimentConfig, workers: int = 1, progress=None) -> ErrorGrid:
    """Run all repetitions; ``workers > 1`` spreads them over processes."""
    reps = range(config.rep)
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(run_repetition, repeat(config), reps, chunksize=4))
    else:
        results = []
        for r in reps:
            results.append(run_repetition(config, r))
            if progress is not None:
                progress(r + 1, config.rep)
    errors = np.stack(results, axis=1)
    return ErrorGrid(config, errors)


@dataclass(frozen=True)
class DiagonalCheck:
    T: float
    argmin_ell: float
    nearest_ell: float
    steps: int

    @property
    def ok(self) -> bool:
        return self.steps <= 1


def diagonal_dominance_report(grid: ErrorGrid, passes: int = 1, kind: str = "nrmse") -> list:
    """For each T: the l with least error and its grid distance to the l nearest T."""
    vals = grid._metric(passes, kind)
    ells = grid.ells
    logs = np.log([float(l) for l in ells])
    out = []
    for j, T in enumerate(grid.caps):
        near = int(np.argmin(np.abs(logs - math.log(T))))
        # rows with bit-identical error are the same estimator; prefer the one nearest T
        tied = np.flatnonzero(vals[:, j] == vals[:, j].min())
        best = int(tied[np.argmin(np.abs(tied - near))])
        out.append(DiagonalCheck(T, ells[best], ells[near], abs(best - near)))
    return out


def mean_distinct(alpha: float, m: int, seeds: Sequence[int], universe: int | None = None) -> float:
    return float(np.mean([len(np.unique(generate_zipf_stream(alpha, m, s, universe))) for s in seeds]))
