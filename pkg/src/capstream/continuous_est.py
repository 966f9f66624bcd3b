"""Estimators for continuous SH_l samples."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .continuous import ContinuousSample
from .core import ALL, INF, FrequencyFunction, Segment


@dataclass(frozen=True)
class ContinuousEstimatorContext:
    tau: float
    ell: float
    f: FrequencyFunction

    def beta(self, c: float) -> float:
        return beta_continuous(c, self)


def inclusion_probability_continuous(w: float, tau: float, ell: float) -> float:
    """(1 - exp(-w max(1/l, tau))) * min(1, tau l); 1 when tau is infinite."""
    if w <= 0:
        return 0.0
    if tau == INF:
        return 1.0
    rate = max(1.0 / ell, tau)
    return -math.expm1(-w * rate) * min(1.0, tau * ell)


def inclusion_probability_array(w, tau: float, ell: float) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if tau == INF:
        return (w > 0).astype(np.float64)
    rate = max(1.0 / ell, tau)
    return np.where(w > 0, -np.expm1(-w * rate) * min(1.0, tau * ell), 0.0)


def beta_continuous(c: float, ctx: ContinuousEstimatorContext) -> float:
    """f(c)/min(1, l tau) + f'(c)/tau."""
    tau, ell, f = ctx.tau, ctx.ell, ctx.f
    return f(c) / min(1.0, ell * tau) + f.derivative(c) / tau


def beta_array(c, tau: float, ell: float, f: FrequencyFunction) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    return f.array(c) / min(1.0, ell * tau) + f.derivative_array(c) / tau


def estimate_continuous_1pass(sample: ContinuousSample, f: FrequencyFunction, segment: Segment = ALL) -> float:
    """Sum of beta(c_x) over sampled keys in the segment.

    A fixed-size sample that never filled up (tau = INF) holds every key
    with its full weight, and the estimate is the exact sum of f.
    """
    counts = [c for x, c in sample.counts.items() if x in segment]
    if not counts:
        return 0.0
    if sample.tau == INF:
        return math.fsum(f(c) for c in counts)
    if not f.has_derivative:
        raise ValueError(f"{f.spec} has no derivative; the continuous path needs one")
    return float(np.sum(beta_array(counts, sample.tau, sample.ell, f)))


def estimate_continuous_2pass(
    weights: Mapping, f: FrequencyFunction, segment: Segment = ALL, *, tau: float, ell: float
) -> float:
    """Inverse-probability estimate sum f(w_x) / Phi(w_x) over sampled keys."""
    ws = [w for x, w in weights.items() if x in segment]
    if not ws:
        return 0.0
    if tau == INF:
        return math.fsum(f(w) for w in ws)
    ws = np.asarray(ws, dtype=np.float64)
    return float(np.sum(f.array(ws) / inclusion_probability_array(ws, tau, ell)))


def cv_bound_two_pass(k: int, T: float, ell: float, q: float = 1.0) -> float:
    """CV bound for cap_T with a size-k 2-pass SH_l sample and segment share q."""
    return math.sqrt(math.e / (math.e - 1) * max(T / ell, ell / T) / (q * (k - 1)))


def cv_bound_one_pass(k: int, q: float = 1.0) -> float:
    """CV bound for cap_T with a size-k 1-pass SH_l sample at l = T."""
    return math.sqrt((2 * math.e - 1) / (math.e - 1) / (q * (k - 1)))
