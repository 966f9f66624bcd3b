"""Estimation for discrete SH_l samples.

phi_i is the probability that the i-th element of a key is the first one
counted, so a key of weight w is sampled with probability Phi(w) = sum of
phi_1..phi_w, and its count c = w - i + 1. The inverse transform psi turns f
into per-count coefficients beta with E[beta_c] = f(w) for every w; summing
beta_{c_x} over sampled keys gives an unbiased 1-pass estimate.

Coefficients are computed in float64 with numpy. Passing ``tau`` as a
``fractions.Fraction`` (or an ``mpmath.mpf``) switches to a generic
pure-Python path in that number type, which gives exact values.
"""

from __future__ import annotations

import math
from fractions import Fraction
from numbers import Real
from typing import Mapping

import numpy as np

from .core import ALL, INF, FrequencyFunction, Segment
from .discrete import DiscreteSample

_TINY = 1e-300
_FSUM_LIMIT = 400
RESIDUAL_LIMIT = 1e-6
TAIL_TOL = 1e-9
_HARD_LIMIT = 10**6


def _exact(tau) -> bool:
    return not isinstance(tau, (float, int, np.floating))


def truncation_length(ell, tau, max_count: int | None = None, rel_tol: float = TAIL_TOL) -> int:
    """Smallest M whose phi tail mass is at most rel_tol * Phi(inf).

    Phi(inf) is 1 - (1 - tau)^l for finite l (every bucket is eventually
    drawn) and 1 for l = INF, so the tail is known exactly. The result is
    capped at max_count + 1, past which no coefficient is ever read.
    """
    limit = _HARD_LIMIT if max_count is None else max(1, max_count + 1)
    return len(_phi_adaptive(ell, float(tau), limit, rel_tol))


def paper_truncation_bound(ell, tau) -> int:
    """ceil(min{l(ln l + 10), (1/tau)(ln(1/tau) + 10)}); see truncation_length."""
    tau = float(tau)
    bounds = [(1.0 / tau) * (math.log(1.0 / tau) + 10.0)]
    if ell != INF:
        bounds.append(ell * (math.log(ell) + 10.0))
    return max(1, math.ceil(min(bounds)))


def compute_a_table(ell: int, max_i: int, one=1) -> list:
    """Rows a_1..a_{max_i}; row i lists a_{i,1}..a_{i,min(l,i)}.

    a_{i,j} is the probability that i uniform bucket draws hit exactly j
    distinct buckets out of l. ``one`` selects the number type.
    """
    if ell == INF or ell < 1:
        raise ValueError("the a-table needs a finite ell >= 1")
    ell = int(ell)
    rows = [[one]]
    for i in range(2, max_i + 1):
        prev = rows[-1]
        width = min(ell, i)
        row = []
        for j in range(1, width + 1):
            stay = prev[j - 1] * j / ell if j <= len(prev) else 0
            new = prev[j - 2] * (ell - j + 1) / ell if 2 <= j <= len(prev) + 1 else 0
            row.append(stay + new)
        rows.append(row)
    return rows


def compute_phi(ell, tau, M: int):
    """phi_1..phi_M as a float64 array (or a list in the exact number type)."""
    if M < 1:
        raise ValueError("M must be at least 1")
    if not 0 < tau <= 1:
        raise ValueError("tau must lie in (0, 1]")
    if _exact(tau):
        return _phi_generic(ell, tau, M)
    return _phi_adaptive(ell, float(tau), M, None, pad=True)


def _phi_adaptive(ell, tau, limit, rel_tol, pad=False):
    """phi up to `limit` entries, stopping early once the tail is below rel_tol."""
    if not 0 < tau <= 1:
        raise ValueError("tau must lie in (0, 1]")
    if ell == 1 or tau == 1:
        M = limit if pad else 1
        phi = np.zeros(M)
        phi[0] = tau
        return phi
    if ell == INF:
        M = limit
        if rel_tol is not None:
            # tail after M terms is (1 - tau)^M
            M = min(limit, max(1, math.ceil(math.log(rel_tol) / math.log1p(-tau))))
        return tau * np.exp(np.arange(M) * math.log1p(-tau))
    phi = _phi_float(int(ell), tau, limit, rel_tol)
    if pad and len(phi) < limit:
        phi = np.concatenate([phi, np.zeros(limit - len(phi))])
    return phi


def _phi_generic(ell, tau, M):
    zero = tau * 0
    if ell == INF:
        return [tau * (1 - tau) ** (i - 1) for i in range(1, M + 1)]
    ell = int(ell)
    phi = [tau] + [zero] * (M - 1)
    if M == 1:
        return phi
    rows = compute_a_table(ell, M - 1, one=tau ** 0)
    for i in range(2, M + 1):
        row = rows[i - 2]
        s = zero
        for j in range(1, min(i - 1, ell - 1) + 1):
            s += row[j - 1] * (1 - tau) ** j * (ell - j) / ell
        phi[i - 1] = tau * s
    return phi


def _phi_float(ell, tau, limit, rel_tol):
    j = np.arange(ell + 1, dtype=np.float64)
    # weight of a row entry j: (1-tau)^j (l-j)/l, zero at j = l
    g = np.exp(j * math.log1p(-tau)) * (ell - j) / ell
    stay = j / ell
    enter = (ell - j + 1) / ell
    total = -math.expm1(ell * math.log1p(-tau))
    stop = None if rel_tol is None else rel_tol * total
    phi = [tau]
    acc = tau
    a = np.zeros(ell + 1)
    a[1] = 1.0
    lo, hi = 1, 1
    for i in range(2, limit + 1):
        if stop is not None and total - acc <= stop:
            break
        # phi_i from row i-1 of the a-table
        p = tau * float(np.dot(a[lo : hi + 1], g[lo : hi + 1]))
        if p == 0.0 and a[ell] >= 1.0 - 1e-15:
            break
        phi.append(p)
        acc += p
        nhi = min(hi + 1, ell)
        new = np.zeros(nhi - lo + 1)
        new[: hi - lo + 1] = a[lo : hi + 1] * stay[lo : hi + 1]
        new[1:] += a[lo:nhi] * enter[lo + 1 : nhi + 1]
        a[lo : nhi + 1] = new
        hi = nhi
        while lo < hi and a[lo] < _TINY:
            a[lo] = 0.0
            lo += 1
    return np.array(phi)


def compute_psi(phi):
    """Inverse of the triangular Toeplitz transform defined by phi."""
    if not phi[0] > 0:
        raise ValueError("phi_1 must be positive (degenerate threshold)")
    if not isinstance(phi, np.ndarray):
        return _psi_generic(list(phi))
    psi = _psi_float(phi)
    if inverse_residual(phi, psi) > RESIDUAL_LIMIT:
        psi = _psi_extended(phi)
    return psi


def _psi_generic(phi):
    M = len(phi)
    psi = [1 / phi[0]]
    for i in range(2, M + 1):
        s = sum(phi[i - j] * psi[j - 1] for j in range(1, i))
        psi.append(-s / phi[0])
    return psi


def _psi_float(phi):
    M = len(phi)
    psi = np.zeros(M)
    inv = 1.0 / phi[0]
    psi[0] = inv
    fsum = math.fsum
    for i in range(1, M):
        # sum_{j<i} phi[i-j] psi[j], zero-based
        terms = phi[i:0:-1] * psi[:i]
        s = fsum(terms) if i <= _FSUM_LIMIT else float(np.dot(phi[i:0:-1], psi[:i]))
        psi[i] = -s * inv
    return psi


def _psi_extended(phi):
    import mpmath

    with mpmath.workdps(50):
        vals = _psi_generic([mpmath.mpf(float(p)) for p in phi])
        return np.array([float(v) for v in vals])


def inverse_residual(phi, psi) -> float:
    """max |(psi * phi) - e_1| over the leading M entries.

    The product of two upper-triangular Toeplitz matrices is the Toeplitz
    matrix of the convolution, so this equals max|Y(psi) Y(phi) - I|.
    """
    M = len(phi)
    conv = np.convolve(np.asarray(psi, dtype=float), np.asarray(phi, dtype=float))[:M]
    conv[0] -= 1.0
    return float(np.max(np.abs(conv)))


def toeplitz_upper(v) -> np.ndarray:
    """Matrix Y with Y[i, j] = v[j - i] for j >= i (zero-based)."""
    from scipy.linalg import toeplitz

    v = np.asarray(v, dtype=float)
    return np.triu(toeplitz(np.r_[v[0], np.zeros(len(v) - 1)], v))


class DiscreteCoefficients:
    """phi, psi and Phi for a given (ell, tau), truncated at M."""

    def __init__(self, ell, tau, M: int):
        self._init(ell, tau, compute_phi(ell, tau, M))

    def _init(self, ell, tau, phi):
        self.ell = ell
        self.tau = tau
        self.M = len(phi)
        self.phi = phi
        self._psi = None
        if isinstance(phi, np.ndarray):
            self._cum = np.cumsum(phi)
        else:
            cum, s = [], phi[0] * 0
            for p in phi:
                s += p
                cum.append(s)
            self._cum = cum

    @property
    def psi(self):
        # only 1-pass estimation needs psi; 2-pass needs Phi alone
        if self._psi is None:
            self._psi = compute_psi(self.phi)
        return self._psi

    @classmethod
    def for_counts(cls, ell, tau, max_count: int) -> "DiscreteCoefficients":
        """Coefficients sufficient for counts (or weights) up to max_count."""
        if _exact(tau):
            return cls(ell, tau, max_count + 1)
        obj = cls.__new__(cls)
        obj._init(ell, tau, _phi_adaptive(ell, float(tau), max(1, max_count + 1), TAIL_TOL))
        return obj

    def Phi(self, w: int):
        """Inclusion probability of a key with w elements."""
        if w <= 0:
            return 0.0
        return self._cum[min(int(w), self.M) - 1]

    def Phi_array(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=np.int64)
        idx = np.clip(w, 1, self.M) - 1
        return np.where(w > 0, np.asarray(self._cum, dtype=float)[idx], 0.0)

    def beta(self, f: FrequencyFunction) -> "BetaTable":
        return BetaTable(self, f)


class BetaTable:
    """beta_i = sum_{j <= min(M, i)} psi_j f_{i-j+1}, computed on demand."""

    def __init__(self, coeffs: DiscreteCoefficients, f: FrequencyFunction):
        self.coeffs = coeffs
        self.f = f
        self._cache: dict = {}
        self._fvals: list = [0.0]

    def _f_upto(self, n: int):
        if n >= len(self._fvals):
            want = max(n, 2 * len(self._fvals))
            if self.f.kind == "table":
                want = max(n, min(want, len(self.f.values) - 1))
            self._fvals = self.f.integer_values(want)
        return self._fvals

    def __call__(self, i: int):
        b = self._cache.get(i)
        if b is None:
            b = self._compute(i)
            self._cache[i] = b
        return b

    def _compute(self, i: int):
        psi = self.coeffs.psi
        m = min(self.coeffs.M, i)
        fv = self._f_upto(i)
        if isinstance(psi, np.ndarray):
            # f_{i-j+1} for j = 1..m, i.e. f_i down to f_{i-m+1}
            f_seg = np.asarray(fv[i - m + 1 : i + 1], dtype=float)[::-1]
            return float(np.dot(psi[:m], f_seg))
        return sum(psi[j - 1] * fv[i - j + 1] for j in range(1, m + 1))

    def vector(self, n: int) -> list:
        return [self(i) for i in range(1, n + 1)]


def beta_discrete(f: FrequencyFunction, psi, n: int | None = None) -> list:
    """beta_1..beta_n from a psi vector (n defaults to len(psi))."""
    n = len(psi) if n is None else n
    M = len(psi)
    fv = f.integer_values(n)
    return [sum(psi[j - 1] * fv[i - j + 1] for j in range(1, min(M, i) + 1)) for i in range(1, n + 1)]


def inclusion_probability_discrete(w: int, coeffs: DiscreteCoefficients):
    return coeffs.Phi(w)


def estimate_discrete_1pass(sample: DiscreteSample, f: FrequencyFunction, segment: Segment = ALL) -> float:
    """Sum of beta_{c_x} over sampled keys in the segment."""
    counts = [c for x, c in sample.counts.items() if x in segment]
    if not counts:
        return 0.0
    coeffs = DiscreteCoefficients.for_counts(sample.ell, _num(sample.tau), max(counts))
    beta = coeffs.beta(f)
    return float(sum(beta(c) for c in counts))


def estimate_discrete_2pass(
    weights: Mapping, f: FrequencyFunction, segment: Segment = ALL, *, ell=None, tau=None, coeffs=None
) -> float:
    """Inverse-probability estimate sum f(w_x) / Phi(w_x) over sampled keys."""
    items = [(x, w) for x, w in weights.items() if x in segment]
    if not items:
        return 0.0
    if coeffs is None:
        mw = int(max(w for _, w in items))
        coeffs = DiscreteCoefficients.for_counts(ell, _num(tau), mw)
    total = 0.0
    for _, w in items:
        p = coeffs.Phi(int(w))
        fw = f(w)
        if fw > 0 and not p > 0:
            raise ValueError("zero inclusion probability for a key with positive f")
        total += fw / p if fw > 0 else 0.0
    return float(total)


def observed_histogram(sample: DiscreteSample, segment: Segment = ALL) -> dict:
    """o_i: number of sampled segment keys with count i."""
    hist: dict = {}
    for x, c in sample.counts.items():
        if x in segment:
            hist[c] = hist.get(c, 0) + 1
    return hist


def dump_coefficients(coeffs: DiscreteCoefficients, f: FrequencyFunction, n: int | None = None) -> str:
    """``i<TAB>phi<TAB>psi<TAB>beta`` lines for i = 1..n."""
    n = coeffs.M if n is None else n
    beta = coeffs.beta(f)
    lines = []
    for i in range(1, n + 1):
        phi = coeffs.phi[i - 1] if i <= coeffs.M else 0.0
        psi = coeffs.psi[i - 1] if i <= coeffs.M else 0.0
        lines.append(f"{i}\t{float(phi)!r}\t{float(psi)!r}\t{float(beta(i))!r}")
    return "\n".join(lines) + "\n"


def _num(tau):
    return tau if isinstance(tau, (Fraction, Real)) else float(tau)
