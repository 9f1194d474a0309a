"""Deterministic limit functions of a Markov source.

``m(v)`` is the sum of ``pi`` over all finite prefixes of ``v``, ``F`` is the
distribution function of one random string under lexicographic order and
``h`` is its generalised inverse.  All series are cut with explicit error
bounds derived from ``pi(v^(k)) <= p_max**(k-1)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import CapReached, NotInSigmaZero
from .source import (
    DEFAULT_CAP,
    MAX,
    ZEROS,
    Init,
    MarkovSource,
    StringBatch,
    TailedString,
)


def depth_for(p_max: float, tol: float) -> int:
    """Smallest K with p_max**K / (1 - p_max) < tol."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    k = math.log(tol * (1.0 - p_max)) / math.log(p_max)
    return max(1, int(math.floor(k)) + 1)


def m_bounds(source: MarkovSource) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise (inf, sup) of ``m_r`` over all strings, per row r.

    Both solve M_r = 1 + opt_k p_rk M_k; iteration contracts with factor p_max.
    """
    P = source.P
    lo = np.ones(source.b)
    hi = np.ones(source.b)
    # iterate to a floating-point fixed point (or a 1-ulp cycle)
    for _ in range(100_000):
        lo_new = 1.0 + (P * lo).min(axis=1)
        hi_new = 1.0 + (P * hi).max(axis=1)
        if np.array_equal(lo_new, lo) and np.array_equal(hi_new, hi):
            break
        lo, hi = lo_new, hi_new
    return lo, hi


_BOUNDS_CACHE: dict = {}


def _cached_bounds(source: MarkovSource):
    key = id(source)
    hit = _BOUNDS_CACHE.get(key)
    if hit is None or hit[0] is not source:
        hit = (source, *m_bounds(source))
        _BOUNDS_CACHE[key] = hit
    return hit[1], hit[2]


def _const_tail_m(source: MarkovSource, q: np.ndarray, c: int) -> float:
    """m of the constant string c c c ... started from law q, minus 1."""
    return float(q[c]) / (1.0 - source.P[c, c])


def m_value(source: MarkovSource, init: Init, v: TailedString, tol: float = 1e-12,
            cap: int = DEFAULT_CAP) -> float:
    """m(v), exact for constant tails and within ``tol`` for sampled ones."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    q = source.law(init)
    lo, hi = _cached_bounds(source)
    total, p = 1.0, 1.0
    n_pre = len(v.prefix)
    for i in range(cap):
        if i >= n_pre:
            if v.constant_tail:
                return total + p * _const_tail_m(source, q, v.tail_symbol)
            low = p * float((q * lo).min())
            high = p * float((q * hi).max())
            if high - low <= 2.0 * tol:
                return total + 0.5 * (low + high)
        s = v[i]
        p *= q[s]
        total += p
        q = source.P[s]
    raise CapReached(f"m_value needed more than {cap} symbols of {v}")


def m_left_limit(source: MarkovSource, init: Init, v: TailedString, tol: float = 1e-12) -> float:
    """m(v-) for v in the zeros-tailed class."""
    if not v.in_sigma_zero():
        raise NotInSigmaZero(f"{v} has no nonzero symbol before its zero tail")
    return m_value(source, init, v.minus(), tol)


def m_value_batch(batch: StringBatch, tol: float = 1e-12, cap: int = DEFAULT_CAP) -> np.ndarray:
    """m of every string in a batch (vectorised :func:`m_value`)."""
    source = batch.source
    lo, hi = _cached_bounds(source)
    n = len(batch)
    total = np.ones(n)
    p = np.ones(n)
    qlo = np.full(n, float((source.law(batch.init) * lo).min()))
    qhi = np.full(n, float((source.law(batch.init) * hi).max()))
    row_lo = (source.P * lo).min(axis=1)
    row_hi = (source.P * hi).max(axis=1)
    law0 = source.law(batch.init)
    prev = None
    for i in range(cap):
        width = p * (qhi - qlo)
        if np.all(width <= 2.0 * tol):
            return total + p * 0.5 * (qlo + qhi)
        s = batch.column(i).astype(np.intp)
        step = law0[s] if prev is None else source.P[prev, s]
        p = p * step
        total += p
        qlo, qhi = row_lo[s], row_hi[s]
        prev = s
    raise CapReached(f"m_value_batch needed more than {cap} symbols")


def F_value(source: MarkovSource, init: Init, v: TailedString, tol: float = 1e-12,
            cap: int = DEFAULT_CAP) -> float:
    """P(S <= v) for a random string S from the source."""
    q = source.law(init)
    cq = source.cum_law(init)
    total, p = 0.0, 1.0
    n_pre = len(v.prefix)
    for i in range(cap):
        if i >= n_pre:
            if v.tail == ZEROS:
                return total
            if v.tail == MAX:
                return total + p
            if p <= 2.0 * tol:
                return total + 0.5 * p
        s = v[i]
        total += p * cq[s]
        p *= q[s]
        q, cq = source.P[s], source.cum_P[s]
    raise CapReached(f"F_value needed more than {cap} symbols of {v}")


def _h_digits(source: MarkovSource, t: float, init: Init, depth: int, atol: float = 0.0):
    """Greedy expansion of t.  Returns (digits, kind) with kind in
    {"exact", "max", "truncated"}: exact means t is the left end of the last
    chosen bucket, so the zeros tail is the true value."""
    if t >= 1.0:
        return [], "max"
    if t <= 0.0:
        return [], "exact"
    q, cq = source.law(init), source.cum_law(init)
    lo, width = 0.0, 1.0
    digits = []
    for _ in range(depth):
        lefts = lo + width * cq
        if atol > 0.0:
            near = np.nonzero(np.abs(lefts - t) <= atol)[0]
            if near.size:
                digits.append(int(near[-1]))
                return digits, "exact"
        r = int(np.searchsorted(lefts, t, side="right")) - 1
        r = max(r, 0)
        digits.append(r)
        if lefts[r] == t:
            return digits, "exact"
        lo = float(lefts[r])
        width *= float(q[r])
        q, cq = source.P[r], source.cum_P[r]
    return digits, "truncated"


def h_value(source: MarkovSource, t: float, depth: int = 64, init: Init = None,
            left_limit: bool = False, atol: float = 0.0) -> TailedString:
    """Generalised inverse of F, right-continuous; ``left_limit`` gives h(t-)."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t={t} outside [0, 1]")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    digits, kind = _h_digits(source, t, init, depth, atol)
    if kind == "max":
        return TailedString((), source.b, MAX)
    v = TailedString(digits, source.b, ZEROS)
    if left_limit and kind == "exact" and v.in_sigma_zero():
        return v.minus()
    return v


def mh_profile(source: MarkovSource, grid: Iterable[float], init: Init = None,
               tol: float = 1e-12, atol: float = 0.0) -> np.ndarray:
    """Rows (t, m(h(t)), m(h(t-))) for each t in the grid."""
    depth = depth_for(source.p_max, tol)
    rows = []
    for t in grid:
        t = float(t)
        digits, kind = _h_digits(source, t, init, depth, atol)
        if kind == "max":
            v = TailedString((), source.b, MAX)
        else:
            v = TailedString(digits, source.b, ZEROS)
        mh = m_value(source, init, v, tol)
        if kind == "exact" and v.in_sigma_zero():
            left = m_value(source, init, v.minus(), tol)
        else:
            left = mh
        rows.append((t, mh, left))
    return np.array(rows, dtype=float).reshape(-1, 3)


def write_profile_csv(path, rows: np.ndarray, header: Sequence[str]) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


# ---------------------------------------------------------------------------
# linear families

def _geom(beta: float, j: int) -> float:
    return sum(beta ** k for k in range(j + 1))


def linear_constants(beta: float, b: int) -> tuple[float, float]:
    """(alpha, gamma) of the geometric family; gamma = b/(b-1) at beta = 1.

    Uses the factored form sum_{k<b} beta^k / (beta * sum_{k<b-1} beta^k),
    which equals (1 - beta^b)/(beta - beta^b) and is stable near beta = 1.
    """
    gamma = _geom(beta, b - 1) / (beta * _geom(beta, b - 2))
    return (beta - 1.0) * gamma, gamma


@dataclass(frozen=True)
class LinearFamilyReport:
    transitions_linear: bool
    fully_linear: bool
    beta: Optional[float] = None
    alpha: Optional[float] = None
    gamma: Optional[float] = None


def classify_linear(source: MarkovSource, tol: float = 1e-9) -> LinearFamilyReport:
    P = source.P
    if not source.is_memoryless(tol):
        return LinearFamilyReport(False, False)
    row = P.mean(axis=0)
    ratios = row[1:] / row[:-1]
    beta = float(ratios[0])
    if np.any(np.abs(ratios - beta) > tol * max(1.0, beta)):
        return LinearFamilyReport(False, False)
    if abs(beta - 1.0) <= tol:
        beta = 1.0
    alpha, gamma = linear_constants(beta, source.b)
    full = bool(np.all(np.abs(source.mu - row) <= tol))
    return LinearFamilyReport(True, full, beta, alpha, gamma)


# ---------------------------------------------------------------------------
# Quickselect mean profile

def _H(y: np.ndarray) -> np.ndarray:
    """Entropy-like weight: binary entropy of (1/2 +- y) inside, log ratio outside."""
    y = np.asarray(y, dtype=float)
    yp, ym = 0.5 + y, 0.5 - y
    out = np.zeros_like(y)
    inner = y < 0.5
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(inner & (ym > 0), ym * np.log(np.where(ym > 0, ym, 1.0)), 0.0)
        bterm = np.where(inner, yp * np.log(yp), 0.0)
        out = np.where(inner, -(a + bterm), out)
        outer = y > 0.5
        r = np.where(outer, yp / np.where(outer, -ym, 1.0), 1.0)
        out = np.where(outer, ym * np.log(r), out)
    return out


def quickselect_rho(source: MarkovSource, t: float, tol: float = 1e-4, init: Init = None,
                    max_nodes: int = 50_000_000) -> float:
    """Limit of E[cost]/n for Quickselect at relative rank t, within ``tol``.

    Sums 2 pi(v) (1 + H(|t - mid(v)| / pi(v))) over all finite words v, where
    mid(v) is the centre of the F-interval of v.  A subtree whose interval
    sits at distance d > 0 from t contributes at most pi(v)^2 / (d (1 - p_max));
    such subtrees are dropped once that bound falls below tol/2 * pi(v), and
    whole levels past a computed depth are bounded in aggregate.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError("t outside [0, 1]")
    b = source.b
    pmax, pmin = source.p_max, source.p_min
    mu_min = float(source.law(init).min())
    c_in = 4.0 * (1.0 + math.log(2.0))

    def slab(k: int) -> float:
        # bound on the sum of all level-k terms
        r = pmax ** (k - 1)
        rho_min = mu_min * pmin ** (k - 1)
        return r * (c_in + 2.0 * (2.0 + math.log(1.0 / rho_min)))

    depth = 1
    while True:
        rest = 0.0
        k = depth + 1
        while True:
            term = slab(k)
            rest += term
            if term < 1e-3 * tol * (1 - pmax) and k > depth + 5:
                break
            k += 1
        if rest <= tol / 2:
            break
        depth += 1

    lo = np.zeros(1)
    pi_ = np.ones(1)
    last = np.full(1, -1, dtype=np.intp)
    total = 0.0
    law0, cum0 = source.law(init), source.cum_law(init)
    for level in range(depth + 1):
        mid = lo + 0.5 * pi_
        total += float(np.sum(2.0 * pi_ * (1.0 + _H(np.abs(t - mid) / pi_))))
        if level == depth:
            break
        if level == 0:
            q, cq = law0[None, :], cum0[None, :]
        else:
            q, cq = source.P[last], source.cum_P[last]
        c_pi = (pi_[:, None] * q).ravel()
        c_lo = (lo[:, None] + pi_[:, None] * cq).ravel()
        c_last = np.tile(np.arange(b), len(pi_))
        d = np.maximum(c_lo - t, t - (c_lo + c_pi))
        keep = ~((d > 0) & (c_pi <= 0.5 * tol * d * (1.0 - pmax)))
        lo, pi_, last = c_lo[keep], c_pi[keep], c_last[keep]
        if lo.size > max_nodes:
            raise MemoryError(f"frontier exceeds {max_nodes} nodes; raise tol")
    return total


def rho_profile(source: MarkovSource, grid: Iterable[float], tol: float = 1e-4,
                init: Init = None) -> np.ndarray:
    return np.array([(float(t), quickselect_rho(source, float(t), tol, init)) for t in grid],
                    dtype=float).reshape(-1, 2)
