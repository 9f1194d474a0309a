"""Grand averages, the boundary-rank mixture and the worst-case rank."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .analytic import F_value, m_left_limit, m_value, m_value_batch
from .errors import DegenerateT, IterationLimit, NotInSigmaZero
from .source import Init, MarkovSource, StringBatch, TailedString


@dataclass(frozen=True)
class PerpetuityMoments:
    EZ: float
    EZ2: float
    EZr: np.ndarray
    EZr2: np.ndarray


def grand_average_moments(source: MarkovSource, init: Init = None) -> PerpetuityMoments:
    """First two moments of the grand-average limit Z = sum over words of pi^2-weighted terms.

    E[Z_r] = 1 + sum_k p_rk^2 E[Z_k] and E[Z_r^2] = 2 E[Z_r] - 1 + sum_k p_rk^3 E[Z_k^2].
    """
    P = source.P
    eye = np.eye(source.b)
    EZr = np.linalg.solve(eye - P ** 2, np.ones(source.b))
    EZr2 = np.linalg.solve(eye - P ** 3, 2.0 * EZr - 1.0)
    q = source.law(init)
    EZ = 1.0 + float(q ** 2 @ EZr)
    EZ2 = 2.0 * EZ - 1.0 + float(q ** 3 @ EZr2)
    return PerpetuityMoments(EZ, EZ2, EZr, EZr2)


def perpetuity_oracle(source: MarkovSource, init: Init = None, eps: float = 1e-7,
                      max_nodes: int = 20_000_000):
    """Direct sums over words: E[Z] = sum pi(v)^2 and
    E[Z^2] = sum pi(v)^2 (pi(v) + 2 sum_{u < v} pi(u)) (u ranging over proper prefixes).

    Returns (EZ, EZ2, err_EZ, err_EZ2) where err_* bound the pruned mass.
    """
    b = source.b
    p = source.p_max
    pi_ = np.ones(1)
    S = np.zeros(1)
    last = np.full(1, b)
    law_all = np.vstack([source.P, source.law(init)[None, :]])
    ez = ez2 = err1 = err2 = 0.0
    thr = eps * (1.0 - p)
    while pi_.size:
        ez += float((pi_ ** 2).sum())
        ez2 += float((pi_ ** 2 * (pi_ + 2.0 * S)).sum())
        q = law_all[last]
        c_pi = (pi_[:, None] * q).ravel()
        c_S = np.repeat(S + pi_, b)
        c_last = np.tile(np.arange(b), pi_.size)
        small = c_pi <= thr
        if small.any():
            sp, sS = c_pi[small], c_S[small]
            err1 += float((sp ** 2).sum()) / (1.0 - p)
            err2 += float((sp ** 2 * (sp + 2.0 * (sS + sp / (1.0 - p)))).sum()) / (1.0 - p)
        pi_, S, last = c_pi[~small], c_S[~small], c_last[~small]
        if pi_.size > max_nodes:
            raise MemoryError("frontier too large; raise eps")
    return ez, ez2, err1, err2


def grand_average_sample(source: MarkovSource, reps: int, seed, init: Init = None,
                         tol: float = 1e-12) -> np.ndarray:
    """m(S) for ``reps`` independent strings S."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    return m_value_batch(StringBatch(source, reps, seed, init), tol)


@dataclass(frozen=True)
class BoundaryMixture:
    weight_right: float
    atom_right: float
    weight_left: float
    atom_left: float
    t: float


def boundary_mixture(source: MarkovSource, v: TailedString, drift: float,
                     init: Init = None, tol: float = 1e-12) -> BoundaryMixture:
    """Two-point law of Y_n(k_n)/n when k_n/n approaches t = F(v) from
    distance drift/sqrt(n)."""
    if not v.in_sigma_zero():
        raise NotInSigmaZero(f"{v} is not of the form u c 0 0 ... with c > 0")
    t = F_value(source, init, v, tol)
    if t <= 0.0 or t >= 1.0:
        raise DegenerateT(f"F(v) = {t}")
    right = m_value(source, init, v, tol)
    left = m_left_limit(source, init, v, tol)
    if drift == math.inf:
        w = 1.0
    elif drift == -math.inf:
        w = 0.0
    else:
        w = NormalDist().cdf(drift / math.sqrt(t * (1.0 - t)))
    return BoundaryMixture(w, right, 1.0 - w, left, t)


# ---------------------------------------------------------------------------
# worst case

UNIQUE = "Unique"
FINITE = "Finite"
COUNTABLE = "CountablyInfinite"
UNCOUNTABLE = "Uncountable"


@dataclass
class WorstCaseReport:
    M: np.ndarray
    m_max: float
    start_set: list
    edge_graph: list
    classification: str
    paths: Optional[list] = None
    heuristic: bool = False
    notes: list = field(default_factory=list)

    def reachable_edges(self) -> list:
        """Edges whose source can be reached from the start set."""
        seen, stack = set(), list(self.start_set)
        while stack:
            r = stack.pop()
            if r not in seen:
                seen.add(r)
                stack.extend(k for a, k in self.edge_graph if a == r)
        return sorted(e for e in self.edge_graph if e[0] in seen)

    def to_dict(self) -> dict:
        d = {"M": [float(x) for x in self.M], "m_max": float(self.m_max),
             "start": list(self.start_set), "edges": [list(e) for e in self.edge_graph],
             "class": self.classification}
        if self.paths is not None:
            d["paths"] = self.paths
        if self.heuristic:
            d["heuristic"] = True
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _top_two_gap(vals: np.ndarray) -> float:
    if vals.size < 2:
        return math.inf
    s = np.sort(vals)
    return float(s[-1] - s[-2])


def worst_case_solve(source: MarkovSource, init: Init = None, tol: float = 1e-12,
                     tie_tol: float = 1e-9, max_iter: int = 1_000_000) -> WorstCaseReport:
    """Maximal limit mean m_max and the structure of the strings attaining it.

    The strings attaining the maximum are the infinite paths of the edge graph
    that start in ``start_set``.
    """
    P = source.P
    b = source.b
    M = np.ones(b)
    for it in range(max_iter):
        M_new = 1.0 + (P * M).max(axis=1)
        res = float(np.abs(M_new - M).max())
        M = M_new
        if res < tol * (1.0 - source.p_max):
            break
    else:
        raise IterationLimit(f"no convergence in {max_iter} iterations")
    # polish: solve the linear system of the greedy policy and keep it if it
    # is still a Bellman fixed point
    policy = (P * M).argmax(axis=1)
    A = np.eye(b)
    A[np.arange(b), policy] -= P[np.arange(b), policy]
    M_pol = np.linalg.solve(A, np.ones(b))
    if np.abs(1.0 + (P * M_pol).max(axis=1) - M_pol).max() <= np.abs(1.0 + (P * M).max(axis=1) - M).max():
        M = M_pol
    q = source.law(init)
    top = q * M
    m_max = 1.0 + float(top.max())
    start = [int(k) for k in np.nonzero(top >= top.max() - tie_tol)[0]]
    W = P * M
    edges = []
    heuristic = False
    notes = []
    for r in range(b):
        row = W[r]
        ks = np.nonzero(row >= row.max() - tie_tol)[0]
        edges.extend((r, int(k)) for k in ks)
        gap = _top_two_gap(row)
        if tie_tol < gap <= 100 * tie_tol:
            heuristic = True
            notes.append(f"row {r}: near tie, gap {gap:.3g}")
    gap = _top_two_gap(top)
    if tie_tol < gap <= 100 * tie_tol:
        heuristic = True
        notes.append(f"start: near tie, gap {gap:.3g}")
    if heuristic:
        warnings.warn("worst_case_solve: near ties decide the classification; " + "; ".join(notes))
    cls, paths = classify_paths(b, start, edges)
    return WorstCaseReport(M, m_max, start, edges, cls, paths, heuristic, notes)


def classify_paths(b: int, start: list, edges: list):
    """Count infinite paths through a finite digraph from a start set.

    Returns (class, paths) where paths lists every path as ``"u(c)"`` (prefix
    u followed by cycle c repeated) when the set is finite.
    """
    out = {r: sorted({k for a, k in edges if a == r}) for r in range(b)}
    reach = set()
    stack = list(start)
    while stack:
        r = stack.pop()
        if r in reach:
            continue
        reach.add(r)
        stack.extend(out[r])
    rows = [a for a, k in edges if a in reach]
    cols = [k for a, k in edges if a in reach]
    G = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(b, b))
    _, comp = connected_components(G, directed=True, connection="strong")
    internal = {r: [k for k in out[r] if comp[k] == comp[r]] for r in reach}
    cyclic = {r for r in reach if internal[r]}
    if any(len(internal[r]) >= 2 for r in reach):
        return UNCOUNTABLE, None
    if any(len(out[r]) > len(internal[r]) for r in cyclic):
        return COUNTABLE, None
    paths = []

    def walk(r, prefix):
        if r in cyclic:
            cyc = [r]
            nxt = internal[r][0]
            while nxt != r:
                cyc.append(nxt)
                nxt = internal[nxt][0]
            paths.append("".join(map(str, prefix)) + "(" + "".join(map(str, cyc)) + ")")
            return
        for k in out[r]:
            walk(k, prefix + [r])

    for r in sorted(start):
        walk(r, [])
    return (UNIQUE if len(paths) == 1 else FINITE), paths


def path_string(report: WorstCaseReport, choices, length: int, b: int) -> TailedString:
    """A string of ``length`` symbols following the edge graph; ``choices``
    is an iterator of integers used to pick among allowed successors."""
    out = {}
    for a, k in report.edge_graph:
        out.setdefault(a, []).append(k)
    starts = sorted(report.start_set)
    cur = starts[next(choices) % len(starts)]
    word = [cur]
    for _ in range(length - 1):
        nxt = out[cur]
        cur = nxt[next(choices) % len(nxt)]
        word.append(cur)
    return TailedString(word, b)
