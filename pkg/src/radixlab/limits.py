"""Covariances of the Gaussian limit fields H and G, their simulation on
prefix-tree grids, supremum statistics and the maximal variance."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .analytic import _h_digits, classify_linear, depth_for, m_bounds, m_value
from .errors import EmptyRestriction, NotLinearFamily, UnsupportedAlphabet
from .source import (
    DEFAULT_CAP,
    MAX,
    SAMPLED,
    ZEROS,
    Init,
    MarkovSource,
    TailedString,
    coincidence,
    prefix_probs,
)


def _path_moments(source: MarkovSource, init: Init, v: TailedString, upto: int, tol: float):
    """pi(v^(k)) for k <= D (D >= upto) plus tail sums
    T0 = sum_{k>D} pi(v^(k)) and T1 = sum_{k>D} k pi(v^(k))."""
    if v.constant_tail:
        D = max(upto, len(v.prefix))
        pis = prefix_probs(source, init, v.head(D))
        c = v.tail_symbol
        q = source.law(init) if D == 0 else source.P[v[D - 1]]
        rho = source.P[c, c]
        first = pis[D] * q[c]  # pi(v^(D+1)); later terms shrink by rho
        T0 = first / (1.0 - rho)
        T1 = first * (D / (1.0 - rho) + 1.0 / (1.0 - rho) ** 2)
        return pis, T0, T1
    p = source.p_max
    D = max(upto, len(v.prefix), 1)
    while True:
        pis = prefix_probs(source, init, v.head(D))
        bound = pis[D] * (D * p / (1 - p) + p / (1 - p) ** 2)
        if bound <= tol:
            return pis, 0.0, 0.0
        D *= 2
        if D > DEFAULT_CAP:
            return pis, 0.0, 0.0


def cov_H(source: MarkovSource, init: Init, v: TailedString, w: TailedString,
          tol: float = 1e-13) -> float:
    """E[H(v) H(w)] = Cov(j(v, S), j(w, S)) for one random string S."""
    j = coincidence(v, w)
    if j == math.inf:
        pis, T0, T1 = _path_moments(source, init, v, 0, tol)
        k = np.arange(pis.size)
        mm1 = pis[1:].sum() + T0
        second = (k[1:] * pis[1:]).sum() + T1
        return float(2.0 * second - mm1 - mm1 ** 2)
    pv, T0v, _ = _path_moments(source, init, v, j, tol)
    pw, T0w, _ = _path_moments(source, init, w, j, tol)
    mv1 = pv[1:].sum() + T0v
    mw1 = pw[1:].sum() + T0w
    k = np.arange(1, j + 1)
    head_v = pv[1:j + 1]
    head_w = pw[1:j + 1]
    tail_v = mv1 - head_v.sum()
    tail_w = mw1 - head_w.sum()
    val = (k * (head_v + head_w)).sum() + j * (tail_v + tail_w) - head_v.sum() - mv1 * mw1
    return float(val)


def _linear_report(source: MarkovSource, tol: float = 1e-9):
    rep = classify_linear(source, tol)
    if not rep.fully_linear:
        raise NotLinearFamily("source is not a fully linear geometric family")
    return rep


def var_G(beta: float, b: int, t: float) -> float:
    """Variance of G(t) for the geometric family (beta, b).

    Evaluated in a factored form that is exact at beta = 1, where it
    reduces to b / (b-1)^2.
    """
    s = [sum(beta ** k for k in range(j + 1)) for j in range(b + 1)]
    gamma = s[b - 1] / (beta * s[b - 2])
    alpha = (beta - 1.0) * gamma
    return s[b] / (beta * s[b - 2]) * (alpha * t + gamma) - s[b - 1] ** 2 / (beta * s[b - 2] ** 2)


def _common_digits(source: MarkovSource, s: float, t: float, tol: float):
    depth = depth_for(source.p_max, tol) + 8
    ds, ks = _h_digits(source, s, None, depth)
    dt, kt = _h_digits(source, t, None, depth)
    vs = TailedString(ds, source.b, MAX if ks == "max" else ZEROS)
    vt = TailedString(dt, source.b, MAX if kt == "max" else ZEROS)
    return vs, vt, ks != "truncated" and kt != "truncated"


def cov_G(source: MarkovSource, s: float, t: float, tol: float = 1e-13) -> float:
    """E[G(s) G(t)] for a binary fully linear source."""
    _linear_report(source)
    if source.b != 2:
        raise UnsupportedAlphabet("closed form covariance of G is binary only; use cov_G_general")
    vs, vt, _ = _common_digits(source, s, t, tol)
    p = source.P[0]
    j = coincidence(vs, vt)
    if j == math.inf:
        # geometric tail of pi(w^(k)) / (1 - p_{w_k}) along the common string
        D = len(vs.prefix)
        pis = prefix_probs(source, None, vs.head(D))
        total = sum(pis[k] / (1.0 - p[vs[k - 1]]) for k in range(1, D + 1))
        c = vs.tail_symbol
        total += pis[D] * p[c] / (1.0 - p[c]) ** 2
        return float(total)
    w = vs.head(j)
    pis = prefix_probs(source, None, w)
    return float(-pis[j] + sum(pis[k] / (1.0 - p[w[k - 1]]) for k in range(1, j + 1)))


def _omega(q: np.ndarray) -> np.ndarray:
    return np.diag(q) - np.outer(q, q)


def _g_coeff_cov(source: MarkovSource, alpha: float, gamma: float) -> np.ndarray:
    """Covariance matrix of c_r = gamma N_r - alpha sum_{k<r} N_k."""
    b = source.b
    A = gamma * np.eye(b) - alpha * np.tril(np.ones((b, b)), -1)
    return A @ _omega(source.P[0]) @ A.T


def cov_G_general(source: MarkovSource, s: float, t: float, tol: float = 1e-13) -> float:
    """E[G(s) G(t)] for any alphabet size by descending the common prefix of
    h(s) and h(t) and adding one Gaussian term per shared level."""
    rep = _linear_report(source)
    C = _g_coeff_cov(source, rep.alpha, rep.gamma)
    vs, vt, _ = _common_digits(source, s, t, tol)
    p = source.P[0]
    j = coincidence(vs, vt)
    if j == math.inf:
        D = len(vs.prefix)
        pis = prefix_probs(source, None, vs.head(D))
        total = sum(pis[k] * C[vs[k], vs[k]] for k in range(D))
        c = vs.tail_symbol
        total += pis[D] * C[c, c] / (1.0 - p[c])
        return float(total)
    w = vs.head(j)
    pis = prefix_probs(source, None, w)
    total = sum(pis[k] * C[w[k], w[k]] for k in range(j))
    total += pis[j] * C[vs[j], vt[j]]
    return float(total)


# ---------------------------------------------------------------------------
# simulation on a prefix tree

@dataclass
class GaussianFieldSample:
    """Realised field values, one row per replication and one column per grid point."""

    kind: str
    points: np.ndarray          # (P, K) symbol prefixes of the grid strings
    values: np.ndarray          # (reps, P)
    depth: int
    residual_std_bound: float
    b: int
    init: Init = None
    t: Optional[np.ndarray] = None
    seed: tuple = field(default=())

    def label(self, i: int) -> str:
        if self.t is not None:
            return repr(float(self.t[i]))
        return "".join(str(int(s)) for s in self.points[i])

    def string(self, i: int) -> TailedString:
        return TailedString(self.points[i].tolist(), self.b, ZEROS)

    def to_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for r in range(self.values.shape[0]):
                for i in range(self.values.shape[1]):
                    fh.write(json.dumps({"rep": r, "point": self.label(i),
                                         "value": float(self.values[r, i])}) + "\n")


def _grid(b: int, K: int) -> np.ndarray:
    idx = np.arange(b ** K)
    return np.stack([(idx // b ** (K - 1 - s)) % b for s in range(K)], axis=1).astype(np.intp)


def _node_index(points: np.ndarray, b: int) -> np.ndarray:
    """Flat index of the node u^(s) for every point and level s < K."""
    P_, K = points.shape
    out = np.empty((P_, K), dtype=np.intp)
    offset = 0
    code = np.zeros(P_, dtype=np.intp)
    for s in range(K):
        out[:, s] = offset + code
        offset += b ** s
        code = code * b + points[:, s]
    return out


def _node_laws(source: MarkovSource, init: Init, K: int) -> np.ndarray:
    """Row index of the law at each node (b means the initial law)."""
    b = source.b
    laws = [np.array([b])]
    for s in range(1, K):
        laws.append(np.arange(b ** s) % b)
    return np.concatenate(laws)


def _draw(source: MarkovSource, init: Init, K: int, seed, rep: int) -> np.ndarray:
    """N vectors at every node of depth < K, shape (nodes, b); rows sum to 0."""
    b = source.b
    n_nodes = (b ** K - 1) // (b - 1)
    laws = np.vstack([source.P, source.law(init)[None, :]])
    chol = np.stack([np.linalg.cholesky(_omega(q)[:b - 1, :b - 1]) for q in laws])
    node_law = _node_laws(source, init, K)
    entropy = tuple(seed) if isinstance(seed, (tuple, list)) else (int(seed),)
    rng = np.random.default_rng(np.random.SeedSequence(entropy, spawn_key=(rep,)))
    z = rng.standard_normal((n_nodes, b - 1))
    head = np.einsum("nij,nj->ni", chol[node_law], z)
    return np.concatenate([head, -head.sum(axis=1, keepdims=True)], axis=1)


def _h_coefficients(source: MarkovSource, init: Init, points: np.ndarray) -> np.ndarray:
    """sqrt(pi(u^(s))) * m_{u_s}(u_{s+1} ... 0 0 ...) for each point and level."""
    P_, K = points.shape
    P = source.P
    q0 = source.law(init)
    pis = np.empty((P_, K))
    pis[:, 0] = 1.0
    for s in range(1, K):
        step = q0[points[:, 0]] if s == 1 else P[points[:, s - 2], points[:, s - 1]]
        pis[:, s] = pis[:, s - 1] * step
    m00 = 1.0 / (1.0 - P[0, 0])
    g = np.empty((P_, K))
    g[:, K - 1] = 1.0 + P[points[:, K - 1], 0] * m00
    for s in range(K - 2, -1, -1):
        g[:, s] = 1.0 + P[points[:, s], points[:, s + 1]] * g[:, s + 1]
    return np.sqrt(pis) * g, pis


def _residual_bound(source: MarkovSource, K: int, var_max: float) -> float:
    p = source.p_max
    return math.sqrt(var_max * p ** (K - 1) / (1.0 - p))


def simulate_H_grid(source: MarkovSource, init: Init, K: int, seed, reps: int = 1) -> GaussianFieldSample:
    """Values of H at every depth-K prefix (completed with zeros) via the
    truncated series; each replication uses its own keyed stream."""
    if K < 1:
        raise ValueError("K must be >= 1")
    b = source.b
    points = _grid(b, K)
    coef, _ = _h_coefficients(source, init, points)
    nodes = _node_index(points, b)
    values = np.empty((reps, points.shape[0]))
    for r in range(reps):
        N = _draw(source, init, K, seed, r)
        values[r] = (coef * N[nodes, points]).sum(axis=1)
    M = float(m_bounds(source)[1].max())
    bound = _residual_bound(source, K, M * M / 4.0)
    return GaussianFieldSample("H", points, values, K, bound, b, init,
                               seed=tuple(seed) if isinstance(seed, (tuple, list)) else (seed,))


def _t_grid(source: MarkovSource, points: np.ndarray) -> np.ndarray:
    P_, K = points.shape
    q = source.P[0]
    cq = source.cum_P[0]
    t = np.zeros(P_)
    w = np.ones(P_)
    for s in range(K):
        t += w * cq[points[:, s]]
        w *= q[points[:, s]]
    return t


def simulate_G_grid(source: MarkovSource, init: Init, K: int, seed, reps: int = 1) -> GaussianFieldSample:
    """Values of G on the t-grid {F(u 0 0 ...) : |u| = K} plus t = 1.

    Uses the same Gaussian draws as :func:`simulate_H_grid` for equal seeds.
    """
    rep_ = _linear_report(source)
    if K < 1:
        raise ValueError("K must be >= 1")
    b = source.b
    base = _grid(b, K)
    points = np.vstack([base, np.full((1, K), b - 1, dtype=np.intp)])
    t = np.concatenate([_t_grid(source, base), [1.0]])
    _, pis = _h_coefficients(source, init, points)
    sq = np.sqrt(pis)
    nodes = _node_index(points, b)
    values = np.empty((reps, points.shape[0]))
    for r in range(reps):
        N = _draw(source, init, K, seed, r)
        below = np.cumsum(N, axis=1) - N  # sum_{k<r} N_k
        c = rep_.gamma * N[nodes, points] - rep_.alpha * below[nodes, points]
        values[r] = (sq * c).sum(axis=1)
    C = _g_coeff_cov(source, rep_.alpha, rep_.gamma)
    bound = _residual_bound(source, K, float(np.diag(C).max()))
    return GaussianFieldSample("G", points, values, K, bound, b, init, t=t,
                               seed=tuple(seed) if isinstance(seed, (tuple, list)) else (seed,))


def restriction_mask(field: GaussianFieldSample, start: Sequence[int], edges) -> np.ndarray:
    """Grid points whose first K symbols form a path of the edge graph."""
    edges = {tuple(e) for e in edges}
    pts = field.points
    ok = np.isin(pts[:, 0], list(start))
    for s in range(1, pts.shape[1]):
        pair_ok = np.array([(int(a), int(c)) in edges for a, c in zip(pts[:, s - 1], pts[:, s])])
        ok &= pair_ok
    return ok


def sup_stats(field: GaussianFieldSample, restriction=None) -> np.ndarray:
    """Maximum over grid points per replication.

    ``restriction`` may be a boolean mask over the grid, an object with
    ``start_set`` and ``edge_graph`` attributes, or None for the full grid.
    """
    if restriction is None:
        mask = np.ones(field.values.shape[1], dtype=bool)
    elif hasattr(restriction, "start_set"):
        mask = restriction_mask(field, restriction.start_set, restriction.edge_graph)
    else:
        mask = np.asarray(restriction, dtype=bool)
    if not mask.any():
        raise EmptyRestriction("no grid point satisfies the restriction")
    return field.values[:, mask].max(axis=1)


# ---------------------------------------------------------------------------
# maximal variance

def sigma_max(source: MarkovSource, init: Init = None, K: int = 20) -> tuple[float, TailedString]:
    """max of Var H(v) over strings u 0 0 ... and u (b-1)(b-1) ... with |u| <= K.

    Branch and bound over prefixes: with A = sum_{k<=s} pi(u^(k)),
    B = sum_{k<=s} k pi(u^(k)) and pi = pi(u), any completion has
    Var = 2 (B + pi (s X + Y)) + m - m^2 with m = A + pi X, where X and Y
    are bounded above by fixed points of monotone Bellman maps.
    """
    b = source.b
    P = source.P
    _, Mhi = m_bounds(source)
    Y = np.zeros(b)
    for _ in range(100_000):
        Y_new = (P * (Y + Mhi)).max(axis=1)
        if np.array_equal(Y_new, Y):
            break
        Y = Y_new
    law_all = np.vstack([P, source.law(init)[None, :]])
    xmax = (law_all * Mhi).max(axis=1)
    ymax = (law_all * (Y + Mhi)).max(axis=1)
    # constant completions c c c ... from a law q: X = q_c/(1-p_cc), Y = q_c/(1-p_cc)^2
    comp = []
    for c in (0, b - 1):
        rho = P[c, c]
        comp.append((c, law_all[:, c] / (1 - rho), law_all[:, c] / (1 - rho) ** 2))

    last = np.array([b])
    pi_ = np.ones(1)
    A = np.ones(1)
    B = np.zeros(1)
    words = [()]
    best, best_v = -np.inf, None
    for s in range(K + 1):
        for c, Xc, Yc in comp:
            m = A + pi_ * Xc[last]
            var = 2.0 * (B + pi_ * (s * Xc[last] + Yc[last])) + m - m * m
            i = int(var.argmax())
            if var[i] > best:
                best = float(var[i])
                best_v = TailedString(words[i], b, ZEROS if c == 0 else MAX)
        if s == K:
            break
        m_hi = A + pi_ * xmax[last]
        ub = 2.0 * (B + pi_ * (s * xmax[last] + ymax[last])) + m_hi - A * A
        keep = ub >= best - 1e-12
        last, pi_, A, B = last[keep], pi_[keep], A[keep], B[keep]
        words = [w for w, k in zip(words, keep) if k]
        q = law_all[last]
        c_pi = (pi_[:, None] * q).ravel()
        c_A = np.repeat(A, b) + c_pi
        c_B = np.repeat(B, b) + (s + 1) * c_pi
        c_last = np.tile(np.arange(b), last.size)
        c_words = [w + (k,) for w in words for k in range(b)]
        # merge prefixes with identical futures
        key = np.stack([c_last, np.round(c_pi * 1e13), np.round(c_A * 1e13), np.round(c_B * 1e13)], axis=1)
        _, first = np.unique(key, axis=0, return_index=True)
        first.sort()
        last, pi_, A, B = c_last[first], c_pi[first], c_A[first], c_B[first]
        words = [c_words[i] for i in first]
    return best, best_v
