"""Radix Select, tries with subtree counts and bucket-operation costs.

Two independent implementations are provided so they can check each other:

* an object trie (:func:`build_trie`) with :func:`z_cost`, :func:`rank_costs`,
  :func:`radix_sort_cost` and :func:`trie_stats`, and a literal list-based
  :func:`radix_select`;
* array routines on a :class:`~radixlab.source.StringBatch` (``batch_*``)
  used by the Monte Carlo harness.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import CapReached, InvalidRank
from .source import DEFAULT_CAP, StringBatch, TailedString, coincidence


class TrieNode:
    __slots__ = ("count", "children", "leaf", "depth")

    def __init__(self, count: int, depth: int):
        self.count = count
        self.children: dict = {}
        self.leaf: Optional[int] = None
        self.depth = depth

    @property
    def internal(self) -> bool:
        return self.count >= 2


@dataclass
class Trie:
    root: TrieNode
    n: int
    b: int
    strings: list

    def leaves(self) -> list:
        """String indices in increasing string order."""
        out = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.leaf is not None:
                out.append(node.leaf)
            for sym in sorted(node.children, reverse=True):
                stack.append(node.children[sym])
        return out

    def J(self, word: Sequence[int]) -> int:
        """Number of stored strings starting with ``word``."""
        word = list(word)
        node = self.root
        for i, sym in enumerate(word):
            if node.leaf is not None:
                return int(self.strings[node.leaf].head(len(word)) == word)
            node = node.children.get(sym)
            if node is None:
                return 0
        return node.count


def build_trie(strings: Sequence[TailedString], b: Optional[int] = None,
               cap: int = DEFAULT_CAP) -> Trie:
    strings = list(strings)
    if b is None:
        b = strings[0].b if strings else 2
    root = TrieNode(len(strings), 0)
    if len(strings) == 1:
        root.leaf = 0
    stack = [(root, list(range(len(strings))))]
    while stack:
        node, members = stack.pop()
        if len(members) < 2:
            continue
        d = node.depth
        if d >= cap:
            raise CapReached(f"{len(members)} strings share a prefix of length {cap}")
        # identical strings would recurse forever; detect them symbolically
        if all(d >= len(strings[i].prefix) for i in members):
            keys = {strings[i].tail_key(d) for i in members}
            if len(keys) == 1:
                raise CapReached(f"strings {[str(strings[i]) for i in members]} are identical")
        buckets: dict = {}
        for i in members:
            buckets.setdefault(strings[i][d], []).append(i)
        for sym, sub in buckets.items():
            child = TrieNode(len(sub), d + 1)
            node.children[sym] = child
            if len(sub) == 1:
                child.leaf = sub[0]
            else:
                stack.append((child, sub))
    return Trie(root, len(strings), b, strings)


def radix_select(k: int, b: int, strings: Sequence[TailedString], cap: int = DEFAULT_CAP):
    """k-th smallest string and the number of bucket operations spent.

    Each distribution pass assigns every string of the current list to a
    bucket and costs its length; scanning empty buckets is free.
    """
    A = list(strings)
    if k < 1 or k > len(A):
        raise InvalidRank(f"rank {k} not in 1..{len(A)}")
    ops = 0
    x = 0
    while len(A) > 1:
        if x >= cap:
            raise CapReached(f"{len(A)} strings agree on {cap} symbols")
        buckets = [[] for _ in range(b)]
        for s in A:
            buckets[s[x]].append(s)
            ops += 1
        L, F = 0, 0
        while F + len(buckets[L]) < k:
            F += len(buckets[L])
            L += 1
        k -= F
        A = buckets[L]
        x += 1
    return A[0], ops


def z_cost(trie: Trie, v: TailedString) -> int:
    """Sum of J(v^(k)) over the prefixes of v that hold at least two strings."""
    total = 0
    node = trie.root
    depth = 0
    while node is not None and node.count >= 2:
        total += node.count
        node = node.children.get(v[depth])
        depth += 1
    return total


@dataclass
class CostProfile:
    """Per-rank costs Y(1..n); ``at(n + 1)`` repeats Y(n)."""

    costs: np.ndarray
    max_cost: int = field(init=False)
    argmax: list = field(init=False)
    mean_cost: float = field(init=False)

    def __post_init__(self):
        self.costs = np.asarray(self.costs, dtype=np.int64)
        if self.costs.size:
            self.max_cost = int(self.costs.max())
            self.argmax = [int(i) + 1 for i in np.nonzero(self.costs == self.max_cost)[0]]
            self.mean_cost = float(self.costs.mean())
        else:
            self.max_cost, self.argmax, self.mean_cost = 0, [], 0.0

    @property
    def n(self) -> int:
        return int(self.costs.size)

    def at(self, rank: int) -> int:
        if rank == self.n + 1:
            rank = self.n
        if not 1 <= rank <= self.n:
            raise InvalidRank(f"rank {rank} not in 1..{self.n + 1}")
        return int(self.costs[rank - 1])

    def quantile(self, t: float) -> int:
        """Y(floor(t n) + 1)."""
        return self.at(int(math.floor(t * self.n)) + 1)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("rank,cost\n")
            for i, c in enumerate(self.costs, start=1):
                fh.write(f"{i},{int(c)}\n")


def rank_costs(trie: Trie) -> CostProfile:
    out = []
    stack = [(trie.root, 0)]
    while stack:
        node, acc = stack.pop()
        if node.leaf is not None:
            out.append(acc)
            continue
        acc += node.count
        for sym in sorted(node.children, reverse=True):
            stack.append((node.children[sym], acc))
    return CostProfile(np.array(out, dtype=np.int64))


def radix_sort_cost(trie: Trie) -> int:
    total = 0
    stack = [trie.root]
    while stack:
        node = stack.pop()
        if node.count >= 2:
            total += node.count
            stack.extend(node.children.values())
    return total


def trie_stats(trie: Trie) -> tuple[int, int]:
    """(H, h): deepest level holding a node with J >= 2, and the deepest
    level at which all b**level nodes hold J >= 2."""
    if trie.n < 2:
        return 0, 0
    height = 0
    stack = [trie.root]
    while stack:
        node = stack.pop()
        if node.count >= 2:
            height = max(height, node.depth)
            stack.extend(node.children.values())
    fill = 0
    level = [trie.root]
    while True:
        nxt = []
        for node in level:
            kids = [c for c in node.children.values() if c.count >= 2]
            if len(kids) < trie.b:
                return height, fill
            nxt.extend(kids)
        level = nxt
        fill += 1


def brute_z_cost(strings: Sequence[TailedString], v: TailedString, cap: int = DEFAULT_CAP) -> int:
    """Z_n(v) straight from pairwise coincidences: sum over k of
    #{i: j(v, S_i) >= k} whenever that count exceeds 1."""
    js = [coincidence(v, s, cap) for s in strings]
    total = 0
    k = 0
    while True:
        lam = sum(1 for j in js if j >= k)
        if lam < 2:
            return total
        total += lam
        k += 1


# ---------------------------------------------------------------------------
# array routines on sampled batches

def _packed_keys(X: np.ndarray, b: int) -> list:
    bits = max(1, int(math.ceil(math.log2(b))))
    per = 64 // bits
    n, L = X.shape
    keys = []
    for start in range(0, L, per):
        block = X[:, start:start + per].astype(np.uint64)
        key = np.zeros(n, dtype=np.uint64)
        for j in range(per):
            key <<= np.uint64(bits)
            if j < block.shape[1]:
                key |= block[:, j]
        keys.append(key)
    return keys


def _lcp_sorted(X: np.ndarray) -> np.ndarray:
    """Common-prefix lengths of adjacent rows (capped at the width)."""
    if X.shape[0] < 2:
        return np.zeros(0, dtype=np.int64)
    diff = X[1:] != X[:-1]
    any_diff = diff.any(axis=1)
    first = diff.argmax(axis=1)
    return np.where(any_diff, first, X.shape[1]).astype(np.int64)


def batch_sort(batch: StringBatch, depth: int = 64, cap: int = DEFAULT_CAP):
    """Sorted row order and adjacent common-prefix lengths.

    Columns are added until every adjacent pair differs within the width.
    """
    n = len(batch)
    while True:
        X = batch.symbols(depth)[:, :depth]
        keys = _packed_keys(X, batch.source.b)
        order = np.lexsort(keys[::-1]) if keys else np.arange(n)
        lcp = _lcp_sorted(X[order])
        if lcp.size == 0 or lcp.max() < depth:
            return order, lcp
        if depth >= cap:
            raise CapReached(f"two sampled strings agree on {cap} symbols")
        depth = min(cap, depth * 2)


def costs_from_lcp(lcp: np.ndarray) -> np.ndarray:
    """Y(1..n) in rank order from adjacent common-prefix lengths.

    A node at level k is a maximal run of ranks whose adjacent lcp values are
    all >= k; every rank inside a run of size >= 2 pays the run size.
    """
    n = lcp.size + 1
    Y = np.zeros(n, dtype=np.int64)
    if n < 2:
        return Y
    top = int(lcp.max())
    for k in range(top + 1):
        link = lcp >= k
        # run boundaries: a new run starts at rank i when link[i-1] is False
        starts = np.concatenate([[True], ~link])
        run_id = np.cumsum(starts) - 1
        sizes = np.bincount(run_id)
        size_of = sizes[run_id]
        Y += np.where(size_of >= 2, size_of, 0)
        if not link.any():
            break
    return Y


def batch_rank_costs(batch: StringBatch, depth: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """(order, Y) where ``order[l-1]`` is the row of rank l and ``Y[l-1]`` its cost."""
    order, lcp = batch_sort(batch, depth)
    return order, costs_from_lcp(lcp)


def batch_sort_cost(lcp: np.ndarray) -> int:
    """Radix Sort cost: sum of J over nodes holding two or more strings."""
    n = lcp.size + 1
    if n < 2:
        return 0
    total = 0
    for k in range(int(lcp.max()) + 1):
        link = lcp >= k
        starts = np.concatenate([[True], ~link])
        sizes = np.bincount(np.cumsum(starts) - 1)
        total += int(sizes[sizes >= 2].sum())
    return total


def batch_heights(lcp: np.ndarray, b: int) -> tuple[int, int]:
    """(H, h) from adjacent common-prefix lengths; see :func:`trie_stats`."""
    n = lcp.size + 1
    if n < 2:
        return 0, 0
    height = int(lcp.max())
    fill = 0
    level = 1
    while level <= height:
        link = lcp >= level
        starts = np.concatenate([[True], ~link])
        sizes = np.bincount(np.cumsum(starts) - 1)
        if (sizes >= 2).sum() < b ** level:
            break
        fill = level
        level += 1
    return height, fill


def batch_select(batch: StringBatch, k: int, cap: int = DEFAULT_CAP) -> tuple[int, int]:
    """Vectorised Radix Select: (row of the k-th smallest string, bucket ops)."""
    n = len(batch)
    if k < 1 or k > n:
        raise InvalidRank(f"rank {k} not in 1..{n}")
    b = batch.source.b
    idx = np.arange(n)
    ops = 0
    x = 0
    while idx.size > 1:
        if x >= cap:
            raise CapReached(f"{idx.size} strings agree on {cap} symbols")
        s = batch.column(x)[idx]
        ops += idx.size
        counts = np.bincount(s, minlength=b)
        cum = np.cumsum(counts)
        L = int(np.searchsorted(cum, k, side="left"))
        k -= int(cum[L] - counts[L])
        idx = idx[s == L]
        x += 1
    return int(idx[0]), ops


def batch_z_cost(batch: StringBatch, v: TailedString, depth: int = 64,
                 cap: int = DEFAULT_CAP) -> int:
    """Z_n(v) for a fixed string v against all strings of the batch."""
    while True:
        X = batch.symbols(depth)[:, :depth]
        target = np.array(v.head(depth), dtype=X.dtype)
        eq = X == target
        full = eq.all(axis=1)
        j = np.where(full, depth, (~eq).argmax(axis=1))
        if full.sum() < 2 or depth >= cap:
            break
        depth = min(cap, depth * 2)
    if full.sum() >= 2:
        raise CapReached(f"two sampled strings agree with {v} on {cap} symbols")
    # Lambda_k = #{i : j_i >= k}
    lam = np.cumsum(np.bincount(j, minlength=depth + 1)[::-1])[::-1]
    return int(lam[lam >= 2].sum())
