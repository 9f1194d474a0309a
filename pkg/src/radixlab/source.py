"""Markov sources, reproducible string streams and string-order primitives.

A source over the alphabet {0, ..., b-1} is given by an initial law ``mu``
and a row-stochastic matrix ``P``.  Strings are infinite; in code they are
represented by :class:`TailedString`, a finite prefix followed by a
symbolic tail (all zeros, all ``b-1``, or a lazily sampled Markov path).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import (
    BadDimension,
    CapReached,
    NonStochastic,
    NotInSigmaZero,
    OutOfRange,
    SymbolOutOfRange,
)

ZEROS = "zeros"
MAX = "max"
SAMPLED = "sampled"

DEFAULT_CAP = 4096
SUM_TOL = 1e-12

Init = Optional[int]


@dataclass(frozen=True)
class MarkovSpec:
    """Raw source description, as read from JSON."""

    b: int
    mu: Sequence[float]
    P: Sequence[Sequence[float]]

    @classmethod
    def from_dict(cls, d: dict) -> "MarkovSpec":
        return cls(int(d["b"]), tuple(float(x) for x in d["mu"]),
                   tuple(tuple(float(x) for x in row) for row in d["P"]))

    @classmethod
    def from_json(cls, text: str) -> "MarkovSpec":
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return {"b": self.b, "mu": list(self.mu), "P": [list(r) for r in self.P]}


class MarkovSource:
    """A validated source with cached tables.

    Build it through :func:`validate_spec` or one of the constructors
    (:func:`uniform`, :func:`memoryless`, :func:`two_state`,
    :func:`linear_family`).
    """

    def __init__(self, spec: MarkovSpec, mu: np.ndarray, P: np.ndarray):
        self.spec = spec
        self.b = int(P.shape[0])
        self.mu = mu
        self.P = P
        self.p_max = float(P.max())
        self.p_min = float(P.min())
        # exclusive prefix sums: cum[r, k] = sum_{s<k} P[r, s]
        self.cum_P = np.concatenate([np.zeros((self.b, 1)), np.cumsum(P, axis=1)[:, :-1]], axis=1)
        self.cum_mu = np.concatenate([[0.0], np.cumsum(mu)[:-1]])
        for arr in (self.mu, self.P, self.cum_P, self.cum_mu):
            arr.setflags(write=False)

    def law(self, init: Init = None) -> np.ndarray:
        """Law of the first symbol: ``mu`` or row ``init`` of P."""
        if init is None:
            return self.mu
        if not 0 <= init < self.b:
            raise SymbolOutOfRange(f"init row {init} outside alphabet of size {self.b}")
        return self.P[init]

    def cum_law(self, init: Init = None) -> np.ndarray:
        if init is None:
            return self.cum_mu
        self.law(init)
        return self.cum_P[init]

    def is_memoryless(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(self.P - self.P[0]) <= tol))

    def to_dict(self) -> dict:
        return {"b": self.b, "mu": self.mu.tolist(), "P": self.P.tolist()}

    def __repr__(self) -> str:
        return f"MarkovSource(b={self.b}, mu={self.mu.tolist()}, P={self.P.tolist()})"


def validate_spec(spec: Union[MarkovSpec, dict]) -> MarkovSource:
    if isinstance(spec, dict):
        spec = MarkovSpec.from_dict(spec)
    b = spec.b
    try:
        mu = np.array(spec.mu, dtype=float)
        P = np.array(spec.P, dtype=float)
    except ValueError as exc:  # ragged rows
        raise BadDimension(str(exc)) from exc
    if b < 2 or mu.shape != (b,) or P.shape != (b, b):
        raise BadDimension(f"expected b>=2, mu of length b and P of shape (b, b); got b={b}, "
                           f"mu {mu.shape}, P {P.shape}")
    for name, arr in (("mu", mu), ("P", P)):
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0) or np.any(arr >= 1.0):
            raise OutOfRange(f"entries of {name} must lie strictly inside (0, 1)")
    if abs(mu.sum() - 1.0) > SUM_TOL:
        raise NonStochastic(f"mu sums to {mu.sum()!r}")
    dev = np.abs(P.sum(axis=1) - 1.0)
    if np.any(dev > SUM_TOL):
        raise NonStochastic(f"row {int(dev.argmax())} of P sums to {P.sum(axis=1)[dev.argmax()]!r}")
    return MarkovSource(spec, mu, P)


def from_json(text: str) -> MarkovSource:
    return validate_spec(MarkovSpec.from_json(text))


def load_source(path) -> MarkovSource:
    with open(path) as fh:
        return from_json(fh.read())


def memoryless(p: Sequence[float]) -> MarkovSource:
    p = tuple(float(x) for x in p)
    return validate_spec(MarkovSpec(len(p), p, tuple(p for _ in p)))


def uniform(b: int) -> MarkovSource:
    return memoryless([1.0 / b] * b)


def two_state(p00: float, p10: float, mu: Sequence[float] = (0.5, 0.5)) -> MarkovSource:
    """Binary Markov source with P(0|0) = p00 and P(0|1) = p10."""
    return validate_spec(MarkovSpec(2, tuple(mu), ((p00, 1 - p00), (p10, 1 - p10))))


def linear_family(beta: float, b: int) -> MarkovSource:
    """Memoryless source with geometric weights p_k proportional to beta**k."""
    w = np.array([beta ** k for k in range(b)], dtype=float)
    return memoryless((w / w.sum()).tolist())


def _check_word(source: MarkovSource, word: Iterable[int]) -> tuple:
    word = tuple(int(s) for s in word)
    for s in word:
        if not 0 <= s < source.b:
            raise SymbolOutOfRange(f"symbol {s} not in alphabet of size {source.b}")
    return word


def pi(source: MarkovSource, init: Init, word: Iterable[int]) -> float:
    """Probability that a string starts with ``word``."""
    word = _check_word(source, word)
    if not word:
        return 1.0
    p = float(source.law(init)[word[0]])
    for a, c in zip(word, word[1:]):
        p *= source.P[a, c]
    return p


def prefix_probs(source: MarkovSource, init: Init, word: Sequence[int]) -> np.ndarray:
    """Array of pi(word[:k]) for k = 0..len(word)."""
    out = np.empty(len(word) + 1)
    out[0] = 1.0
    q = source.law(init)
    p = 1.0
    for k, s in enumerate(word):
        p *= q[s]
        out[k + 1] = p
        q = source.P[s]
    return out


# ---------------------------------------------------------------------------
# sampled string batches

class StringBatch:
    """``n`` independent strings drawn from one source.

    Symbols are produced in blocks of 64 columns.  Block ``c`` is built from
    a generator seeded by ``SeedSequence(entropy, spawn_key=(c,))`` and row
    ``s`` of each block only uses the ``s``-th row of uniforms, so a string's
    symbols depend on (seed, row, position) and not on how deep the other
    strings were expanded.
    """

    BLOCK = 64

    def __init__(self, source: MarkovSource, n: int, seed, init: Init = None):
        if n < 0:
            raise ValueError("n must be non-negative")
        self.source = source
        self.n = int(n)
        self.init = init
        self.entropy = tuple(int(s) for s in seed) if isinstance(seed, (tuple, list)) else (int(seed),)
        self._dtype = np.uint8 if source.b <= 256 else np.uint16
        self._cols = np.empty((self.n, 0), dtype=self._dtype)
        # thresholds used to turn uniforms into symbols
        self._thr_init = source.cum_law(init)[1:]
        self._thr_rows = source.cum_P[:, 1:]

    def __len__(self) -> int:
        return self.n

    @property
    def depth(self) -> int:
        return self._cols.shape[1]

    def _block(self, c: int) -> np.ndarray:
        ss = np.random.SeedSequence(self.entropy, spawn_key=(c,))
        u = np.random.default_rng(ss).random((self.n, self.BLOCK))
        out = np.empty((self.n, self.BLOCK), dtype=self._dtype)
        if c == 0:
            prev = None
        else:
            prev = self._cols[:, -1].astype(np.intp)
        for j in range(self.BLOCK):
            thr = self._thr_init[None, :] if prev is None else self._thr_rows[prev]
            sym = (u[:, j, None] >= thr).sum(axis=1)
            out[:, j] = sym
            prev = sym
        return out

    def symbols(self, depth: int) -> np.ndarray:
        """Symbol matrix with at least ``depth`` columns (read-only view)."""
        while self._cols.shape[1] < depth:
            c = self._cols.shape[1] // self.BLOCK
            self._cols = np.concatenate([self._cols, self._block(c)], axis=1)
            self._cols.setflags(write=False)
        return self._cols

    def column(self, i: int) -> np.ndarray:
        return self.symbols(i + 1)[:, i]

    def symbol(self, row: int, i: int) -> int:
        if i >= self.depth:
            self.symbols(i + 1)
        return int(self._cols[row, i])

    def string(self, row: int) -> "TailedString":
        return TailedString((), self.source.b, tail=SAMPLED, batch=self, row=row)

    def strings(self) -> list:
        return [self.string(i) for i in range(self.n)]


def sample_strings(source: MarkovSource, init: Init, n: int, seed) -> list:
    """``n`` independent strings with lazily sampled tails."""
    return StringBatch(source, n, seed, init).strings()


# ---------------------------------------------------------------------------
# infinite strings

class TailedString:
    """An infinite string: ``prefix`` followed by a symbolic tail.

    Constant tails are normalised so the prefix never ends with the tail
    symbol; two constant-tail strings are therefore equal exactly when
    their prefixes and tails are.  A sampled tail reads column
    ``offset + (i - len(prefix))`` of row ``row`` in ``batch``.
    """

    __slots__ = ("prefix", "b", "tail", "batch", "row", "offset")

    def __init__(self, prefix: Iterable[int], b: int, tail: str = ZEROS,
                 batch: Optional[StringBatch] = None, row: int = 0, offset: int = 0):
        prefix = tuple(int(s) for s in prefix)
        for s in prefix:
            if not 0 <= s < b:
                raise SymbolOutOfRange(f"symbol {s} not in alphabet of size {b}")
        if tail == SAMPLED:
            if batch is None:
                raise ValueError("sampled tail needs a batch")
        elif tail in (ZEROS, MAX):
            c = 0 if tail == ZEROS else b - 1
            k = len(prefix)
            while k and prefix[k - 1] == c:
                k -= 1
            prefix = prefix[:k]
            batch = None
            row = offset = 0
        else:
            raise ValueError(f"unknown tail {tail!r}")
        self.prefix = prefix
        self.b = int(b)
        self.tail = tail
        self.batch = batch
        self.row = int(row)
        self.offset = int(offset)

    # -- construction helpers
    @classmethod
    def parse(cls, text: str, b: int = 2) -> "TailedString":
        """Parse ``"0110"`` (zeros tail) or ``"01:max"`` / ``"01:zeros"``."""
        text = text.strip().replace("…", "").replace("...", "")
        tail = ZEROS
        if ":" in text:
            text, tail = text.split(":", 1)
        digits = [int(ch) for ch in text if ch not in " ,"]
        return cls(digits, b, tail=tail)

    @classmethod
    def from_record(cls, rec: dict, b: int, batch: Optional[StringBatch] = None) -> "TailedString":
        tail = rec.get("tail", ZEROS)
        if tail == SAMPLED:
            if batch is None:
                raise ValueError("sampled record needs the originating batch")
            return cls(rec["prefix"], b, SAMPLED, batch, rec["key"], rec.get("offset", 0))
        return cls(rec["prefix"], b, tail)

    def to_record(self, upto: int = 0) -> dict:
        """JSON-ready dict; sampled strings include ``upto`` realised symbols."""
        if self.tail != SAMPLED:
            return {"prefix": list(self.prefix), "tail": self.tail}
        k = max(upto, len(self.prefix))
        return {"prefix": self.head(k), "tail": SAMPLED, "key": self.row,
                "offset": self.offset + k - len(self.prefix)}

    # -- symbol access
    @property
    def constant_tail(self) -> bool:
        return self.tail != SAMPLED

    @property
    def tail_symbol(self) -> Optional[int]:
        if self.tail == ZEROS:
            return 0
        if self.tail == MAX:
            return self.b - 1
        return None

    def __getitem__(self, i: int) -> int:
        if i < 0:
            raise IndexError("negative index")
        if i < len(self.prefix):
            return self.prefix[i]
        if self.tail == ZEROS:
            return 0
        if self.tail == MAX:
            return self.b - 1
        return self.batch.symbol(self.row, self.offset + i - len(self.prefix))

    def head(self, k: int) -> list:
        if self.tail == SAMPLED and k > len(self.prefix):
            cols = self.batch.symbols(self.offset + k - len(self.prefix))
            rest = cols[self.row, self.offset:self.offset + k - len(self.prefix)].tolist()
            return list(self.prefix) + rest
        return [self[i] for i in range(k)]

    def tail_key(self, i: int):
        """Identifies the tail from position ``i`` on, once past the prefix."""
        if self.tail == SAMPLED:
            return (SAMPLED, id(self.batch), self.row, self.offset + i - len(self.prefix))
        return (self.tail, self.b)

    # -- transforms
    def shift(self, k: int = 1) -> "TailedString":
        """Drop the first ``k`` symbols."""
        if k <= len(self.prefix):
            return TailedString(self.prefix[k:], self.b, self.tail, self.batch, self.row, self.offset)
        extra = k - len(self.prefix)
        if self.tail == SAMPLED:
            return TailedString((), self.b, SAMPLED, self.batch, self.row, self.offset + extra)
        return TailedString((), self.b, self.tail)

    def in_sigma_zero(self) -> bool:
        return self.tail == ZEROS and len(self.prefix) > 0

    def minus(self) -> "TailedString":
        """Left companion: ``u(c-1)`` followed by all ``b-1`` when self is ``uc000...``."""
        if not self.in_sigma_zero():
            raise NotInSigmaZero(f"{self} does not end in zeros after a nonzero symbol")
        return TailedString(self.prefix[:-1] + (self.prefix[-1] - 1,), self.b, MAX)

    # -- comparison
    def __eq__(self, other) -> bool:
        if not isinstance(other, TailedString):
            return NotImplemented
        if self.constant_tail and other.constant_tail:
            return (self.prefix, self.tail, self.b) == (other.prefix, other.tail, other.b)
        try:
            return coincidence(self, other) == math.inf
        except CapReached:
            return False

    def __hash__(self) -> int:
        if self.constant_tail:
            return hash((self.prefix, self.tail, self.b))
        return hash((id(self.batch), self.row, self.offset, self.prefix))

    def __str__(self) -> str:
        p = "".join(str(s) if s < 10 else f"[{s}]" for s in self.prefix)
        if self.tail == ZEROS:
            return p or "0"
        if self.tail == MAX:
            return f"{p}:max"
        return f"{p}~{self.row}@{self.offset}"

    def __repr__(self) -> str:
        return f"TailedString({self})"


def coincidence(v: TailedString, w: TailedString, cap: int = DEFAULT_CAP):
    """Length of the longest common prefix; ``math.inf`` for identical strings."""
    if cap < 1:
        raise ValueError("cap must be >= 1")
    lv, lw = len(v.prefix), len(w.prefix)
    for i in range(cap):
        if i >= lv and i >= lw and v.tail_key(i) == w.tail_key(i):
            return math.inf
        if v[i] != w[i]:
            return i
    raise CapReached(f"strings {v} and {w} agree on the first {cap} symbols")


LESS, EQUAL, GREATER = -1, 0, 1


def compare_strings(v: TailedString, w: TailedString, cap: int = DEFAULT_CAP) -> int:
    """-1, 0 or 1 in lexicographic order."""
    j = coincidence(v, w, cap)
    if j == math.inf:
        return EQUAL
    return LESS if v[j] < w[j] else GREATER
