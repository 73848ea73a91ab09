"""Probability measures on infinite bit sequences, given by cylinder masses.

A measure is described by two oracles: ``mass(u)``, the probability of all
sequences starting with ``u``, and ``cond(u)``, the conditional probability
that the bit after ``u`` is 1. Sampling and deep mass evaluation go through
``cond`` so tiny products never have to be formed.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import threading
from dataclasses import dataclass
from fractions import Fraction
from itertools import count as _count
from typing import Iterator, Sequence

import numpy as np

from .tree import BinaryTree
from .words import MAX_DEPTH, ROOT, DepthOverflowError, Word, as_word, is_prefix, longest_common_prefix

MAX_CYLINDER_DEPTH = 20
MAX_KERNEL_TABLE_DEPTH = 20
LOG_MASS_DEPTH = 64
TABLE_TOL = 1e-12


class DyadicMeasure:
    """Base class; subclasses provide ``cond`` and usually a faster ``mass``."""

    kind = "abstract"

    def cond(self, u: Word) -> float:
        raise NotImplementedError

    def mass(self, u) -> float:
        u = as_word(u)
        if u.length > LOG_MASS_DEPTH:
            return math.exp(self.log_mass(u))
        m = 1.0
        for k in range(u.length):
            q = self.cond(u.prefix(k))
            m *= q if u[k] else 1.0 - q
            if m == 0.0:
                return 0.0
        return m

    def log_mass(self, u) -> float:
        u = as_word(u)
        s = 0.0
        for k in range(u.length):
            q = self.cond(u.prefix(k))
            f = q if u[k] else 1.0 - q
            if f <= 0.0:
                return -math.inf
            s += math.log(f)
        return s

    def exact_mass(self, u) -> Fraction:
        raise TypeError(f"{self.kind} measures have no exact mass representation")

    def q_table(self, depth: int) -> np.ndarray:
        """Conditionals ``cond(u)`` for all ``|u| < depth`` in heap order."""
        if depth > MAX_KERNEL_TABLE_DEPTH:
            raise DepthOverflowError(f"table depth {depth} exceeds {MAX_KERNEL_TABLE_DEPTH}")
        out = np.empty((1 << depth) - 1)
        for d in range(depth):
            base = (1 << d) - 1
            for value in range(1 << d):
                out[base + value] = self.cond(Word(value, d))
        return out

    def kernel_params(self):
        """``(qtab, table_depth, tail)`` when ``cond`` is constant below a finite depth, else None."""
        return None

    def describe(self) -> str:
        return self.kind

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.describe()}>"


class UniformMeasure(DyadicMeasure):
    kind = "uniform"

    def cond(self, u):
        return 0.5

    def mass(self, u):
        return math.ldexp(1.0, -as_word(u).length)

    def log_mass(self, u):
        return -as_word(u).length * math.log(2.0)

    def exact_mass(self, u):
        return Fraction(1, 1 << as_word(u).length)

    def kernel_params(self):
        return np.empty(0), 0, 0.5


class BernoulliMeasure(DyadicMeasure):
    """I.i.d. bits with P(1) = p; ``p`` may be a Fraction for exact masses."""

    kind = "bernoulli"

    def __init__(self, p):
        if not 0 < p < 1:
            raise ValueError(f"bernoulli parameter must lie strictly between 0 and 1, got {p}")
        self.p = p
        self._pf = float(p)

    def cond(self, u):
        return self._pf

    def mass(self, u):
        u = as_word(u)
        ones = u.ones()
        zeros = u.length - ones
        if u.length > LOG_MASS_DEPTH:
            return math.exp(self.log_mass(u))
        return self._pf ** ones * (1.0 - self._pf) ** zeros

    def log_mass(self, u):
        u = as_word(u)
        ones = u.ones()
        return ones * math.log(self._pf) + (u.length - ones) * math.log1p(-self._pf)

    def exact_mass(self, u):
        u = as_word(u)
        p = Fraction(self.p) if not isinstance(self.p, float) else Fraction(str(self.p))
        ones = u.ones()
        return p ** ones * (1 - p) ** (u.length - ones)

    def kernel_params(self):
        return np.empty(0), 0, self._pf

    def describe(self):
        return f"bernoulli:{self.p}"


class PointMass(DyadicMeasure):
    """Unit mass on one infinite sequence.

    ``v`` is either a LazyWord or a finite Word continued forever with
    ``pad`` bits.
    """

    kind = "point"

    def __init__(self, v, pad: int = 0):
        self.pad = pad
        self._lazy = v if isinstance(v, LazyWord) else None
        self._word = None if self._lazy is not None else as_word(v)

    def _bit(self, i: int) -> int:
        if self._lazy is not None:
            return self._lazy.bit(i)
        return self._word[i] if i < self._word.length else self.pad

    def _on_path(self, u: Word) -> bool:
        if self._lazy is not None:
            return self._lazy.prefix(u.length) == u
        w = self._word
        if u.length <= w.length:
            return is_prefix(u, w, strict=False)
        head = Word(u.value >> (u.length - w.length), w.length)
        if head != w:
            return False
        tail = u.value & ((1 << (u.length - w.length)) - 1)
        return tail == (((1 << (u.length - w.length)) - 1) if self.pad else 0)

    def cond(self, u):
        u = as_word(u)
        if not self._on_path(u):
            return 0.0
        return float(self._bit(u.length))

    def mass(self, u):
        return 1.0 if self._on_path(as_word(u)) else 0.0

    def log_mass(self, u):
        return 0.0 if self._on_path(as_word(u)) else -math.inf

    def exact_mass(self, u):
        return Fraction(int(self._on_path(as_word(u))))

    def kernel_params(self):
        if self._lazy is not None:
            return None
        k = self._word.length
        if k > MAX_KERNEL_TABLE_DEPTH:
            return None
        return self.q_table(k), k, float(self.pad)

    def describe(self):
        if self._lazy is not None:
            return f"point:{self._lazy.realized}..."
        return f"point:{self._word}"


class BoundaryMeasure(DyadicMeasure):
    """Average of uniform distributions on the cylinders of a tree's boundary nodes.

    Masses are computed from the definition: count the boundary nodes below
    ``u``, or split the mass of the boundary node above ``u`` uniformly.
    """

    kind = "boundary"

    def __init__(self, x: BinaryTree):
        if not len(x):
            raise ValueError("boundary measure needs a nonempty tree")
        self.tree = x.copy()
        self._below = self.tree.boundary_count()
        self._den = len(x) + 1

    def _locate(self, u: Word) -> tuple[int, int]:
        """(arena index, -1) if ``u`` is in the tree, else (-1, length of its boundary ancestor)."""
        x = self.tree
        node = 0
        for k in range(u.length):
            child = x._right[node] if u[k] else x._left[node]
            if child < 0:
                return -1, k + 1
            node = child
        return node, -1

    def exact_mass(self, u):
        u = as_word(u)
        i, blen = self._locate(u)
        if i >= 0:
            return Fraction(self._below[i], self._den)
        return Fraction(1, self._den * (1 << (u.length - blen)))

    def mass(self, u):
        u = as_word(u)
        i, blen = self._locate(u)
        if i >= 0:
            return self._below[i] / self._den
        return math.ldexp(1.0 / self._den, -(u.length - blen))

    def cond(self, u):
        u = as_word(u)
        i, _ = self._locate(u)
        if i < 0:
            return 0.5
        x = self.tree
        rc = x._right[i]
        lc = x._left[i]
        right = self._below[rc] if rc >= 0 else 1
        left = self._below[lc] if lc >= 0 else 1
        return right / (left + right)

    def kernel_params(self):
        k = self.tree.height + 1
        if k > MAX_KERNEL_TABLE_DEPTH:
            return None
        return self.q_table(k), k, 0.5

    def describe(self):
        return f"boundary(|x|={len(self.tree)})"


def _uniform_from_key(key: bytes) -> float:
    digest = hashlib.blake2b(key, digest_size=8).digest()
    return (int.from_bytes(digest, "little") >> 11) * 2.0 ** -53


class BstLimitMeasure(DyadicMeasure):
    """The random limit of BST growth: independent uniform splits at every node.

    ``split(w)`` is the fraction of the mass of ``w`` that goes to ``w0``.
    Each split is a uniform variate derived from the measure's seed and the
    node address, memoized on first use, so the measure does not depend on
    the order of queries.
    """

    kind = "bst_limit"

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._key = self.seed.to_bytes(16, "little", signed=False)
        self._memo: dict[tuple[int, int], float] = {}
        self._lock = threading.Lock()

    def split(self, w) -> float:
        w = as_word(w)
        key = (w.length, w.value)
        eta = self._memo.get(key)
        if eta is None:
            nbytes = (w.length + 7) // 8
            eta = _uniform_from_key(self._key + w.length.to_bytes(2, "little")
                                    + w.value.to_bytes(nbytes, "little"))
            with self._lock:
                self._memo.setdefault(key, eta)
        return eta

    def cond(self, u):
        return 1.0 - self.split(u)

    def mass(self, u):
        u = as_word(u)
        if u.length > LOG_MASS_DEPTH:
            return math.exp(self.log_mass(u))
        m = 1.0
        for k in range(u.length):
            eta = self.split(u.prefix(k))
            m *= (1.0 - eta) if u[k] else eta
        return m

    def prefill(self, depth: int) -> None:
        """Draw all splits above ``depth`` so the memo is read-only afterwards."""
        for d in range(depth):
            for value in range(1 << d):
                self.split(Word(value, d))

    def __getstate__(self):
        return {"seed": self.seed}

    def __setstate__(self, state):
        self.__init__(state["seed"])

    def describe(self):
        return f"bst-limit:{self.seed}"


class TableMeasure(DyadicMeasure):
    """Masses given for every word of length ``depth``; uniform splitting below."""

    kind = "table"

    def __init__(self, masses: Sequence, depth: int | None = None, tol: float = TABLE_TOL):
        masses = list(masses)
        if depth is None:
            depth = max(len(masses).bit_length() - 1, 0)
        if depth > MAX_CYLINDER_DEPTH:
            raise DepthOverflowError(f"table depth {depth} exceeds {MAX_CYLINDER_DEPTH}")
        if len(masses) != 1 << depth:
            raise ValueError(f"expected {1 << depth} masses for depth {depth}, got {len(masses)}")
        if any(m < 0 for m in masses):
            raise ValueError("table masses must be nonnegative")
        if abs(sum(masses) - 1) > tol:
            raise ValueError(f"table masses sum to {float(sum(masses))!r}, not 1")
        self.depth = depth
        # heap-ordered masses of all words of length <= depth
        heap: list = [0] * ((1 << (depth + 1)) - 1)
        base = (1 << depth) - 1
        heap[base:] = masses
        for h in range(base - 1, -1, -1):
            heap[h] = heap[2 * h + 1] + heap[2 * h + 2]
        self._heap = heap

    def _mass_any(self, u: Word):
        if u.length <= self.depth:
            return self._heap[u.heap_index]
        top = Word(u.value >> (u.length - self.depth), self.depth)
        return self._heap[top.heap_index], u.length - self.depth

    def mass(self, u):
        u = as_word(u)
        m = self._mass_any(u)
        if isinstance(m, tuple):
            return math.ldexp(float(m[0]), -m[1])
        return float(m)

    def exact_mass(self, u):
        u = as_word(u)
        m = self._mass_any(u)
        if isinstance(m, tuple):
            return Fraction(m[0]) / (1 << m[1])
        return Fraction(m)

    def cond(self, u):
        u = as_word(u)
        if u.length >= self.depth:
            return 0.5 if self.mass(u) > 0 else 0.0
        h = u.heap_index
        total = self._heap[h]
        if total <= 0:
            return 0.0
        return float(self._heap[2 * h + 2]) / float(total)

    def kernel_params(self):
        return self.q_table(self.depth), self.depth, 0.5

    @property
    def masses(self) -> list:
        return self._heap[(1 << self.depth) - 1:]

    def to_json(self) -> str:
        return json.dumps({"depth": self.depth, "masses": [float(m) for m in self.masses]})

    @classmethod
    def from_json(cls, text: str) -> TableMeasure:
        data = json.loads(text)
        return cls(data["masses"], depth=data["depth"])

    def describe(self):
        return f"table(depth={self.depth})"


# -- constructors ----------------------------------------------------------------

def uniform_measure() -> UniformMeasure:
    return UniformMeasure()


def bernoulli_measure(p) -> BernoulliMeasure:
    return BernoulliMeasure(p)


def point_mass(v, pad: int = 0) -> PointMass:
    return PointMass(v, pad)


def boundary_measure(x: BinaryTree) -> BoundaryMeasure:
    return BoundaryMeasure(x)


def sample_bst_limit(rng: np.random.Generator) -> BstLimitMeasure:
    return BstLimitMeasure(int(rng.integers(0, 2**63)))


def table_measure(masses: Sequence, depth: int | None = None) -> TableMeasure:
    return TableMeasure(masses, depth)


# -- lazy infinite words ---------------------------------------------------------

class LazyWord:
    """An infinite bit sequence drawn from a measure, realized on demand.

    Each new bit costs one ``rng.random()`` draw and is 1 when the draw is
    below ``cond(prefix)``.
    """

    __slots__ = ("measure", "rng", "_value", "_length")

    def __init__(self, measure: DyadicMeasure, rng: np.random.Generator, prefix: Word = ROOT):
        if measure.mass(prefix) <= 0:
            raise ValueError(f"cannot extend the zero-mass prefix {str(prefix)!r}")
        self.measure = measure
        self.rng = rng
        self._value = prefix.value
        self._length = prefix.length

    def _extend(self) -> int:
        if self._length >= MAX_DEPTH:
            raise DepthOverflowError("lazy word exceeded MAX_DEPTH")
        q = self.measure.cond(Word(self._value, self._length))
        b = 1 if self.rng.random() < q else 0
        self._value = (self._value << 1) | b
        self._length += 1
        return b

    def bit(self, i: int) -> int:
        while self._length <= i:
            self._extend()
        return (self._value >> (self._length - 1 - i)) & 1

    def prefix(self, k: int) -> Word:
        while self._length < k:
            self._extend()
        return Word(self._value >> (self._length - k), k)

    @property
    def realized(self) -> Word:
        return Word(self._value, self._length)

    def __iter__(self) -> Iterator[int]:
        for i in _count():
            yield self.bit(i)

    def __repr__(self):
        return f"LazyWord({str(self.realized)!r}...)"


def sample_path(mu: DyadicMeasure, rng: np.random.Generator) -> LazyWord:
    return LazyWord(mu, rng)


def mass(mu: DyadicMeasure, u) -> float:
    return mu.mass(as_word(u))


def ultrametric(v, w) -> float:
    """``2**-|common prefix|``; for finite words only when they are equal or diverge."""
    lazy = isinstance(v, LazyWord) or isinstance(w, LazyWord)
    if not lazy:
        v, w = as_word(v), as_word(w)
        if v == w:
            return 0.0
        lcp = longest_common_prefix(v, w)
        if lcp.length == min(v.length, w.length):
            raise ValueError("one word is a prefix of the other; their distance is undetermined")
        return math.ldexp(1.0, -lcp.length)
    bit_v = v.bit if isinstance(v, LazyWord) else as_word(v).__getitem__
    bit_w = w.bit if isinstance(w, LazyWord) else as_word(w).__getitem__
    for k in range(MAX_DEPTH):
        try:
            if bit_v(k) != bit_w(k):
                return math.ldexp(1.0, -k)
        except IndexError:
            raise ValueError("finite word ended before the sequences diverged") from None
    raise ValueError(f"sequences agree on {MAX_DEPTH} bits; equality is not decidable")


def cylinder_masses(mu: DyadicMeasure, depth: int) -> np.ndarray:
    """Masses of all cylinders of length ``depth`` in lexicographic order."""
    if depth > MAX_CYLINDER_DEPTH:
        raise DepthOverflowError(f"cylinder depth {depth} exceeds {MAX_CYLINDER_DEPTH}")
    level = np.ones(1)
    for d in range(depth):
        q = np.array([mu.cond(Word(v, d)) for v in range(1 << d)])
        nxt = np.empty(2 * level.size)
        nxt[0::2] = level * (1.0 - q)
        nxt[1::2] = level * q
        level = nxt
    return level


def cylinder_csv(mu: DyadicMeasure, depth: int) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["word", "mass"])
    for value, m in enumerate(cylinder_masses(mu, depth)):
        writer.writerow([str(Word(value, depth)), repr(float(m))])
    return buf.getvalue()


@dataclass
class AdditivityReport:
    depth: int
    tol: float
    max_defect: float
    worst: Word
    root_mass: float

    @property
    def passed(self) -> bool:
        return self.max_defect <= self.tol and abs(self.root_mass - 1.0) <= self.tol


def check_additivity(mu: DyadicMeasure, depth: int, tol: float = 1e-10) -> AdditivityReport:
    """Largest violation of ``mass(u) = mass(u0) + mass(u1)`` over ``|u| < depth``."""
    worst, worst_u = 0.0, ROOT
    for d in range(depth):
        for value in range(1 << d):
            u = Word(value, d)
            defect = abs(mu.mass(u) - mu.mass(u.child(0)) - mu.mass(u.child(1)))
            if defect > worst:
                worst, worst_u = defect, u
    return AdditivityReport(depth, tol, worst, worst_u, mu.mass(ROOT))


def t0(x: BinaryTree, u) -> Fraction:
    """Fraction of the boundary of ``x`` lying in the cylinder of ``u``."""
    u = as_word(u)
    if not len(x):
        raise ValueError("t0 needs a nonempty tree")
    den = len(x) + 1
    i = x.index_of(u)
    if i >= 0:
        hits = 0
        stack = [i]
        while stack:
            j = stack.pop()
            for c in (x._left[j], x._right[j]):
                if c >= 0:
                    stack.append(c)
                else:
                    hits += 1
        return Fraction(hits, den)
    if u.length and u.parent in x:
        return Fraction(1, den)
    return Fraction(0)
