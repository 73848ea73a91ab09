"""Random tree growth: DST(mu), BST, uniform trees and nested uniform growth."""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np
from scipy.special import gammaln

from . import _kernels
from .measures import DyadicMeasure, LazyWord
from .tree import BinaryTree
from .words import ROOT, Word, as_word


@dataclass
class Trajectory:
    """A nested tree sequence X_1 = {root} ⊂ X_2 ⊂ ... ⊂ X_n.

    ``tree`` is the final tree; its arena order is the insertion order, so
    the node added at step k+1 sits at arena index k.
    """

    tree: BinaryTree
    model: str = "unknown"
    seed: int | None = None
    _entry: dict = field(default=None, init=False, repr=False, compare=False)

    @property
    def n(self) -> int:
        return len(self.tree)

    @property
    def log(self) -> list[Word]:
        """Inserted words v_2, ..., v_n."""
        return self.tree.arena_words()[1:]

    @classmethod
    def from_log(cls, log: Sequence, model: str = "unknown", seed: int | None = None) -> Trajectory:
        x = BinaryTree.singleton()
        for v in log:
            x.insert(as_word(v))
        return cls(x, model, seed)

    def replay(self) -> Iterator[BinaryTree]:
        """Yield X_1, X_2, ..., X_n (one tree object, grown in place)."""
        x = BinaryTree.singleton()
        yield x
        for v in self.log:
            x.insert(v)
            yield x

    def prefix_tree(self, k: int) -> BinaryTree:
        if not 1 <= k <= self.n:
            raise ValueError(f"step {k} outside 1..{self.n}")
        x = BinaryTree.singleton()
        for v in self.log[: k - 1]:
            x.insert(v)
        return x

    def to_text(self) -> str:
        seed = "" if self.seed is None else self.seed
        lines = [f"n={self.n} model={self.model} seed={seed}"]
        lines.extend(str(v) for v in self.log)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> Trajectory:
        lines = text.splitlines()
        header = dict(item.split("=", 1) for item in lines[0].split())
        seed = int(header["seed"]) if header.get("seed") else None
        tr = cls.from_log([Word.parse(s) for s in lines[1:] if s.strip()], header.get("model", "unknown"), seed)
        if tr.n != int(header["n"]):
            raise ValueError(f"header says n={header['n']} but the log has {tr.n} nodes")
        return tr


@dataclass(frozen=True)
class GrowthModel:
    tag: str
    measure: DyadicMeasure | None = None

    def __post_init__(self):
        if self.tag not in ("dst", "bst", "remy", "catalan_direct"):
            raise ValueError(f"unknown growth model {self.tag!r}")
        if self.tag == "dst" and self.measure is None:
            raise ValueError("dst growth needs a measure")


def _resolve_engine(engine: str, available: bool) -> str:
    if engine == "auto":
        return "numba" if available else "python"
    if engine not in ("numba", "python"):
        raise ValueError(f"unknown engine {engine!r}")
    if engine == "numba" and not available:
        raise ValueError("this measure cannot be tabulated for the compiled engine")
    return engine


def _arena_tree(arrays) -> BinaryTree:
    _, _, _, parent, side, _ = arrays
    return BinaryTree.from_parents(parent, side)


def dst_grow(mu: DyadicMeasure, n: int, rng: np.random.Generator, engine: str = "auto") -> Trajectory:
    """Digital search tree growth with i.i.d. inputs from ``mu``.

    Both engines consume the generator identically and return the same tree.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    params = mu.kernel_params()
    if _resolve_engine(engine, params is not None) == "numba":
        qtab, table_depth, tail = params
        tree = _arena_tree(_kernels.dst_arena(np.ascontiguousarray(qtab, dtype=np.float64),
                                              table_depth, float(tail), n, rng))
        return Trajectory(tree, "dst")
    x = BinaryTree.singleton()
    for _ in range(n - 1):
        x._insert_exit(iter(LazyWord(mu, rng)))
    return Trajectory(x, "dst")


def bst_grow(n: int, rng: np.random.Generator, engine: str = "auto") -> Trajectory:
    """Binary search tree growth: each step fills the boundary node at a uniform rank."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if _resolve_engine(engine, True) == "numba":
        return Trajectory(_arena_tree(_kernels.bst_arena(n, rng)), "bst")
    x = BinaryTree.singleton()
    for k in range(1, n):
        _insert_at_rank(x, int(rng.random() * (k + 1)))
    return Trajectory(x, "bst")


def _insert_at_rank(x: BinaryTree, r: int) -> int:
    """Insert the boundary node with 0-based left-right position ``r``."""
    node = 0
    count, left, right = x._count, x._left, x._right
    while True:
        count[node] += 1
        lc = left[node]
        nleft = count[lc] if lc >= 0 else 0
        if r <= nleft:
            b, child = 0, lc
        else:
            r -= nleft + 1
            b, child = 1, right[node]
        if child < 0:
            return x._append(node, b, 2 * x._value[node] + b, x._depth[node] + 1)
        node = child


def bst_grow_from_values(values: Sequence[float], n: int | None = None) -> Trajectory:
    """BST growth driven by explicit keys; the rank of each new key picks the boundary node."""
    values = list(values)
    if n is None:
        n = len(values)
    if not 1 <= n <= len(values):
        raise ValueError(f"need between 1 and {len(values)} nodes, got {n}")
    seen = [values[0]]
    x = BinaryTree.singleton()
    for k in range(1, n):
        v = values[k]
        pos = bisect.bisect_left(seen, v)
        if pos < len(seen) and seen[pos] == v:
            raise ValueError(f"tied input value {v!r}")
        seen.insert(pos, v)
        # rank among the first k+1 values is pos+1
        _insert_at_rank(x, pos)
    return Trajectory(x, "bst")


# -- uniform trees -------------------------------------------------------------------

@lru_cache(maxsize=None)
def catalan(n: int) -> int:
    if n < 0:
        raise ValueError("catalan index must be nonnegative")
    return math.comb(2 * n, n) // (n + 1)


def split_pmf(n: int) -> list[Fraction]:
    """Law of the left subtree size of a uniform tree with ``n`` nodes."""
    if n < 1:
        raise ValueError("split law needs n >= 1")
    cn = catalan(n)
    return [Fraction(catalan(k) * catalan(n - 1 - k), cn) for k in range(n)]


@lru_cache(maxsize=4096)
def _split_cdf(n: int) -> list[float]:
    cn = catalan(n)
    acc = 0
    out = []
    for k in range(n):
        acc += catalan(k) * catalan(n - 1 - k)
        out.append(acc / cn)
    out[-1] = 1.0
    return out


def uniform_tree(n: int, rng: np.random.Generator) -> BinaryTree:
    """Uniform random tree with ``n`` nodes by recursive Catalan splits (preorder arena)."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return BinaryTree()
    parent: list[int] = []
    side: list[int] = []
    stack = [(n, -1, 0)]
    draws = iter(rng.random(n).tolist())  # at most one draw per node
    while stack:
        m, p, s = stack.pop()
        idx = len(parent)
        parent.append(p)
        side.append(s)
        if m == 1:
            continue
        k = bisect.bisect_right(_split_cdf(m), next(draws))
        if k > m - 1:
            k = m - 1
        if m - 1 - k:
            stack.append((m - 1 - k, idx, 1))
        if k:
            stack.append((k, idx, 0))
    return BinaryTree.from_parents(np.array(parent, dtype=np.int64), np.array(side, dtype=np.int8))


@lru_cache(maxsize=1024)
def _split_partial_sums(m: int) -> list[int]:
    acc = 0
    out = []
    for k in range(m):
        acc += catalan(k) * catalan(m - 1 - k)
        out.append(acc)
    return out


@lru_cache(maxsize=1 << 16)
def grow_left_probability(m: int, k: int) -> Fraction:
    """P(new node goes left | subtree of size m with left part k) in nested uniform growth.

    This is the monotone coupling of the left-size laws at sizes m and m+1:
    the left size either stays or grows by one, and both marginals are the
    Catalan split laws.
    """
    s_m = _split_partial_sums(m)
    s_next = _split_partial_sums(m + 1)
    c_m, c_next = catalan(m), catalan(m + 1)
    below = s_m[k - 1] if k else 0
    stay = Fraction(s_next[k] * c_m - below * c_next, c_next * catalan(k) * catalan(m - 1 - k))
    if not 0 <= stay <= 1:
        raise ArithmeticError(f"no monotone coupling at m={m}, k={k}")
    return 1 - stay


EXACT_COUPLING_SIZE = 256


def _log_catalan(m: int) -> np.ndarray:
    i = np.arange(m + 1, dtype=float)
    return gammaln(2 * i + 1) - 2 * gammaln(i + 1) - np.log1p(i)


@lru_cache(maxsize=2048)
def grow_left_table(m: int) -> np.ndarray:
    """``grow_left_probability(m, k)`` for every k as floats.

    Exact rationals up to EXACT_COUPLING_SIZE; above it the split laws come
    from log-Catalan numbers, with relative error well below 1e-6.
    """
    if m <= EXACT_COUPLING_SIZE:
        return np.array([float(grow_left_probability(m, k)) for k in range(m)])
    logc = _log_catalan(m + 1)
    k = np.arange(m)
    p_m = np.exp(logc[k] + logc[m - 1 - k] - logc[m])
    k1 = np.arange(m + 1)
    p_next = np.exp(logc[k1] + logc[m - k1] - logc[m + 1])
    f_m = np.cumsum(p_m) / p_m.sum()
    f_next = np.cumsum(p_next) / p_next.sum()
    below = np.concatenate(([0.0], f_m[:-1]))
    stay = np.clip((f_next[:m] - below) / (p_m / p_m.sum()), 0.0, 1.0)
    return 1.0 - stay


def remy_grow(n: int, rng: np.random.Generator) -> Trajectory:
    """Nested growth whose tree at every size k is uniform on trees with k nodes."""
    if n < 1:
        raise ValueError("n must be at least 1")
    x = BinaryTree.singleton()
    count, left, right = x._count, x._left, x._right
    for _ in range(n - 1):
        node = 0
        while True:
            m = count[node]
            lc = left[node]
            k = count[lc] if lc >= 0 else 0
            go_left = rng.random() < grow_left_table(m)[k]
            count[node] += 1
            child = lc if go_left else right[node]
            if child < 0:
                b = 0 if go_left else 1
                x._append(node, b, 2 * x._value[node] + b, x._depth[node] + 1)
                break
            node = child
    return Trajectory(x, "remy")


# -- trajectory laws and entry times --------------------------------------------------

def trajectory_probability(mu: DyadicMeasure, tr: Trajectory, exact: bool = False):
    """DST(mu) probability of the first ``tr.n`` trees: product of the masses of the inserted words."""
    if exact:
        p = Fraction(1)
        for v in tr.log:
            p *= mu.exact_mass(v)
        return p
    p = 1.0
    for v in tr.log:
        p *= mu.mass(v)
    return p


def log_trajectory_probability(mu: DyadicMeasure, tr: Trajectory) -> float:
    return math.fsum(mu.log_mass(v) for v in tr.log)


def all_trajectories(n: int) -> Iterator[Trajectory]:
    """Every nested sequence X_1 ⊂ ... ⊂ X_n; there are n! of them."""
    if n < 1:
        raise ValueError("n must be at least 1")

    def rec(x: BinaryTree, log: list[Word]):
        if len(x) == n:
            yield Trajectory.from_log(log, "enumerated")
            return
        for v in x.external_boundary():
            y = x.copy()
            y.insert(v)
            log.append(v)
            yield from rec(y, log)
            log.pop()

    yield from rec(BinaryTree.singleton(), [])


def entry_time(tr: Trajectory, u) -> int | None:
    """First step k with u in X_k, or None if u never enters within the trajectory."""
    i = tr.tree.index_of(as_word(u))
    return i + 1 if i >= 0 else None


# -- top-level subtree counts ----------------------------------------------------------

def _checkpoints(checkpoints) -> np.ndarray:
    cp = np.asarray(sorted(checkpoints), dtype=np.int64)
    if cp.size and cp[0] < 1:
        raise ValueError("checkpoints must be positive sizes")
    return cp


def dst_top_counts(mu: DyadicMeasure, n: int, depth: int, rng: np.random.Generator, checkpoints=()):
    """Exact DST subtree sizes of all words of length <= depth (heap order).

    Items are routed only through the top ``depth`` levels, which is all the
    routing these counts depend on. Returns ``(counts, snapshots)``.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    cp = _checkpoints(checkpoints)
    if cp.size and cp[-1] > n:
        raise ValueError("checkpoint beyond the final size")
    qtab = mu.q_table(depth)
    return _kernels.dst_top(qtab, depth, n, rng, cp)


def bst_top_counts(n: int, depth: int, rng: np.random.Generator, checkpoints=()):
    """BST analogue of ``dst_top_counts``; pathwise equal to ``bst_grow`` with the same generator."""
    if n < 1:
        raise ValueError("n must be at least 1")
    cp = _checkpoints(checkpoints)
    if cp.size and cp[-1] > n:
        raise ValueError("checkpoint beyond the final size")
    return _kernels.bst_top(depth, n, rng, cp)
