"""Prefix-stable binary trees stored as an arena with per-node subtree counts."""
from __future__ import annotations

import json
from collections import Counter
from fractions import Fraction
from typing import Callable, Iterable, Iterator

import numpy as np

from . import _kernels
from .words import ROOT, Word, as_word

MAX_COMPLETE_HEIGHT = 22


class InsertionError(ValueError):
    """Raised when a word cannot be added without breaking prefix stability."""


class BinaryTree:
    """A finite prefix-stable set of words.

    Node ``i`` of the arena stores its children, parent, depth, packed word
    value and subtree count. Nodes are kept in the order they were added, so
    parents always precede their descendants.
    """

    __slots__ = ("_left", "_right", "_count", "_parent", "_depth", "_value", "_height")

    def __init__(self, words: Iterable | None = None):
        self._left: list[int] = []
        self._right: list[int] = []
        self._count: list[int] = []
        self._parent: list[int] = []
        self._depth: list[int] = []
        self._value: list[int] = []
        self._height = -1
        if words is not None:
            for w in sorted((as_word(w) for w in words), key=lambda w: w.length):
                self.insert(w)

    @classmethod
    def singleton(cls) -> BinaryTree:
        return cls([ROOT])

    @classmethod
    def from_parents(cls, parent, side) -> BinaryTree:
        """Build from parent indices and child sides (parents must precede children)."""
        parent = np.ascontiguousarray(parent, dtype=np.int64)
        side = np.ascontiguousarray(side, dtype=np.int8)
        tree = cls()
        if parent.shape[0] == 0:
            return tree
        left, right, depth, val, count, overflow = _kernels.finish_arena(parent, side)
        tree._left = left.tolist()
        tree._right = right.tolist()
        tree._count = count.tolist()
        tree._parent = parent.tolist()
        tree._depth = depth.tolist()
        if overflow:
            values = [0] * parent.shape[0]
            for i, (p, s) in enumerate(zip(tree._parent, side.tolist())):
                if i:
                    values[i] = 2 * values[p] + s
            tree._value = values
        else:
            tree._value = val.tolist()
        tree._height = int(depth.max())
        return tree

    # -- size and membership -------------------------------------------------

    def __len__(self) -> int:
        return len(self._count)

    @property
    def height(self) -> int:
        """Maximal node depth; -1 for the empty tree."""
        return self._height

    def _find(self, u: Word) -> int:
        if not self._count:
            return -1
        node = 0
        v, n = u.value, u.length
        left, right = self._left, self._right
        for i in range(n - 1, -1, -1):
            node = right[node] if (v >> i) & 1 else left[node]
            if node < 0:
                return -1
        return node

    def __contains__(self, u) -> bool:
        return self._find(as_word(u)) >= 0

    def index_of(self, u) -> int:
        """Arena index of ``u``, or -1 when absent."""
        return self._find(as_word(u))

    def word_at(self, i: int) -> Word:
        return Word(self._value[i], self._depth[i])

    def arena_words(self) -> list[Word]:
        """All nodes in arena (insertion) order."""
        return [Word(v, d) for v, d in zip(self._value, self._depth)]

    def __iter__(self) -> Iterator[Word]:
        """Nodes in preorder."""
        if not self._count:
            return
        stack = [0]
        while stack:
            i = stack.pop()
            yield Word(self._value[i], self._depth[i])
            if self._right[i] >= 0:
                stack.append(self._right[i])
            if self._left[i] >= 0:
                stack.append(self._left[i])

    def word_set(self) -> frozenset[Word]:
        return frozenset(self.arena_words())

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryTree):
            return NotImplemented
        return len(self) == len(other) and self.word_set() == other.word_set()

    __hash__ = None

    def key(self) -> tuple[str, ...]:
        """Canonical hashable form: sorted textual node words."""
        return tuple(sorted(str(w) for w in self.arena_words()))

    def copy(self) -> BinaryTree:
        t = BinaryTree()
        t._left = self._left[:]
        t._right = self._right[:]
        t._count = self._count[:]
        t._parent = self._parent[:]
        t._depth = self._depth[:]
        t._value = self._value[:]
        t._height = self._height
        return t

    # -- growth ----------------------------------------------------------------

    def _append(self, parent: int, bit: int, value: int, depth: int) -> int:
        k = len(self._count)
        self._left.append(-1)
        self._right.append(-1)
        self._count.append(1)
        self._parent.append(parent)
        self._depth.append(depth)
        self._value.append(value)
        if depth > self._height:
            self._height = depth
        if parent >= 0:
            if bit:
                self._right[parent] = k
            else:
                self._left[parent] = k
        return k

    def insert(self, v) -> int:
        """Add the boundary node ``v``; returns its arena index.

        Subtree counts along the root-to-``v`` path grow by one.
        """
        v = as_word(v)
        if not self._count:
            if v.length:
                raise InsertionError(f"parent of {str(v)!r} is not in the tree")
            return self._append(-1, 0, 0, 0)
        if not v.length:
            raise InsertionError("the root is already in the tree")
        path = [0]
        node = 0
        value, n = v.value, v.length
        for i in range(n - 1, 0, -1):
            node = self._right[node] if (value >> i) & 1 else self._left[node]
            if node < 0:
                raise InsertionError(f"parent of {str(v)!r} is not in the tree")
            path.append(node)
        bit = value & 1
        if (self._right if bit else self._left)[node] >= 0:
            raise InsertionError(f"{str(v)!r} is already in the tree")
        count = self._count
        for i in path:
            count[i] += 1
        return self._append(node, bit, value, n)

    def _insert_exit(self, bits: Iterator[int]) -> int:
        """Route ``bits`` from the root and insert the exit node (one DST step)."""
        node = 0
        count, left, right = self._count, self._left, self._right
        while True:
            count[node] += 1
            b = next(bits)
            child = right[node] if b else left[node]
            if child < 0:
                return self._append(node, b, 2 * self._value[node] + b, self._depth[node] + 1)
            node = child

    # -- subtree sizes ---------------------------------------------------------

    def subtree_size(self, u) -> int:
        i = self._find(as_word(u))
        return self._count[i] if i >= 0 else 0

    def t_pair(self, u) -> tuple[int, int]:
        """Relative subtree size as the exact pair (|subtree at u|, |x|)."""
        if not self._count:
            raise ValueError("relative subtree size is undefined for the empty tree")
        return self.subtree_size(u), len(self._count)

    def t(self, u) -> Fraction:
        num, den = self.t_pair(u)
        return Fraction(num, den)

    def t_float(self, u) -> float:
        num, den = self.t_pair(u)
        return num / den

    def subtree(self, u) -> BinaryTree:
        """The subtree rooted at ``u``, re-addressed so that ``u`` becomes the root."""
        u = as_word(u)
        out = BinaryTree()
        root = self._find(u)
        if root < 0:
            return out
        stack = [(root, -1, 0, 0, 0)]
        while stack:
            i, par, bit, value, depth = stack.pop()
            k = out._append(par, bit, value, depth)
            out._count[k] = self._count[i]
            if self._right[i] >= 0:
                stack.append((self._right[i], k, 1, 2 * value + 1, depth + 1))
            if self._left[i] >= 0:
                stack.append((self._left[i], k, 0, 2 * value, depth + 1))
        return out

    # -- boundary and routing --------------------------------------------------

    def external_boundary(self) -> list[Word]:
        """Words outside the tree whose parent is inside, in left-right order."""
        if not self._count:
            return [ROOT]
        out = []
        stack = [(0, False)]
        # in-order walk: left slot, then right slot of each node
        while stack:
            i, done_left = stack.pop()
            value, depth = self._value[i], self._depth[i]
            if not done_left:
                stack.append((i, True))
                lc = self._left[i]
                if lc >= 0:
                    stack.append((lc, False))
                else:
                    out.append(Word(2 * value, depth + 1))
            else:
                rc = self._right[i]
                if rc >= 0:
                    stack.append((rc, False))
                else:
                    out.append(Word(2 * value + 1, depth + 1))
        return out

    def exit_node(self, bits: Iterable[int]) -> Word:
        """Follow ``bits`` from the root and return the boundary node where the path leaves."""
        if not self._count:
            return ROOT
        node = 0
        for b in bits:
            child = self._right[node] if b else self._left[node]
            if child < 0:
                return Word(2 * self._value[node] + b, self._depth[node] + 1)
            node = child
        raise ValueError("bit source exhausted before leaving the tree")

    def boundary_count(self) -> list[int]:
        """Per arena node: number of boundary nodes strictly below it."""
        n = len(self._count)
        out = [0] * n
        left, right = self._left, self._right
        for i in range(n - 1, -1, -1):
            lc, rc = left[i], right[i]
            out[i] = (out[lc] if lc >= 0 else 1) + (out[rc] if rc >= 0 else 1)
        return out

    # -- structure -------------------------------------------------------------

    def depth_profile(self) -> Counter:
        return Counter(self._depth)

    def check(self) -> None:
        """Verify prefix stability, child links and the count identity; raise ValueError if broken."""
        n = len(self._count)
        for i in range(n):
            lc, rc = self._left[i], self._right[i]
            expect = 1 + (self._count[lc] if lc >= 0 else 0) + (self._count[rc] if rc >= 0 else 0)
            if self._count[i] != expect:
                raise ValueError(f"count identity fails at {str(self.word_at(i))!r}")
            for c, b in ((lc, 0), (rc, 1)):
                if c >= 0 and (self._parent[c] != i or self._value[c] != 2 * self._value[i] + b
                               or self._depth[c] != self._depth[i] + 1):
                    raise ValueError(f"broken child link below {str(self.word_at(i))!r}")
            if i and self._parent[i] < 0:
                raise ValueError(f"node {str(self.word_at(i))!r} has no parent")
        words = self.word_set()
        for w in words:
            if w.length and w.parent not in words:
                raise ValueError(f"prefix stability fails at {str(w)!r}")

    # -- serialization ---------------------------------------------------------

    def to_lines(self) -> str:
        return "".join(f"{w}\n" for w in self)

    @classmethod
    def from_lines(cls, text: str) -> BinaryTree:
        return cls(Word.parse(line) for line in text.splitlines())

    def to_json(self) -> str:
        return json.dumps([str(w) for w in self])

    @classmethod
    def from_json(cls, text: str) -> BinaryTree:
        return cls(Word.parse(s) for s in json.loads(text))

    def __repr__(self) -> str:
        if len(self) <= 8:
            return "BinaryTree({" + ", ".join(repr(str(w)) for w in self) + "})"
        return f"BinaryTree(<{len(self)} nodes, height {self.height}>)"


def insert(x: BinaryTree, v) -> BinaryTree:
    """Functional-style insertion: add ``v`` to ``x`` in place and return ``x``."""
    x.insert(v)
    return x


def complete_tree(h: int) -> BinaryTree:
    """All words of length at most ``h``."""
    if h < 0:
        raise ValueError("height must be nonnegative")
    if h > MAX_COMPLETE_HEIGHT:
        raise OverflowError(f"complete tree of height {h} exceeds MAX_COMPLETE_HEIGHT={MAX_COMPLETE_HEIGHT}")
    n = (1 << (h + 1)) - 1
    idx = np.arange(n, dtype=np.int64)
    parent = (idx - 1) // 2
    side = ((idx - 1) % 2).astype(np.int8)
    parent[0] = -1
    side[0] = 0
    return BinaryTree.from_parents(parent, side)


def group_act(v, x: BinaryTree) -> BinaryTree:
    """Relabel ``x`` by bitwise XOR with ``v``.

    ``v`` may be a Word or any bit iterable (e.g. a LazyWord) supplying at
    least ``x.height`` bits. Flipping bit ``d`` swaps the two children of
    every node at depth ``d``.
    """
    flips = []
    it = iter(v)
    for _ in range(max(x.height, 0)):
        try:
            flips.append(next(it))
        except StopIteration:
            raise ValueError(f"group element supplies fewer than {x.height} bits") from None
    n = len(x)
    parent = np.asarray(x._parent, dtype=np.int64)
    side = np.zeros(n, dtype=np.int8)
    for i in range(1, n):
        p = x._parent[i]
        s = 1 if x._right[p] == i else 0
        side[i] = s ^ flips[x._depth[p]]
    return BinaryTree.from_parents(parent, side)


def default_weight(u: Word) -> Fraction:
    return Fraction(1, 4 ** u.length)


def tree_distance(x: BinaryTree, y: BinaryTree,
                  w: Callable[[Word], Fraction | float] = default_weight):
    """Weighted L1 distance between subtree size functions.

    Only nodes of ``x`` or ``y`` contribute, so the sum is finite and exact
    whenever ``w`` returns exact values.
    """
    if not len(x) or not len(y):
        raise ValueError("tree distance needs nonempty trees")
    total = 0
    for u in x.word_set() | y.word_set():
        total += w(u) * abs(x.t(u) - y.t(u))
    return total
