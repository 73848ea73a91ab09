"""Exact identities checked at small sizes, usable as a quick installation check."""
from __future__ import annotations

from fractions import Fraction
from typing import Callable

import numpy as np

from .growth import all_trajectories, bst_grow, dst_grow, trajectory_probability, uniform_tree
from .measures import (
    BoundaryMeasure, TableMeasure, bernoulli_measure, check_additivity, point_mass,
    sample_bst_limit, t0, uniform_measure,
)
from .tree import BinaryTree, complete_tree
from .words import Word, words_up_to


def random_trees(count: int, max_size: int, rng: np.random.Generator) -> list[BinaryTree]:
    """A mix of DST, BST and uniform trees with sizes uniform in 1..max_size."""
    out = []
    mu = uniform_measure()
    skewed = bernoulli_measure(0.2)
    for i in range(count):
        n = int(rng.integers(1, max_size + 1))
        kind = i % 4
        if kind == 0:
            out.append(uniform_tree(n, rng))
        elif kind == 1:
            out.append(bst_grow(n, rng).tree)
        elif kind == 2:
            out.append(dst_grow(mu, n, rng).tree)
        else:
            out.append(dst_grow(skewed, n, rng).tree)
    return out


def check_tree_identities(x: BinaryTree, rational: bool = False) -> str | None:
    """Return a description of the first failed identity, or None.

    The default pass compares integer arrays: with ``s`` the subtree counts and
    ``b`` the boundary nodes below each tree node, the boundary mass relation
    reads ``b = 1 + s`` and the gap bounds read ``0 <= n*b - (n+1)*s <= n``.
    Cross-multiplied integers keep the check exact. ``rational=True`` also runs
    the word-level Fraction comparisons, including words outside the tree.
    """
    x.check()
    n = len(x)
    boundary = x.external_boundary()
    if len(boundary) != n + 1:
        return f"|boundary| = {len(boundary)} for |x| = {n}"
    s = np.asarray(x._count, dtype=np.int64)
    left = np.asarray(x._left)
    right = np.asarray(x._right)
    kids = np.where(left >= 0, s[left], 0) + np.where(right >= 0, s[right], 0)
    if np.any(s != 1 + kids):
        return "subtree counts are not additive"
    b = np.asarray(x.boundary_count(), dtype=np.int64)
    if b[0] != n + 1:
        return "boundary counts do not reach the root"
    bad = np.flatnonzero(b != 1 + s)
    if bad.size:
        return f"boundary mass relation fails at {str(x.word_at(int(bad[0])))!r}"
    gap = n * b - (n + 1) * s
    bad = np.flatnonzero((gap < 0) | (gap > n))
    if bad.size:
        return f"boundary mass bounds fail at {str(x.word_at(int(bad[0])))!r}"
    if rational:
        return _rational_identities(x, boundary)
    return None


def _rational_identities(x: BinaryTree, boundary: list[Word]) -> str | None:
    n = len(x)
    bm = BoundaryMeasure(x)
    for u in list(x) + boundary:
        m = bm.exact_mass(u)
        if m != (1 + n * x.t(u)) / (1 + n):
            return f"boundary mass relation fails at {str(u)!r}"
        if t0(x, u) != m:
            return f"t0 differs from the boundary mass at {str(u)!r}"
    for u in words_up_to(min(x.height + 2, 8)):
        gap = bm.exact_mass(u) - x.t(u)
        if not 0 <= gap <= Fraction(1, n + 1):
            return f"boundary mass bounds fail at {str(u)!r}"
    return None


def check_complete_tree(h: int) -> str | None:
    """Every node at depth k of the complete tree of height h holds 2^(h-k+1) - 1 nodes."""
    x = complete_tree(h)
    total = (1 << (h + 1)) - 1
    if len(x) != total:
        return f"complete tree of height {h} has {len(x)} nodes"
    s = np.asarray(x._count, dtype=np.int64)
    d = np.asarray(x._depth, dtype=np.int64)
    bad = np.flatnonzero(s != (np.int64(1) << (h - d + 1)) - 1)
    if bad.size:
        return f"complete tree of height {h}: wrong count at {str(x.word_at(int(bad[0])))!r}"
    for u in words_up_to(min(h, 3)):
        if x.t(u) != Fraction((1 << (h - u.length + 1)) - 1, total):
            return f"complete tree of height {h}: t at {str(u)!r} is {x.t(u)}"
    return None


def _check_normalization(k: int) -> str | None:
    trajectories = list(all_trajectories(k))
    for mu in (uniform_measure(), bernoulli_measure(Fraction(3, 10))):
        total = sum(trajectory_probability(mu, tr, exact=True) for tr in trajectories)
        if total != 1:
            return f"trajectory probabilities of length {k} sum to {total} under {mu.describe()}"
    return None


def run_selftest(table_fixture: str | None = None, seed: int = 0) -> list[tuple[str, bool, str]]:
    rng = np.random.default_rng(seed)
    results: list[tuple[str, bool, str]] = []

    def record(name: str, fn: Callable[[], str | None]):
        try:
            msg = fn()
        except Exception as exc:  # a crash counts as a failed check
            msg = f"{type(exc).__name__}: {exc}"
        results.append((name, msg is None, msg or "ok"))

    trees = random_trees(60, 80, rng)
    record("tree identities", lambda: next(filter(None, map(check_tree_identities, trees)), None))
    record("rational identities",
           lambda: next(filter(None, (check_tree_identities(x, True) for x in trees[:20])), None))
    record("complete trees", lambda: next(filter(None, map(check_complete_tree, range(11))), None))

    measures = [uniform_measure(), bernoulli_measure(0.3), point_mass(Word.parse("0110")),
                BoundaryMeasure(trees[0]), sample_bst_limit(rng),
                TableMeasure([0.1, 0.2, 0.3, 0.4])]

    def additivity():
        for mu in measures:
            rep = check_additivity(mu, 10, 1e-10)
            if not rep.passed:
                return f"{mu.describe()} additivity defect {rep.max_defect:.3g} at {str(rep.worst)!r}"
        return None

    record("measure additivity", additivity)
    record("trajectory normalization", lambda: next(filter(None, map(_check_normalization, range(1, 6))), None))
    if table_fixture is not None:
        def fixture():
            with open(table_fixture) as fh:
                mu = TableMeasure.from_json(fh.read())
            rep = check_additivity(mu, mu.depth + 2, 1e-10)
            return None if rep.passed else f"fixture additivity defect {rep.max_defect:.3g}"
        record("table fixture", fixture)
    return results
