"""Local increment processes of nested tree sequences and their diagnostics."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .growth import Trajectory, entry_time
from .measures import DyadicMeasure
from .tree import BinaryTree
from .words import Word, as_word

DEFAULT_HORIZON = 10_000


@dataclass
class IncrementProcess:
    """Which subtree of ``node`` grows at each step after the node enters.

    ``values[i]`` is -1, +1 or 0 for step ``origin + i + 1`` according as
    the left subtree, the right subtree or neither received the new node.
    """

    node: Word
    values: np.ndarray
    origin: int

    def __len__(self) -> int:
        return len(self.values)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["step", "value"])
        for i, v in enumerate(self.values.tolist(), start=1):
            writer.writerow([i, v])
        return buf.getvalue()


def _arena_arrays(x: BinaryTree) -> tuple[np.ndarray, np.ndarray]:
    parent = np.asarray(x._parent, dtype=np.int64)
    right = np.asarray(x._right, dtype=np.int64)
    idx = np.arange(len(x))
    side = np.zeros(len(x), dtype=np.int8)
    side[1:] = (right[parent[1:]] == idx[1:]).astype(np.int8)
    return parent, side


def extract_increments(tr: Trajectory, u, horizon: int | None = DEFAULT_HORIZON) -> IncrementProcess:
    u = as_word(u)
    tau = entry_time(tr, u)
    if tau is None:
        raise ValueError(f"node {str(u)!r} never enters the trajectory")
    parent, side = _arena_arrays(tr.tree)
    rel = _kernels.relative_side(parent, side, tau - 1)
    values = rel[tau:]
    if horizon is not None:
        values = values[:horizon]
    return IncrementProcess(u, values.copy(), tau)


def increment_pmf(mu: DyadicMeasure, u) -> tuple[float, float, float]:
    """(P(-1), P(0), P(+1)) for increments at ``u`` under DST(mu)."""
    u = as_word(u)
    if mu.mass(u) <= 0:
        raise ValueError(f"node {str(u)!r} has zero mass")
    left, right = mu.mass(u.child(0)), mu.mass(u.child(1))
    return left, max(0.0, 1.0 - left - right), right


def empirical_pmf(y: IncrementProcess) -> tuple[float, float, float]:
    n = len(y.values)
    if not n:
        raise ValueError("empty increment process")
    counts = np.bincount(y.values.astype(np.int64) + 1, minlength=3)
    return tuple((counts / n).tolist())


@dataclass
class ExchangeabilityReport:
    block_len: int
    num_blocks: int
    statistic: float
    p_value: float
    num_shuffles: int

    def passed(self, level: float = 0.01) -> bool:
        return self.p_value > level


def _block_discrepancy(codes: np.ndarray, block_len: int, marginal: np.ndarray) -> float:
    nblocks = codes.size // block_len
    blocks = codes[: nblocks * block_len].reshape(nblocks, block_len)
    # pattern index in base 3
    pattern = blocks @ (3 ** np.arange(block_len - 1, -1, -1))
    observed = np.bincount(pattern, minlength=3**block_len)
    expected = nblocks * _pattern_probs(marginal, block_len)
    mask = expected > 0
    return float(np.sum((observed[mask] - expected[mask]) ** 2 / expected[mask]))


def _pattern_probs(marginal: np.ndarray, block_len: int) -> np.ndarray:
    probs = np.ones(1)
    for _ in range(block_len):
        probs = np.outer(probs, marginal).ravel()
    return probs


def exchangeability_statistic(y, block_len: int = 2, num_shuffles: int = 199,
                              rng: np.random.Generator | None = None) -> ExchangeabilityReport:
    """Permutation test of exchangeability based on block patterns.

    The statistic is a chi-square discrepancy between the counts of
    non-overlapping length-``block_len`` patterns and their i.i.d. expectation
    under the sequence's own symbol frequencies. An exchangeable sequence has
    the same law as any of its permutations, so the rank of the observed
    statistic among shuffled copies gives a valid p-value.
    """
    values = np.asarray(y.values if isinstance(y, IncrementProcess) else y)
    if values.size < 2 * block_len:
        raise ValueError(f"need at least {2 * block_len} values, got {values.size}")
    if rng is None:
        rng = np.random.default_rng()
    codes = values.astype(np.int64) + 1
    marginal = np.bincount(codes, minlength=3) / codes.size
    observed = _block_discrepancy(codes, block_len, marginal)
    exceed = 0
    shuffled = codes.copy()
    for _ in range(num_shuffles):
        rng.shuffle(shuffled)
        if _block_discrepancy(shuffled, block_len, marginal) >= observed:
            exceed += 1
    return ExchangeabilityReport(block_len, codes.size // block_len, observed,
                                 (1 + exceed) / (1 + num_shuffles), num_shuffles)


def is_boundary_partition(words) -> BinaryTree | None:
    """The nonempty tree whose boundary is exactly ``words``, or None."""
    words = {as_word(w) for w in words}
    inner = {p for w in words for p in w.prefixes(strict=True)}
    if not inner:
        return None
    x = BinaryTree(inner)
    return x if set(x.external_boundary()) == words else None


def combine_partition_process(tr: Trajectory, partition) -> tuple[list[Word], np.ndarray]:
    """Align the increment processes of a boundary partition into one d-dimensional sequence.

    Returns the partition in left-right order and an ``(N, d)`` int8 array
    whose row n is Y0_n; the alignment origin is the last entry time.
    """
    if is_boundary_partition(partition) is None:
        raise ValueError("nodes do not form the boundary of a nonempty tree")
    # boundary words are prefix-free, so string order is left-right order
    nodes = sorted({as_word(w) for w in partition}, key=str)
    taus = []
    for u in nodes:
        tau = entry_time(tr, u)
        if tau is None:
            raise ValueError(f"node {str(u)!r} never enters the trajectory")
        taus.append(tau)
    rho = max(taus)
    length = tr.n - rho
    out = np.zeros((length, len(nodes)), dtype=np.int8)
    parent, side = _arena_arrays(tr.tree)
    for j, (u, tau) in enumerate(zip(nodes, taus)):
        rel = _kernels.relative_side(parent, side, tau - 1)
        # Y0_{j,n} = Y_{n + rho - tau}(u): step rho + n
        out[:, j] = rel[rho:rho + length]
    return nodes, out
