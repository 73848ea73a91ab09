"""Second-order behaviour of subtree sizes: fluctuation vectors and covariance checks."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from . import _kernels
from .growth import (
    GrowthModel, Trajectory, bst_top_counts, bst_grow, dst_grow, dst_top_counts,
    entry_time, remy_grow, uniform_tree,
)
from .increments import _arena_arrays
from .measures import BoundaryMeasure, DyadicMeasure, sample_bst_limit
from .seeding import run_replicates, stream_rng
from .tree import BinaryTree
from .words import Word, as_word, is_prefix

SE_MULTIPLIER = 5.0
ENTRY_PASS_FRACTION = 0.95
LOW_POWER_REPS = 30


@dataclass
class FluctuationVector:
    nodes: list[Word]
    values: np.ndarray
    n: int
    measure: str = ""


def z_statistic(x: BinaryTree, mu: DyadicMeasure, nodes: Sequence) -> FluctuationVector:
    """sqrt(|x|) * (t(x, u) - mu(B_u)) for each node u."""
    if not len(x):
        raise ValueError("fluctuation vector needs a nonempty tree")
    nodes = [as_word(u) for u in nodes]
    n = len(x)
    values = np.array([math.sqrt(n) * (x.subtree_size(u) / n - mu.mass(u)) for u in nodes])
    return FluctuationVector(nodes, values, n, mu.describe())


def theoretical_cov(mu: DyadicMeasure, u, v, exact: bool = False):
    """Limit covariance of the fluctuations at ``u`` and ``v`` under DST(mu)."""
    u, v = as_word(u), as_word(v)
    m = mu.exact_mass if exact else mu.mass
    mu_u, mu_v = m(u), m(v)
    if u == v:
        return mu_u * (1 - mu_u)
    if is_prefix(u, v):
        return mu_v * (1 - mu_u)
    if is_prefix(v, u):
        return mu_u * (1 - mu_v)
    return -mu_u * mu_v


def _cov_from_masses(masses: np.ndarray, nodes: Sequence[Word]) -> np.ndarray:
    """Same four cases as ``theoretical_cov``, vectorized over rows of masses."""
    masses = np.atleast_2d(masses)
    d = len(nodes)
    out = np.empty((masses.shape[0], d, d))
    for i, u in enumerate(nodes):
        for j, v in enumerate(nodes):
            a, b = masses[:, i], masses[:, j]
            if i == j:
                out[:, i, j] = a * (1 - a)
            elif is_prefix(u, v):
                out[:, i, j] = b * (1 - a)
            elif is_prefix(v, u):
                out[:, i, j] = a * (1 - b)
            else:
                out[:, i, j] = -a * b
    return out


def theoretical_matrix(mu: DyadicMeasure, nodes: Sequence, exact: bool = False):
    nodes = [as_word(u) for u in nodes]
    if exact:
        return [[theoretical_cov(mu, u, v, exact=True) for v in nodes] for u in nodes]
    return np.array([[theoretical_cov(mu, u, v) for v in nodes] for u in nodes])


def empirical_cov(samples) -> np.ndarray:
    """Unbiased sample covariance of fluctuation vectors (or rows of an array)."""
    if len(samples) and isinstance(samples[0], FluctuationVector):
        first = samples[0]
        for s in samples[1:]:
            if s.nodes != first.nodes or s.n != first.n:
                raise ValueError("fluctuation vectors have different node sets or sizes")
        data = np.array([s.values for s in samples])
    else:
        data = np.asarray(samples, dtype=float)
    if data.shape[0] < 2:
        raise ValueError("covariance needs at least two samples")
    return np.atleast_2d(np.cov(data, rowvar=False, ddof=1))


def jackknife_cov_se(data: np.ndarray) -> np.ndarray:
    """Leave-one-out jackknife standard errors of every sample covariance entry."""
    data = np.asarray(data, dtype=float)
    r = data.shape[0]
    if r < 3:
        return np.full((data.shape[1], data.shape[1]), np.inf)
    total = data.sum(axis=0)
    cross = data.T @ data
    loo_mean = (total[None, :] - data) / (r - 1)
    # covariance without row i: (cross - x_i x_i^T - (r-1) m_i m_i^T) / (r - 2)
    loo = (cross[None] - data[:, :, None] * data[:, None, :]
           - (r - 1) * loo_mean[:, :, None] * loo_mean[:, None, :]) / (r - 2)
    dev = loo - loo.mean(axis=0)
    return np.sqrt((r - 1) / r * np.sum(dev * dev, axis=0))


@dataclass
class CovarianceReport:
    nodes: list[Word]
    theoretical: np.ndarray
    empirical: np.ndarray
    se: np.ndarray
    reps: int
    n: int
    seed: int | None
    measure: str
    skewness: np.ndarray = field(default_factory=lambda: np.empty(0))
    excess_kurtosis: np.ndarray = field(default_factory=lambda: np.empty(0))
    engine: str = ""

    @property
    def deviation(self) -> np.ndarray:
        return self.empirical - self.theoretical

    @property
    def entry_pass(self) -> np.ndarray:
        return np.abs(self.deviation) <= SE_MULTIPLIER * self.se

    def _upper(self, a: np.ndarray) -> np.ndarray:
        return a[np.triu_indices(len(self.nodes))]

    @property
    def pass_fraction(self) -> float:
        """Fraction of distinct (upper-triangle) entries within tolerance."""
        return float(np.mean(self._upper(self.entry_pass)))

    @property
    def low_power(self) -> bool:
        return self.reps < LOW_POWER_REPS

    @property
    def passed(self) -> bool:
        return self.pass_fraction >= ENTRY_PASS_FRACTION

    @property
    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.theoretical).min())

    def to_dict(self) -> dict:
        names = [str(u) for u in self.nodes]
        return {
            "created": datetime.now(timezone.utc).isoformat(),
            "measure": self.measure,
            "engine": self.engine,
            "n": self.n,
            "reps": self.reps,
            "seed": self.seed,
            "nodes": names,
            "theoretical": self.theoretical.tolist(),
            "empirical": self.empirical.tolist(),
            "se": self.se.tolist(),
            "pass_fraction": self.pass_fraction,
            "passed": self.passed,
            "low_power": self.low_power,
            "skewness": dict(zip(names, np.asarray(self.skewness).tolist())),
            "excess_kurtosis": dict(zip(names, np.asarray(self.excess_kurtosis).tolist())),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["u", "v", "theoretical", "empirical", "se", "pass"])
        ok = self.entry_pass
        for i, j in zip(*np.triu_indices(len(self.nodes))):
            writer.writerow([str(self.nodes[i]), str(self.nodes[j]), repr(float(self.theoretical[i, j])),
                             repr(float(self.empirical[i, j])), repr(float(self.se[i, j])), int(ok[i, j])])
        return buf.getvalue()


def _report(data: np.ndarray, theo: np.ndarray, nodes, n, seed, measure, engine) -> CovarianceReport:
    reps = data.shape[0]
    if reps >= 2:
        emp = empirical_cov(data)
    else:
        emp = np.full_like(theo, np.nan)
    with np.errstate(all="ignore"):
        skew = stats.skew(data, axis=0) if reps >= 3 else np.full(len(nodes), np.nan)
        kurt = stats.kurtosis(data, axis=0) if reps >= 4 else np.full(len(nodes), np.nan)
    return CovarianceReport(list(nodes), theo, emp, jackknife_cov_se(data), reps, n, seed, measure,
                            skew, kurt, engine)


def _find(left, right, u: Word) -> int:
    node = 0
    for b in u:
        node = right[node] if b else left[node]
        if node < 0:
            return -1
    return node


def _z_tree(rng, qtab, tdepth, tail, n, nodes, masses):
    left, right, count, _, _, _ = _kernels.dst_arena(qtab, tdepth, tail, n, rng)
    sizes = np.array([count[i] if i >= 0 else 0 for i in (_find(left, right, u) for u in nodes)])
    return math.sqrt(n) * (sizes / n - masses)


def _z_top(rng, qtab, depth, n, heap, masses):
    counts, _ = _kernels.dst_top(qtab, depth, n, rng, np.empty(0, np.int64))
    return math.sqrt(n) * (counts[heap] / n - masses)


def _z_python(rng, mu, n, nodes, masses):
    x = dst_grow(mu, n, rng, engine="python").tree
    sizes = np.array([x.subtree_size(u) for u in nodes])
    return math.sqrt(n) * (sizes / n - masses)


def _check_support(mu: DyadicMeasure, nodes: Sequence[Word]) -> np.ndarray:
    masses = np.array([mu.mass(u) for u in nodes])
    bad = [str(u) for u, m in zip(nodes, masses) if m <= 0]
    if bad:
        raise ValueError(f"measure has zero mass at {bad}; the covariance check needs full support")
    return masses


def clt_samples(mu: DyadicMeasure, n: int, reps: int, nodes: Sequence, seed: int,
                workers: int = 1, engine: str = "auto") -> tuple[np.ndarray, str]:
    """``reps`` independent fluctuation vectors at size ``n``; returns (array, engine used)."""
    nodes = [as_word(u) for u in nodes]
    masses = _check_support(mu, nodes)
    params = mu.kernel_params()
    if engine == "auto":
        engine = "tree" if params is not None else "top"
    if engine == "tree":
        if params is None:
            raise ValueError("measure cannot be tabulated for the tree engine")
        qtab, tdepth, tail = params
        args = (np.ascontiguousarray(qtab, dtype=np.float64), tdepth, float(tail), n, nodes, masses)
        rows = run_replicates(_z_tree, seed, reps, workers, args)
    elif engine == "top":
        depth = max(u.length for u in nodes)
        args = (mu.q_table(depth), depth, n, np.array([u.heap_index for u in nodes]), masses)
        rows = run_replicates(_z_top, seed, reps, workers, args)
    elif engine == "python":
        rows = run_replicates(_z_python, seed, reps, workers, (mu, n, nodes, masses))
    else:
        raise ValueError(f"unknown engine {engine!r}")
    return np.array(rows).reshape(reps, len(nodes)), engine


def clt_experiment(mu: DyadicMeasure, n: int, reps: int, nodes: Sequence, seed: int,
                   workers: int = 1, engine: str = "auto") -> CovarianceReport:
    """Monte Carlo covariance of the fluctuation vector against the limit covariance."""
    nodes = [as_word(u) for u in nodes]
    data, used = clt_samples(mu, n, reps, nodes, seed, workers, engine)
    return _report(data, theoretical_matrix(mu, nodes), nodes, n, seed, mu.describe(), used)


# -- BST as a mixture of DST laws ---------------------------------------------------

def _z_mixture(rng, sampler, depth, n, nodes, heap):
    m = sampler(rng)
    masses = np.array([m.mass(u) for u in nodes])
    counts, _ = _kernels.dst_top(m.q_table(depth), depth, n, rng, np.empty(0, np.int64))
    z = math.sqrt(n) * (counts[heap] / n - masses)
    return np.concatenate([z, masses])


@dataclass
class ShapeComparison:
    size: int
    classes: list[tuple[str, ...]]
    counts_a: np.ndarray
    counts_b: np.ndarray
    statistic: float
    p_value: float

    def passed(self, level: float = 0.01) -> bool:
        return self.p_value > level


def two_sample_chi2(keys_a: Sequence, keys_b: Sequence, size: int = 0) -> ShapeComparison:
    classes = sorted(set(keys_a) | set(keys_b))
    index = {c: i for i, c in enumerate(classes)}
    a = np.bincount([index[k] for k in keys_a], minlength=len(classes))
    b = np.bincount([index[k] for k in keys_b], minlength=len(classes))
    if len(classes) == 1:
        return ShapeComparison(size, classes, a, b, 0.0, 1.0)
    stat, p, _, _ = stats.chi2_contingency(np.vstack([a, b]), correction=False)
    return ShapeComparison(size, classes, a, b, float(stat), float(p))


@dataclass
class MixtureReport:
    conditional: CovarianceReport
    shapes: ShapeComparison

    @property
    def passed(self) -> bool:
        return self.conditional.passed and self.shapes.passed()

    def to_dict(self) -> dict:
        d = {"conditional": self.conditional.to_dict()}
        d["shapes"] = {
            "size": self.shapes.size,
            "classes": ["|".join(c) for c in self.shapes.classes],
            "bst": self.shapes.counts_a.tolist(),
            "mixture": self.shapes.counts_b.tolist(),
            "statistic": self.shapes.statistic,
            "p_value": self.shapes.p_value,
        }
        d["passed"] = self.passed
        return d


def bst_mixture_experiment(n: int, reps: int, nodes: Sequence, seed: int, shape_size: int = 3,
                           shape_runs: int = 10_000, workers: int = 1,
                           sampler: Callable[[np.random.Generator], DyadicMeasure] = sample_bst_limit
                           ) -> MixtureReport:
    """Two checks of BST as a mixture of DST laws.

    Conditional arm: draw a limit measure M per replicate, grow DST(M) and
    compare the covariance of the fluctuations around M with the average
    limit covariance over the drawn measures. Shape arm: compare the law of
    the size-``shape_size`` tree under plain BST and under draw-M-then-DST(M).
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    nodes = [as_word(u) for u in nodes]
    depth = max(u.length for u in nodes)
    heap = np.array([u.heap_index for u in nodes])
    rows = np.array(run_replicates(_z_mixture, seed, reps, workers, (sampler, depth, n, nodes, heap)))
    rows = rows.reshape(reps, 2 * len(nodes))
    z, masses = rows[:, : len(nodes)], rows[:, len(nodes):]
    theo = _cov_from_masses(masses, nodes).mean(axis=0)
    conditional = _report(z, theo, nodes, n, seed, "mixture", "top")

    rng_a = stream_rng(seed, "bst-shapes")
    rng_b = stream_rng(seed, "mixture-shapes")
    keys_a = [bst_grow(shape_size, rng_a, engine="python").tree.key() for _ in range(shape_runs)]
    keys_b = [dst_grow(sampler(rng_b), shape_size, rng_b, engine="python").tree.key()
              for _ in range(shape_runs)]
    return MixtureReport(conditional, two_sample_chi2(keys_a, keys_b, shape_size))


# -- first-order traces ------------------------------------------------------------------

@dataclass
class TraceSeries:
    node: Word
    checkpoints: list[int]
    t: list[Fraction]
    boundary_mass: list[Fraction]
    limit: float | None = None

    @property
    def gaps(self) -> list[Fraction]:
        return [m - t for m, t in zip(self.boundary_mass, self.t)]

    def gap_bounds_hold(self) -> bool:
        return all(0 <= g <= Fraction(1, c + 1) for g, c in zip(self.gaps, self.checkpoints))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["n", "t", "boundary_mass", "gap"])
        for c, t, m in zip(self.checkpoints, self.t, self.boundary_mass):
            writer.writerow([c, repr(float(t)), repr(float(m)), repr(float(m - t))])
        return buf.getvalue()


def _trace_from_snapshots(u: Word, checkpoints, snaps) -> tuple[list, list]:
    ts, ms = [], []
    for c, snap in zip(checkpoints, snaps):
        s = int(snap[u.heap_index])
        ts.append(Fraction(s, c))
        if s:
            ms.append(Fraction(s + 1, c + 1))
        else:
            # shortest absent prefix is a boundary node above u
            k = next(k for k in range(u.length + 1) if snap[u.prefix(k).heap_index] == 0)
            ms.append(Fraction(1, (c + 1) * (1 << (u.length - k))))
    return ts, ms


def _trace_from_trajectory(tr: Trajectory, u: Word, checkpoints) -> tuple[list, list]:
    taus = [entry_time(tr, u.prefix(k)) for k in range(u.length + 1)]
    tau_u = taus[-1]
    if tau_u is not None:
        parent, side = _arena_arrays(tr.tree)
        inside = np.abs(_kernels.relative_side(parent, side, tau_u - 1)).astype(np.int64)
        inside[tau_u - 1] = 1
        running = np.cumsum(inside)
    ts, ms = [], []
    for c in checkpoints:
        s = int(running[c - 1]) if tau_u is not None else 0
        ts.append(Fraction(s, c))
        if s:
            ms.append(Fraction(s + 1, c + 1))
        else:
            k = next(k for k, tau in enumerate(taus) if tau is None or tau > c)
            ms.append(Fraction(1, (c + 1) * (1 << (u.length - k))))
    return ts, ms


def convergence_trace(model: GrowthModel, u, checkpoints: Sequence[int],
                      rng: np.random.Generator) -> TraceSeries:
    """t(X_n, u) and the boundary-measure mass of u along one growth run.

    For ``catalan_direct`` every checkpoint gets an independent uniform tree,
    since that model has no nested sequence.
    """
    u = as_word(u)
    cps = sorted(int(c) for c in checkpoints)
    if not cps or cps[0] < 1:
        raise ValueError("checkpoints must be positive sizes")
    n = cps[-1]
    limit = None
    if model.tag == "dst":
        _, snaps = dst_top_counts(model.measure, n, u.length, rng, cps)
        ts, ms = _trace_from_snapshots(u, cps, snaps)
        limit = model.measure.mass(u)
    elif model.tag == "bst":
        _, snaps = bst_top_counts(n, u.length, rng, cps)
        ts, ms = _trace_from_snapshots(u, cps, snaps)
    elif model.tag == "remy":
        ts, ms = _trace_from_trajectory(remy_grow(n, rng), u, cps)
    else:
        ts, ms = [], []
        for c in cps:
            x = uniform_tree(c, rng)
            ts.append(x.t(u))
            ms.append(BoundaryMeasure(x).exact_mass(u))
    return TraceSeries(u, cps, ts, ms, limit)
