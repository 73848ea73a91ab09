"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; a summary of all lines is
repeated at the end of the session.
"""
import json
import math
import time
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from scipy.stats import chisquare

from treelimit import (
    ROOT, Word, bernoulli_measure, boundary_measure, bst_grow, dst_grow, entry_time, group_act,
    point_mass, remy_grow, sample_bst_limit, table_measure, trajectory_probability,
    uniform_measure, uniform_tree, all_trajectories, check_additivity,
)
from treelimit.cli import main as cli_main
from treelimit.clt import bst_mixture_experiment, clt_experiment, clt_samples, two_sample_chi2
from treelimit.growth import bst_top_counts, catalan
from treelimit.increments import empirical_pmf, exchangeability_statistic, extract_increments, increment_pmf
from treelimit.seeding import stream_rng
from treelimit.selftest import check_complete_tree, check_tree_identities, random_trees
from treelimit.words import words_up_to

SEED = 20240611
W = Word.parse
RESULTS: list[str] = []


def verdict(k: int, ok: bool, detail: str, started: float, capsys) -> None:
    line = f"ACCEPTANCE {k:2d} {'PASS' if ok else 'FAIL'} ({time.perf_counter() - started:6.1f}s) {detail}"
    RESULTS.append(line)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


def test_criterion_01_exact_identities(capsys):
    start = time.perf_counter()
    rng = stream_rng(SEED, "criterion-1")
    trees = random_trees(1000, 500, rng)
    failures = [m for m in map(check_tree_identities, trees) if m]
    # word-level rational comparisons, including words outside the tree, on a subset
    failures += [m for m in (check_tree_identities(x, rational=True) for x in trees[::20]) if m]
    failures += [m for m in map(check_complete_tree, range(21)) if m]
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 10
    detail = (f"{len(trees)} trees (max size {max(map(len, trees))}), complete heights 0..20; "
              f"{len(failures)} failures{'; ' + failures[0] if failures else ''}; budget 10s")
    verdict(1, ok, detail, start, capsys)


def test_criterion_02_measure_additivity(capsys):
    start = time.perf_counter()
    rng = stream_rng(SEED, "criterion-2")
    measures = [uniform_measure(), bernoulli_measure(0.3), point_mass(W("0110"), pad=1),
                boundary_measure(uniform_tree(300, rng)), sample_bst_limit(rng),
                table_measure(rng.dirichlet(np.ones(64)))]
    worst = max(check_additivity(mu, 12, 1e-10).max_defect for mu in measures)
    sums = {}
    for name, mu in (("uniform", uniform_measure()), ("bernoulli(0.3)", bernoulli_measure(0.3))):
        for k in range(1, 6):
            sums[(name, k)] = math.fsum(trajectory_probability(mu, tr) for tr in all_trajectories(k))
    dev = max(abs(s - 1) for s in sums.values())
    ok = worst <= 1e-10 and dev <= 1e-12
    verdict(2, ok, f"max additivity defect {worst:.2e} over {len(measures)} measures at depth 12; "
                   f"max |sum of trajectory probabilities - 1| = {dev:.2e}", start, capsys)


def test_criterion_03_first_order_convergence(capsys):
    start = time.perf_counter()
    n, runs = 10**6, 100
    nodes = [W(s) for s in ("0", "1", "00", "01")]
    z, _ = clt_samples(uniform_measure(), n, runs, nodes, SEED, engine="tree")
    gaps = np.abs(z) / math.sqrt(n)  # |t(X_n, u) - 2^-|u||
    psi = np.array([2.0 ** -u.length for u in nodes])
    band = 5 * np.sqrt(psi * (1 - psi) / n)
    frac = (gaps <= band).mean(axis=0)
    ok = bool(np.all(frac >= 0.95))
    detail = ", ".join(f"{u}: {f:.2f}" for u, f in zip(nodes, frac))
    verdict(3, ok, f"fraction of {runs} runs within 5 sd at n=1e6 -> {detail}", start, capsys)


def test_criterion_04_entry_times(capsys):
    start = time.perf_counter()
    rng = stream_rng(SEED, "criterion-4")
    runs, mu = 10_000, uniform_measure()
    d0, d00, raw00 = [], [], []
    for _ in range(runs):
        tr = dst_grow(mu, 400, rng)
        t_root, t0, t00 = (entry_time(tr, W(s)) for s in ("", "0", "00"))
        assert None not in (t0, t00), "node did not enter within 400 steps"
        d0.append(t0 - t_root)
        d00.append(t00 - t_root)
        raw00.append(t00)
    ok, parts = True, []
    for name, vals, target in (("tau_0 - tau_root", d0, 2), ("tau_00 - tau_root", d00, 6)):
        vals = np.asarray(vals, dtype=float)
        se = vals.std(ddof=1) / math.sqrt(runs)
        ok &= abs(vals.mean() - target) <= 5 * se
        parts.append(f"{name} mean {vals.mean():.3f} (target {target}, SE {se:.3f})")
    ok &= time.perf_counter() - start < 30
    parts.append(f"raw tau_00 mean {np.mean(raw00):.3f} with tau_root = 1")
    verdict(4, ok, "; ".join(parts), start, capsys)


def _uniform_classes(n):
    return sorted({tr.tree.key() for tr in all_trajectories(n)})


def test_criterion_05_uniform_law_agreement(capsys):
    start = time.perf_counter()
    n, N = 4, 100_000
    classes = _uniform_classes(n)
    assert len(classes) == catalan(n) == 14
    index = {c: i for i, c in enumerate(classes)}

    def counts(keys):
        return np.bincount([index[k] for k in keys], minlength=len(classes))

    rng_c, rng_r, rng_x = (stream_rng(SEED, f"criterion-5-{s}") for s in ("catalan", "remy", "xor"))
    keys_c = [uniform_tree(n, rng_c).key() for _ in range(N)]
    keys_r = [remy_grow(n, rng_r).tree.key() for _ in range(N)]
    v = W("1011")
    keys_x = [group_act(v, uniform_tree(n, rng_x)).key() for _ in range(N)]
    p_c = chisquare(counts(keys_c)).pvalue
    p_r = chisquare(counts(keys_r)).pvalue
    p_x = chisquare(counts(keys_x)).pvalue
    p_two = two_sample_chi2(keys_c, keys_r, n).p_value
    ok = min(p_c, p_r, p_x, p_two) > 0.01 and time.perf_counter() - start < 60
    verdict(5, ok, f"p-values: catalan {p_c:.3f}, nested growth {p_r:.3f}, two-sample {p_two:.3f}, "
                   f"xor by {v} {p_x:.3f}", start, capsys)


def test_criterion_06_catalan_concentration(capsys):
    start = time.perf_counter()
    rng = stream_rng(SEED, "criterion-6")
    probs = []
    for n in (50, 200, 800):
        central = sum(0.25 < uniform_tree(n, rng).subtree_size(W("0")) / n < 0.75 for _ in range(10_000))
        probs.append(central / 10_000)
    ok = probs[0] > probs[1] > probs[2] and time.perf_counter() - start < 120
    verdict(6, ok, "P(0.25 < L_n/n < 0.75) at n = 50, 200, 800: " + ", ".join(f"{p:.4f}" for p in probs),
            start, capsys)


def _subtree_indicator(x, u):
    depth = np.asarray(x._depth)
    value = np.asarray(x._value, dtype=object) if x.height > 62 else np.asarray(x._value, dtype=np.int64)
    inside = depth >= u.length
    shift = np.where(inside, depth - u.length, 0)
    return inside & ((value >> shift) == u.value)


def test_criterion_07_local_increments(capsys):
    start = time.perf_counter()
    rng = stream_rng(SEED, "criterion-7")
    mu = bernoulli_measure(0.3)
    nodes = [ROOT, W("0"), W("1")]
    H, runs = 10_000, 100
    pmf_ok, recon_ok = True, True
    passes = Counter()
    for _ in range(runs):
        size = H + 200
        tr = dst_grow(mu, size, rng)
        while max(entry_time(tr, u) or size for u in nodes) + H > size:
            size *= 2
            tr = dst_grow(mu, size, rng)
        for u in nodes:
            y = extract_increments(tr, u, H)
            expected = increment_pmf(mu, u)
            for o, e in zip(empirical_pmf(y), expected):
                pmf_ok &= abs(o - e) <= 5 * math.sqrt(e * (1 - e) / H) + 1e-15
            passes[str(u)] += exchangeability_statistic(y, 2, 199, rng).passed(0.01)
            # s(tau_u + n, u) counted from node addresses, against 1 + number of nonzero increments
            s = np.cumsum(_subtree_indicator(tr.tree, u))
            recon = 1 + np.cumsum(np.abs(y.values))
            recon_ok &= bool(np.array_equal(s[y.origin:y.origin + len(y)], recon))
    rates = {k: v / runs for k, v in passes.items()}
    ok = pmf_ok and recon_ok and min(rates.values()) >= 0.95 and time.perf_counter() - start < 120
    detail = (f"pmf within 5 sd on all runs: {pmf_ok}; exchangeability pass rates "
              + ", ".join(f"{k or 'root'}: {v:.2f}" for k, v in rates.items())
              + f"; reconstruction exact: {recon_ok}")
    verdict(7, ok, detail, start, capsys)


def test_criterion_08_clt_covariance(capsys):
    start = time.perf_counter()
    nodes = [W(s) for s in ("0", "1", "00", "01", "10")]
    rep = clt_experiment(uniform_measure(), 10_000, 10_000, nodes, SEED)
    spot = {("0", "0"): 0.25, ("0", "1"): -0.25, ("0", "00"): 0.125}
    names = [str(u) for u in nodes]
    spot_ok = all(rep.theoretical[names.index(a), names.index(b)] == v for (a, b), v in spot.items())
    ok = rep.pass_fraction >= 0.95 and spot_ok and rep.min_eigenvalue >= -1e-9
    skew = np.max(np.abs(rep.skewness))
    kurt = np.max(np.abs(rep.excess_kurtosis))
    verdict(8, ok, f"{rep.pass_fraction:.2%} of entries within 5 jackknife SE; "
                   f"max |skewness| {skew:.3f} (<= 0.1: {skew <= 0.1}), "
                   f"max |excess kurtosis| {kurt:.3f} (<= 0.2: {kurt <= 0.2}), informational", start, capsys)


def test_criterion_09_bst_mixture(capsys):
    start = time.perf_counter()
    nodes = [W(s) for s in ("0", "1", "00")]
    mix = bst_mixture_experiment(2000, 500, nodes, SEED, shape_size=3, shape_runs=100_000)
    shapes_ok = mix.shapes.passed(0.01) and len(mix.shapes.classes) == catalan(3)

    rng = stream_rng(SEED, "criterion-9-bst")
    t = np.array([bst_top_counts(100_000, 1, rng)[0][1] / 100_000 for _ in range(10_000)])
    se = t.std(ddof=1) / math.sqrt(len(t))
    mean_ok = abs(t.mean() - 0.5) <= 5 * se
    var_ok = abs(t.var(ddof=1) - 1 / 12) <= 0.1 / 12

    rng = stream_rng(SEED, "criterion-9-limit")
    words = list(words_up_to(3))
    masses = np.array([[m.mass(u) for u in words] for m in (sample_bst_limit(rng) for _ in range(100_000))])
    target = np.array([2.0 ** -u.length for u in words])
    mse = masses.std(axis=0, ddof=1) / math.sqrt(len(masses))
    limit_ok = bool(np.all(np.abs(masses.mean(axis=0) - target) <= 5 * mse + 1e-15))

    ok = shapes_ok and mean_ok and var_ok and limit_ok and time.perf_counter() - start < 300
    detail = (f"shape chi-square p {mix.shapes.p_value:.3f}; t(X_n,0) mean {t.mean():.4f} (SE {se:.4f}), "
              f"var {t.var(ddof=1):.5f} vs 1/12; limit-measure means within 5 SE: {limit_ok}; "
              f"conditional covariance pass fraction {mix.conditional.pass_fraction:.2f} (informational)")
    verdict(9, ok, detail, start, capsys)


def test_criterion_10_determinism(tmp_path, capsys):
    start = time.perf_counter()
    runs = {
        "clt": ["clt", "--n", "3000", "--reps", "400", "--nodes", "0,1,00,01,10"],
        "bst-mixture": ["bst-mixture", "--n", "1000", "--reps", "200", "--shape-runs", "3000"],
        "trace": ["trace", "--model", "dst", "--measure", "bernoulli:0.3", "--node", "01"],
        "grow": ["grow", "--model", "bst", "--n", "5000"],
    }
    mismatches = []
    for name, argv in runs.items():
        outputs = []
        for label, workers in (("a", 1), ("b", 1), ("c", 2), ("d", 4)):
            prefix = tmp_path / f"{name}-{label}"
            status = cli_main(argv + ["--seed", "99", "--workers", str(workers), "--out", str(prefix)])
            files = {}
            for path in sorted(tmp_path.glob(f"{name}-{label}*")):
                data = path.read_bytes()
                if path.suffix == ".json":
                    doc = json.loads(data)
                    doc.pop("created", None)
                    doc.get("conditional", {}).pop("created", None)
                    data = json.dumps(doc, sort_keys=True).encode()
                files[path.name[len(prefix.name):]] = data
            outputs.append((status, files))
        if any(o != outputs[0] for o in outputs[1:]):
            mismatches.append(name)
    # control: a different seed must change the output, or the comparison proves nothing
    cli_main(runs["clt"] + ["--seed", "100", "--out", str(tmp_path / "control")])
    sensitive = (tmp_path / "control.csv").read_bytes() != (tmp_path / "clt-a.csv").read_bytes()
    ok = not mismatches and sensitive and time.perf_counter() - start < 60
    verdict(10, ok, f"{len(runs)} experiments x 4 runs (workers 1, 1, 2, 4); "
                    f"mismatches: {mismatches or 'none'}; another seed changes the output: {sensitive}",
            start, capsys)
