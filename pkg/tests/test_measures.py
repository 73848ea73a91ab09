import json
import math
import pickle
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from treelimit import (
    ROOT, BinaryTree, Word, bernoulli_measure, boundary_measure, check_additivity, complete_tree,
    cylinder_masses, mass, point_mass, sample_bst_limit, sample_path, t0, table_measure,
    ultrametric, uniform_measure,
)
from treelimit.measures import BstLimitMeasure, TableMeasure, cylinder_csv
from treelimit.words import words_of_length, words_up_to

from conftest import build_tree, trees

W = Word.parse


def builtins(rng):
    return [uniform_measure(), bernoulli_measure(0.3), bernoulli_measure(Fraction(1, 7)),
            point_mass(W("0")), point_mass(W("101"), pad=1),
            boundary_measure(build_tree([5, 3, 8, 1, 9, 2])), sample_bst_limit(rng),
            table_measure([0.1, 0.2, 0.3, 0.4])]


# -- constructors -------------------------------------------------------------------

def test_uniform():
    mu = uniform_measure()
    assert mu.mass(ROOT) == 1 and mu.mass(W("011")) == 1 / 8
    assert all(mu.cond(u) == 0.5 for u in words_up_to(4))
    assert mu.exact_mass(W("01")) == Fraction(1, 4)


def test_bernoulli():
    p = Fraction(3, 10)
    mu = bernoulli_measure(p)
    assert mu.exact_mass(W("101")) == p ** 2 * (1 - p)
    assert mu.exact_mass(W("0")) == 1 - p
    assert mu.mass(W("101")) == pytest.approx(0.3 ** 2 * 0.7, rel=1e-15)
    half = bernoulli_measure(0.5)
    assert all(half.mass(u) == uniform_measure().mass(u) for u in words_up_to(5))
    for bad in (0, 1, -0.1, 1.5):
        with pytest.raises(ValueError):
            bernoulli_measure(bad)


def test_point_mass():
    mu = point_mass(W(""))  # 000...
    assert mu.mass(W("00")) == 1 and mu.mass(W("1")) == 0 and mu.mass(ROOT) == 1
    for u in words_up_to(6):
        assert mu.mass(u) in (0.0, 1.0)
        if mu.mass(u):
            assert sorted([mu.mass(u + W("0")), mu.mass(u + W("1"))]) == [0.0, 1.0]
    rng = np.random.default_rng(1)
    assert all(sample_path(mu, rng).prefix(30) == Word(0, 30) for _ in range(5))
    padded = point_mass(W("10"), pad=1)
    assert padded.mass(W("10111")) == 1 and padded.mass(W("10110")) == 0


def test_point_mass_on_a_lazy_word(rng):
    v = sample_path(bernoulli_measure(0.5), rng)
    mu = point_mass(v)
    assert mu.mass(v.prefix(20)) == 1
    assert sample_path(mu, rng).prefix(40) == v.prefix(40)


def test_boundary_measure_examples():
    assert boundary_measure(BinaryTree([ROOT])).exact_mass(W("0")) == Fraction(1, 2)
    x = BinaryTree([ROOT, W("0"), W("1")])
    assert boundary_measure(x).exact_mass(W("0")) == Fraction(1, 2)
    with pytest.raises(ValueError):
        boundary_measure(BinaryTree())


@settings(max_examples=80)
@given(trees)
def test_boundary_measure_relation_and_bounds(x):
    n = len(x)
    bm = boundary_measure(x)
    for u in list(x) + x.external_boundary():
        assert bm.exact_mass(u) == (1 + n * x.t(u)) / (1 + n)
    for u in words_up_to(min(x.height + 2, 7)):
        assert 0 <= bm.exact_mass(u) - x.t(u) <= Fraction(1, n + 1)


def test_boundary_relation_does_not_hold_beyond_the_boundary():
    # below a boundary node the mass keeps halving while the relation would predict 1/(n+1)
    x = BinaryTree([ROOT, W("0")])
    u = W("10")
    assert u.length <= x.height + 1
    assert boundary_measure(x).exact_mass(u) == Fraction(1, 6)
    assert (1 + len(x) * x.t(u)) / (1 + len(x)) == Fraction(1, 3)


def test_bst_limit_structure(rng):
    mu = sample_bst_limit(rng)
    eta = mu.split(ROOT)
    assert mu.mass(ROOT) == 1
    assert mu.mass(W("0")) == eta and mu.mass(W("1")) == pytest.approx(1 - eta)
    assert mu.mass(W("01")) == pytest.approx(eta * (1 - mu.split(W("0"))))
    assert 0 < eta < 1


def test_bst_limit_is_query_order_independent_and_picklable():
    a, b = BstLimitMeasure(99), BstLimitMeasure(99)
    deep = W("0110101")
    ma = a.mass(deep)
    for u in words_up_to(3):
        b.mass(u)
    assert b.mass(deep) == ma
    c = pickle.loads(pickle.dumps(a))
    assert c.mass(deep) == ma


def test_bst_limit_mean_masses():
    rng = np.random.default_rng(5)
    samples = [sample_bst_limit(rng) for _ in range(4000)]
    for u in words_up_to(2):
        vals = np.array([mu.mass(u) for mu in samples])
        se = vals.std(ddof=1) / math.sqrt(len(vals))
        assert abs(vals.mean() - 2.0 ** -u.length) <= 5 * se + 1e-15


def test_bst_limit_children_are_exchangeable():
    from scipy.stats import ttest_ind
    rng = np.random.default_rng(8)
    samples = [sample_bst_limit(rng) for _ in range(10_000)]
    left = [mu.mass(W("0")) for mu in samples]
    right = [mu.mass(W("1")) for mu in samples]
    assert ttest_ind(left, right).pvalue > 0.001


def test_table_measure():
    mu = table_measure([1.0, 0.0])
    assert mu.mass(W("0")) == 1 and mu.mass(W("1")) == 0 and mu.mass(W("011")) == 0.25
    assert table_measure([1.0], depth=0).mass(W("10")) == 0.25
    for bad in ([0.5, 0.6], [1.2, -0.2], [0.5, 0.25, 0.25]):
        with pytest.raises(ValueError):
            table_measure(bad)


def test_table_round_trips(rng):
    mu = sample_bst_limit(rng)
    masses = cylinder_masses(mu, 6)
    tab = table_measure(masses)
    assert np.allclose(cylinder_masses(tab, 6), masses, rtol=0, atol=1e-15)
    again = TableMeasure.from_json(tab.to_json())
    assert again.masses == tab.masses and again.depth == 6
    assert json.loads(tab.to_json())["depth"] == 6


# -- operations ----------------------------------------------------------------------

def test_mass_examples():
    assert mass(uniform_measure(), "01") == 0.25
    assert mass(point_mass(W("")), "1") == 0
    assert mass(sample_bst_limit(np.random.default_rng(0)), "") == 1


def test_conditionals_reproduce_masses(rng):
    for mu in builtins(rng):
        for u in words_up_to(5):
            m = mu.mass(u)
            if m > 0:
                assert mu.mass(u + W("1")) == pytest.approx(mu.cond(u) * m, abs=1e-15)
                assert mu.mass(u + W("0")) == pytest.approx((1 - mu.cond(u)) * m, abs=1e-15)
                assert 0 <= mu.cond(u) <= 1


def test_deep_masses_use_log_space():
    mu = bernoulli_measure(0.3)
    u = Word(0, 3000)
    assert mu.log_mass(u) == pytest.approx(3000 * math.log(0.7))
    assert mu.mass(u) == 0.0  # below the float range, while the log form stays finite
    v = Word(0, 100)
    assert mu.mass(v) == pytest.approx(math.exp(mu.log_mass(v)), rel=1e-12)


def test_every_builtin_is_additive(rng):
    for mu in builtins(rng):
        rep = check_additivity(mu, 12, 1e-10)
        assert rep.passed, (mu, rep)
        assert rep.root_mass == pytest.approx(1)


def test_corrupted_table_fails_additivity():
    mu = table_measure([0.25, 0.25, 0.25, 0.25])
    mu._heap[0] = 0.9
    rep = check_additivity(mu, 3)
    assert not rep.passed and rep.worst == ROOT


def test_cylinder_masses_examples():
    assert cylinder_masses(uniform_measure(), 2).tolist() == [0.25] * 4
    assert cylinder_masses(boundary_measure(BinaryTree([ROOT])), 1).tolist() == [0.5, 0.5]
    assert cylinder_masses(bernoulli_measure(0.3), 8).sum() == pytest.approx(1, abs=1e-9)
    with pytest.raises(Exception):
        cylinder_masses(uniform_measure(), 64)


def test_cylinder_csv_is_lexicographic():
    lines = cylinder_csv(bernoulli_measure(Fraction(1, 4)), 2).splitlines()
    assert lines[0] == "word,mass"
    assert [line.split(",")[0] for line in lines[1:]] == ["00", "01", "10", "11"]


def test_sample_path_frequencies():
    rng = np.random.default_rng(12)
    N = 20_000
    hits = total = 0
    for mu in builtins(rng):
        prefixes = [sample_path(mu, rng).prefix(3) for _ in range(N)]
        for u in words_up_to(3):
            psi = mu.mass(u)
            freq = sum(is_pref(u, v) for v in prefixes) / N
            total += 1
            hits += abs(freq - psi) <= 5 * math.sqrt(psi * (1 - psi) / N) + 1e-12
    assert hits >= 0.95 * total


def is_pref(u, v):
    return v.prefix(u.length) == u


def test_lazy_word_is_stable(rng):
    v = sample_path(uniform_measure(), rng)
    first = v.prefix(10)
    v.prefix(50)
    assert v.prefix(10) == first and v.realized.length == 50
    assert [v.bit(i) for i in range(10)] == list(first)


def test_ultrametric():
    assert ultrametric(W("0"), W("1")) == 1
    assert ultrametric(W("010"), W("011")) == 0.25
    assert ultrametric(W("0110"), W("0110")) == 0
    with pytest.raises(ValueError):
        ultrametric(W("01"), W("011"))
    rng = np.random.default_rng(2)
    a, b = sample_path(uniform_measure(), rng), sample_path(uniform_measure(), rng)
    assert ultrametric(a, b) == ultrametric(b, a) > 0
    with pytest.raises(ValueError):
        ultrametric(a, a)


def test_t0_examples():
    x = BinaryTree([ROOT])
    assert t0(x, W("0")) == Fraction(1, 2) and t0(x, ROOT) == 1


def test_t0_matches_boundary_mass_on_tree_and_boundary():
    rng = np.random.default_rng(4)
    checked = 0
    while checked < 100:
        x = build_tree(rng.integers(0, 10**6, size=int(rng.integers(1, 40))).tolist())
        pool = list(x) + x.external_boundary()
        u = pool[int(rng.integers(len(pool)))]
        assert t0(x, u) == boundary_measure(x).exact_mass(u)
        checked += 1
