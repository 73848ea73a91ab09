"""Command-line front end: ``treelimit <experiment> [flags]``.

Exit status: 0 when every statistical gate passes, 1 when a gate fails,
2 on usage errors.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from .clt import bst_mixture_experiment, clt_experiment, convergence_trace, two_sample_chi2
from .growth import GrowthModel, bst_grow, catalan, dst_grow, remy_grow, uniform_tree
from .increments import (
    empirical_pmf, exchangeability_statistic, extract_increments, increment_pmf,
)
from .measures import (
    BernoulliMeasure, BoundaryMeasure, BstLimitMeasure, PointMass, TableMeasure,
    UniformMeasure, cylinder_csv, cylinder_masses,
)
from .seeding import SEED_ENV, default_seed, stream_rng
from .selftest import run_selftest
from .words import Word

KINDS = ("grow", "uniform", "clt", "bst-mixture", "increments", "trace", "embed", "selftest")


class UsageError(Exception):
    pass


def parse_measure(text: str):
    kind, _, arg = text.partition(":")
    try:
        if kind == "uniform" and not arg:
            return UniformMeasure()
        if kind == "bernoulli":
            return BernoulliMeasure(Fraction(arg))
        if kind == "point":
            return PointMass(Word.parse(arg))
        if kind == "table":
            return TableMeasure.from_json(Path(arg).read_text())
        if kind == "bst-limit":
            return BstLimitMeasure(int(arg))
    except (ValueError, OSError, KeyError, ZeroDivisionError) as exc:
        raise UsageError(f"invalid measure {text!r}: {exc}") from None
    raise UsageError(f"unknown measure {text!r}")


def parse_nodes(text: str) -> list[Word]:
    """Comma-separated words; an empty item denotes the root."""
    try:
        return [Word.parse(s) for s in text.split(",")]
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def parse_ints(text: str) -> list[int]:
    try:
        out = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"malformed integer list {text!r}") from None
    if not out or min(out) < 1:
        raise UsageError(f"expected positive integers, got {text!r}")
    return out


def _write(prefix: str, suffix: str, text: str) -> Path:
    path = Path(f"{prefix}{suffix}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def _json(prefix: str, payload: dict) -> None:
    payload = {"created": datetime.now(timezone.utc).isoformat(), **payload}
    _write(prefix, ".json", json.dumps(payload, indent=2, default=str) + "\n")


def _model(args) -> GrowthModel:
    mu = parse_measure(args.measure) if args.model == "dst" else None
    return GrowthModel(args.model, mu)


# -- experiments -------------------------------------------------------------------

def cmd_grow(args) -> int:
    rng = stream_rng(args.seed, "grow")
    if args.model == "dst":
        tr = dst_grow(parse_measure(args.measure), args.n, rng)
    elif args.model == "bst":
        tr = bst_grow(args.n, rng)
    elif args.model == "remy":
        tr = remy_grow(args.n, rng)
    else:
        raise UsageError(f"model {args.model!r} does not produce a trajectory")
    tr.model, tr.seed = args.model, args.seed
    _write(args.out, ".traj", tr.to_text())
    print(f"grew {args.model} tree: n={tr.n} height={tr.tree.height}")
    return 0


def cmd_uniform(args) -> int:
    rng = stream_rng(args.seed, "uniform")
    trees = []
    for _ in range(args.reps):
        trees.append(uniform_tree(args.n, rng) if args.sampler == "catalan" else remy_grow(args.n, rng).tree)
    left = [x.subtree_size("0") for x in trees]
    rows = ["rep,left_size"] + [f"{i},{k}" for i, k in enumerate(left)]
    _write(args.out, ".csv", "\n".join(rows) + "\n")
    central = float(np.mean([0.25 < k / args.n < 0.75 for k in left]))
    payload = {"n": args.n, "reps": args.reps, "sampler": args.sampler, "seed": args.seed,
               "p_central": central}
    status = 0
    if args.n <= 7:
        keys = [x.key() for x in trees]
        classes = sorted(set(keys))
        counts = np.array([keys.count(c) for c in classes])
        missing = catalan(args.n) - len(classes)
        counts = np.concatenate([counts, np.zeros(missing, dtype=int)])
        from scipy.stats import chisquare
        p = float(chisquare(counts).pvalue)
        payload.update(classes=catalan(args.n), chi2_p_value=p, passed=p > 0.01)
        status = 0 if p > 0.01 else 1
    _json(args.out, payload)
    print(f"P(0.25 < L/n < 0.75) = {central:.4f}")
    return status


def cmd_clt(args) -> int:
    mu = parse_measure(args.measure)
    try:
        rep = clt_experiment(mu, args.n, args.reps, parse_nodes(args.nodes), args.seed,
                             args.workers, args.engine)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _write(args.out, ".csv", rep.to_csv())
    _write(args.out, ".json", rep.to_json() + "\n")
    print(f"covariance entries within {5}SE: {rep.pass_fraction:.3f} -> {'pass' if rep.passed else 'FAIL'}"
          + (" (low power)" if rep.low_power else ""))
    return 0 if rep.passed else 1


def cmd_bst_mixture(args) -> int:
    rep = bst_mixture_experiment(args.n, args.reps, parse_nodes(args.nodes), args.seed,
                                 args.shape_size, args.shape_runs, args.workers)
    _write(args.out, ".csv", rep.conditional.to_csv())
    _write(args.out, ".json", json.dumps(rep.to_dict(), indent=2) + "\n")
    print(f"conditional covariance pass fraction {rep.conditional.pass_fraction:.3f}, "
          f"shape chi-square p = {rep.shapes.p_value:.4f}")
    return 0 if rep.passed else 1


def cmd_increments(args) -> int:
    mu = parse_measure(args.measure)
    nodes = parse_nodes(args.nodes)
    rng = stream_rng(args.seed, "increments")
    n = args.horizon + 1
    tr = dst_grow(mu, n, rng)
    # grow until every node has a full horizon behind it
    while any((tr.tree.index_of(u) < 0 or tr.tree.index_of(u) + args.horizon >= tr.n) for u in nodes):
        n *= 2
        if n > 64 * (args.horizon + 1):
            raise UsageError("some node does not enter; does the measure give it positive mass?")
        tr = dst_grow(mu, n, rng)
    reports, ok = [], True
    for u in nodes:
        y = extract_increments(tr, u, args.horizon)
        label = str(u) or "root"
        _write(f"{args.out}_{label}", ".csv", y.to_csv())
        expected = increment_pmf(mu, u)
        observed = empirical_pmf(y)
        sigma = [math.sqrt(p * (1 - p) / len(y)) for p in expected]
        within = all(abs(o - e) <= 5 * s + 1e-12 for o, e, s in zip(observed, expected, sigma))
        ex = exchangeability_statistic(y, args.block_len, args.shuffles, rng)
        ok &= within and ex.passed()
        reports.append({"node": str(u), "horizon": len(y), "pmf_expected": expected,
                        "pmf_observed": observed, "p_value": ex.p_value})
    _json(args.out, {"measure": mu.describe(), "seed": args.seed, "reports": reports, "passed": ok})
    print(f"{len(nodes)} nodes, {'pass' if ok else 'FAIL'}")
    return 0 if ok else 1


def cmd_trace(args) -> int:
    model = _model(args)
    rng = stream_rng(args.seed, "trace")
    series = convergence_trace(model, Word.parse(args.node), parse_ints(args.checkpoints), rng)
    _write(args.out, ".csv", series.to_csv())
    ok = series.gap_bounds_hold()
    _json(args.out, {"model": args.model, "node": args.node, "limit": series.limit, "seed": args.seed,
                     "gap_bounds_hold": ok})
    print(f"final t = {float(series.t[-1]):.6f}; gap bounds {'hold' if ok else 'FAIL'}")
    return 0 if ok else 1


def cmd_embed(args) -> int:
    rng = stream_rng(args.seed, "embed")
    if args.model == "dst":
        mu = parse_measure(args.measure)
        x = dst_grow(mu, args.n, rng).tree
    elif args.model == "bst":
        mu, x = None, bst_grow(args.n, rng).tree
    else:
        mu, x = None, remy_grow(args.n, rng).tree
    bm = BoundaryMeasure(x)
    _write(args.out, ".csv", cylinder_csv(bm, args.depth))
    payload = {"model": args.model, "n": args.n, "depth": args.depth, "seed": args.seed}
    if mu is not None:
        tv = 0.5 * float(np.abs(cylinder_masses(bm, args.depth) - cylinder_masses(mu, args.depth)).sum())
        payload["tv_distance"] = tv
    _json(args.out, payload)
    print(json.dumps({k: v for k, v in payload.items() if k != "seed"}))
    return 0


def cmd_selftest(args) -> int:
    results = run_selftest(args.table_fixture, args.seed)
    for name, ok, msg in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {msg}")
    return 0 if all(ok for _, ok, _ in results) else 1


COMMANDS = {
    "grow": cmd_grow, "uniform": cmd_uniform, "clt": cmd_clt, "bst-mixture": cmd_bst_mixture,
    "increments": cmd_increments, "trace": cmd_trace, "embed": cmd_embed, "selftest": cmd_selftest,
}


def _env_seed() -> int:
    try:
        return default_seed()
    except ValueError:
        raise UsageError(f"TREELIMIT_SEED must be an integer, got {os.environ.get(SEED_ENV)!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="treelimit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="kind", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=_env_seed(),
                        help="master seed (default: $TREELIMIT_SEED or 0)")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--config", help="JSON file of flag defaults; explicit flags win")
    common.add_argument("--out", help="output path prefix (default: the experiment name)")

    def add(name, **kw):
        return sub.add_parser(name, parents=[common], **kw)

    p = add("grow", help="grow one trajectory")
    p.add_argument("--model", choices=["dst", "bst", "remy"], default="dst")
    p.add_argument("--measure", default="uniform")
    p.add_argument("--n", type=int, default=100)

    p = add("uniform", help="sample uniform trees")
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--reps", type=int, default=10_000)
    p.add_argument("--sampler", choices=["catalan", "remy"], default="catalan")

    p = add("clt", help="fluctuation covariance experiment")
    p.add_argument("--measure", default="uniform")
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--reps", type=int, default=10_000)
    p.add_argument("--nodes", default="0,1,00")
    p.add_argument("--engine", choices=["auto", "tree", "top", "python"], default="auto")

    p = add("bst-mixture", help="BST as a mixture of DST laws")
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--reps", type=int, default=2_000)
    p.add_argument("--nodes", default="0,1,00")
    p.add_argument("--shape-size", type=int, default=3)
    p.add_argument("--shape-runs", type=int, default=10_000)

    p = add("increments", help="local increment processes under DST")
    p.add_argument("--measure", default="uniform")
    p.add_argument("--nodes", default=",0,1")
    p.add_argument("--horizon", type=int, default=10_000)
    p.add_argument("--block-len", type=int, default=2)
    p.add_argument("--shuffles", type=int, default=199)

    p = add("trace", help="first-order convergence along one run")
    p.add_argument("--model", choices=["dst", "bst", "remy", "catalan_direct"], default="dst")
    p.add_argument("--measure", default="uniform")
    p.add_argument("--node", default="0")
    p.add_argument("--checkpoints", default="10,100,1000,10000")

    p = add("embed", help="boundary-measure cylinder masses of a grown tree")
    p.add_argument("--model", choices=["dst", "bst", "remy"], default="dst")
    p.add_argument("--measure", default="uniform")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--depth", type=int, default=4)

    p = add("selftest", help="exact identities at small sizes")
    p.add_argument("--table-fixture")
    return parser


@dataclass
class ExperimentConfig:
    """One experiment: its kind, shared settings and kind-specific options."""

    kind: str
    seed: int = 0
    workers: int = 1
    out: str | None = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UsageError(f"unknown experiment {self.kind!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise UsageError(f"seed must be a nonnegative integer, got {self.seed!r}")
        if self.workers < 1:
            raise UsageError("--workers must be at least 1")
        for key in ("n", "reps", "horizon", "depth", "shape_size", "shape_runs", "block_len", "shuffles"):
            value = self.options.get(key)
            if value is not None and (not isinstance(value, int) or value < 1):
                raise UsageError(f"--{key.replace('_', '-')} must be a positive integer")
        if self.out is None:
            self.out = self.kind


def run(config: ExperimentConfig) -> int:
    """Execute one experiment and write its reports; returns the exit status."""
    args = SimpleNamespace(seed=config.seed, workers=config.workers, out=config.out, **config.options)
    return COMMANDS[config.kind](args)


def _config_from_args(args) -> ExperimentConfig:
    shared = {"kind", "seed", "workers", "out", "config"}
    options = {k: v for k, v in vars(args).items() if k not in shared}
    return ExperimentConfig(args.kind, args.seed, args.workers, args.out, options)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        if args.config:
            try:
                config = json.loads(Path(args.config).read_text())
            except (OSError, ValueError) as exc:
                raise UsageError(f"cannot read config {args.config!r}: {exc}") from None
            if not isinstance(config, dict):
                raise UsageError("config file must hold a JSON object")
            sub = parser._subparsers._group_actions[0].choices[args.kind]
            sub.set_defaults(**{k.replace("-", "_"): v for k, v in config.items()})
            args = parser.parse_args(argv)
        return run(_config_from_args(args))
    except UsageError as exc:
        print(f"treelimit: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
