"""Replicate seeding and order-preserving parallel execution.

Replicate ``r`` of an experiment with master seed ``s`` draws from
``SeedSequence(s, spawn_key=(r,))``. Results depend only on ``(s, r)``, so
any number of workers reproduces the single-worker output exactly.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable

import numpy as np

SEED_ENV = "TREELIMIT_SEED"


def default_seed() -> int:
    return int(os.environ.get(SEED_ENV, "0"))


def replicate_rng(master: int, r: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master, spawn_key=(r,)))


def stream_rng(master: int, name: str) -> np.random.Generator:
    """A generator for a named single-stream task (e.g. one experiment arm)."""
    key = int.from_bytes(name.encode(), "little")
    return np.random.default_rng(np.random.SeedSequence(master, spawn_key=(1 << 32, key)))


def _run_chunk(fn, master, start, stop, args):
    return [fn(replicate_rng(master, r), *args) for r in range(start, stop)]


def run_replicates(fn: Callable, master: int, reps: int, workers: int = 1, args: tuple = ()) -> list:
    """``[fn(rng_r, *args) for r in range(reps)]`` with per-replicate generators."""
    if workers <= 1 or reps < 2:
        return _run_chunk(fn, master, 0, reps, args)
    nchunks = min(reps, 4 * workers)
    bounds = np.linspace(0, reps, nchunks + 1).astype(int)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_chunk, fn, master, int(a), int(b), args)
                   for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        out = []
        for f in futures:
            out.extend(f.result())
    return out
