"""Compiled inner loops for tree growth.

Every kernel draws exactly one ``gen.random()`` per routing bit (DST) or per
insertion (BST), in the same order as the pure-Python reference paths, so the
two engines produce identical trees from identical generators.

Arena layout: node ``i`` is the ``i``-th inserted node, parents precede
children, ``-1`` marks an absent child.
"""
import numpy as np
from numba import njit

from .words import MAX_DEPTH


@njit(cache=True)
def dst_arena(qtab, table_depth, tail, n, gen):
    """Grow a DST to ``n`` nodes.

    ``qtab`` holds P(next bit = 1) in heap order for nodes of depth below
    ``table_depth``; deeper nodes use ``tail``.
    """
    left = np.full(n, -1, np.int64)
    right = np.full(n, -1, np.int64)
    count = np.zeros(n, np.int64)
    parent = np.full(n, -1, np.int64)
    side = np.zeros(n, np.int8)
    depth = np.zeros(n, np.int64)
    if n == 0:
        return left, right, count, parent, side, depth
    count[0] = 1
    for k in range(1, n):
        cur = 0
        h = 0
        while True:
            count[cur] += 1
            d = depth[cur]
            q = qtab[h] if d < table_depth else tail
            b = 1 if gen.random() < q else 0
            child = right[cur] if b == 1 else left[cur]
            if child < 0:
                if d + 1 > MAX_DEPTH:
                    raise OverflowError("DST growth exceeded MAX_DEPTH")
                count[k] = 1
                parent[k] = cur
                side[k] = b
                depth[k] = d + 1
                if b == 1:
                    right[cur] = k
                else:
                    left[cur] = k
                break
            cur = child
            if d + 1 < table_depth:
                h = 2 * h + 1 + b
    return left, right, count, parent, side, depth


@njit(cache=True)
def bst_arena(n, gen):
    """Grow a BST to ``n`` nodes by uniform boundary ranks."""
    left = np.full(n, -1, np.int64)
    right = np.full(n, -1, np.int64)
    count = np.zeros(n, np.int64)
    parent = np.full(n, -1, np.int64)
    side = np.zeros(n, np.int8)
    depth = np.zeros(n, np.int64)
    if n == 0:
        return left, right, count, parent, side, depth
    count[0] = 1
    for k in range(1, n):
        # 0-based left-right position among the k+1 boundary nodes
        r = np.int64(gen.random() * (k + 1))
        cur = 0
        while True:
            count[cur] += 1
            lc = left[cur]
            nleft = count[lc] if lc >= 0 else 0
            if r <= nleft:
                b = 0
                child = lc
            else:
                r -= nleft + 1
                b = 1
                child = right[cur]
            if child < 0:
                count[k] = 1
                parent[k] = cur
                side[k] = b
                depth[k] = depth[cur] + 1
                if b == 1:
                    right[cur] = k
                else:
                    left[cur] = k
                break
            cur = child
    return left, right, count, parent, side, depth


@njit(cache=True)
def dst_top(qtab, depth, n, gen, checkpoints):
    """Subtree sizes of all words of length <= ``depth`` under DST growth.

    Routing stops once an item reaches a present node at ``depth``; the
    counts of the top levels are exact. Returns final heap-ordered counts
    and one snapshot per checkpoint (sizes, ascending).
    """
    size = (1 << (depth + 1)) - 1
    counts = np.zeros(size, np.int64)
    snaps = np.zeros((checkpoints.shape[0], size), np.int64)
    if n == 0:
        return counts, snaps
    counts[0] = 1
    j = 0
    while j < checkpoints.shape[0] and checkpoints[j] == 1:
        snaps[j, :] = counts
        j += 1
    for k in range(1, n):
        h = 0
        d = 0
        while True:
            counts[h] += 1
            if d == depth:
                break
            b = 1 if gen.random() < qtab[h] else 0
            c = 2 * h + 1 + b
            if counts[c] == 0:
                counts[c] = 1
                break
            h = c
            d += 1
        while j < checkpoints.shape[0] and checkpoints[j] == k + 1:
            snaps[j, :] = counts
            j += 1
    return counts, snaps


@njit(cache=True)
def bst_top(depth, n, gen, checkpoints):
    """Top-level subtree sizes under BST growth; one draw per insertion, as in ``bst_arena``."""
    size = (1 << (depth + 1)) - 1
    counts = np.zeros(size, np.int64)
    snaps = np.zeros((checkpoints.shape[0], size), np.int64)
    if n == 0:
        return counts, snaps
    counts[0] = 1
    j = 0
    while j < checkpoints.shape[0] and checkpoints[j] == 1:
        snaps[j, :] = counts
        j += 1
    for k in range(1, n):
        r = np.int64(gen.random() * (k + 1))
        h = 0
        d = 0
        while True:
            counts[h] += 1
            if d == depth:
                break
            lc = 2 * h + 1
            nleft = counts[lc]
            if r <= nleft:
                c = lc
            else:
                r -= nleft + 1
                c = lc + 1
            if counts[c] == 0:
                counts[c] = 1
                break
            h = c
            d += 1
        while j < checkpoints.shape[0] and checkpoints[j] == k + 1:
            snaps[j, :] = counts
            j += 1
    return counts, snaps


@njit(cache=True)
def finish_arena(parent, side):
    """Children, depths, packed values and subtree counts from a parent array.

    Packed values are only valid when ``overflow`` is False (depth <= 62).
    """
    n = parent.shape[0]
    left = np.full(n, -1, np.int64)
    right = np.full(n, -1, np.int64)
    depth = np.zeros(n, np.int64)
    val = np.zeros(n, np.int64)
    count = np.ones(n, np.int64)
    overflow = False
    for i in range(1, n):
        p = parent[i]
        depth[i] = depth[p] + 1
        if depth[i] > 62:
            overflow = True
        else:
            val[i] = 2 * val[p] + side[i]
        if side[i] == 1:
            right[p] = i
        else:
            left[p] = i
    for i in range(n - 1, 0, -1):
        count[parent[i]] += count[i]
    return left, right, depth, val, count, overflow


@njit(cache=True)
def relative_side(parent, side, node):
    """For each arena index: -1/+1 if in the left/right subtree of ``node``, else 0."""
    n = parent.shape[0]
    rel = np.zeros(n, np.int8)
    for i in range(node + 1, n):
        p = parent[i]
        if p == node:
            rel[i] = 1 if side[i] == 1 else -1
        elif p > node:
            rel[i] = rel[p]
    return rel
