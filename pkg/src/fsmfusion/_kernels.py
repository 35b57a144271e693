"""Numba kernels for closed-partition computations.

All functions work on an integer transition table ``T`` of shape
``(n_states, n_events)`` and return canonical labels: blocks numbered in
order of their smallest member.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@njit(cache=True)
def _close(T, parent, qa, qb, head):
    """Propagate pending merges (qa/qb[:head]) until the partition is closed."""
    n_events = T.shape[1]
    pos = 0
    while pos < head:
        a = qa[pos]
        b = qb[pos]
        pos += 1
        for e in range(n_events):
            x = _find(parent, T[a, e])
            y = _find(parent, T[b, e])
            if x != y:
                if x < y:
                    parent[y] = x
                else:
                    parent[x] = y
                qa[head] = T[a, e]
                qb[head] = T[b, e]
                head += 1
    return head


@njit(cache=True)
def _labels(parent):
    n = parent.shape[0]
    lab = np.empty(n, dtype=np.int64)
    root_lab = np.full(n, -1, dtype=np.int64)
    nxt = 0
    for i in range(n):
        r = _find(parent, i)
        if root_lab[r] < 0:
            root_lab[r] = nxt
            nxt += 1
        lab[i] = root_lab[r]
    return lab


@njit(cache=True)
def close_seeds(T, seed_a, seed_b):
    """Finest closed partition in which every seed pair shares a block."""
    n = T.shape[0]
    parent = np.arange(n)
    qa = np.empty(n + seed_a.shape[0] + 1, dtype=np.int64)
    qb = np.empty(n + seed_a.shape[0] + 1, dtype=np.int64)
    head = 0
    for i in range(seed_a.shape[0]):
        x = _find(parent, seed_a[i])
        y = _find(parent, seed_b[i])
        if x != y:
            if x < y:
                parent[y] = x
            else:
                parent[x] = y
            qa[head] = seed_a[i]
            qb[head] = seed_b[i]
            head += 1
    _close(T, parent, qa, qb, head)
    return _labels(parent)


@njit(cache=True)
def _classes_ok(parent, forbidden, count, start, order):
    n = parent.shape[0]
    for s in range(n):
        count[s] = 0
    for s in range(n):
        count[_find(parent, s)] += 1
    start[0] = 0
    for s in range(n):
        start[s + 1] = start[s] + count[s]
        count[s] = start[s]
    for s in range(n):
        r = parent[s]
        order[count[r]] = s
        count[r] += 1
    for r in range(n):
        lo = start[r]
        hi = start[r + 1]
        for x in range(lo, hi):
            for y in range(x + 1, hi):
                a = order[x]
                b = order[y]
                if forbidden[a, b] or forbidden[b, a]:
                    return False
    return True


@njit(cache=True)
def pair_closures(T, forbidden):
    """Close every state pair (i < j) of ``T``.

    Returns ``(nblocks, ok)`` as ``n x n`` arrays filled on the upper
    triangle.  ``ok[i, j]`` is true when the closure keeps every pair marked
    in ``forbidden`` apart; pairs that are themselves forbidden are skipped
    (``nblocks = -1``).
    """
    n = T.shape[0]
    nblocks = np.full((n, n), -1, dtype=np.int64)
    ok = np.zeros((n, n), dtype=np.bool_)
    parent = np.empty(n, dtype=np.int64)
    qa = np.empty(n + 1, dtype=np.int64)
    qb = np.empty(n + 1, dtype=np.int64)
    count = np.empty(n, dtype=np.int64)
    start = np.empty(n + 1, dtype=np.int64)
    order = np.empty(n, dtype=np.int64)
    for i in range(n):
        for j in range(i + 1, n):
            if forbidden[i, j]:
                continue
            for s in range(n):
                parent[s] = s
            parent[j] = i
            qa[0] = i
            qb[0] = j
            head = _close(T, parent, qa, qb, 1)
            nblocks[i, j] = n - head
            good = True
            if head > 1:
                good = _classes_ok(parent, forbidden, count, start, order)
            ok[i, j] = good
    return nblocks, ok


@njit(cache=True)
def event_closures(T, cols):
    """For each event column c in ``cols``: close the merges s ~ T[s, c]."""
    n = T.shape[0]
    out = np.empty((cols.shape[0], n), dtype=np.int64)
    src = np.arange(n)
    for k in range(cols.shape[0]):
        out[k] = close_seeds(T, src, T[:, cols[k]].copy())
    return out


@njit(cache=True)
def maximal_pairs(T, nblocks, ok):
    """Representative pairs of the maximal qualifying pair closures.

    A closure is maximal when no pair it merges generates a strictly finer
    closure. Each maximal closure is reported once, through its smallest
    merged pair.
    """
    n = T.shape[0]
    parent = np.empty(n, dtype=np.int64)
    qa = np.empty(n + 1, dtype=np.int64)
    qb = np.empty(n + 1, dtype=np.int64)
    count = np.empty(n, dtype=np.int64)
    start = np.empty(n + 1, dtype=np.int64)
    order = np.empty(n, dtype=np.int64)
    out_i = []
    out_j = []
    for i in range(n):
        for j in range(i + 1, n):
            if not ok[i, j]:
                continue
            for s in range(n):
                parent[s] = s
            parent[j] = i
            qa[0] = i
            qb[0] = j
            _close(T, parent, qa, qb, 1)
            nb = nblocks[i, j]
            for s in range(n):
                count[s] = 0
            for s in range(n):
                count[_find(parent, s)] += 1
            start[0] = 0
            for s in range(n):
                start[s + 1] = start[s] + count[s]
                count[s] = start[s]
            for s in range(n):
                r = parent[s]
                order[count[r]] = s
                count[r] += 1
            # smallest merged pair: smallest state in a non-singleton class
            first_a = -1
            first_b = -1
            maximal = True
            for r in range(n):
                lo = start[r]
                hi = start[r + 1]
                if hi - lo < 2:
                    continue
                if first_a < 0 or order[lo] < first_a:
                    first_a = order[lo]
                    first_b = order[lo + 1]
                for x in range(lo, hi):
                    for y in range(x + 1, hi):
                        a = order[x]
                        b = order[y]
                        if a > b:
                            a, b = b, a
                        if nblocks[a, b] != nb:
                            maximal = False
                            break
                    if not maximal:
                        break
                if not maximal:
                    break
            if maximal and first_a == i and first_b == j:
                out_i.append(i)
                out_j.append(j)
    res = np.empty((len(out_i), 2), dtype=np.int64)
    for k in range(len(out_i)):
        res[k, 0] = out_i[k]
        res[k, 1] = out_j[k]
    return res
