"""Brute-force reference implementations used by the property tests."""

import itertools

import numpy as np

from fsmfusion.partition import largest_consistent
from fsmfusion.product import map_states


def codewords(parts):
    """``N x |parts|`` matrix: the block of every RCP state in every machine."""
    return np.stack([p.block_of for p in parts], axis=1) if parts else np.zeros((0, 0), dtype=np.int64)


def crash_recoverable(parts, f):
    """Every choice of f lost machines leaves all RCP states distinguishable."""
    n_states = parts[0].index.N
    if n_states < 2:
        return True
    code = codewords(parts)
    k = min(f, len(parts))
    for lost in itertools.combinations(range(len(parts)), k):
        keep = [i for i in range(len(parts)) if i not in lost]
        rows = {tuple(row) for row in code[:, keep]}
        if len(rows) < n_states:
            return False
    return True


def byz_decodable(parts, f):
    """Nearest-codeword decoding is unique and right for every truth and every <= f liars."""
    code = codewords(parts)
    n_states, m = code.shape
    if n_states < 2:
        return True
    if len({tuple(row) for row in code}) < n_states:
        return False
    sizes = [p.n_blocks for p in parts]
    for t in range(1, min(f, m) + 1):
        for liars in itertools.combinations(range(m), t):
            lies = np.array(list(itertools.product(*(range(sizes[i]) for i in liars))), dtype=np.int64)
            for r in range(n_states):
                reports = np.repeat(code[r][None, :], len(lies), axis=0)
                reports[:, list(liars)] = lies
                dist = np.sum(reports[:, None, :] != code[None, :, :], axis=2)
                best = dist.min(axis=1)
                if np.any(dist[:, r] != best) or np.any(np.sum(dist == best[:, None], axis=1) != 1):
                    return False
    return True


def random_machine_set(rng, idx, primaries, extra):
    """Primaries as partitions plus ``extra`` random closed partitions."""
    parts = [map_states(idx, m) for m in primaries]
    for _ in range(extra):
        k = int(rng.integers(0, 3))
        seeds = [tuple(int(x) for x in rng.integers(0, idx.N, size=2)) for _ in range(k)]
        parts.append(largest_consistent(idx, seeds))
    return parts


def crash_oracle(code, observed):
    """The unique RCP state whose codeword agrees with every observed (non-None) slot, else None."""
    keep = [i for i, x in enumerate(observed) if x is not None]
    vals = np.array([observed[i] for i in keep], dtype=np.int64)
    hits = np.flatnonzero(np.all(code[:, keep] == vals, axis=1))
    return int(hits[0]) if len(hits) == 1 else None


def byz_oracle(code, report):
    """The unique nearest codeword to a full report, else None."""
    dist = np.sum(code != np.asarray(report)[None, :], axis=1)
    best = np.flatnonzero(dist == dist.min())
    return int(best[0]) if len(best) == 1 else None
