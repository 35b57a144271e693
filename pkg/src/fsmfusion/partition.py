"""Closed-partition operations: seeded closure, the order, and reductions.

A partition ``q`` is *below or equal to* ``p`` here in the machine sense:
``leq(p, q)`` holds when every block of ``q`` sits inside a block of ``p``,
i.e. knowing the state of ``q`` determines the state of ``p``.

Reductions run on the quotient machine of a partition (one row per block) and
are lifted back to RCP labels afterwards, so their cost depends on the size of
the machine being reduced and not on the RCP.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np

from . import _kernels
from .product import BlockPartition, RcpIndex, canonical_labels

__all__ = [
    "acting_events", "block_forbidden", "closed_partitions", "largest_consistent", "leq",
    "maximal", "reduce_event", "reduce_state", "sort_canonical",
]


def _seed_arrays(seeds: Iterable) -> tuple[np.ndarray, np.ndarray]:
    a: list[int] = []
    b: list[int] = []
    for group in seeds:
        members = sorted(int(x) for x in group)
        for x, y in zip(members, members[1:]):
            a.append(x)
            b.append(y)
    return np.array(a, dtype=np.int64), np.array(b, dtype=np.int64)


def largest_consistent(idx: RcpIndex, seeds: Iterable, name: str = "") -> BlockPartition:
    """Finest closed partition of the RCP in which every seed group shares a block.

    ``seeds`` holds pairs or larger groups of RCP state ids.
    """
    sa, sb = _seed_arrays(seeds)
    for x in np.concatenate([sa, sb]):
        if not 0 <= x < idx.N:
            raise KeyError(f"unknown RCP state {x}")
    lab = _kernels.close_seeds(np.ascontiguousarray(idx.table), sa, sb)
    return BlockPartition(idx, lab, name, canonical=True)


def _check_same(p: BlockPartition, q: BlockPartition):
    if p.index is not q.index:
        raise ValueError("partitions belong to different RCPs")


def leq(p: BlockPartition, q: BlockPartition) -> bool:
    """True iff every block of ``q`` lies inside a block of ``p``."""
    _check_same(p, q)
    pl, ql = p.block_of, q.block_of
    reps = np.zeros(q.n_blocks, dtype=np.int64)
    reps[ql[::-1]] = np.arange(len(ql))[::-1]
    return bool(np.all(pl[reps][ql] == pl))


def sort_canonical(parts: Iterable[BlockPartition]) -> list[BlockPartition]:
    return sorted(parts, key=BlockPartition.sort_key)


def _dedupe(parts: Iterable[BlockPartition]) -> list[BlockPartition]:
    seen = {}
    for p in parts:
        seen.setdefault(p, p)
    return list(seen.values())


def maximal(parts: Iterable[BlockPartition]) -> list[BlockPartition]:
    """The incomparable finest members (largest machines), deduplicated, canonical order."""
    uniq = _dedupe(parts)
    out = []
    for p in uniq:
        # p is dominated if some other member is strictly finer
        if not any(q is not p and q.n_blocks > p.n_blocks and leq(p, q) for q in uniq):
            out.append(p)
    return sort_canonical(out)


def acting_events(p: BlockPartition) -> frozenset[int]:
    """Events that move at least one block of ``p`` to a different block."""
    q = p.quotient_table()
    ids = np.arange(p.n_blocks)[:, None]
    moving = np.any(q != ids, axis=0)
    return frozenset(int(e) for e, m in zip(p.index.sigma, moving) if m)


def block_forbidden(p: BlockPartition, weakest: np.ndarray | None) -> np.ndarray:
    """Block-level mask of pairs that must stay apart.

    ``weakest`` is a boolean ``N x N`` mask of RCP state pairs; blocks ``i``
    and ``j`` may not merge when some marked pair has one end in each.
    """
    k = p.n_blocks
    out = np.zeros((k, k), dtype=np.bool_)
    if weakest is None:
        return out
    u, v = np.nonzero(weakest)
    lab = p.block_of
    out[lab[u], lab[v]] = True
    out[lab[v], lab[u]] = True
    return out


def _lift(p: BlockPartition, qlab: np.ndarray) -> BlockPartition:
    return BlockPartition(p.index, canonical_labels(qlab[p.block_of]), canonical=True)


def reduce_state(p: BlockPartition, weakest: np.ndarray | None = None) -> list[BlockPartition]:
    """Largest incomparable closed partitions obtained by merging one block pair of ``p``.

    With ``weakest`` given, only merges keeping every marked RCP pair apart are
    considered; the result is then exactly the qualifying members of the
    unrestricted result (qualification is preserved when moving to a finer
    partition, so a maximal qualifying merge is maximal overall).
    """
    k = p.n_blocks
    if k < 2:
        return []
    T = np.ascontiguousarray(p.quotient_table())
    forbidden = block_forbidden(p, weakest)
    if np.any(np.diag(forbidden)):
        # p itself merges a marked pair, nothing below it can qualify
        return []
    nblocks, ok = _kernels.pair_closures(T, forbidden)
    reps = _kernels.maximal_pairs(T, nblocks, ok)
    out = []
    for i, j in reps:
        qlab = _kernels.close_seeds(T, np.array([i], dtype=np.int64), np.array([j], dtype=np.int64))
        out.append(_lift(p, qlab))
    return sort_canonical(out)


def reduce_event(p: BlockPartition, sigma_p: Iterable[int] | None = None
                 ) -> list[tuple[BlockPartition, frozenset[int]]]:
    """Largest incomparable machines below ``p`` that ignore one more event.

    For each event, every block is merged with its image under that event and
    the result is closed. Returned with the acting-event set of each machine.
    """
    if sigma_p is None:
        sigma_p = acting_events(p)
    pos = {e: k for k, e in enumerate(p.index.sigma)}
    cols = np.array(sorted(pos[e] for e in sigma_p if e in pos), dtype=np.int64)
    if len(cols) == 0:
        return []
    T = np.ascontiguousarray(p.quotient_table())
    labs = _kernels.event_closures(T, cols)
    cands = [_lift(p, labs[k]) for k in range(len(cols))]
    return [(q, acting_events(q)) for q in maximal(cands)]


def closed_partitions(idx: RcpIndex, cap: int = 12) -> list[BlockPartition]:
    """Every closed partition of a small RCP, canonical order.

    Generated top-down: the RCP, then repeated single block-pair merges.
    """
    if idx.N > cap:
        raise ValueError(f"RCP has {idx.N} states, lattice enumeration capped at {cap}")
    top = BlockPartition(idx, np.arange(idx.N), canonical=True)
    seen = {top}
    frontier = [top]
    while frontier:
        nxt = []
        for p in frontier:
            k = p.n_blocks
            if k < 2:
                continue
            T = np.ascontiguousarray(p.quotient_table())
            for i in range(k):
                for j in range(i + 1, k):
                    qlab = _kernels.close_seeds(T, np.array([i]), np.array([j]))
                    q = _lift(p, qlab)
                    if q not in seen:
                        seen.add(q)
                        nxt.append(q)
        frontier = nxt
    return sort_canonical(seen)

