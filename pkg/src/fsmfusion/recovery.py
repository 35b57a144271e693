"""Recovery agent: tuple-set indexes, LSH tables, fault detection and correction.

Every backup state stands for a set of primary tuples (its tuple-set). A
crash is repaired by intersecting, over the surviving backups, the tuples
that agree with whatever primaries are still present. A liar is caught when
the reported primary tuple is missing from some backup's tuple-set, and is
outvoted by counting, per candidate tuple, the backups that place it near
the report plus the primaries that agree with it.

Near-neighbour search uses bit-sampling LSH over primary coordinates; every
answer is checked against an exhaustive scan of the same tuple-set whenever
the hashed candidates are not conclusive, so final results never depend on
the random tables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .product import BlockPartition, RcpIndex

__all__ = [
    "ByzResult", "CrashResult", "LshIndex", "PartialTuple", "RecoveryError", "RecoveryIndex",
    "TupleSetIndex", "auto_L", "build_index", "correct_byz", "correct_crash", "detect_byz",
    "lsh_query",
]


class RecoveryError(RuntimeError):
    """More faults than the backups can handle (ambiguous or no answer)."""


class PartialTuple(tuple):
    """A primary tuple in which crashed slots are ``None``."""

    def __new__(cls, slots: Iterable[str | None]):
        return super().__new__(cls, (None if s in (None, "MISSING", "-") else s for s in slots))

    @property
    def missing(self) -> tuple[int, ...]:
        return tuple(i for i, s in enumerate(self) if s is None)

    @property
    def t(self) -> int:
        return len(self.missing)

    def __repr__(self):
        return "PartialTuple(" + ".".join("_" if s is None else s for s in self) + ")"


@dataclass
class TupleSetIndex:
    """Exact tuple-sets of every backup state."""
    index: RcpIndex
    names: tuple[str, ...]
    partitions: tuple[BlockPartition, ...]
    # per fusion: state name -> array of RCP ids
    members: list[dict[str, np.ndarray]] = field(repr=False)
    sets: list[dict[str, frozenset]] = field(repr=False)

    @property
    def n(self) -> int:
        return self.index.n

    @property
    def m(self) -> int:
        return len(self.names)

    def fusion_pos(self, name_or_pos) -> int:
        if isinstance(name_or_pos, (int, np.integer)):
            return int(name_or_pos)
        return self.names.index(name_or_pos)

    def tuple_set(self, fusion, state: str) -> frozenset:
        return self.sets[self.fusion_pos(fusion)].get(state, frozenset())

    def contains(self, fusion, state: str, tup: Sequence[str]) -> bool:
        return tuple(tup) in self.tuple_set(fusion, state)

    def stored_points(self) -> int:
        return sum(len(ids) for fus in self.members for ids in fus.values())

    def space_bits(self) -> int:
        """Rough storage estimate: one encoded tuple per stored point."""
        width = sum(_bits(m.size) for m in self.index.primaries)
        return self.stored_points() * width


def _bits(k: int) -> int:
    return max(1, math.ceil(math.log2(k))) if k > 1 else 1


@dataclass
class QueryStats:
    lookups: int = 0
    tables_probed: int = 0
    tables_skipped: int = 0
    fallbacks: int = 0


@dataclass
class LshIndex:
    k: int
    L: int
    delta: float
    gamma: float
    coordinate_sets: list[tuple[int, ...]]
    widths: tuple[int, ...]
    seed: int | None
    # per fusion, per state: list of L dicts key -> array of RCP ids
    tables: list[dict[str, list[dict[str, np.ndarray]]]] = field(repr=False)
    stats: QueryStats = field(default_factory=QueryStats)

    def key(self, coords: Sequence[int], j: int) -> str:
        return "".join(format(int(coords[i]), f"0{self.widths[i]}b") for i in self.coordinate_sets[j])


class RecoveryIndex(NamedTuple):
    tuples: TupleSetIndex
    lsh: LshIndex


def auto_L(k: int, gamma: float, delta: float, max_L: int = 256) -> int:
    """Number of tables so a neighbour agreeing on a ``gamma`` fraction is missed with prob. <= delta."""
    p = gamma ** k if gamma > 0 else 0.0
    if p >= 1.0:
        return 1
    if p <= 0.0:
        return max_L
    return max(1, min(max_L, math.ceil(math.log(delta) / math.log(1.0 - p))))


def _sample_sets(rng: np.random.Generator, n: int, k: int, L: int) -> list[tuple[int, ...]]:
    # independent draws (with replacement) keep the agreement probability at gamma**k
    return [tuple(sorted(set(rng.integers(0, n, size=k).tolist()))) for _ in range(L)]


def build_index(fusions, idx: RcpIndex | None = None, k: int | None = None, L: int | None = None,
                delta: float = 0.1, seed: int | None = 0, f: int | None = None,
                coordinate_sets: Sequence[Sequence[int]] | None = None) -> RecoveryIndex:
    """Exact and LSH indexes over the tuple-sets of every backup state.

    ``fusions`` is a ``FusionSet`` or a sequence of backup partitions. ``f``
    (default: number of backups) sets ``gamma = 1 - f/n``.
    """
    if hasattr(fusions, "backups"):
        idx = idx or fusions.index
        parts = [b.partition for b in fusions.backups]
        names = [b.machine.name for b in fusions.backups]
    else:
        parts = list(fusions)
        names = [p.machine_name or f"F{i + 1}" for i, p in enumerate(parts)]
        if idx is None:
            if not parts:
                raise ValueError("need an RcpIndex when no backups are given")
            idx = parts[0].index
    n = idx.n
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if coordinate_sets is not None:
        csets = [tuple(sorted(set(int(i) for i in c))) for c in coordinate_sets]
        if any(not 0 <= i < n for c in csets for i in c):
            raise ValueError("coordinate set out of range")
        k = k if k is not None else max(len(c) for c in csets)
        L = len(csets)
    if k is None:
        k = max(1, math.ceil(n / 2))
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}]")
    f = len(parts) if f is None else f
    gamma = 1.0 - f / n
    if coordinate_sets is None:
        if L is None:
            L = auto_L(k, gamma, delta)
        if L < 1:
            raise ValueError("L must be at least 1")
        csets = _sample_sets(np.random.default_rng(seed), n, k, L)

    coords = idx.coords
    members: list[dict[str, np.ndarray]] = []
    sets: list[dict[str, frozenset]] = []
    for p in parts:
        if p.index is not idx:
            raise ValueError("backup partition belongs to a different RCP")
        fm = {}
        fs = {}
        for b, block in enumerate(p.blocks):
            ids = np.array(sorted(block), dtype=np.int64)
            fm[p.state_name(b)] = ids
            fs[p.state_name(b)] = frozenset(idx.tuple_of[r] for r in ids)
        members.append(fm)
        sets.append(fs)
    tsi = TupleSetIndex(idx, tuple(names), tuple(parts), members, sets)

    widths = tuple(_bits(m.size) for m in idx.primaries)
    lsh = LshIndex(k, L, delta, gamma, csets, widths, seed, [])
    for fm in members:
        per_state = {}
        for s, ids in fm.items():
            tabs = []
            for j in range(L):
                buckets: dict[str, list[int]] = {}
                for r in ids:
                    buckets.setdefault(lsh.key(coords[r], j), []).append(int(r))
                tabs.append({key: np.array(v, dtype=np.int64) for key, v in buckets.items()})
            per_state[s] = tabs
        lsh.tables.append(per_state)
    return RecoveryIndex(tsi, lsh)


# --------------------------------------------------------------------------
# queries

def _encode(idx: RcpIndex, q: Sequence[str | None]) -> np.ndarray:
    """Primary state indices of a (partial) tuple, -1 for missing or unknown."""
    if len(q) != idx.n:
        raise ValueError(f"expected {idx.n} slots, got {len(q)}")
    out = np.full(idx.n, -1, dtype=np.int64)
    for i, (m, s) in enumerate(zip(idx.primaries, q)):
        if s is not None and s in m._state_pos:
            out[i] = m._state_pos[s]
    return out


def _distance(coords: np.ndarray, ids: np.ndarray, qc: np.ndarray) -> np.ndarray:
    """Hamming distance of each candidate to the query; missing slots count as mismatches."""
    return np.sum(coords[ids] != qc[None, :], axis=1)


def _near(rix: RecoveryIndex, k: int, state: str, qc: np.ndarray, d: int,
          exhaustive: bool) -> np.ndarray:
    tsi, lsh = rix
    ids = tsi.members[k].get(state)
    if ids is None:
        return np.empty(0, dtype=np.int64)
    coords = tsi.index.coords
    if not exhaustive:
        lsh.stats.lookups += 1
        missing = set(np.nonzero(qc < 0)[0].tolist())
        found: list[np.ndarray] = []
        probed = False
        for j, cset in enumerate(lsh.coordinate_sets):
            if missing.intersection(cset):
                lsh.stats.tables_skipped += 1
                continue
            probed = True
            lsh.stats.tables_probed += 1
            hit = lsh.tables[k][state][j].get(lsh.key(qc, j))
            if hit is not None:
                found.append(hit)
        if probed:
            cand = np.unique(np.concatenate(found)) if found else np.empty(0, dtype=np.int64)
            return cand[_distance(coords, cand, qc) <= d]
        lsh.stats.fallbacks += 1
    return ids[_distance(coords, ids, qc) <= d]


def lsh_query(rix: RecoveryIndex, fusion, state: str, q: Sequence[str | None], d: int) -> set[tuple]:
    """Tuples of a backup state within distance ``d`` of ``q`` found through the LSH tables.

    Falls back to an exhaustive scan when every table uses a missing slot.
    """
    idx = rix.tuples.index
    k = rix.tuples.fusion_pos(fusion)
    ids = _near(rix, k, state, _encode(idx, q), d, exhaustive=False)
    return {idx.tuple_of[r] for r in ids}


def exhaustive_query(rix: RecoveryIndex, fusion, state: str, q: Sequence[str | None], d: int) -> set[tuple]:
    idx = rix.tuples.index
    k = rix.tuples.fusion_pos(fusion)
    ids = _near(rix, k, state, _encode(idx, q), d, exhaustive=True)
    return {idx.tuple_of[r] for r in ids}


def detect_byz(tuples: TupleSetIndex | RecoveryIndex, fusion_states: Sequence[str],
               r: Sequence[str]) -> bool:
    """True when the reported states cannot all be truthful."""
    tsi = tuples.tuples if isinstance(tuples, RecoveryIndex) else tuples
    if len(fusion_states) != tsi.m:
        raise ValueError(f"expected {tsi.m} backup states, got {len(fusion_states)}")
    r = tuple(r)
    for m, s in zip(tsi.index.primaries, r):
        if s not in m._state_pos:
            return True
    for k, s in enumerate(fusion_states):
        if s not in tsi.sets[k] or r not in tsi.sets[k][s]:
            return True
    return False


@dataclass
class CrashResult:
    tuple: tuple[str, ...]
    fallback: bool
    candidates: int


def _available(tsi: TupleSetIndex, states) -> list[tuple[int, str]]:
    if isinstance(states, Mapping):
        return [(tsi.fusion_pos(name), s) for name, s in states.items() if s is not None]
    return [(k, s) for k, s in enumerate(states) if s is not None]


def correct_crash(rix: RecoveryIndex, available_fusion_states, r: Sequence[str | None],
                  t: int | None = None, f: int | None = None) -> CrashResult:
    """Rebuild the crashed primary slots of ``r`` from the surviving backups.

    ``available_fusion_states`` maps backup names to states, or lists one
    state per backup with ``None`` for crashed backups. When more machines
    are down than the budget ``f`` (default: number of backups) the hashed
    path is skipped and an ambiguous answer raises ``RecoveryError``.
    """
    tsi, lsh = rix
    idx = tsi.index
    r = PartialTuple(r)
    if t is None:
        t = r.t
    if t != r.t:
        raise ValueError(f"t={t} but the tuple has {r.t} missing slots")
    avail = _available(tsi, available_fusion_states)
    f = tsi.m if f is None else f
    down = t + (tsi.m - len(avail))
    qc = _encode(idx, r)
    if any(qc[i] < 0 for i in range(idx.n) if r[i] is not None):
        raise RecoveryError(f"{r} reports a state outside some primary's state set")
    if t == 0:
        return CrashResult(tuple(r), False, 1)

    def solve(exhaustive: bool) -> np.ndarray:
        present = qc >= 0
        base = np.nonzero(np.all(idx.coords[:, present] == qc[present], axis=1))[0]
        cand = set(base.tolist()) if exhaustive or not avail else None
        for k, s in avail:
            ids = set(_near(rix, k, s, qc, t, exhaustive).tolist())
            cand = ids if cand is None else cand & ids
        return np.array(sorted(cand), dtype=np.int64)

    if down <= f and avail:
        got = solve(False)
        if len(got) == 1:
            return CrashResult(idx.tuple_of[got[0]], False, 1)
    lsh.stats.fallbacks += 1
    got = solve(True)
    if len(got) == 1:
        return CrashResult(idx.tuple_of[got[0]], True, 1)
    if len(got) == 0:
        raise RecoveryError(f"no tuple is consistent with {r} and the surviving backups")
    raise RecoveryError(f"{len(got)} tuples are consistent with {r}: "
                        + ", ".join(idx.label(x) for x in got[:8]))


@dataclass
class ByzResult:
    tuple: tuple[str, ...]
    votes: int
    threshold: int
    fallback: bool


def correct_byz(rix: RecoveryIndex, fusion_states: Sequence[str], r: Sequence[str],
                f: int | None = None) -> ByzResult:
    """Outvote up to ``f // 2`` liars among primaries and backups.

    ``f`` defaults to the number of backups. A candidate tuple collects one
    vote per backup whose reported state holds it within distance ``f // 2``
    of the report, and one per primary it agrees with. The unique tuple
    reaching ``n + m - f + f // 2`` votes is returned.
    """
    tsi, lsh = rix
    idx = tsi.index
    m = tsi.m
    f = m if f is None else f
    if len(fusion_states) != m:
        raise ValueError(f"all {m} backup states are required, got {len(fusion_states)}")
    r = tuple(r)
    qc = _encode(idx, r)
    d = f // 2
    threshold = idx.n + m - f + f // 2

    def vote(exhaustive: bool):
        votes: dict[int, int] = {}
        for k, s in enumerate(fusion_states):
            for g in _near(rix, k, s, qc, d, exhaustive).tolist():
                votes[g] = votes.get(g, 0) + 1
        coords = idx.coords
        winners = []
        for g, v in votes.items():
            v += int(np.sum(coords[g] == qc))
            votes[g] = v
            if v >= threshold:
                winners.append(g)
        return winners, votes

    winners, votes = vote(False)
    fallback = False
    if len(winners) != 1:
        lsh.stats.fallbacks += 1
        fallback = True
        winners, votes = vote(True)
    if len(winners) > 1:
        raise RecoveryError(f"{len(winners)} tuples reach the vote threshold {threshold}")
    if not winners:
        raise RecoveryError(f"no tuple reaches the vote threshold {threshold}")
    g = winners[0]
    return ByzResult(idx.tuple_of[g], votes[g], threshold, fallback)
