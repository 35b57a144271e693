"""Backup synthesis inside the closed-partition lattice of the primaries' RCP.

``gen_fusion`` adds one backup per fault. Each backup must keep apart every
pair of RCP states at the current minimum distance, which is what raises the
minimum distance by one. Candidates are searched by merging states
(``reduce_state``), then by dropping events (``reduce_event``), and finally
shrunk greedily until no further merge keeps the weakest edges covered.

Whenever the text of the algorithm leaves a free choice, the first candidate
in canonical partition order is taken.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .faultgraph import FaultGraph, build
from .machine import Machine
from .partition import acting_events, reduce_event, reduce_state, sort_canonical
from .product import (DEFAULT_STATE_LIMIT, BlockPartition, RcpIndex, identity_partition, map_states,
                      partition_to_machine, rcp)

log = logging.getLogger(__name__)

__all__ = [
    "Backup", "ExternalCover", "ExternalReport", "FusionError", "FusionSet", "IterationTrace",
    "check_external_backup", "event_decompose", "event_decompose_partitions", "external_report",
    "gen_fusion", "inc_fusion",
]


class FusionError(RuntimeError):
    """A synthesized set of backups failed verification."""


@dataclass(frozen=True)
class Backup:
    machine: Machine
    partition: BlockPartition
    events: frozenset[int]

    @property
    def n_states(self) -> int:
        return self.partition.n_blocks


@dataclass
class IterationTrace:
    iteration: int
    dmin_before: float
    weakest: list[tuple[int, int]]
    state_rounds: list[int] = field(default_factory=list)
    event_rounds: list[int] = field(default_factory=list)
    minimality_steps: int = 0
    chosen_states: int = 0
    chosen_events: int = 0


@dataclass
class FusionSet:
    index: RcpIndex
    primaries: tuple[Machine, ...]
    primary_partitions: tuple[BlockPartition, ...]
    backups: list[Backup]
    f: int
    ds: int
    de: int
    trace: list = field(default_factory=list)
    method: str = "direct"
    seconds: float = 0.0

    @property
    def m(self) -> int:
        return len(self.backups)

    @property
    def n(self) -> int:
        return len(self.primaries)

    @property
    def machines(self) -> list[Machine]:
        return [b.machine for b in self.backups]

    @property
    def partitions(self) -> list[BlockPartition]:
        return [b.partition for b in self.backups]

    def graph(self) -> FaultGraph:
        return build(self.index, list(self.primary_partitions) + self.partitions)

    def dmin(self) -> float:
        return self.graph().dmin()

    def dmin_primaries(self) -> float:
        return build(self.index, self.primary_partitions).dmin()

    def verify(self) -> None:
        """Raise ``FusionError`` unless the set tolerates ``f`` crashes."""
        for b in self.backups:
            if not b.partition.is_closed():
                raise FusionError(f"{b.machine.name} is not a closed partition")
        d = self.dmin()
        if not d > self.f:
            raise FusionError(f"dmin {d} does not exceed f={self.f}")


def _qualifies(p: BlockPartition, wu: np.ndarray, wv: np.ndarray) -> bool:
    lab = p.block_of
    return not bool(np.any(lab[wu] == lab[wv]))


def _make_backup(p: BlockPartition, name: str) -> Backup:
    p = p.renamed(name)
    m = partition_to_machine(p, name)
    return Backup(m, p, acting_events(p))


def _search(idx: RcpIndex, weakest: np.ndarray, ds: int, de: int, frontier_cap: int | None,
            tr: IterationTrace) -> BlockPartition:
    """One outer iteration: state loop, event loop, minimality loop."""
    wu, wv = np.nonzero(weakest)
    current = [identity_partition(idx)]
    for _ in range(ds):
        found: dict[BlockPartition, None] = {}
        for p in current:
            for q in reduce_state(p, weakest):
                found.setdefault(q)
        tr.state_rounds.append(len(found))
        if not found:
            break
        current = sort_canonical(found)
        if frontier_cap is not None and len(current) > frontier_cap:
            log.warning("state-reduction frontier truncated from %d to %d", len(current), frontier_cap)
            current = current[:frontier_cap]
    for _ in range(de):
        found = {}
        for p in current:
            for q, _ev in reduce_event(p):
                if _qualifies(q, wu, wv):
                    found.setdefault(q)
        tr.event_rounds.append(len(found))
        if not found:
            break
        current = sort_canonical(found)
    chosen = sort_canonical(current)[0]
    while chosen.n_blocks > 1:
        smaller = reduce_state(chosen, weakest)
        if not smaller:
            break
        chosen = smaller[0]
        tr.minimality_steps += 1
    return chosen


def gen_fusion(primaries: Sequence[Machine], f: int, ds: int = 0, de: int = 0, *,
               frontier_cap: int | None = None, limit: int = DEFAULT_STATE_LIMIT,
               prefix: str = "F") -> FusionSet:
    """Synthesize ``f`` backups so that primaries plus backups tolerate ``f`` crashes.

    ``ds``/``de`` are the number of state-merging and event-dropping rounds
    tried before the minimality loop. ``frontier_cap`` bounds the number of
    candidates kept between state rounds (``None`` keeps all of them).
    """
    if f < 0:
        raise ValueError("f must be non-negative")
    if ds < 0 or de < 0:
        raise ValueError("ds and de must be non-negative")
    t0 = time.perf_counter()
    idx = rcp(primaries, limit)
    prim = tuple(map_states(idx, m) for m in primaries)
    g = build(idx, prim)
    backups: list[Backup] = []
    trace = []
    for i in range(f):
        weakest = g.weakest_mask()
        tr = IterationTrace(i + 1, g.dmin(), g.weakest_edges())
        chosen = _search(idx, weakest, ds, de, frontier_cap, tr)
        b = _make_backup(chosen, f"{prefix}{i + 1}")
        tr.chosen_states = b.n_states
        tr.chosen_events = len(b.events)
        trace.append(tr)
        backups.append(b)
        g = g.with_machines([b.partition])
    fs = FusionSet(idx, tuple(primaries), prim, backups, f, ds, de, trace,
                   seconds=time.perf_counter() - t0)
    fs.verify()
    return fs


def inc_fusion(primaries: Sequence[Machine], f: int, ds: int = 0, de: int = 0, *,
               frontier_cap: int | None = None, limit: int = DEFAULT_STATE_LIMIT,
               prefix: str = "F") -> FusionSet:
    """Fuse one primary at a time with the product of the previous round's backups.

    The final backups are mapped onto the RCP of all primaries and verified
    there. The trace holds one ``FusionSet`` per round.
    """
    if f < 0:
        raise ValueError("f must be non-negative")
    if len(primaries) == 1 or f == 0:
        fs = gen_fusion(primaries, f, ds, de, frontier_cap=frontier_cap, limit=limit, prefix=prefix)
        fs.method = "incremental"
        return fs
    t0 = time.perf_counter()
    rounds = []
    previous: Machine = primaries[0]
    fs = None
    for i in range(1, len(primaries)):
        group = [previous, primaries[i]]
        fs = gen_fusion(group, f, ds, de, frontier_cap=frontier_cap, limit=limit, prefix=prefix)
        rounds.append(fs)
        if i + 1 < len(primaries):
            if fs.m == 1:
                previous = fs.machines[0]
            else:
                previous = rcp(fs.machines, limit, name=f"{prefix}_round{i}").rcp
            previous = _rename(previous, f"{prefix}_round{i}")
    idx = rcp(primaries, limit)
    prim = tuple(map_states(idx, m) for m in primaries)
    backups = []
    for b in fs.backups:
        p = map_states(idx, b.machine)
        backups.append(Backup(b.machine, p, acting_events(p)))
    out = FusionSet(idx, tuple(primaries), prim, backups, f, ds, de, rounds, "incremental",
                    time.perf_counter() - t0)
    out.verify()
    return out


def _rename(m: Machine, name: str) -> Machine:
    return Machine(name, m.states, m.events, m.initial, m.transitions)


# --------------------------------------------------------------------------
# event-based decomposition

def event_decompose_partitions(m: Machine, e: int) -> tuple[RcpIndex, list[BlockPartition]]:
    """Partitions of ``m``'s reachable states forming an event decomposition.

    Empty when some pair of states cannot be separated by any machine with
    ``e`` fewer events.
    """
    if e < 0:
        raise ValueError("e must be non-negative")
    idx = rcp([m])
    frontier = [identity_partition(idx, m.name)]
    for _ in range(e):
        found: dict[BlockPartition, None] = {}
        for p in frontier:
            for q, _ev in reduce_event(p):
                found.setdefault(q)
        frontier = sort_canonical(found)
    chosen: list[BlockPartition] = []
    for u in range(idx.N):
        for v in range(u + 1, idx.N):
            if any(p.separates(u, v) for p in chosen):
                continue
            pick = next((p for p in frontier if p.separates(u, v)), None)
            if pick is None:
                return idx, []
            chosen.append(pick)
    return idx, chosen


def event_decompose(m: Machine, e: int) -> list[Machine]:
    """Machines with at most ``|events| - e`` events that jointly determine ``m``'s state."""
    idx, parts = event_decompose_partitions(m, e)
    out = []
    for k, p in enumerate(parts):
        if p.n_blocks == idx.N and m.size == idx.N:
            out.append(m)
        else:
            out.append(partition_to_machine(p, f"{m.name}_E{k + 1}"))
    return out


# --------------------------------------------------------------------------
# machines outside the lattice

class ExternalCover:
    """States of an external machine that each RCP state can coexist with.

    The map from RCP states to external states need not be a function, so
    two RCP states count as separated only when their sets are disjoint.
    """

    def __init__(self, index: RcpIndex, name: str, states_of: Sequence[frozenset[str]]):
        self.index = index
        self.machine_name = name
        self.states_of = tuple(states_of)

    def separates(self, u: int, v: int) -> bool:
        return not (self.states_of[u] & self.states_of[v])

    def separation_matrix(self) -> np.ndarray:
        n = len(self.states_of)
        out = np.zeros((n, n), dtype=np.bool_)
        for u in range(n):
            for v in range(u + 1, n):
                out[u, v] = out[v, u] = self.separates(u, v)
        return out

    def ambiguities(self) -> list[tuple[int, tuple[str, ...]]]:
        """RCP states under which the external machine's state is not determined."""
        return [(r, tuple(sorted(s))) for r, s in enumerate(self.states_of) if len(s) > 1]

    def blocks(self) -> dict[str, frozenset[int]]:
        """RCP states each external state can coexist with."""
        out: dict[str, set[int]] = {}
        for r, ss in enumerate(self.states_of):
            for s in ss:
                out.setdefault(s, set()).add(r)
        return {s: frozenset(rs) for s, rs in out.items()}


@dataclass
class ExternalReport:
    index: RcpIndex
    covers: list[ExternalCover]
    f: int
    dmin: float

    @property
    def ok(self) -> bool:
        return self.dmin > self.f

    def ambiguities(self) -> list[tuple[str, int, tuple[str, ...]]]:
        return [(c.machine_name, r, ss) for c in self.covers for r, ss in c.ambiguities()]


def external_report(primaries: Sequence[Machine], externals: Sequence[Machine], f: int,
                    limit: int = DEFAULT_STATE_LIMIT) -> ExternalReport:
    names = {m.name for m in externals}
    rname = "R"
    while rname in names:
        rname = "_" + rname
    idx = rcp(primaries, limit, name=rname)
    joint = rcp([idx.rcp] + list(externals), limit, name="B")
    sets: list[list[set[str]]] = [[set() for _ in range(idx.N)] for _ in externals]
    for tup in joint.tuple_of:
        r = idx.rcp.state_index(tup[0])
        for k, s in enumerate(tup[1:]):
            sets[k][r].add(s)
    covers = [ExternalCover(idx, m.name, [frozenset(s) for s in sets[k]]) for k, m in enumerate(externals)]
    prim = [map_states(idx, m) for m in primaries]
    d = build(idx, prim + covers).dmin()
    return ExternalReport(idx, covers, f, d)


def check_external_backup(primaries: Sequence[Machine], externals: Sequence[Machine], f: int) -> bool:
    """True when primaries plus the external machines tolerate ``f`` crashes among the primaries."""
    return external_report(primaries, externals, f).ok
