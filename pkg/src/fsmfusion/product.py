"""Reachable cross product (RCP) of a set of machines and partitions of it.

RCP states are plain integers ``0..N-1`` numbered in breadth-first discovery
order (events tried in ascending id), so everything derived from an index is
reproducible. A machine below the RCP is represented by the partition of these
integers that its states induce (:class:`BlockPartition`).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .machine import Machine, MachineError

DEFAULT_STATE_LIMIT = 10**6


class CapacityError(RuntimeError):
    """The reachable product grew past the configured state limit."""


class InconsistentMachineError(ValueError):
    """A machine is not below the RCP it was mapped onto."""


@dataclass(frozen=True, eq=False)
class RcpIndex:
    rcp: Machine
    order: tuple[str, ...]
    primaries: tuple[Machine, ...] = field(repr=False)
    tuple_of: tuple[tuple[str, ...], ...] = field(repr=False)
    state_of: dict = field(repr=False)
    table: np.ndarray = field(repr=False)

    @property
    def N(self) -> int:
        return len(self.tuple_of)

    @property
    def n(self) -> int:
        return len(self.order)

    @property
    def sigma(self) -> tuple[int, ...]:
        return self.rcp.events

    def name_of(self, r: int) -> str:
        return self.rcp.states[r]

    def label(self, r: int) -> str:
        return ".".join(self.tuple_of[r])

    @cached_property
    def coords(self) -> np.ndarray:
        """``N x n`` array of primary state indices for every RCP state."""
        out = np.empty((self.N, self.n), dtype=np.int64)
        for r, tup in enumerate(self.tuple_of):
            for i, (m, s) in enumerate(zip(self.primaries, tup)):
                out[r, i] = m.state_index(s)
        return out


def rcp(primaries: Sequence[Machine], limit: int = DEFAULT_STATE_LIMIT, name: str = "R") -> RcpIndex:
    """Breadth-first reachable cross product of ``primaries``."""
    if not primaries:
        raise ValueError("need at least one machine")
    names = [m.name for m in primaries]
    if len(set(names)) != len(names):
        raise ValueError(f"machine names must be unique: {names}")
    sigma = tuple(sorted(set().union(*(m.events for m in primaries))))
    start = tuple(m.initial for m in primaries)
    state_of = {start: 0}
    tuples = [start]
    rows: list[list[int]] = []
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        row = []
        for e in sigma:
            nxt = tuple(m.transitions.get((s, e), s) for m, s in zip(primaries, cur))
            idx = state_of.get(nxt)
            if idx is None:
                if len(tuples) >= limit:
                    raise CapacityError(f"RCP exceeds {limit} states")
                idx = len(tuples)
                state_of[nxt] = idx
                tuples.append(nxt)
                queue.append(nxt)
            row.append(idx)
        rows.append(row)
    N = len(tuples)
    table = np.array(rows, dtype=np.int64).reshape(N, len(sigma))
    table.setflags(write=False)
    states = tuple(f"r{i}" for i in range(N))
    trans = {(states[r], e): states[table[r, k]] for r in range(N) for k, e in enumerate(sigma)}
    machine = Machine(name, states, sigma, states[0], trans)
    return RcpIndex(machine, tuple(names), tuple(primaries), tuple(tuples), state_of, table)


def project(idx: RcpIndex, r: int) -> tuple[str, ...]:
    if not 0 <= r < idx.N:
        raise KeyError(f"unknown RCP state {r}")
    return idx.tuple_of[r]


def canonical_labels(labels) -> np.ndarray:
    """Renumber blocks in order of their smallest member."""
    labels = np.asarray(labels)
    _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first)] = np.arange(len(first))
    return rank[inv.reshape(-1)]


class BlockPartition:
    """A partition of RCP states, i.e. a machine at or below the RCP.

    Equality and hashing look only at the blocks, never at the name.
    """

    def __init__(self, index: RcpIndex, labels, machine_name: str = "", canonical: bool = False,
                 block_names: Sequence[str] | None = None):
        lab = np.asarray(labels, dtype=np.int64)
        if lab.shape != (index.N,):
            raise ValueError(f"expected {index.N} labels, got shape {lab.shape}")
        if not canonical:
            lab = canonical_labels(lab)
        lab.setflags(write=False)
        self.index = index
        self.machine_name = machine_name
        self._labels = lab
        self._key = lab.tobytes()
        self._hash = hash(self._key)
        # names of the machine states behind each block, when known
        self.block_names = tuple(block_names) if block_names is not None else None

    def state_name(self, b: int) -> str:
        if self.block_names is not None:
            return self.block_names[b]
        prefix = (self.machine_name or "p").lower()
        return f"{prefix}_{b}"

    def block_by_name(self, name: str) -> int:
        for b in range(self.n_blocks):
            if self.state_name(b) == name:
                return b
        raise KeyError(f"{self.machine_name}: no state named {name!r}")

    @property
    def block_of(self) -> np.ndarray:
        return self._labels

    @property
    def n_blocks(self) -> int:
        return int(self._labels.max()) + 1 if len(self._labels) else 0

    @cached_property
    def blocks(self) -> list[frozenset[int]]:
        out: list[list[int]] = [[] for _ in range(self.n_blocks)]
        for r, b in enumerate(self._labels):
            out[b].append(r)
        return [frozenset(b) for b in out]

    def sort_key(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(sorted(b)) for b in self.blocks)

    def renamed(self, name: str) -> "BlockPartition":
        return BlockPartition(self.index, self._labels, name, canonical=True, block_names=self.block_names)

    def separates(self, u: int, v: int) -> bool:
        return bool(self._labels[u] != self._labels[v])

    def separation_matrix(self) -> np.ndarray:
        lab = self._labels
        return lab[:, None] != lab[None, :]

    def quotient_table(self) -> np.ndarray:
        """Transition table of the machine this partition describes."""
        lab = self._labels
        k = self.n_blocks
        reps = np.zeros(k, dtype=np.int64)
        reps[lab[::-1]] = np.arange(len(lab))[::-1]
        return lab[self.index.table[reps]]

    def is_closed(self) -> bool:
        lab = self._labels
        img = lab[self.index.table]
        reps = np.zeros(self.n_blocks, dtype=np.int64)
        reps[lab[::-1]] = np.arange(len(lab))[::-1]
        return bool(np.all(img == img[reps][lab]))

    def __eq__(self, other):
        if not isinstance(other, BlockPartition):
            return NotImplemented
        return self.index is other.index and self._key == other._key

    def __hash__(self):
        return self._hash

    def __repr__(self):
        name = f"{self.machine_name}: " if self.machine_name else ""
        return f"BlockPartition({name}{self.n_blocks} blocks of {len(self._labels)})"


def map_states(idx: RcpIndex, m: Machine) -> BlockPartition:
    """Partition of RCP states induced by a machine that is below the RCP.

    Co-traverses the RCP and ``m`` breadth-first from their initial states; a
    RCP state paired with two different states of ``m`` means ``m`` is not
    determined by the RCP state.
    """
    pos = {s: i for i, s in enumerate(m.states)}
    sigma = idx.sigma
    paired = np.full(idx.N, -1, dtype=np.int64)
    paired[0] = pos[m.initial]
    queue = deque([0])
    while queue:
        r = queue.popleft()
        s = m.states[paired[r]]
        for k, e in enumerate(sigma):
            r2 = idx.table[r, k]
            s2 = pos[m.transitions.get((s, e), s)]
            if paired[r2] < 0:
                paired[r2] = s2
                queue.append(r2)
            elif paired[r2] != s2:
                raise InconsistentMachineError(
                    f"{m.name} is not below the RCP: {idx.name_of(r2)} pairs with "
                    f"{m.states[paired[r2]]} and {m.states[s2]}")
    lab = canonical_labels(paired)
    names = [""] * (int(lab.max()) + 1)
    for r in range(idx.N - 1, -1, -1):
        names[lab[r]] = m.states[paired[r]]
    return BlockPartition(idx, lab, m.name, canonical=True, block_names=names)


def partition_to_machine(p: BlockPartition, name: str, state_prefix: str | None = None) -> Machine:
    """The machine a closed partition stands for.

    States are ``<prefix>_<block>`` with blocks in canonical order; only
    events that move some block are kept (the rest are self-loops anyway).
    """
    prefix = state_prefix if state_prefix is not None else name.lower()
    q = p.quotient_table()
    sigma = p.index.sigma
    states = tuple(f"{prefix}_{b}" for b in range(p.n_blocks))
    acting = [k for k in range(len(sigma)) if np.any(q[:, k] != np.arange(p.n_blocks))]
    trans = {(states[b], sigma[k]): states[q[b, k]] for b in range(p.n_blocks) for k in acting}
    init = states[p.block_of[0]]
    return Machine(name, states, tuple(sigma[k] for k in acting), init, trans)


def partition_from_blocks(idx: RcpIndex, blocks: Iterable[Iterable[int]], name: str = "") -> BlockPartition:
    lab = np.full(idx.N, -1, dtype=np.int64)
    for b, members in enumerate(blocks):
        for r in members:
            if lab[r] >= 0:
                raise ValueError(f"state {r} appears in two blocks")
            lab[r] = b
    if np.any(lab < 0):
        raise ValueError("blocks do not cover every RCP state")
    return BlockPartition(idx, lab, name)


def identity_partition(idx: RcpIndex, name: str = "RCP") -> BlockPartition:
    return BlockPartition(idx, np.arange(idx.N), name, canonical=True)


def bottom_partition(idx: RcpIndex, name: str = "R_bot") -> BlockPartition:
    return BlockPartition(idx, np.zeros(idx.N, dtype=np.int64), name, canonical=True)


__all__ = [
    "BlockPartition", "CapacityError", "InconsistentMachineError", "MachineError", "RcpIndex",
    "bottom_partition", "canonical_labels", "identity_partition", "map_states",
    "partition_from_blocks", "partition_to_machine", "project", "rcp",
]
