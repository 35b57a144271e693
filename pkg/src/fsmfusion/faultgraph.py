"""Fault graphs over RCP states and the correctability predicates.

The weight of an edge (u, v) counts the machines that put u and v in
different blocks. With minimum weight ``d`` a set of machines tolerates
``d - 1`` crashes, or ``(d - 1) // 2`` liars.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .product import RcpIndex

__all__ = ["FaultGraph", "build", "can_correct_byz", "can_correct_crash", "covers", "dmin", "weakest_edges"]


@dataclass(frozen=True, eq=False)
class FaultGraph:
    index: RcpIndex
    # symmetric, diagonal unused
    weights: np.ndarray = field(repr=False)
    machine_set: tuple[str, ...] = ()

    @property
    def nodes(self) -> range:
        return range(self.weights.shape[0])

    def weight(self, u: int, v: int) -> int:
        if u == v:
            raise ValueError("fault graphs have no self edges")
        return int(self.weights[u, v])

    def dmin(self) -> float:
        n = self.weights.shape[0]
        if n < 2:
            return math.inf
        iu = np.triu_indices(n, 1)
        return int(self.weights[iu].min())

    def weakest_mask(self) -> np.ndarray:
        """Upper-triangular boolean mask of the edges achieving dmin."""
        n = self.weights.shape[0]
        mask = np.zeros((n, n), dtype=np.bool_)
        if n < 2:
            return mask
        d = self.dmin()
        mask[np.triu_indices(n, 1)] = self.weights[np.triu_indices(n, 1)] == d
        return mask

    def weakest_edges(self) -> list[tuple[int, int]]:
        u, v = np.nonzero(self.weakest_mask())
        return list(zip(u.tolist(), v.tolist()))

    def with_machines(self, machines: Iterable) -> "FaultGraph":
        """A new graph with the given machines' separations added."""
        w = self.weights.copy()
        names = list(self.machine_set)
        for m in machines:
            _check(self.index, m)
            w += m.separation_matrix()
            names.append(_name(m))
        w.setflags(write=False)
        return FaultGraph(self.index, w, tuple(names))


def _name(m) -> str:
    return getattr(m, "machine_name", None) or getattr(m, "name", "") or "?"


def _check(idx: RcpIndex, m):
    other = getattr(m, "index", idx)
    if other is not idx:
        raise ValueError(f"{_name(m)} is a partition of a different RCP")
    if m.separation_matrix().shape != (idx.N, idx.N):
        raise ValueError(f"{_name(m)}: separation matrix does not match the RCP size")


def build(idx: RcpIndex, machines: Iterable) -> FaultGraph:
    """Fault graph of ``machines`` over the RCP states of ``idx``.

    Anything exposing ``separation_matrix()`` over ``idx`` is accepted, which
    covers both closed partitions and external-machine covers.
    """
    empty = np.zeros((idx.N, idx.N), dtype=np.int32)
    return FaultGraph(idx, empty).with_machines(machines)


def dmin(g: FaultGraph) -> float:
    """Minimum edge weight; ``math.inf`` for a single-node graph."""
    return g.dmin()


def weakest_edges(g: FaultGraph) -> list[tuple[int, int]]:
    return g.weakest_edges()


def covers(p, e: tuple[int, int]) -> bool:
    u, v = e
    return bool(p.separates(u, v))


def can_correct_crash(g: FaultGraph, f: int) -> bool:
    if f < 0:
        raise ValueError("f must be non-negative")
    return g.dmin() > f


def can_correct_byz(g: FaultGraph, f: int) -> bool:
    if f < 0:
        raise ValueError("f must be non-negative")
    return g.dmin() > 2 * f
