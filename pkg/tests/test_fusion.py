import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import EXAMPLE, by_function, pr, random_system, rid
from fsmfusion import check_external_backup, event_decompose, gen_fusion, inc_fusion, load_machine, rcp
from fsmfusion.faultgraph import build
from fsmfusion.fusion import FusionError, _rename, event_decompose_partitions, external_report
from fsmfusion.partition import closed_partitions, leq
from fsmfusion.product import map_states


def shape(fs):
    return [(b.n_states, len(b.events)) for b in fs.backups]


def test_worked_example(fusion_abc):
    fs = fusion_abc
    assert shape(fs) == [(2, 1), (4, 3)]
    assert fs.dmin() == 3
    assert fs.dmin_primaries() == 1
    ix = fs.index
    f1, f2 = fs.partitions
    assert f1 == by_function(ix, lambda a, b, c: a ^ b ^ c)
    assert f2 == by_function(ix, lambda a, b, c: (a ^ b, a ^ c))
    assert f2.blocks[0] == {rid(ix, "a0b0c0"), rid(ix, "a1b1c1")}


def test_f_zero_is_empty(abc):
    fs = gen_fusion(abc, 0, 1, 1)
    assert fs.backups == [] and fs.dmin() == 1


def test_bad_arguments(abc):
    with pytest.raises(ValueError):
        gen_fusion(abc, -1)
    with pytest.raises(ValueError):
        gen_fusion(abc, 1, -1, 0)


def test_plain_minimality_search(abc):
    """With no reduction rounds the minimality loop alone still gives a valid fusion."""
    fs = gen_fusion(abc, 2)
    fs.verify()
    assert fs.dmin() == 3


def test_verify_rejects_weak_set(fusion_abc):
    import dataclasses
    weak = dataclasses.replace(fusion_abc, backups=fusion_abc.backups[:1])
    with pytest.raises(FusionError):
        weak.verify()


def check_minimal(fs):
    """No backup can be replaced by a strictly smaller machine covering the same weakest edges."""
    ix = fs.index
    lattice = closed_partitions(ix, cap=16)
    parts = list(fs.primary_partitions)
    for b in fs.backups:
        g = build(ix, parts)
        weak = g.weakest_edges()
        p = b.partition
        assert all(p.separates(u, v) for u, v in weak)
        for q in lattice:
            if q != p and leq(q, p):
                assert not all(q.separates(u, v) for u, v in weak), "a smaller backup exists"
        parts.append(p)


def test_example_is_minimal(fusion_abc):
    check_minimal(fusion_abc)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(0, 1), st.integers(0, 2))
def test_random_fusions_minimal_and_valid(seed, f, ds, de):
    prims = random_system(np.random.default_rng(seed), n=3, max_states=2, n_events=3)
    fs = gen_fusion(prims, f, ds, de)
    assert fs.dmin() > f
    assert fs.m + fs.dmin_primaries() > f
    for b in fs.backups:
        assert b.n_states <= fs.index.N
        assert b.events <= set(fs.index.sigma)
        assert map_states(fs.index, b.machine) == b.partition
    if fs.index.N <= 12:
        check_minimal(fs)


def test_incremental_example(abc):
    fs = inc_fusion(abc, 1)
    assert fs.method == "incremental"
    first, second = fs.trace
    assert first.index.N == 4
    (fp,) = first.backups
    assert fp.events == {0, 1}
    (fb,) = fs.backups
    assert fb.events == {1}
    assert fb.partition == by_function(fs.index, lambda a, b, c: a ^ b ^ c)
    assert fs.dmin() > 1


def test_incremental_single_primary(abc):
    a = inc_fusion(abc[:1], 1)
    b = gen_fusion(abc[:1], 1)
    assert shape(a) == shape(b)
    assert a.partitions[0].sort_key() == b.partitions[0].sort_key()


def test_incremental_random_systems():
    rng = np.random.default_rng(2024)
    for _ in range(20):
        prims = random_system(rng, n=3, max_states=3, n_events=3)
        f = int(rng.integers(1, 3))
        fs = inc_fusion(prims, f, 0, 1)
        fs.verify()
        ix = rcp(prims)
        full = build(ix, [map_states(ix, m) for m in prims + fs.machines])
        assert full.dmin() > f


def test_event_decompose_example():
    m = load_machine(EXAMPLE / "M.fsm")
    assert m.step("m0", 0) == "m3"
    out = event_decompose(m, 1)
    assert len(out) == 2
    assert all(len(x.events) == 3 for x in out)
    ix, parts = event_decompose_partitions(m, 1)
    for u, v in itertools.combinations(range(ix.N), 2):
        assert any(p.separates(u, v) for p in parts)


def test_event_decompose_zero(abc):
    m = load_machine(EXAMPLE / "M.fsm")
    assert event_decompose(m, 0) == [m]


def test_event_decompose_impossible(abc):
    # parity of one event cannot be tracked without that event
    assert event_decompose(abc[2], 1) == []
    with pytest.raises(ValueError):
        event_decompose(abc[2], -1)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 2))
def test_event_decompose_properties(seed, e):
    from conftest import random_machine
    rng = np.random.default_rng(seed)
    m = random_machine(rng, "X", int(rng.integers(2, 6)), [0, 1, 2, 3])
    ix, parts = event_decompose_partitions(m, e)
    if not parts:
        return
    assert len(parts) <= ix.N ** 2
    for p in parts:
        assert p.is_closed()
    for u, v in itertools.combinations(range(ix.N), 2):
        assert any(p.separates(u, v) for p in parts)
    for x in event_decompose(m, e):
        assert len(x.events) <= len(m.events) - e


def test_external_backup(abc):
    g = load_machine(EXAMPLE / "G.fsm")
    assert check_external_backup(abc, [g], 1)
    rep = external_report(abc, [g], 1)
    assert rep.dmin == 2
    ix = rep.index
    r0, r2 = pr(ix, 0), pr(ix, 2)
    amb = {(name, r): states for name, r, states in rep.ambiguities()}
    assert amb == {("G", r0): ("g0", "g4"), ("G", r2): ("g0", "g4")}
    # G's own faults cannot be repaired from {A, B, C}
    assert not check_external_backup([g], abc, 1)


@pytest.mark.parametrize("f", [1, 2, 3])
def test_copies_of_rcp_are_backups(abc, f):
    r = rcp(abc).rcp
    copies = [_rename(r, f"R{i}") for i in range(f)]
    assert check_external_backup(abc, copies, f)
