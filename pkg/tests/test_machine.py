import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import DATA, random_machine
from fsmfusion.machine import (MachineError, expand_pattern, format_fsm_text, load_machine,
                               parse_fsm_text, parse_kiss2)


def test_parse_machine_a(abc):
    a = abc[0]
    assert a.states == ("a0", "a1")
    assert a.events == (0, 2)
    assert a.initial == "a0"
    assert a.step("a0", 0) == "a1" and a.step("a1", 2) == "a0"


def test_single_state_without_events():
    m = parse_fsm_text("machine Z\nstates z0\nevents\ninitial z0\n")
    assert m.size == 1 and m.events == ()
    assert m.run([0, 1, 2]) == "z0"


def test_round_trip_random_machines():
    rng = np.random.default_rng(11)
    for i in range(50):
        n_ev = int(rng.integers(0, 5))
        events = sorted(rng.choice(8, size=n_ev, replace=False).tolist())
        m = random_machine(rng, f"M{i}", int(rng.integers(1, 7)), events)
        text = format_fsm_text(m)
        back = parse_fsm_text(text)
        assert back == m
        assert format_fsm_text(back) == text


@pytest.mark.parametrize("name,states,events", [
    ("dk15", 4, 8), ("bbara", 10, 16), ("mc", 4, 8), ("lion", 4, 4), ("bbtas", 6, 4),
    ("modulo12", 12, 2), ("shiftreg", 8, 2), ("tav", 4, 16), ("beecount", 7, 8),
])
def test_benchmark_sizes(name, states, events):
    m = load_machine(DATA / "mcnc" / f"{name}.kiss2")
    assert (m.size, len(m.events)) == (states, events)


def test_kiss2_dont_care_expansion():
    m = parse_kiss2(".i 3\n.o 1\n.r s0\n--1 s0 s1 0\n")
    assert sorted(e for (s, e) in m.transitions if s == "s0" and m.transitions[(s, e)] == "s1") == [1, 3, 5, 7]
    assert expand_pattern("--1") == [1, 3, 5, 7]


def test_kiss2_unspecified_pairs_self_loop():
    m = parse_kiss2(".i 1\n.o 1\n.r s0\n0 s0 s1 0\n1 s1 s0 0\n")
    assert m.step("s0", 1) == "s0"
    assert set(m.unspecified) == {("s0", 1), ("s1", 0)}


def test_kiss2_conflicting_rows_rejected():
    with pytest.raises(MachineError):
        parse_kiss2(".i 1\n.o 1\n0 s0 s1 0\n- s0 s0 0\n")


def test_step_examples(abc):
    a, b, c = abc
    assert a.step("a0", 0) == "a1"
    assert a.step("a0", 1) == "a0"
    assert c.step("c0", 0) == "c1"
    with pytest.raises(MachineError):
        a.step("zz", 0)


def test_run_examples(abc, fusion_abc):
    a, b, c = abc
    assert a.run([0, 2, 1]) == "a0"
    assert (b.run([0, 2, 1]), c.run([0, 2, 1])) == ("b0", "c1")
    for m in abc:
        assert m.run([]) == m.initial
    f1 = fusion_abc.machines[0]
    assert f1.run([0, 0, 1, 2]) == "f1_1"


@pytest.mark.parametrize("text", [
    "states a\ninitial a\n",
    "machine X\nstates a\ninitial b\n",
    "machine X\nstates a b\nevents 0\ninitial a\ntrans a 0 b\n",
    "machine X\nstates a\nevents 0\ninitial a\ntrans a 0 a\ntrans a 0 q\n",
    "machine X\nstates a a\ninitial a\n",
    "machine X\nstates a\nevents 0\ninitial a\nbogus\n",
])
def test_malformed_rejected(text):
    with pytest.raises(MachineError):
        parse_fsm_text(text)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.lists(st.integers(0, 6), max_size=4, unique=True),
       st.lists(st.integers(0, 8), max_size=12), st.integers(0, 2**32 - 1))
def test_run_is_fold_of_step(n, events, seq, seed):
    m = random_machine(np.random.default_rng(seed), "H", n, sorted(events))
    state = m.initial
    for e in seq:
        state = m.step(state, e)
    assert m.run(seq) == state
    # events outside the alphabet never move the machine
    for s in m.states:
        assert m.step(s, 99) == s
