from pathlib import Path

import numpy as np
import pytest

from fsmfusion import gen_fusion, load_machine, rcp
from fsmfusion.machine import Machine
from fsmfusion.product import BlockPartition, canonical_labels, map_states

DATA = Path(__file__).resolve().parents[1] / "src" / "fsmfusion" / "data"
EXAMPLE = DATA / "example"

# the worked example numbers RCP states differently from our BFS order
EXAMPLE_R = ["a0b0c0", "a0b1c0", "a1b0c1", "a1b1c1", "a1b1c0", "a0b1c1", "a0b0c1", "a1b0c0"]


def bits(tup):
    return tuple(int(s[1:]) for s in tup)


def rid(idx, label):
    """RCP id of a tuple written like 'a0b1c0'."""
    return idx.state_of[(label[0:2], label[2:4], label[4:6])]


def pr(idx, k):
    """RCP id of the example's r<k>."""
    return rid(idx, EXAMPLE_R[k])


def by_function(idx, fn, name=""):
    keys = [fn(*bits(idx.tuple_of[r])) for r in range(idx.N)]
    ids = {}
    labels = [ids.setdefault(k, len(ids)) for k in keys]
    return BlockPartition(idx, canonical_labels(labels), name, canonical=True)


@pytest.fixture(scope="session")
def abc():
    return [load_machine(EXAMPLE / f"{x}.fsm") for x in "ABC"]


@pytest.fixture(scope="session")
def idx(abc):
    return rcp(abc)


@pytest.fixture(scope="session")
def parts(idx, abc):
    """Named partitions of the example lattice."""
    A, B, C = (map_states(idx, m) for m in abc)
    return {
        "A": A, "B": B, "C": C,
        "F1": by_function(idx, lambda a, b, c: a ^ b ^ c, "F1"),
        "F2": by_function(idx, lambda a, b, c: (a ^ b, a ^ c), "F2"),
        "M1": by_function(idx, lambda a, b, c: (c, a ^ b ^ c), "M1"),
        "M2": by_function(idx, lambda a, b, c: (b, a ^ c), "M2"),
        "ac": by_function(idx, lambda a, b, c: a ^ c),
        "ab": by_function(idx, lambda a, b, c: a ^ b),
        "R": BlockPartition(idx, np.arange(idx.N), "R", canonical=True),
        "bot": BlockPartition(idx, np.zeros(idx.N, dtype=np.int64), "R_bot", canonical=True),
    }


@pytest.fixture(scope="session")
def fusion_abc(abc):
    return gen_fusion(abc, 2, 1, 1)


def random_machine(rng, name, n_states, events, prefix=None):
    prefix = prefix or name.lower()
    states = [f"{prefix}{i}" for i in range(n_states)]
    trans = {(s, e): states[int(rng.integers(n_states))] for s in states for e in events}
    return Machine(name, states, list(events), states[0], trans)


def random_system(rng, n=3, max_states=3, n_events=3):
    """Random primaries over a shared alphabet, each using a random non-empty subset."""
    out = []
    for i in range(n):
        k = int(rng.integers(1, n_events + 1))
        ev = sorted(rng.choice(n_events, size=k, replace=False).tolist())
        out.append(random_machine(rng, f"P{i}", int(rng.integers(2, max_states + 1)), ev, f"p{i}_"))
    return out


# one line per acceptance criterion, printed after the run
ACCEPTANCE: list[str] = []


def record(n, ok, seconds, detail=""):
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} ({seconds:.2f}s) {detail}".rstrip()
    ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
