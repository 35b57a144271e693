"""Deterministic finite state machines, their execution, and file formats.

Two text formats are understood:

* the native line format::

      machine A
      states a0 a1
      events 0 2
      initial a0
      trans a0 0 a1
      ...

* KISS2 (the MCNC/LGSynth benchmark format). Input bit-vectors become
  integer event ids (MSB first), ``-`` bits expand to every matching id and
  outputs are dropped.

A machine acts on its own event set only; any other event id leaves the state
unchanged.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)


class MachineError(ValueError):
    """Raised for malformed machine definitions or files."""


@dataclass(frozen=True, eq=False)
class Machine:
    name: str
    states: tuple[str, ...]
    events: tuple[int, ...]
    initial: str
    transitions: Mapping[tuple[str, int], str] = field(repr=False)
    # filled by the KISS2 parser when (state, input) pairs were left unspecified
    unspecified: tuple[tuple[str, int], ...] = field(default=(), repr=False)

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "events", tuple(sorted(self.events)))
        object.__setattr__(self, "transitions", dict(self.transitions))
        if len(set(self.states)) != len(self.states):
            raise MachineError(f"{self.name}: duplicate state ids")
        if len(set(self.events)) != len(self.events):
            raise MachineError(f"{self.name}: duplicate event ids")
        if any((not isinstance(e, (int, np.integer))) or e < 0 for e in self.events):
            raise MachineError(f"{self.name}: event ids must be non-negative integers")
        if not self.states:
            raise MachineError(f"{self.name}: no states")
        if self.initial not in self._state_pos:
            raise MachineError(f"{self.name}: initial state {self.initial!r} not declared")
        for (s, e), t in self.transitions.items():
            if s not in self._state_pos or t not in self._state_pos:
                raise MachineError(f"{self.name}: transition {s} --{e}--> {t} uses an undeclared state")
            if e not in self._event_pos:
                raise MachineError(f"{self.name}: transition on undeclared event {e}")
        for s in self.states:
            for e in self.events:
                if (s, e) not in self.transitions:
                    raise MachineError(f"{self.name}: no transition for ({s}, {e})")

    @cached_property
    def _state_pos(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.states)}

    @cached_property
    def _event_pos(self) -> dict[int, int]:
        return {e: i for i, e in enumerate(self.events)}

    @property
    def size(self) -> int:
        return len(self.states)

    def state_index(self, state: str) -> int:
        try:
            return self._state_pos[state]
        except KeyError:
            raise MachineError(f"{self.name}: unknown state {state!r}") from None

    @cached_property
    def table(self) -> np.ndarray:
        """Transition table as an int array, rows = states, columns = ``events``."""
        tab = np.empty((len(self.states), len(self.events)), dtype=np.int64)
        for (s, e), t in self.transitions.items():
            tab[self._state_pos[s], self._event_pos[e]] = self._state_pos[t]
        return tab

    def step(self, state: str, event: int) -> str:
        if state not in self._state_pos:
            raise MachineError(f"{self.name}: unknown state {state!r}")
        return self.transitions.get((state, event), state)

    def run(self, events: Iterable[int], start: str | None = None) -> str:
        state = self.initial if start is None else start
        for e in events:
            state = self.step(state, e)
        return state

    def __eq__(self, other):
        if not isinstance(other, Machine):
            return NotImplemented
        return (self.name, self.states, self.events, self.initial, self.transitions) == (
            other.name, other.states, other.events, other.initial, other.transitions)

    def __hash__(self):
        return hash((self.name, self.states, self.events, self.initial))


def step(m: Machine, state: str, event: int) -> str:
    return m.step(state, event)


def run(m: Machine, events: Iterable[int]) -> str:
    return m.run(events)


def max_states(machines: Sequence[Machine]) -> int:
    return max(m.size for m in machines)


# --------------------------------------------------------------------------
# native format

def _strip(line: str) -> str:
    return line.split("#", 1)[0].strip()


def parse_fsm_text(text: str, event_ids: dict[str, int] | None = None) -> Machine:
    """Parse the native line format.

    Integer event tokens are used as ids directly. Symbolic tokens get ids in
    first-occurrence order, continuing after the largest id already present in
    ``event_ids`` (pass the same dict to several calls to share one alphabet).
    """
    if event_ids is None:
        event_ids = {}

    def ev(tok: str) -> int:
        if tok.isdigit():
            return int(tok)
        if tok not in event_ids:
            event_ids[tok] = max(event_ids.values(), default=-1) + 1
        return event_ids[tok]

    name = None
    states: list[str] | None = None
    events: list[int] | None = None
    initial = None
    trans: dict[tuple[str, int], str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip(raw)
        if not line:
            continue
        key, *rest = line.split()
        if key == "machine":
            if len(rest) != 1:
                raise MachineError(f"line {lineno}: expected 'machine <name>'")
            name = rest[0]
        elif key == "states":
            states = (states or []) + rest
        elif key == "events":
            events = (events or []) + [ev(t) for t in rest]
        elif key == "initial":
            if len(rest) != 1:
                raise MachineError(f"line {lineno}: expected 'initial <state>'")
            initial = rest[0]
        elif key == "trans":
            if len(rest) != 3:
                raise MachineError(f"line {lineno}: expected 'trans <state> <event> <state>'")
            s, e, t = rest[0], ev(rest[1]), rest[2]
            if (s, e) in trans and trans[(s, e)] != t:
                raise MachineError(f"line {lineno}: conflicting transition for ({s}, {e})")
            trans[(s, e)] = t
        else:
            raise MachineError(f"line {lineno}: unknown directive {key!r}")
    if name is None:
        raise MachineError("missing 'machine' line")
    if states is None:
        raise MachineError(f"{name}: missing 'states' line")
    if initial is None:
        raise MachineError(f"{name}: missing 'initial' line")
    return Machine(name, tuple(states), tuple(events or ()), initial, trans)


def format_fsm_text(m: Machine, comments: Mapping[str, str] | None = None) -> str:
    """Serialize to the canonical native form (parse(format(m)) == m)."""
    out = [f"machine {m.name}", "states " + " ".join(m.states)]
    if comments:
        for s in m.states:
            if s in comments:
                out.append(f"# {s} = {comments[s]}")
    out.append("events " + " ".join(str(e) for e in m.events) if m.events else "events")
    out.append(f"initial {m.initial}")
    for s in m.states:
        for e in m.events:
            out.append(f"trans {s} {e} {m.transitions[(s, e)]}")
    return "\n".join(out) + "\n"


def load_machine(path) -> Machine:
    """Load a native (``.fsm``) or KISS2 (``.kiss2``/``.kiss``) file."""
    from pathlib import Path

    p = Path(path)
    text = p.read_text(encoding="utf-8")
    if p.suffix in (".kiss2", ".kiss") or text.lstrip().startswith("."):
        return parse_kiss2(text, name=p.stem)
    return parse_fsm_text(text)


# --------------------------------------------------------------------------
# KISS2

def expand_pattern(bits: str) -> list[int]:
    """All integers (MSB first) matching a pattern over {0, 1, -}."""
    if any(c not in "01-" for c in bits):
        raise MachineError(f"bad input pattern {bits!r}")
    choices = [("0", "1") if c == "-" else (c,) for c in bits]
    return sorted(int("".join(p), 2) for p in itertools.product(*choices)) if bits else [0]


def parse_kiss2(text: str, name: str = "kiss2") -> Machine:
    """Parse a KISS2 benchmark description.

    Pairs (state, input) that no line covers become self-loops; they are
    listed in ``Machine.unspecified`` and logged so such files can be flagged.
    """
    n_in = None
    reset = None
    rows: list[tuple[str, str, str, int]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip(raw)
        if not line:
            continue
        if line.startswith("."):
            key, *rest = line.split()
            if key == ".i":
                n_in = int(rest[0])
            elif key == ".r":
                reset = rest[0]
            elif key in (".o", ".s", ".p", ".e", ".end", ".model", ".ilb", ".ob", ".start_kiss", ".end_kiss"):
                pass
            else:
                log.debug("ignoring KISS2 directive %s", key)
            continue
        parts = line.split()
        if len(parts) < 3:
            raise MachineError(f"line {lineno}: expected '<inbits> <cur> <next> [<outbits>]'")
        rows.append((parts[0], parts[1], parts[2], lineno))
    if n_in is None:
        raise MachineError("missing .i header")
    if not rows and reset is None:
        raise MachineError("no transitions")

    states: list[str] = []
    seen = set()

    def add(s):
        if s not in seen:
            seen.add(s)
            states.append(s)

    trans: dict[tuple[str, int], str] = {}
    for bits, cur, nxt, lineno in rows:
        if len(bits) != n_in:
            raise MachineError(f"line {lineno}: input width {len(bits)} != .i {n_in}")
        add(cur)
        if nxt in ("*", "ANY"):
            raise MachineError(f"line {lineno}: unspecified next state {nxt!r} is not supported")
        add(nxt)
        for e in expand_pattern(bits):
            old = trans.get((cur, e))
            if old is not None and old != nxt:
                raise MachineError(f"line {lineno}: conflicting transition for ({cur}, {e}): {old} vs {nxt}")
            trans[(cur, e)] = nxt
    if reset is not None:
        add(reset)
    initial = reset if reset is not None else rows[0][1]
    events = tuple(range(2 ** n_in))
    missing = []
    for s in states:
        for e in events:
            if (s, e) not in trans:
                trans[(s, e)] = s
                missing.append((s, e))
    if missing:
        log.warning("%s: %d unspecified (state, input) pairs completed as self-loops", name, len(missing))
    return Machine(name, tuple(states), events, initial, trans, unspecified=tuple(missing))
