"""Deterministic fault-injection simulator.

One client feeds a single ordered event stream to every primary and backup.
Faults are injected at given positions of the stream. At each fault point
the recovery agent collects the states it needs, detects or corrects the
fault, and the outcome is compared against a separately tracked ground
truth.

Scenario files are line oriented (``#`` starts a comment)::

    primary A.fsm            # paths are relative to the scenario file
    backup F1.fsm            # explicit backup machine, or
    replica A                # a copy of a primary used as a backup, or
    auto-fuse 2 [ds de]      # synthesize backups
    budget 2                 # faults to tolerate (default: dmin - 1)
    events 0 0 1 2           # explicit stream, and/or
    random-events 100        # seeded random events over the union alphabet
    seed 7
    fault 4 B crash          # after 4 events, B loses its state
    fault 9 F1 byzantine f1_0
    detect-interval 5        # periodic liar checks every 5 events
    lsh 2 8 0.1              # k L delta (L may be 'auto')
"""

from __future__ import annotations

import shlex
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .faultgraph import build
from .fusion import gen_fusion
from .machine import Machine, load_machine
from .product import map_states, rcp
from .recovery import RecoveryError, build_index, correct_byz, correct_crash, detect_byz

__all__ = [
    "Audit", "Episode", "Fault", "ScenarioConfig", "ScenarioError", "SimReport", "load_scenario",
    "message_audit", "parse_scenario", "run_scenario",
]


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Fault:
    time: int
    machine: str
    kind: str
    lie: str | None = None


@dataclass
class ScenarioConfig:
    primaries: list[Machine]
    backups: list[Machine] = field(default_factory=list)
    auto_fuse: tuple[int, int, int] | None = None
    budget: int | None = None
    events: list[int] = field(default_factory=list)
    random_events: int = 0
    seed: int = 0
    faults: list[Fault] = field(default_factory=list)
    detect_interval: int = 0
    lsh_k: int | None = None
    lsh_L: int | None = None
    lsh_delta: float = 0.1


def parse_scenario(text: str, base: Path | str = ".") -> ScenarioConfig:
    base = Path(base)
    cfg = ScenarioConfig(primaries=[])
    replicas: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *rest = shlex.split(line)
        try:
            if key == "primary":
                cfg.primaries.extend(load_machine(base / p) for p in rest)
            elif key == "backup":
                cfg.backups.extend(load_machine(base / p) for p in rest)
            elif key == "replica":
                replicas.extend(rest)
            elif key == "auto-fuse":
                vals = [int(x) for x in rest] + [0, 0]
                cfg.auto_fuse = (vals[0], vals[1], vals[2])
            elif key == "budget":
                cfg.budget = int(rest[0])
            elif key == "events":
                cfg.events.extend(int(x) for x in rest)
            elif key == "random-events":
                cfg.random_events = int(rest[0])
            elif key == "seed":
                cfg.seed = int(rest[0])
            elif key == "fault":
                if len(rest) not in (3, 4) or rest[2] not in ("crash", "byzantine"):
                    raise ScenarioError("expected 'fault <time> <machine> crash|byzantine [lie-state]'")
                cfg.faults.append(Fault(int(rest[0]), rest[1], rest[2], rest[3] if len(rest) == 4 else None))
            elif key == "detect-interval":
                cfg.detect_interval = int(rest[0])
            elif key == "lsh":
                cfg.lsh_k = int(rest[0])
                cfg.lsh_L = None if rest[1] == "auto" else int(rest[1])
                if len(rest) > 2:
                    cfg.lsh_delta = float(rest[2])
            else:
                raise ScenarioError(f"unknown directive {key!r}")
        except (IndexError, ValueError) as exc:
            raise ScenarioError(f"line {lineno}: {exc}") from exc
    by_name = {m.name: m for m in cfg.primaries}
    for name in replicas:
        if name not in by_name:
            raise ScenarioError(f"replica of unknown primary {name!r}")
        m = by_name[name]
        cfg.backups.append(Machine(f"{name}_rep", m.states, m.events, m.initial, m.transitions))
    if not cfg.primaries:
        raise ScenarioError("no primaries")
    return cfg


def load_scenario(path) -> ScenarioConfig:
    p = Path(path)
    return parse_scenario(p.read_text(encoding="utf-8"), p.parent)


@dataclass
class Episode:
    time: int
    kind: str               # crash | byzantine | detect
    faulty: tuple[str, ...]
    verdict: str            # recovered | detected | clean | unrecoverable | wrong | missed
    recovered: tuple[str, ...] | None
    truth: tuple[str, ...]
    within_budget: bool
    detection_messages: int = 0
    correction_messages: int = 0
    fallback: bool = False
    note: str = ""

    @property
    def ok(self) -> bool:
        if self.within_budget:
            return self.verdict in ("recovered", "clean", "detected")
        return True


@dataclass
class SimReport:
    n: int
    m: int
    budget: int
    machines: tuple[str, ...]
    final_states: dict[str, str]
    truth_states: dict[str, str]
    episodes: list[Episode]
    events_applied: int
    lsh_fallbacks: int
    seconds: float

    @property
    def detection_messages(self) -> int:
        return sum(e.detection_messages for e in self.episodes)

    @property
    def correction_messages(self) -> int:
        return sum(e.correction_messages for e in self.episodes)

    def to_tsv(self) -> str:
        cols = ["time", "kind", "faulty", "verdict", "recovered", "truth", "within_budget",
                "detection_messages", "correction_messages", "fallback"]
        out = ["#" + "\t".join(cols)]
        for e in self.episodes:
            out.append("\t".join([
                str(e.time), e.kind, ",".join(e.faulty) or "-", e.verdict,
                ".".join(e.recovered) if e.recovered else "-", ".".join(e.truth),
                str(e.within_budget).lower(), str(e.detection_messages), str(e.correction_messages),
                str(e.fallback).lower()]))
        out.append("#machine\tstate\ttruth")
        for name in self.machines:
            out.append(f"{name}\t{self.final_states[name]}\t{self.truth_states[name]}")
        out.append(f"#summary\tevents={self.events_applied}\tdetection_messages={self.detection_messages}"
                   f"\tcorrection_messages={self.correction_messages}\tlsh_fallbacks={self.lsh_fallbacks}")
        return "\n".join(out) + "\n"


def _event_stream(cfg: ScenarioConfig, sigma: Sequence[int]) -> list[int]:
    events = list(cfg.events)
    if cfg.random_events:
        rng = np.random.default_rng(cfg.seed)
        events += [int(sigma[i]) for i in rng.integers(0, len(sigma), size=cfg.random_events)]
    return events


def run_scenario(cfg: ScenarioConfig) -> SimReport:
    t0 = time.perf_counter()
    primaries = cfg.primaries
    n = len(primaries)
    if cfg.auto_fuse is not None:
        f, ds, de = cfg.auto_fuse
        fs = gen_fusion(primaries, f, ds, de)
        idx = fs.index
        backups = fs.machines
        parts = fs.partitions
    else:
        idx = rcp(primaries)
        backups = list(cfg.backups)
        parts = [map_states(idx, b) for b in backups]
    m = len(backups)
    prim_parts = [map_states(idx, p) for p in primaries]
    d = build(idx, prim_parts + parts).dmin()
    budget = cfg.budget if cfg.budget is not None else (m if d == float("inf") else int(d) - 1)
    rix = build_index(parts, idx, k=cfg.lsh_k, L=cfg.lsh_L, delta=cfg.lsh_delta, seed=cfg.seed, f=budget)
    names = [p.name for p in primaries] + [b.name for b in backups]
    machines = list(primaries) + list(backups)
    by_name = dict(zip(names, machines))
    for flt in cfg.faults:
        if flt.machine not in by_name:
            raise ScenarioError(f"fault on unknown machine {flt.machine!r}")

    sigma = idx.sigma
    events = _event_stream(cfg, sigma)
    state = {nm: mc.initial for nm, mc in zip(names, machines)}
    truth = dict(state)
    faults_at: dict[int, list[Fault]] = {}
    for flt in cfg.faults:
        if not 0 <= flt.time <= len(events):
            raise ScenarioError(f"fault time {flt.time} outside the stream of {len(events)} events")
        faults_at.setdefault(flt.time, []).append(flt)
    rng = np.random.default_rng(cfg.seed + 1)
    episodes: list[Episode] = []

    def truth_tuple():
        return tuple(truth[p.name] for p in primaries)

    for pos in range(len(events) + 1):
        group = faults_at.get(pos, [])
        if group:
            episodes.append(_episode(pos, group, primaries, backups, parts, idx, rix, state, truth,
                                     budget, rng))
        elif cfg.detect_interval and pos and pos % cfg.detect_interval == 0:
            claimed = tuple(state[p.name] for p in primaries)
            bad = detect_byz(rix, [state[b.name] for b in backups], claimed)
            episodes.append(Episode(pos, "detect", (), "detected" if bad else "clean", None, truth_tuple(),
                                    True, detection_messages=n + m))
        if pos == len(events):
            break
        e = events[pos]
        for nm, mc in zip(names, machines):
            truth[nm] = mc.step(truth[nm], e)
            state[nm] = mc.step(state[nm], e)
    return SimReport(n, m, budget, tuple(names), dict(state), dict(truth), episodes, len(events),
                     rix.lsh.stats.fallbacks, time.perf_counter() - t0)


def _episode(pos, group, primaries, backups, parts, idx, rix, state, truth, budget, rng) -> Episode:
    n, m = len(primaries), len(backups)
    kinds = {f.kind for f in group}
    if len(kinds) > 1:
        raise ScenarioError(f"time {pos}: crash and byzantine faults at the same point are not supported")
    kind = kinds.pop()
    faulty = tuple(dict.fromkeys(f.machine for f in group))
    truth_t = tuple(truth[p.name] for p in primaries)
    r_true = idx.state_of[truth_t]
    pnames = [p.name for p in primaries]
    bnames = [b.name for b in backups]

    if kind == "crash":
        within = len(faulty) <= budget
        partial = tuple(None if nm in faulty else state[nm] for nm in pnames)
        avail = {nm: state[nm] for nm in bnames if nm not in faulty}
        ep = Episode(pos, "crash", faulty, "", None, truth_t, within,
                     correction_messages=n + m - len(faulty))
        try:
            res = correct_crash(rix, avail, partial, f=budget)
            ep.recovered, ep.fallback = res.tuple, res.fallback
            ep.verdict = "recovered" if res.tuple == truth_t else "wrong"
        except RecoveryError as exc:
            ep.verdict, ep.note = "unrecoverable", str(exc)
        # restart crashed machines; from ground truth when recovery failed
        r = idx.state_of.get(ep.recovered, r_true) if ep.verdict == "recovered" else r_true
        for i, nm in enumerate(pnames):
            if nm in faulty:
                state[nm] = idx.tuple_of[r][i]
        for nm, p in zip(bnames, parts):
            if nm in faulty:
                state[nm] = p.state_name(p.block_of[r])
        return ep

    # byzantine: the faulty machines report a wrong state at this snapshot only
    claimed = dict(state)
    machines = dict(zip(pnames + bnames, list(primaries) + list(backups)))
    for flt in group:
        mc = machines[flt.machine]
        if flt.lie is not None:
            claimed[flt.machine] = flt.lie
        else:
            others = [s for s in mc.states if s != state[flt.machine]]
            if others:
                claimed[flt.machine] = others[int(rng.integers(len(others)))]
    within = len(faulty) <= budget // 2
    r_claim = tuple(claimed[nm] for nm in pnames)
    b_claim = [claimed[nm] for nm in bnames]
    ep = Episode(pos, "byzantine", faulty, "", None, truth_t, within, detection_messages=n + m)
    if not detect_byz(rix, b_claim, r_claim):
        ep.verdict = "missed"
        return ep
    ep.correction_messages = n + m
    try:
        res = correct_byz(rix, b_claim, r_claim, f=budget)
        ep.recovered, ep.fallback = res.tuple, res.fallback
        ep.verdict = "recovered" if res.tuple == truth_t else "wrong"
    except RecoveryError as exc:
        ep.verdict, ep.note = "unrecoverable", str(exc)
    return ep


@dataclass
class Audit:
    ok: bool
    problems: list[str]
    detection_messages: int
    correction_messages: int


def message_audit(report: SimReport) -> Audit:
    """Check the number of states acquired per episode.

    Detection reads every machine (``n + m``); crash correction reads every
    survivor, which is ``n`` when ``m`` machines are down.
    """
    problems = []
    total = report.n + report.m
    for e in report.episodes:
        if e.kind in ("byzantine", "detect") and e.detection_messages != total:
            problems.append(f"t={e.time}: detection read {e.detection_messages} states, expected {total}")
        if e.kind == "crash" and e.correction_messages != total - len(e.faulty):
            problems.append(f"t={e.time}: crash correction read {e.correction_messages} states, "
                            f"expected {total - len(e.faulty)}")
        if e.detection_messages < 0 or e.correction_messages < 0:
            problems.append(f"t={e.time}: negative counter")
    return Audit(not problems, problems, report.detection_messages, report.correction_messages)
