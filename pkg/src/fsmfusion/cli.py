"""Command-line interface.

Exit codes: 0 success, 1 usage or input error, 2 invariant violation
(unverifiable fusion, ambiguous recovery, failed audit).
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .faultgraph import build
from .fusion import FusionError, event_decompose, gen_fusion, inc_fusion
from .machine import Machine, MachineError, format_fsm_text, load_machine
from .partition import acting_events, closed_partitions
from .product import CapacityError, InconsistentMachineError, map_states, rcp
from .recovery import (PartialTuple, RecoveryError, build_index, correct_byz, correct_crash,
                       detect_byz)
from .sim import ScenarioError, load_scenario, message_audit, parse_scenario, run_scenario

log = logging.getLogger("fsmfusion")

DATA_DIR = Path(__file__).resolve().parent / "data"

# published reference values per triple, f = 2:
# (replication, fusion, primary events, fusion events)
REFERENCE = {
    ("dk15", "bbara", "mc"): (25600, 19600, 16, 10),
    ("lion", "bbtas", "mc"): (9216, 8464, 8, 7),
    ("lion", "tav", "modulo12"): (36864, 9216, 16, 16),
    ("lion", "bbara", "mc"): (25600, 25600, 16, 9),
    ("tav", "beecount", "lion"): (12544, 10816, 16, 16),
    ("mc", "bbtas", "shiftreg"): (36864, 26896, 8, 7),
    ("tav", "bbara", "mc"): (25600, 25600, 16, 16),
    ("dk15", "modulo12", "mc"): (36864, 28224, 8, 8),
    ("modulo12", "lion", "mc"): (36864, 36864, 8, 7),
}
NEAR_TOLERANCE = 0.25


class UsageError(Exception):
    pass


class InvariantError(Exception):
    pass


def _load_all(paths) -> list[Machine]:
    return [load_machine(p) for p in paths]


# --------------------------------------------------------------------------
# parse / dump-rcp / analyze

def cmd_parse(args) -> int:
    for path in args.files:
        m = load_machine(path)
        if args.check:
            note = f" ({len(m.unspecified)} unspecified pairs completed as self-loops)" if m.unspecified else ""
            print(f"{m.name}: {m.size} states, {len(m.events)} events{note}" if len(args.files) > 1
                  else f"{m.size} states, {len(m.events)} events{note}")
        else:
            sys.stdout.write(format_fsm_text(m))
    return 0


def cmd_dump_rcp(args) -> int:
    ms = _load_all(args.files)
    idx = rcp(ms, args.limit)
    labels = {idx.name_of(r): idx.label(r) for r in range(idx.N)}
    sys.stdout.write(format_fsm_text(idx.rcp, labels))
    if args.dump_lattice:
        for k, p in enumerate(closed_partitions(idx, args.cap)):
            blocks = " | ".join(",".join(idx.name_of(r) for r in sorted(b)) for b in p.blocks)
            print(f"# lattice {k}\t{p.n_blocks} states\tevents={sorted(acting_events(p))}\t{blocks}")
    return 0


def cmd_analyze(args) -> int:
    prim = _load_all(args.files)
    backups = _load_all(args.backup or [])
    idx = rcp(prim, args.limit)
    parts = [map_states(idx, m) for m in prim + backups]
    g = build(idx, parts)
    weakest = g.weakest_edges()
    d = g.dmin()
    print("#quantity\tvalue")
    print(f"rcp_states\t{idx.N}")
    print(f"events\t{len(idx.sigma)}")
    print(f"dmin\t{d}")
    print(f"crash_faults_correctable\t{'inf' if d == math.inf else int(d) - 1}")
    print(f"byzantine_faults_correctable\t{'inf' if d == math.inf else (int(d) - 1) // 2}")
    print(f"weakest_edges\t{len(weakest)}")
    shown = weakest if args.all_edges else weakest[:20]
    print("#edge\tu\tv\tweight")
    for u, v in shown:
        print(f"edge\t{idx.label(u)}\t{idx.label(v)}\t{g.weight(u, v)}")
    print("#machine\tstates\tevents\tcovers_weakest")
    for m, p in zip(prim + backups, parts):
        cov = sum(1 for u, v in weakest if p.separates(u, v))
        print(f"{m.name}\t{p.n_blocks}\t{len(acting_events(p))}\t{cov}/{len(weakest)}")
    return 0


# --------------------------------------------------------------------------
# fuse / recover

def _fusion_report(fs) -> str:
    lines = ["#backup\tstates\tevents\tstate_rounds\tevent_rounds\tminimality_steps"]
    flat = fs.trace if fs.method == "direct" else fs.trace[-1].trace
    for b, tr in zip(fs.backups, flat):
        lines.append(f"{b.machine.name}\t{b.n_states}\t{len(b.events)}\t"
                     f"{','.join(map(str, tr.state_rounds)) or '-'}\t"
                     f"{','.join(map(str, tr.event_rounds)) or '-'}\t{tr.minimality_steps}")
    lines.append("#quantity\tvalue")
    lines += [f"method\t{fs.method}", f"f\t{fs.f}", f"ds\t{fs.ds}", f"de\t{fs.de}",
              f"rcp_states\t{fs.index.N}", f"events\t{len(fs.index.sigma)}",
              f"dmin_before\t{fs.dmin_primaries()}", f"dmin_after\t{fs.dmin()}",
              f"seconds\t{fs.seconds:.3f}"]
    return "\n".join(lines) + "\n"


def cmd_fuse(args) -> int:
    prim = _load_all(args.files)
    synth = inc_fusion if args.incremental else gen_fusion
    fs = synth(prim, args.f, args.ds, args.de, frontier_cap=args.frontier_cap, limit=args.limit)
    report = _fusion_report(fs)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        manifest = ["# primaries and backups of one fusion set"]
        for m in prim:
            (out / f"{m.name}.fsm").write_text(format_fsm_text(m), encoding="utf-8")
            manifest.append(f"primary {m.name}.fsm")
        for b in fs.backups:
            comments = {b.partition.state_name(k): " ".join(fs.index.label(r) for r in sorted(blk))
                        for k, blk in enumerate(b.partition.blocks)}
            (out / f"{b.machine.name}.fsm").write_text(format_fsm_text(b.machine, comments), encoding="utf-8")
            manifest.append(f"backup {b.machine.name}.fsm")
        manifest.append(f"budget {fs.f}")
        (out / "MANIFEST").write_text("\n".join(manifest) + "\n", encoding="utf-8")
        (out / "report.tsv").write_text(report, encoding="utf-8")
        print(f"wrote {len(fs.backups)} backups to {out}")
    sys.stdout.write(report)
    return 0


def _read_snapshot(path) -> dict[str, str | None]:
    snap: dict[str, str | None] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise UsageError(f"{path}:{lineno}: expected '<machine> <state-or-MISSING>'")
        snap[parts[0]] = None if parts[1] == "MISSING" else parts[1]
    return snap


def cmd_recover(args) -> int:
    d = Path(args.dir)
    cfg = parse_scenario((d / "MANIFEST").read_text(encoding="utf-8"), d)
    idx = rcp(cfg.primaries)
    parts = [map_states(idx, b) for b in cfg.backups]
    f = cfg.budget if cfg.budget is not None else len(parts)
    rix = build_index(parts, idx, k=args.k, L=args.L, delta=args.delta, seed=args.seed, f=f)
    snap = _read_snapshot(args.snapshot)
    names = [m.name for m in cfg.primaries] + [b.name for b in cfg.backups]
    unknown = set(snap) - set(names)
    if unknown:
        raise UsageError(f"snapshot names unknown machines: {sorted(unknown)}")
    r = [snap.get(m.name) for m in cfg.primaries]
    bstates = [snap.get(b.name) for b in cfg.backups]
    print("#quantity\tvalue")
    if args.mode == "crash":
        res = correct_crash(rix, bstates, PartialTuple(r), f=f)
        print(f"recovered\t{'.'.join(res.tuple)}")
        print(f"fallback\t{str(res.fallback).lower()}")
    else:
        if any(s is None for s in r + bstates):
            raise UsageError(f"--mode {args.mode} needs the state of every machine")
        if args.mode == "byz-detect":
            print(f"byzantine\t{str(detect_byz(rix, bstates, r)).lower()}")
        else:
            res = correct_byz(rix, bstates, r, f=f)
            print(f"recovered\t{'.'.join(res.tuple)}")
            print(f"votes\t{res.votes}")
            print(f"threshold\t{res.threshold}")
            print(f"fallback\t{str(res.fallback).lower()}")
    st = rix.lsh.stats
    print(f"k\t{rix.lsh.k}\nL\t{rix.lsh.L}\nlsh_lookups\t{st.lookups}\ntables_probed\t{st.tables_probed}"
          f"\ntables_skipped\t{st.tables_skipped}\nfallbacks\t{st.fallbacks}")
    return 0


# --------------------------------------------------------------------------
# simulate / decompose

def cmd_simulate(args) -> int:
    cfg = load_scenario(args.scenario)
    if args.seed is not None:
        cfg.seed = args.seed
    rep = run_scenario(cfg)
    text = rep.to_tsv()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    audit = message_audit(rep)
    if not audit.ok:
        for p in audit.problems:
            print(f"audit: {p}", file=sys.stderr)
        return 2
    if not all(e.ok for e in rep.episodes):
        return 2
    return 0


def cmd_decompose(args) -> int:
    m = load_machine(args.file)
    parts = event_decompose(m, args.e)
    if not parts:
        print(f"# no decomposition of {m.name} with {args.e} fewer events")
        return 0
    for q in parts:
        sys.stdout.write(format_fsm_text(q))
        if args.out:
            Path(args.out).mkdir(parents=True, exist_ok=True)
            (Path(args.out) / f"{q.name}.fsm").write_text(format_fsm_text(q), encoding="utf-8")
    return 0


# --------------------------------------------------------------------------
# bench

@dataclass
class BenchRow:
    triple: tuple[str, ...]
    replication: int
    fusion: int
    savings_pct: float
    primary_events: int
    fusion_events: float
    event_reduction_pct: float
    rho: float
    beta: float
    s: int
    rcp_states: int
    dmin: float
    direct_seconds: float | None
    incremental_seconds: float | None
    incremental_fusion: int | None
    incremental_dmin: float | None
    status: str
    reference: tuple | None

    COLUMNS = ("triple", "replication", "fusion", "savings_pct", "primary_events", "fusion_events",
               "event_reduction_pct", "rho", "beta", "s", "rcp_states", "dmin", "direct_seconds",
               "incremental_seconds", "incremental_fusion", "incremental_dmin", "reference_fusion",
               "reference_fusion_events", "status")

    def tsv(self) -> str:
        def fmt(x):
            if x is None:
                return "-"
            if isinstance(x, float):
                return f"{x:.2f}" if x != math.inf else "inf"
            return str(x)
        ref = self.reference or (None, None, None, None)
        vals = [",".join(self.triple), self.replication, self.fusion, self.savings_pct, self.primary_events,
                self.fusion_events, self.event_reduction_pct, self.rho, self.beta, self.s, self.rcp_states,
                self.dmin, self.direct_seconds, self.incremental_seconds, self.incremental_fusion,
                self.incremental_dmin, ref[1], ref[3], self.status]
        return "\t".join(fmt(v) for v in vals)


def bench_row(machines: list[Machine], f: int, ds: int, de: int, method: str = "both",
              frontier_cap: int | None = None) -> BenchRow:
    """Synthesize and verify backups for one triple and compute the comparison columns."""
    names = tuple(m.name for m in machines)
    direct = inc = None
    t_direct = t_inc = None
    if method in ("direct", "both"):
        t0 = time.perf_counter()
        direct = gen_fusion(machines, f, ds, de, frontier_cap=frontier_cap)
        t_direct = time.perf_counter() - t0
    if method in ("incremental", "both"):
        t0 = time.perf_counter()
        inc = inc_fusion(machines, f, ds, de, frontier_cap=frontier_cap)
        t_inc = time.perf_counter() - t0
    main = direct or inc
    for fs in (direct, inc):
        if fs is not None:
            fs.verify()
    replication = math.prod(m.size for m in machines) ** f
    fusion = math.prod(b.n_states for b in main.backups)
    sigma = len(main.index.sigma)
    avg_states = sum(b.n_states for b in main.backups) / max(1, main.m)
    avg_events = sum(len(b.events) for b in main.backups) / max(1, main.m)
    ref = REFERENCE.get(names)
    status = "-"
    if ref is not None:
        if fusion == ref[1] and avg_events == ref[3]:
            status = "PASS"
        elif abs(fusion - ref[1]) <= NEAR_TOLERANCE * ref[1]:
            status = "NEAR"
        else:
            status = "DIFF"
    return BenchRow(
        names, replication, fusion, (replication - fusion) * 100 / replication, sigma, avg_events,
        (sigma - avg_events) * 100 / sigma if sigma else 0.0,
        main.index.N / avg_states if avg_states else math.inf,
        sigma / avg_events if avg_events else math.inf,
        max(m.size for m in machines), main.index.N, main.dmin(), t_direct, t_inc,
        math.prod(b.n_states for b in inc.backups) if inc else None, inc.dmin() if inc else None,
        status, ref)


def _read_triples(path) -> list[tuple[str, ...]]:
    out = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            out.append(tuple(line.replace(",", " ").split()))
    return out


def _find_machine(d: Path, name: str) -> Path:
    for ext in (".kiss2", ".kiss", ".fsm"):
        p = d / f"{name}{ext}"
        if p.exists():
            return p
    raise UsageError(f"no machine file for {name!r} in {d}")


def default_mcnc_dir() -> Path:
    env = os.environ.get("FSMFUSION_MCNC_DIR")
    return Path(env) if env else DATA_DIR / "mcnc"


def cmd_bench(args) -> int:
    d = Path(args.dir) if args.dir else default_mcnc_dir()
    if args.random_triples:
        import numpy as np
        pool = sorted(p.stem for p in d.glob("*.kiss2"))
        rng = np.random.default_rng(args.seed)
        triples = [tuple(rng.choice(pool, size=3, replace=False).tolist()) for _ in range(args.random_triples)]
    else:
        triples = _read_triples(args.triples or DATA_DIR / "triples.txt")
    print("#" + "\t".join(BenchRow.COLUMNS))
    bad = 0
    t0 = time.perf_counter()
    for names in triples:
        machines = [load_machine(_find_machine(d, n)) for n in names]
        try:
            row = bench_row(machines, args.f, args.ds, args.de, args.method, args.frontier_cap)
        except CapacityError as exc:
            print(f"# {','.join(names)}\tskipped\t{exc}")
            continue
        except FusionError as exc:
            print(f"# {','.join(names)}\tunverified\t{exc}")
            bad += 1
            continue
        print(row.tsv(), flush=True)
    print(f"# total_seconds\t{time.perf_counter() - t0:.2f}")
    return 2 if bad else 0


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fsmfusion", description="Fused backup state machines.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("parse", help="parse machine files (native or KISS2)")
    p.add_argument("files", nargs="+")
    p.add_argument("--check", action="store_true", help="only print state and event counts")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("dump-rcp", help="print the reachable cross product")
    p.add_argument("files", nargs="+")
    p.add_argument("--dump-lattice", action="store_true", help="also list every closed partition")
    p.add_argument("--cap", type=int, default=12, help="largest RCP for --dump-lattice")
    p.add_argument("--limit", type=int, default=10**6)
    p.set_defaults(func=cmd_dump_rcp)

    p = sub.add_parser("analyze", help="fault graph summary")
    p.add_argument("files", nargs="+", help="primary machines")
    p.add_argument("--backup", action="append", help="backup machine file (repeatable)")
    p.add_argument("--all-edges", action="store_true")
    p.add_argument("--limit", type=int, default=10**6)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("fuse", help="synthesize backup machines")
    p.add_argument("files", nargs="+")
    p.add_argument("--f", type=int, required=True)
    p.add_argument("--ds", type=int, default=0)
    p.add_argument("--de", type=int, default=0)
    p.add_argument("--incremental", action="store_true")
    p.add_argument("--frontier-cap", type=int, default=None)
    p.add_argument("--limit", type=int, default=10**6)
    p.add_argument("--out", help="directory for backup files, MANIFEST and report.tsv")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("recover", help="recover from a state snapshot")
    p.add_argument("dir", help="directory written by 'fuse --out'")
    p.add_argument("snapshot", help="lines '<machine> <state-or-MISSING>'")
    p.add_argument("--mode", choices=("crash", "byz-detect", "byz-correct"), default="crash")
    p.add_argument("--k", type=int)
    p.add_argument("--L", type=int)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("simulate", help="run a fault-injection scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="fusion vs replication on benchmark triples")
    p.add_argument("--dir", help="machine directory (default: $FSMFUSION_MCNC_DIR or bundled files)")
    p.add_argument("--triples")
    p.add_argument("--random-triples", type=int, default=0, help="sample this many triples instead")
    p.add_argument("--f", type=int, default=2)
    p.add_argument("--ds", type=int, default=0)
    p.add_argument("--de", type=int, default=3)
    p.add_argument("--method", choices=("direct", "incremental", "both"), default="both")
    p.add_argument("--frontier-cap", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("decompose", help="event-based decomposition of one machine")
    p.add_argument("file")
    p.add_argument("--e", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_decompose)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (RecoveryError, FusionError, InconsistentMachineError, InvariantError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 2
    except (UsageError, MachineError, ScenarioError, FileNotFoundError, CapacityError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
