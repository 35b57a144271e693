import pytest

from conftest import DATA, EXAMPLE
from fsmfusion.cli import REFERENCE, bench_row, main
from fsmfusion.machine import load_machine

ABC = [str(EXAMPLE / f"{x}.fsm") for x in "ABC"]


def test_parse_check(capsys):
    assert main(["parse", "--check", str(DATA / "mcnc" / "dk15.kiss2")]) == 0
    assert capsys.readouterr().out.strip() == "4 states, 8 events"


def test_parse_round_trips(capsys):
    assert main(["parse", ABC[0]]) == 0
    assert capsys.readouterr().out.startswith("machine A\n")


def test_dump_rcp(capsys):
    assert main(["dump-rcp", *ABC, "--dump-lattice"]) == 0
    out = capsys.readouterr().out
    assert "states r0 r1 r2 r3 r4 r5 r6 r7" in out
    assert out.count("# lattice") == 16


def test_analyze(capsys):
    assert main(["analyze", *ABC]) == 0
    out = capsys.readouterr().out
    assert "dmin\t1\n" in out
    assert "crash_faults_correctable\t0" in out


def fuse_into(tmp_path, capsys):
    out = tmp_path / "fs"
    assert main(["fuse", *ABC, "--f", "2", "--ds", "1", "--de", "1", "--out", str(out)]) == 0
    capsys.readouterr()
    return out


def test_fuse_writes_backups(tmp_path, capsys):
    out = fuse_into(tmp_path, capsys)
    assert sorted(p.name for p in out.glob("F*.fsm")) == ["F1.fsm", "F2.fsm"]
    assert (out / "MANIFEST").exists()
    report = (out / "report.tsv").read_text()
    assert "dmin_after\t3" in report
    f1 = load_machine(out / "F1.fsm")
    assert (f1.size, len(f1.events)) == (2, 1)
    assert main(["analyze", *ABC, "--backup", str(out / "F1.fsm"), "--backup", str(out / "F2.fsm")]) == 0
    assert "dmin\t3" in capsys.readouterr().out


def test_fuse_incremental(capsys):
    assert main(["fuse", *ABC, "--f", "1", "--incremental"]) == 0
    assert "method\tincremental" in capsys.readouterr().out


def test_recover_modes(tmp_path, capsys):
    out = fuse_into(tmp_path, capsys)
    snap = tmp_path / "crash.txt"
    snap.write_text("A a0\nB MISSING\nC MISSING\nF1 f1_0\nF2 f2_0\n")
    assert main(["recover", str(out), str(snap)]) == 0
    assert "recovered\ta0.b0.c0" in capsys.readouterr().out

    snap.write_text("A a1\nB b1\nC c0\nF1 f1_1\nF2 f2_1\n")
    assert main(["recover", str(out), str(snap), "--mode", "byz-detect"]) == 0
    assert "byzantine\ttrue" in capsys.readouterr().out

    snap.write_text("A a0\nB b1\nC c0\nF1 f1_0\nF2 f2_0\n")
    assert main(["recover", str(out), str(snap), "--mode", "byz-correct"]) == 0
    out_text = capsys.readouterr().out
    assert "recovered\ta0.b0.c0" in out_text and "votes\t4" in out_text


def test_recover_ambiguous_exits_2(tmp_path, capsys):
    out = fuse_into(tmp_path, capsys)
    snap = tmp_path / "s.txt"
    snap.write_text("A MISSING\nB MISSING\nC MISSING\nF1 f1_0\nF2 MISSING\n")
    assert main(["recover", str(out), str(snap)]) == 2


def test_simulate(tmp_path, capsys):
    dest = tmp_path / "sim.tsv"
    assert main(["simulate", "--scenario", str(DATA / "scenarios" / "crash.scn"), "--out", str(dest)]) == 0
    assert "recovered\ta1.b0.c0" in dest.read_text()


def test_decompose(tmp_path, capsys):
    assert main(["decompose", str(EXAMPLE / "M.fsm"), "--e", "1", "--out", str(tmp_path)]) == 0
    assert len(list(tmp_path.glob("*.fsm"))) == 2


def test_bench_single_row(tmp_path, capsys):
    triples = tmp_path / "t.txt"
    triples.write_text("lion tav modulo12\n")
    assert main(["bench", "--triples", str(triples), "--method", "direct"]) == 0
    out = capsys.readouterr().out
    row = [line for line in out.splitlines() if line.startswith("lion")][0].split("\t")
    assert row[1] == "36864"


def test_replication_column_matches_reference():
    mc = DATA / "mcnc"
    for names, ref in REFERENCE.items():
        sizes = [load_machine(mc / f"{n}.kiss2").size for n in names]
        assert (sizes[0] * sizes[1] * sizes[2]) ** 2 == ref[0]


def test_bench_row_reference():
    ms = [load_machine(DATA / "mcnc" / f"{n}.kiss2") for n in ("lion", "bbara", "mc")]
    row = bench_row(ms, 2, 0, 3, "direct")
    assert (row.replication, row.fusion) == (25600, 25600)
    assert row.status == "PASS"


@pytest.mark.parametrize("argv,code", [
    (["parse"], 1),
    (["nope"], 1),
    (["parse", "/does/not/exist.fsm"], 1),
    (["fuse", "--f", "1"], 1),
])
def test_exit_codes(argv, code, capsys):
    assert main(argv) == code


def test_bad_machine_file_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.fsm"
    bad.write_text("machine X\nstates a\n")
    assert main(["parse", str(bad)]) == 1
