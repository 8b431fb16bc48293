import csv
import io
import subprocess
import sys

import pytest

from lcma.cli import main
from lcma.decision import STANDARD_GEMM, HardwareProfile
from lcma.library import STRASSEN, STRASSEN2, format_scheme, strassen_scheme


@pytest.fixture
def profile(tmp_path):
    path = tmp_path / "hw.txt"
    HardwareProfile(100e12, 100e12, 1e12, 1).save(path)
    return str(path)


def rows_of(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_validate_builtin(capsys):
    assert main(["validate", "--builtin"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 4


def test_validate_corrupted_file(tmp_path, capsys):
    lines = format_scheme(strassen_scheme()).splitlines()
    lines[2 + 2 * 7 * 3 + 1] = "-1 0"
    bad = tmp_path / "bad.txt"
    bad.write_text("\n".join(lines) + "\n")
    good = tmp_path / "good.txt"
    good.write_text(format_scheme(strassen_scheme()))
    assert main(["validate", str(good), str(bad)]) == 1
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" in out and "(i,i',l,l',j,j')=" in out


def test_validate_parse_failure(tmp_path, capsys):
    broken = tmp_path / "broken.txt"
    broken.write_text("2 2 2 7\nU 1\n1 0\n")
    assert main(["validate", str(broken)]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_validate_needs_arguments():
    with pytest.raises(SystemExit) as exc:
        main(["validate"])
    assert exc.value.code == 2


def test_bench_csv(tmp_path):
    out = tmp_path / "b.csv"
    assert main(["bench", "--shape", "64x64x64", "--scheme", STRASSEN, "--reps", "1", "--out", str(out), "--workers", "2"]) == 0
    rows = rows_of(out.read_text())
    assert [r["algorithm"] for r in rows] == [STANDARD_GEMM, STRASSEN]
    assert int(rows[1]["multiply_count"]) * 8 == int(rows[0]["multiply_count"]) * 7


def test_bench_unknown_scheme(capsys):
    assert main(["bench", "--shape", "8x8x8", "--scheme", "nope"]) == 1
    assert "unknown scheme" in capsys.readouterr().err


def test_bench_modes(capsys):
    assert main(["bench", "--shape", "16x16x16", "--staged", "--exact", "--reps", "1", "--cache-aware"]) == 0
    assert rows_of(capsys.readouterr().out)[1]["executor"] == "staged"
    assert main(["bench", "--shape", "16x16x16", "--standard", "--reps", "1"]) == 0
    assert len(rows_of(capsys.readouterr().out)) == 1


def test_decide_crossover(profile, capsys):
    assert main(["decide", "--shape", "4096x4096x4096", "--profile", profile, "--scheme", STRASSEN]) == 0
    assert f"choice: {STRASSEN}" in capsys.readouterr().out
    assert main(["decide", "--shape", "1024x1024x1024", "--profile", profile, "--scheme", STRASSEN]) == 0
    assert f"choice: {STANDARD_GEMM}" in capsys.readouterr().out
    assert main(["decide", "--shape", "4096x1x4096", "--profile", profile]) == 0
    assert "memory-bound" in capsys.readouterr().out


def test_decide_standard_only(profile, capsys):
    assert main(["decide", "--shape", "8192x8192x8192", "--profile", profile, "--scheme", "standard-2x2x2-r8"]) == 0
    assert f"choice: {STANDARD_GEMM}" in capsys.readouterr().out


def test_decide_missing_profile(capsys):
    assert main(["decide", "--shape", "8x8x8", "--profile", "/nonexistent"]) == 1


def test_sweep(tmp_path, profile):
    shapes = tmp_path / "shapes.txt"
    shapes.write_text("# M K N\n64 64 64\n4096 4096 4096\n32 8 16\n")
    out = tmp_path / "sweep.csv"
    assert main(["sweep", str(shapes), "--profile", profile, "--no-measure", "--out", str(out)]) == 0
    rows = rows_of(out.read_text())
    assert len(rows) == 3 and all(r["kind"] == "decision" for r in rows)
    assert rows[0]["decision"] == STANDARD_GEMM
    shapes.write_text("8 8 8\n8 8\n")
    assert main(["sweep", str(shapes), "--profile", profile]) == 1


def test_sweep_with_measurements(tmp_path, profile):
    shapes = tmp_path / "shapes.txt"
    shapes.write_text("16 16 16\n")
    out = tmp_path / "sweep.csv"
    assert main(["sweep", str(shapes), "--profile", profile, "--scheme", STRASSEN, "--out", str(out)]) == 0
    assert [r["kind"] for r in rows_of(out.read_text())] == ["decision", "measure", "measure"]


def test_schedule_sim(tmp_path, capsys):
    assert main(["schedule-sim", "--groups", "256", "--rank", "7", "--workers", "78"]) == 0
    out = capsys.readouterr().out
    assert "group-granular waves: 28" in out and "(planned): 23" in out and "21.74%" in out
    csv_path = tmp_path / "s.csv"
    assert main(["schedule-sim", "--groups", "4", "--rank", "7", "--workers", "3", "--cache-aware", "--out", str(csv_path)]) == 0
    rows = rows_of(csv_path.read_text())
    wave0 = sorted((int(r["group"]), int(r["r"])) for r in rows if r["wave"] == "0")
    assert wave0 == [(0, 0), (1, 0), (2, 0)]
    assert main(["schedule-sim", "--groups", "1", "--rank", "1", "--workers", "1"]) == 0
    assert "(planned): 1 " in capsys.readouterr().out


def test_precision(capsys):
    assert main(["precision", "--shape", "32x32x32", "--seed", "1"]) == 0
    rows = rows_of(capsys.readouterr().out)
    assert {r["executor"] for r in rows} == {"standard", "staged", "fused"}
    assert main(["precision", "--shape", "8x8x8", "--exact"]) == 1


def test_roofline(tmp_path, profile, capsys):
    out = tmp_path / "r.csv"
    hw = HardwareProfile(1e12, 1e12, 1e11)
    hw.save(profile)
    assert main(["roofline", "--profile", profile, "--out", str(out)]) == 0
    text = out.read_text()
    assert text.splitlines()[0] == "intensity,algorithm,effective_flops"
    ceil = {r["algorithm"]: float(r["effective_flops"]) for r in rows_of(text) if r["intensity"] == "inf"}
    assert ceil[f"ceiling:{STRASSEN}"] == pytest.approx(1e12 * 8 / 7)
    assert ceil[f"ceiling:{STRASSEN2}"] == pytest.approx(1e12 * 64 / 49)
    note = capsys.readouterr().out
    assert f"crossover {STRASSEN} -> {STRASSEN2}: from intensity" in note
    assert main(["roofline", "--profile", profile, "--no-builtin", "--out", str(out)]) == 0
    algos = {r["algorithm"] for r in rows_of(out.read_text())}
    assert algos == {STANDARD_GEMM, f"best:{STANDARD_GEMM}", f"ceiling:{STANDARD_GEMM}"}


def test_calibrate(tmp_path, capsys):
    out = tmp_path / "hw.txt"
    assert main(["calibrate", "--gemm-n", "128", "--stream-elems", "262144", "--out", str(out)]) == 0
    assert HardwareProfile.load(out).flops_mul > 0
    assert main(["calibrate", "--samples", "2"]) == 1


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "lcma", "validate", "--builtin"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.count("PASS") == 4
