import csv
import io
import subprocess
import sys

import pytest

from tcecsim.cli import main
from tcecsim.experiments import (
    BREAKDOWN_COLUMNS,
    GEMM_BENCH_COLUMNS,
    RANDTN_COLUMNS,
    RQC_COLUMNS,
)
from tcecsim.precsel import LOG_HEADER

TIMING = {"seconds", "seconds_min", "seconds_median"}

GEMM_ARGS = ["gemm-bench", "--sizes", "16,32", "--modes", "FP64_ORACLE,FP32_REF,FP16TCEC,TF32TC"]
RANDTN_ARGS = ["randtn", "--type", "2", "--dim", "4", "--nodes", "4",
               "--modes", "BASELINE,FP16TCEC,AUTO", "--threshold", "0,0.5"]
RQC_ARGS = ["rqc", "--rows", "2", "--cols", "2", "--depth", "2,4", "--bitstrings", "3",
            "--modes", "BASELINE,FP16TC,AUTO"]


def run(args, tmp_path, name="out.csv"):
    out = tmp_path / name
    assert main(args + ["--out", str(out)]) == 0
    with open(out, newline="") as fh:
        return list(csv.DictReader(fh))


def strip_timing(rows):
    return [{k: v for k, v in r.items() if k not in TIMING} for r in rows]


@pytest.mark.parametrize("args,columns,n_rows", [
    (GEMM_ARGS, GEMM_BENCH_COLUMNS, 8),
    (RANDTN_ARGS, RANDTN_COLUMNS, 4),
    (RQC_ARGS, RQC_COLUMNS, 6),
])
def test_columns_and_reproducibility(args, columns, n_rows, tmp_path):
    first = run(args, tmp_path, "a.csv")
    second = run(args, tmp_path, "b.csv")
    assert len(first) == n_rows
    assert list(first[0].keys()) == list(columns)
    assert strip_timing(first) == strip_timing(second)


def test_gemm_oracle_row_has_zero_error(tmp_path):
    rows = run(GEMM_ARGS, tmp_path)
    assert all(float(r["rel_error"]) == 0 for r in rows if r["mode"] == "FP64_ORACLE")
    assert all(float(r["rel_error"]) > 0 for r in rows if r["mode"] != "FP64_ORACLE")


def test_randtn_auto_expands_per_threshold(tmp_path):
    rows = run(RANDTN_ARGS, tmp_path)
    assert [r["mode"] for r in rows] == ["FP32_BASELINE", "FP16TCEC", "AUTO-0", "AUTO-0.5"]
    baseline = rows[0]
    assert int(baseline["n_gemm"]) == int(baseline["n_FP32_BASELINE"]) == 3


def test_randtn_decision_log(tmp_path):
    log = tmp_path / "log.csv"
    run(RANDTN_ARGS + ["--log", str(log)], tmp_path)
    lines = log.read_text().splitlines()
    assert lines[0] == "seed,policy," + LOG_HEADER
    assert len(lines) == 1 + 4 * 3
    assert all(len(l.split(",")) == len(lines[0].split(",")) for l in lines)


def test_rqc_breakdown(tmp_path):
    bd = tmp_path / "bd.csv"
    rows = run(RQC_ARGS + ["--breakdown", str(bd)], tmp_path)
    with open(bd, newline="") as fh:
        shapes = list(csv.DictReader(fh))
    assert list(shapes[0].keys()) == list(BREAKDOWN_COLUMNS)
    for r in rows:
        mine = [s for s in shapes if (s["depth"], s["mode"]) == (r["depth"], r["mode"])]
        assert sum(int(s["count"]) for s in mine) == int(r["n_gemm"])


def test_rqc_without_oracle(tmp_path):
    rows = run(RQC_ARGS + ["--no-oracle"], tmp_path)
    assert {r["reference"] for r in rows} == {"tn_complex128"}


def test_reps_give_one_row_per_seed(tmp_path):
    rows = run(["randtn", "--type", "1", "--dim", "4", "--modes", "BASELINE",
                "--seed", "3", "--reps", "2"], tmp_path)
    assert [r["seed"] for r in rows] == ["3", "4"]


def test_stdout_csv_when_no_out(capsys):
    assert main(["gemm-bench", "--sizes", "16", "--modes", "FP32_REF"]) == 0
    out, err = capsys.readouterr()
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 1 and "FP32_REF" in err


@pytest.mark.parametrize("args", [
    ["rqc", "--rows", "5", "--cols", "5", "--depth", "1", "--modes", "BASELINE"],
    ["gemm-bench", "--sizes", "8"],
    ["gemm-bench", "--modes", "NOPE"],
    ["randtn", "--dim", "2"],
])
def test_errors_exit_one(args, capsys):
    assert main(args) == 1
    assert capsys.readouterr().err.strip()


def test_usage_error_exits_nonzero(capsys):
    with pytest.raises(SystemExit) as info:
        main(["randtn", "--type", "7"])
    assert info.value.code == 2
    assert "--type" in capsys.readouterr().err


def test_console_script_entry():
    proc = subprocess.run([sys.executable, "-m", "tcecsim.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "gemm-bench" in proc.stdout
