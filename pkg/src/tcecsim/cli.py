"""``tcecsim`` command-line harness: gemm-bench, randtn and rqc.

Results go to a CSV file (``--out``) and a plain-text summary on stdout.
Without ``--out`` the CSV is written to stdout and the summary to stderr.
Timing columns are wall-clock on this machine and are indicative only.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys

from . import experiments as ex
from .precsel import LOG_HEADER

log = logging.getLogger("tcecsim")


def _int_list(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _float_list(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _str_list(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def _init_type(text):
    text = text.strip()
    if text in ("1", "2", "3"):
        return f"Type{text}"
    for name in ("Type1", "Type2", "Type3"):
        if text.lower() == name.lower():
            return name
    raise argparse.ArgumentTypeError(f"type must be 1, 2 or 3, got {text!r}")


def write_csv(rows, columns, fh):
    writer = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({c: _cell(row[c]) for c in columns})


def _cell(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return v


def format_table(rows, columns):
    """Fixed-width text table; floats shown to 3 significant digits."""
    def show(v):
        if isinstance(v, float):
            return "nan" if math.isnan(v) else f"{v:.3g}"
        return str(v)

    cells = [[show(r[c]) for c in columns] for r in rows]
    widths = [max([len(c)] + [len(row[i]) for row in cells]) for i, c in enumerate(columns)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(columns, widths))]
    lines += ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(lines)


def _hist_summary(row):
    parts = [f"{name}:{row[f'n_{name}']}" for name in ex.KIND_NAMES if row[f"n_{name}"]]
    return " ".join(parts) or "-"


def _emit(args, rows, columns, summary):
    if args.out:
        with open(args.out, "w", newline="") as fh:
            write_csv(rows, columns, fh)
        print(summary)
    else:
        write_csv(rows, columns, sys.stdout)
        print(summary, file=sys.stderr)


def cmd_gemm_bench(args):
    if any(s < 16 for s in args.sizes):
        raise ValueError("--sizes entries must be >= 16")
    rows = ex.run_gemm_bench(args.sizes, args.modes, args.seed, args.reps, args.k_tile)
    summary = format_table(rows, ("size", "mode", "rel_error", "seconds_min"))
    _emit(args, rows, ex.GEMM_BENCH_COLUMNS, summary)


def cmd_randtn(args):
    if args.dim < 4:
        raise ValueError("--dim must be >= 4")
    modes = ex.expand_modes(args.modes, args.threshold)
    seeds = [args.seed + i for i in range(args.reps)]
    logs = []
    rows = ex.run_randtn(
        args.type, args.dim, modes, seeds, args.nodes, (args.degree_min, args.degree_max),
        args.size_auto, args.size_tf32, args.k_tile,
        log_sink=(lambda row, lg: logs.append((row, lg))) if args.log else None,
    )
    if args.log:
        with open(args.log, "w") as fh:
            fh.write("seed,policy," + LOG_HEADER + "\n")
            for row, lg in logs:
                for line in lg.lines():
                    fh.write(f"{row['seed']},{row['mode']},{line}\n")
    for r in rows:
        r["decisions"] = _hist_summary(r)
    summary = format_table(rows, ("type", "seed", "mode", "rel_error", "result_abs", "oracle_abs",
                                  "decisions"))
    _emit(args, rows, ex.RANDTN_COLUMNS, summary)


def cmd_rqc(args):
    modes = ex.expand_modes(args.modes, args.threshold)
    seeds = [args.seed + i for i in range(args.reps)]
    breakdown = [] if args.breakdown else None
    rows = ex.run_rqc(
        args.rows, args.cols, args.depth, modes, seeds, args.bitstrings, args.oracle,
        args.size_auto, args.size_tf32, args.k_tile, breakdown,
    )
    if args.breakdown:
        with open(args.breakdown, "w", newline="") as fh:
            write_csv(breakdown, ex.BREAKDOWN_COLUMNS, fh)
    for r in rows:
        r["decisions"] = _hist_summary(r)
    summary = format_table(rows, ("depth", "seed", "mode", "median_rel_error", "max_rel_error",
                                  "seconds", "decisions"))
    _emit(args, rows, ex.RQC_COLUMNS, summary)


def build_parser():
    p = argparse.ArgumentParser(prog="tcecsim", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, modes, reps_help):
        sp.add_argument("--modes", type=_str_list, default=list(modes))
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--reps", type=int, default=1, help=reps_help)
        sp.add_argument("--k-tile", type=int, default=16)
        sp.add_argument("--out", help="CSV output path (default: stdout)")

    g = sub.add_parser("gemm-bench", help="complex GEMM accuracy per mode")
    g.add_argument("--sizes", type=_int_list, default=[256, 512])
    common(g, ex.GEMM_BENCH_MODES, "timing repetitions per (size, mode)")
    g.set_defaults(func=cmd_gemm_bench)

    r = sub.add_parser("randtn", help="random tensor network contraction per mode")
    r.add_argument("--type", type=_init_type, default="Type1")
    r.add_argument("--dim", type=int, default=32)
    r.add_argument("--nodes", type=int, default=4)
    r.add_argument("--degree-min", type=int, default=2)
    r.add_argument("--degree-max", type=int, default=4)
    r.add_argument("--threshold", type=_float_list, default=[0.0, 0.1, 0.5],
                   help="t values substituted for a bare AUTO mode")
    r.add_argument("--size-auto", type=int, default=0)
    r.add_argument("--size-tf32", type=int, default=0)
    r.add_argument("--log", help="write every dispatch decision to this file")
    common(r, ("BASELINE", "TF32TCEC", "FP16TCEC", "FP16TCEC_SCALED", "AUTO"),
           "number of networks, seeds seed..seed+reps-1")
    r.set_defaults(func=cmd_randtn)

    q = sub.add_parser("rqc", help="random circuit amplitude accuracy per mode")
    q.add_argument("--rows", type=int, default=4)
    q.add_argument("--cols", type=int, default=4)
    q.add_argument("--depth", type=_int_list, default=[8], help="middle depth(s), comma separated")
    q.add_argument("--bitstrings", type=int, default=10)
    q.add_argument("--threshold", type=_float_list, default=[0.0])
    q.add_argument("--size-auto", type=int, default=2048)
    q.add_argument("--size-tf32", type=int, default=512)
    q.add_argument("--oracle", action=argparse.BooleanOptionalAction, default=True,
                   help="compare against the state vector (else a complex128 contraction)")
    q.add_argument("--breakdown", help="write per-GEMM-shape timing CSV to this path")
    common(q, ("BASELINE", "TF32TC", "FP16TC", "TF32TCEC", "FP16TCEC", "AUTO"),
           "number of circuits, seeds seed..seed+reps-1")
    q.set_defaults(func=cmd_rqc)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except Exception as exc:
        log.debug("failure", exc_info=True)
        print(f"tcecsim {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
