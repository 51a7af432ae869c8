"""Command-line front end.

Exit codes: 0 success, 1 usage/config error, 2 training divergence, 3 I/O or file-format error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from . import analysis, perfmodel
from .config import ConfigError, load_config
from .formats import (
    Axis, FormatError, dequantize, encode_fpq1, get_format, quantize_tensor, read_fpq1,
)
from .linalg import read_fpt1, write_fpt1
from .occ import fidelity_metrics
from .qtrain.train import loss_curve_csv, train

EXIT_OK, EXIT_USAGE, EXIT_DIVERGED, EXIT_IO = 0, 1, 2, 3

_AXES = {"tensor": Axis.PER_TENSOR, "row": Axis.PER_ROW, "column": Axis.PER_COLUMN}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _fmt(v: float) -> str:
    if v == float("inf"):
        return "inf"
    return repr(float(v))


def _as_matrix(x):
    if x.ndim == 1:
        return x[None, :]
    if x.ndim != 2:
        raise UsageError(f"expected a 1-D or 2-D tensor, got shape {x.shape}")
    return x


def _load_any(path):
    """Dense matrix from an FPT1 file or the dequantized contents of an FPQ1 file."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == b"FPQ1":
        return dequantize(read_fpq1(path))
    return _as_matrix(read_fpt1(path))


def _write_fidelity_csv(path, fid):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cos_sim", "mse", "snr_db"])
        w.writerow([_fmt(fid["cos_sim"]), _fmt(fid["mse"]), _fmt(fid["snr_db"])])


def cmd_quantize(args):
    x = _as_matrix(read_fpt1(args.input))
    q = quantize_tensor(x, _AXES[args.axis], get_format(args.format))
    out = args.output or os.path.splitext(args.input)[0] + ".fpq"
    with open(out, "wb") as fh:
        fh.write(encode_fpq1(q))
    fid = fidelity_metrics(x, dequantize(q)) if np.any(x) else {"cos_sim": 1.0, "mse": 0.0, "snr_db": float("inf")}
    csv_path = args.csv or os.path.splitext(out)[0] + ".fidelity.csv"
    _write_fidelity_csv(csv_path, fid)
    print(f"wrote {out} ({q.format.name}, {q.axis.name}); snr_db={_fmt(fid['snr_db'])}")
    return EXIT_OK


def cmd_dequantize(args):
    q = read_fpq1(args.input)
    out = args.output or os.path.splitext(args.input)[0] + ".fpt"
    write_fpt1(out, dequantize(q))
    print(f"wrote {out}")
    return EXIT_OK


def cmd_metrics(args):
    x, xh = _load_any(args.original), _load_any(args.approx)
    fid = fidelity_metrics(x, xh)
    print(f"cos_sim={_fmt(fid['cos_sim'])} mse={_fmt(fid['mse'])} snr_db={_fmt(fid['snr_db'])}")
    if args.csv:
        _write_fidelity_csv(args.csv, fid)
    return EXIT_OK


def cmd_analyze(args):
    x = _load_any(args.input)
    edges, counts = analysis.histogram(x, args.bins)
    if args.hist_csv:
        analysis.write_histogram_csv(args.hist_csv, edges, counts)
    print(f"elements={x.size} min={_fmt(x.min())} max={_fmt(x.max())} bins={args.bins}")
    if args.channels or args.channels_csv:
        absmax, flagged = analysis.channel_outlier_stats(x, args.factor)
        if args.channels_csv:
            analysis.write_channels_csv(args.channels_csv, absmax, flagged)
        print("flagged_channels=" + ",".join(str(int(i)) for i in flagged))
    return EXIT_OK


def _speedup_row(shape, convention):
    adj = perfmodel.adjusted_speedup(shape, convention)
    return {"b": shape.b, "s": shape.s, "h": shape.h, "alpha": shape.alpha,
            "ideal_speedup": perfmodel.ideal_speedup(shape), **adj}


def cmd_speedup(args):
    if args.sweep:
        if args.num < 1:
            raise UsageError("--num must be >= 1")
        pts = np.linspace(args.start, args.stop, args.num)
        shapes = []
        for p in pts:
            kw = {"b": args.b, "s": args.s, "h": args.h, "alpha": args.alpha}
            kw[args.sweep] = float(p) if args.sweep == "alpha" else int(round(p))
            shapes.append(perfmodel.LayerShape(**kw))
    else:
        shapes = [perfmodel.LayerShape(args.b, args.s, args.h, args.alpha)]
    rows = [_speedup_row(sh, args.convention) for sh in shapes]
    cols = ["b", "s", "h", "alpha", "ideal_speedup", "speedup",
            "dge_overhead_fraction", "occ_overhead_fraction"]
    print("  ".join(f"{c:>21}" for c in cols))
    for r in rows:
        print("  ".join(f"{r[c]:>21.6g}" if isinstance(r[c], float) else f"{r[c]:>21}" for c in cols))
    if len(rows) == 1:
        r = rows[0]
        print(f"ideal speedup {r['ideal_speedup']:.2f}; adjusted speedup {r['speedup']:.2f}; "
              f"dge overhead {100 * r['dge_overhead_fraction']:.1f}%; "
              f"occ overhead {100 * r['occ_overhead_fraction']:.1f}%")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in rows:
                w.writerow([repr(r[c]) for c in cols])
    return EXIT_OK


def cmd_train(args):
    cfg = load_config(args.config)
    out = args.output or cfg.output
    os.makedirs(out, exist_ok=True)
    dataset = cfg.dataset()
    summary, any_diverged = {}, False
    for mode in cfg.modes:
        result = train(cfg.run_for(mode), dataset, progress=args.progress)
        with open(os.path.join(out, f"loss_{mode}.csv"), "w", newline="") as fh:
            fh.write(loss_curve_csv(result))
        final = result.final_loss()
        summary[mode] = {"final_loss": None if np.isnan(final) else final,
                         "steps_completed": len(result.loss_curve), "diverged": result.diverged}
        any_diverged |= result.diverged
        print(f"{mode}: final_loss={summary[mode]['final_loss']} diverged={result.diverged}")
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return EXIT_DIVERGED if any_diverged else EXIT_OK


def build_parser():
    p = _Parser(prog="fp4sim", description="FP4 quantized-training simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    q = sub.add_parser("quantize", help="FPT1 tensor -> FPQ1 file + fidelity CSV")
    q.add_argument("input")
    q.add_argument("-o", "--output")
    q.add_argument("--format", default="e2m1", choices=["e1m2", "e2m1", "e3m0"])
    q.add_argument("--axis", default="tensor", choices=sorted(_AXES))
    q.add_argument("--csv", help="fidelity CSV path (default: <output>.fidelity.csv)")
    q.set_defaults(func=cmd_quantize)

    d = sub.add_parser("dequantize", help="FPQ1 file -> FPT1 tensor")
    d.add_argument("input")
    d.add_argument("-o", "--output")
    d.set_defaults(func=cmd_dequantize)

    t = sub.add_parser("train", help="run a training recipe")
    t.add_argument("config")
    t.add_argument("-o", "--output", help="output directory (overrides run.output)")
    t.add_argument("--progress", type=int, default=0, help="log every N steps")
    t.set_defaults(func=cmd_train)

    m = sub.add_parser("metrics", help="cos_sim / mse / snr between two tensors")
    m.add_argument("original")
    m.add_argument("approx")
    m.add_argument("--csv")
    m.set_defaults(func=cmd_metrics)

    a = sub.add_parser("analyze", help="histogram and channel outlier statistics")
    a.add_argument("input")
    a.add_argument("--bins", type=int, default=100)
    a.add_argument("--hist-csv")
    a.add_argument("--channels", action="store_true")
    a.add_argument("--channels-csv")
    a.add_argument("--factor", type=float, default=10.0)
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("speedup", help="analytic FP4 speedup model")
    s.add_argument("--b", type=int, default=1)
    s.add_argument("--s", type=int, default=2048)
    s.add_argument("--h", type=int, default=4096)
    s.add_argument("--alpha", type=float, default=0.99)
    s.add_argument("--sweep", choices=["h", "s", "alpha"])
    s.add_argument("--start", type=float)
    s.add_argument("--stop", type=float)
    s.add_argument("--num", type=int, default=10)
    s.add_argument("--convention", default="mac2", choices=sorted(perfmodel.OCC_CONVENTIONS))
    s.add_argument("--csv")
    s.set_defaults(func=cmd_speedup)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "sweep", None) and (args.start is None or args.stop is None):
        print("fp4sim: error: --sweep needs --start and --stop", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"fp4sim: config error: {problem}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, OSError) as exc:
        print(f"fp4sim: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (UsageError, ValueError) as exc:
        print(f"fp4sim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
