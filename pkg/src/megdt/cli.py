"""Command-line front end: ``megdt run|sweep|compare``.

Exit codes: 0 success, 2 configuration error, 3 runtime error.  Errors are
reported on stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path
from typing import Sequence

from .config import load_scenario
from .errors import InvalidConfigError
from .simkit import (
    ComparisonRow,
    RunRecord,
    aggregate,
    compare_schemes,
    crossover_snr,
    mse_curves,
    run_scenario,
    sweep_snr,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
OUT_DIR_ENV = "MEGDT_OUT_DIR"

CSV_HEADER = (
    "scenario", "scheme", "mechanism", "snr_db", "rep", "payload_bits_ul", "payload_bits_dl",
    "t_tx_s", "t_compute_s", "t_e2e_s", "mse", "psnr_db", "seed",
)
COMPARE_HEADER = ("scheme", "snr_db", "repetitions", "t_tx_s", "t_compute_s", "t_e2e_s", "mse", "psnr_db")


def fmt(x: float) -> str:
    s = f"{x:.6g}"
    return "0" if s == "-0" else s


def _cell(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return fmt(v)
    return str(v)


def _csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def records_csv(records: Sequence[RunRecord]) -> str:
    return _csv(CSV_HEADER, [[getattr(r, k) for k in CSV_HEADER] for r in records])


def comparison_csv(rows: Sequence[ComparisonRow]) -> str:
    return _csv(COMPARE_HEADER, [[getattr(r, k) for k in COMPARE_HEADER] for r in rows])


def comparison_table(rows: Sequence[ComparisonRow]) -> str:
    cells = [list(COMPARE_HEADER)] + [[_cell(getattr(r, k)) for k in COMPARE_HEADER] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(COMPARE_HEADER))]
    lines = []
    for n, row in enumerate(cells):
        lines.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths))))
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(line.rstrip() for line in lines) + "\n"


def sweep_summary(records: Sequence[RunRecord]) -> dict:
    rows = aggregate(records)
    x = crossover_snr(rows)
    return {
        "scenario": records[0].scenario if records else None,
        "crossover_snr_db": x,
        "mse_curves": {k: [[snr, err] for snr, err in v] for k, v in mse_curves(rows).items()},
    }


def _default_out(name: str) -> Path:
    return Path(os.environ.get(OUT_DIR_ENV, ".")) / name


def _write(path: Path, text: str) -> None:
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="")


def _scenario(args):
    return load_scenario(args.config, args.overrides, args.seed)


def cmd_run(args) -> int:
    s = _scenario(args)
    out = Path(args.out) if args.out else _default_out(f"{s.name}_run.csv")
    _write(out, records_csv(run_scenario(s, args.parallel)))
    return EXIT_OK


def cmd_sweep(args) -> int:
    s = _scenario(args)
    records = sweep_snr(s, args.from_db, args.to_db, args.step_db, args.parallel)
    out = Path(args.out) if args.out else _default_out(f"{s.name}_sweep.csv")
    _write(out, records_csv(records))
    if args.summary:
        _write(Path(args.summary), json.dumps(sweep_summary(records), indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_compare(args) -> int:
    s = _scenario(args)
    rows = compare_schemes(s, args.parallel)
    out = Path(args.out) if args.out else _default_out(f"{s.name}_compare.csv")
    _write(out, comparison_csv(rows))
    sys.stdout.write(comparison_table(rows))
    return EXIT_OK


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default="case_study",
                        help="config file, or the name of a bundled config (default: case_study)")
    common.add_argument("--out", help=f"output CSV (default: ${OUT_DIR_ENV} or the working directory)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value; bare keys address the scenario section")
    common.add_argument("--seed", type=_u64, help="master seed (overrides scenario.seed)")
    common.add_argument("--parallel", type=_positive_int, default=1, metavar="N",
                        help="worker threads for sweep points")

    p = argparse.ArgumentParser(prog="megdt", description="Mobile edge generation transport simulator.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run the scenario's SNR list").set_defaults(func=cmd_run)
    sw = sub.add_parser("sweep", parents=[common], help="run an inclusive SNR grid")
    sw.add_argument("--from", dest="from_db", type=float, default=-10.0)
    sw.add_argument("--to", dest="to_db", type=float, default=10.0)
    sw.add_argument("--step", dest="step_db", type=float, default=1.0)
    sw.add_argument("--summary", help="write a JSON summary with the crossover SNR")
    sw.set_defaults(func=cmd_sweep)
    sub.add_parser("compare", parents=[common], help="per-scheme means as a table and CSV").set_defaults(
        func=cmd_compare)
    return p


def _report(kind: str, exc: BaseException, path: str | None = None) -> None:
    doc = {"error": kind, "message": str(exc)}
    if path:
        doc["path"] = path
    sys.stderr.write(json.dumps(doc, sort_keys=True) + "\n")


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvalidConfigError as exc:
        _report("config", exc, exc.path)
        return EXIT_CONFIG
    except OSError as exc:
        _report("io", exc, exc.filename and str(exc.filename))
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - surfaced as a machine-readable report
        _report("runtime", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
