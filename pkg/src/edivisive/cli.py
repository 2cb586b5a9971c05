"""Command-line interface.

Exit codes: 0 success, 2 usage or unreadable input, 3 series too short to
split, 4 report and series do not belong together.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .divisive import ChangePointReport, DetectParams, detect
from .energy import EnergyParams, MultiSeries
from .exceptions import (
    InvalidInputError,
    InvalidSpanError,
    MissingBaselineError,
    ParseError,
    ZeroMedianError,
)
from .excess import (
    AGE_GROUPS,
    AGE_SUFFIX,
    EXCESS_COLUMNS,
    GROUPINGS,
    build_baseline,
    build_detection_series,
    compute_excess,
    parse_weekly_deaths,
    read_excess_csv,
    write_excess_csv,
)
from .synthetic import SegmentSpec, generate

EXIT_OK, EXIT_USAGE, EXIT_DEGENERATE, EXIT_MISMATCH = 0, 2, 3, 4

INPUT_ERRORS = (OSError, ParseError, InvalidInputError, InvalidSpanError,
                MissingBaselineError, ZeroMedianError, ValueError)


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _year_range(text: str) -> List[int]:
    try:
        if "-" in text:
            lo, hi = (int(v) for v in text.split("-"))
            years = list(range(lo, hi + 1))
        else:
            years = [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected YYYY-YYYY or a comma list, got {text!r}")
    if not years:
        raise argparse.ArgumentTypeError(f"empty year range {text!r}")
    return years


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _segment(text: str) -> tuple:
    # LENGTH:MEAN[:SCALE]
    parts = text.split(":")
    try:
        if len(parts) not in (2, 3):
            raise ValueError
        length, mean = int(parts[0]), float(parts[1])
        scale = float(parts[2]) if len(parts) == 3 else 1.0
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LENGTH:MEAN[:SCALE], got {text!r}")
    return length, mean, scale


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edivisive",
        description="Energy-distance change points in weekly excess mortality.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_raw_options(p):
        p.add_argument("--country", help="keep only rows with this country code")
        p.add_argument("--baseline-years", type=_year_range, default=list(range(2015, 2020)),
                       metavar="YYYY-YYYY", help="years whose week-of-year medians form "
                       "the baseline (default 2015-2019)")
        p.add_argument("--null-rate", action="store_true",
                       help="emit an empty rate instead of failing on a zero median")

    def add_output(p, formats, default):
        p.add_argument("--format", choices=formats, default=default)
        p.add_argument("--output", "-o", help="output path (default: stdout)")

    p = sub.add_parser("excess", help="weekly deaths table -> excess deaths CSV")
    p.add_argument("input", help="STMF-style weekly deaths table")
    add_raw_options(p)
    p.add_argument("--start", help="first week, YYYY-Www (default: first in data)")
    p.add_argument("--end", help="last week, YYYY-Www (default: last in data)")
    add_output(p, ("csv", "json"), "csv")
    p.set_defaults(func=cmd_excess)

    p = sub.add_parser("detect", help="run change-point detection")
    p.add_argument("input", help="excess CSV, wide series CSV, or raw table with --from-raw")
    p.add_argument("--from-raw", action="store_true",
                   help="input is a weekly deaths table; compute excess first")
    add_raw_options(p)
    p.add_argument("--start", help="first week of the detection series")
    p.add_argument("--end", help="last week of the detection series")
    p.add_argument("--grouping", choices=GROUPINGS, default="all")
    p.add_argument("--age-group", choices=AGE_GROUPS,
                   help="restrict per-age-group or totals to one age group")
    p.add_argument("--per-age-group", action="store_true",
                   help="shorthand for --grouping per-age-group")
    p.add_argument("--alpha", type=float, default=1.0, help="distance exponent in (0, 2]")
    p.add_argument("--min-size", type=int, default=2, help="minimum cluster length")
    p.add_argument("--permutations", type=_positive_int, default=499)
    p.add_argument("--sig", type=float, default=0.05, help="significance level")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-points", type=_positive_int)
    add_output(p, ("json", "csv"), "json")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("report", help="tidy per-week cluster table for plotting")
    p.add_argument("report", help="JSON written by `detect`")
    p.add_argument("series", help="the excess (or wide series) CSV the report came from")
    p.add_argument("--output", "-o",
                   help="output file; a directory for per-age-group reports")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("simulate", help="piecewise synthetic series with known change points")
    p.add_argument("--segment", type=_segment, action="append", required=True,
                   metavar="LENGTH:MEAN[:SCALE]", help="repeat once per segment")
    p.add_argument("--dim", type=_positive_int, default=1)
    p.add_argument("--distribution", choices=("gaussian", "heavy_tailed"), default="gaussian")
    p.add_argument("--df", type=float, default=5.0, help="t degrees of freedom if heavy-tailed")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", "-o", required=True,
                   help="series CSV path; truth goes to <stem>.truth.json beside it")
    p.set_defaults(func=cmd_simulate)
    return parser


def _emit(text: str, output: Optional[str]):
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _load_raw_excess(args):
    records = parse_weekly_deaths(args.input, country=args.country)
    baseline = build_baseline(records, args.baseline_years)
    return compute_excess(records, baseline, null_rate=args.null_rate)


# -- excess -----------------------------------------------------------------

def cmd_excess(args) -> int:
    records = parse_weekly_deaths(args.input, country=args.country)
    baseline = build_baseline(records, args.baseline_years)
    excess = compute_excess(records, baseline, args.start, args.end, args.null_rate)
    if args.format == "csv":
        buf = io.StringIO()
        write_excess_csv(excess, buf)
        _emit(buf.getvalue(), args.output)
    else:
        rows = []
        for i, label in enumerate(excess.week_labels):
            for j, (sex, age) in enumerate(excess.groups):
                rate = excess.rate[i, j]
                rows.append({"week_label": label, "sex": sex, "age_group": age,
                             "actual": excess.actual[i, j], "median": excess.median[i, j],
                             "excess": excess.excess[i, j],
                             "rate": None if math.isnan(rate) else rate})
        meta = {"baseline_years": list(baseline.baseline_years),
                "week53_baselined_on_week52": list(excess.week53_fallback)}
        _emit(_dump_json({"metadata": meta, "rows": rows}), args.output)
    return EXIT_OK


# -- series input -----------------------------------------------------------

def read_wide_series(path) -> MultiSeries:
    """CSV with a time-label column followed by one column per dimension."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or len(header) < 2:
            raise ParseError("series CSV needs a time column and at least one value column", 1)
        labels, rows = [], []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(row)}", line)
            labels.append(row[0])
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError:
                raise ParseError("unparsable number", line) from None
    if not rows:
        raise ParseError("series CSV has no data rows")
    return MultiSeries(np.array(rows), tuple(labels), tuple(header[1:]))


def write_wide_series(series: MultiSeries, dest):
    writer = csv.writer(dest, lineterminator="\n")
    writer.writerow(["time"] + list(series.dim_labels))
    for label, row in zip(series.time_labels, series.values):
        writer.writerow([label] + [repr(float(v)) for v in row])


def _is_excess_csv(path) -> bool:
    with open(path, newline="", encoding="utf-8-sig") as fh:
        header = next(csv.reader(fh), [])
    return tuple(h.strip() for h in header) == EXCESS_COLUMNS


def _series_jobs(source, meta) -> list:
    """(key, series, series-metadata) for every detection run requested."""
    grouping, age = meta["grouping"], meta["age_group"]
    if isinstance(source, MultiSeries):
        series = source
        if meta["start"] or meta["end"]:
            labels = series.time_labels
            i0 = labels.index(meta["start"]) if meta["start"] else 0
            i1 = labels.index(meta["end"]) + 1 if meta["end"] else len(labels)
            series = series.slice(i0, i1)
        return [(None, series, dict(meta, dim_labels=list(series.dim_labels)))]
    if grouping == "per-age-group" and age is None:
        jobs = []
        for group in AGE_GROUPS:
            s = build_detection_series(source, meta["start"], meta["end"], grouping, group)
            jobs.append((group, s, dict(meta, age_group=group,
                                        dim_labels=list(s.dim_labels))))
        return jobs
    s = build_detection_series(source, meta["start"], meta["end"], grouping, age)
    return [(None, s, dict(meta, dim_labels=list(s.dim_labels)))]


def _load_source(args):
    if getattr(args, "from_raw", False):
        return _load_raw_excess(args), "raw"
    if _is_excess_csv(args.input):
        return read_excess_csv(args.input), "excess"
    return read_wide_series(args.input), "series"


# -- detect -----------------------------------------------------------------

def cmd_detect(args) -> int:
    if args.per_age_group:
        args.grouping = "per-age-group"
    try:
        params = DetectParams(EnergyParams(args.alpha, args.min_size), args.permutations,
                              args.sig, args.seed, args.max_points)
    except InvalidInputError as exc:
        raise CliError(str(exc))

    source, kind = _load_source(args)
    meta = {"input_kind": kind, "grouping": args.grouping if kind != "series" else None,
            "age_group": args.age_group, "start": args.start, "end": args.end}
    if kind == "series":
        for label in (args.start, args.end):
            if label and label not in source.time_labels:
                raise CliError(f"time label {label!r} not in series")
    jobs = _series_jobs(source, meta)

    for _, series, _ in jobs:
        if series.n_time < 2 * params.energy.min_segment:
            raise CliError(f"series too short: T={series.n_time} < 2 x min-size "
                           f"{params.energy.min_segment}", EXIT_DEGENERATE)

    results = [(key, detect(series, params), m) for key, series, m in jobs]

    if args.format == "json":
        if len(results) == 1 and results[0][0] is None:
            _, report, series_meta = results[0]
            doc = dict(report.to_dict(), series=series_meta)
        else:
            doc = {"grouping": "per-age-group",
                   "reports": {key: dict(rep.to_dict(), series=m) for key, rep, m in results}}
        _emit(_dump_json(doc), args.output)
    else:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["group", "index", "week_label", "q_value", "p_value", "iteration"])
        for key, report, _ in results:
            for cp in report.points:
                writer.writerow([key or "all", cp.index, cp.label, repr(cp.q_value),
                                 repr(cp.p_value), cp.iteration])
        _emit(buf.getvalue(), args.output)
    return EXIT_OK


# -- report -----------------------------------------------------------------

def _tidy_rows(report: ChangePointReport, series: MultiSeries) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["week", "group", "rate", "cluster_id"])
    ids = report.cluster_ids()
    for j, group in enumerate(series.dim_labels):
        for i, label in enumerate(series.time_labels):
            writer.writerow([label, group, repr(float(series.values[i, j])), ids[i]])
    return buf.getvalue()


def _check_pair(report: ChangePointReport, series: MultiSeries, dims):
    if report.n_time != series.n_time or tuple(report.time_labels) != series.time_labels:
        raise CliError("report and series cover different weeks", EXIT_MISMATCH)
    if dims is not None and list(dims) != list(series.dim_labels):
        raise CliError("report and series have different columns", EXIT_MISMATCH)


def cmd_report(args) -> int:
    try:
        doc = json.loads(Path(args.report).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CliError(f"{args.report}: not valid JSON ({exc})")

    if _is_excess_csv(args.series):
        source = read_excess_csv(args.series)
    else:
        source = read_wide_series(args.series)

    if "reports" in doc:
        entries = list(doc["reports"].items())
        if not args.output:
            raise CliError("per-age-group reports need --output DIRECTORY")
    else:
        entries = [(None, doc)]

    outputs = []
    for key, entry in entries:
        try:
            report = ChangePointReport.from_dict(entry)
            meta = entry.get("series") or {}
        except (KeyError, TypeError, ValueError) as exc:
            raise CliError(f"{args.report}: malformed report ({exc})")
        if isinstance(source, MultiSeries):
            if meta.get("input_kind") not in (None, "series"):
                raise CliError("report was made from an excess table, not a series CSV",
                               EXIT_MISMATCH)
            series = source
            if report.time_labels and report.time_labels[0] in series.time_labels:
                i0 = series.time_labels.index(report.time_labels[0])
                series = series.slice(i0, min(i0 + report.n_time, series.n_time))
        else:
            if meta.get("input_kind") == "series":
                raise CliError("report was made from a series CSV, not an excess table",
                               EXIT_MISMATCH)
            start, end = report.time_labels[0], report.time_labels[-1]
            try:
                series = build_detection_series(source, start, end,
                                                meta.get("grouping") or "all",
                                                meta.get("age_group"))
            except InvalidSpanError as exc:
                raise CliError(f"report does not match series: {exc}", EXIT_MISMATCH)
        _check_pair(report, series, meta.get("dim_labels"))
        outputs.append((key, _tidy_rows(report, series)))

    if len(outputs) == 1 and outputs[0][0] is None:
        _emit(outputs[0][1], args.output)
    else:
        outdir = Path(args.output)
        outdir.mkdir(parents=True, exist_ok=True)
        for key, text in outputs:
            (outdir / f"clusters_{AGE_SUFFIX.get(key, key)}.csv").write_text(
                text, encoding="utf-8")
    return EXIT_OK


# -- simulate ---------------------------------------------------------------

def truth_path(output: str) -> Path:
    path = Path(output)
    return path.with_name(path.stem + ".truth.json")


def cmd_simulate(args) -> int:
    specs = [SegmentSpec(length, (mean,) * args.dim, scale, args.distribution, args.df)
             for length, mean, scale in args.segment]
    truth = generate(specs, args.seed)
    with open(args.output, "w", newline="", encoding="utf-8") as fh:
        write_wide_series(truth.series, fh)
    sidecar = {"seed": args.seed, "n_time": truth.series.n_time, "dim": args.dim,
               "distribution": args.distribution,
               "segments": [{"length": s.length, "mean": s.mean[0], "scale": s.scale}
                            for s in specs],
               "change_points": list(truth.change_points)}
    truth_path(args.output).write_text(_dump_json(sidecar), encoding="utf-8")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"edivisive: error: {exc}", file=sys.stderr)
        return exc.code
    except INPUT_ERRORS as exc:
        print(f"edivisive: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
