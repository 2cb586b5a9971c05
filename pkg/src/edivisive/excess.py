"""Weekly deaths -> week-of-year median baseline -> excess counts and rates.

Input is a delimited table in the HMD Short-Term Mortality Fluctuations
(STMF) layout or any table with an equivalent column mapping.
"""

from __future__ import annotations

import csv
import datetime
import io
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .energy import MultiSeries
from .exceptions import (
    DuplicateDataError,
    InvalidSpanError,
    MissingBaselineError,
    ParseError,
    ZeroMedianError,
)

SEXES = ("female", "male")
SEX_CODES = {"f": "female", "m": "male"}
SEX_PREFIX = {"female": "f", "male": "m"}
AGE_GROUPS = ("0-14", "15-64", "65-74", "75-84", "85+")
AGE_SUFFIX = {"0-14": "0_14", "15-64": "15_64", "65-74": "65_74",
              "75-84": "75_84", "85+": "85p"}
# females by ascending age, then males
GROUPS = tuple((sex, age) for sex in SEXES for age in AGE_GROUPS)

EXCESS_COLUMNS = ("week_label", "sex", "age_group", "actual", "median", "excess", "rate")
GROUPINGS = ("all", "per-age-group", "totals")


def group_label(sex: str, age: str) -> str:
    """Short column label, e.g. ``f_85p``."""
    return f"{SEX_PREFIX[sex]}_{AGE_SUFFIX[age]}"


def week_label(year: int, week: int) -> str:
    return f"{year:04d}-W{week:02d}"


def parse_week_label(label: str) -> Tuple[int, int]:
    try:
        year, week = label.split("-W")
        year, week = int(year), int(week)
        datetime.date.fromisocalendar(year, week, 1)
    except ValueError:
        raise ValueError(f"not an ISO week label (YYYY-Www): {label!r}") from None
    return year, week


def weeks_in_year(year: int) -> int:
    # 28 December always falls in the last ISO week of its year
    return datetime.date(year, 12, 28).isocalendar()[1]


def next_week(year: int, week: int) -> Tuple[int, int]:
    if week < weeks_in_year(year):
        return year, week + 1
    return year + 1, 1


@dataclass(frozen=True)
class WeeklyDeathRecord:
    year: int
    week: int
    sex: str
    age_group: str
    deaths: float

    @property
    def label(self) -> str:
        return week_label(self.year, self.week)


@dataclass(frozen=True)
class ColumnMapping:
    """Header names for the fields read from a weekly-deaths table.

    The defaults match the STMF layout. Rows whose sex code is in
    ``ignored_sexes`` (``b``, both sexes combined) are skipped.
    """

    year: str = "Year"
    week: str = "Week"
    sex: str = "Sex"
    ages: Tuple[Tuple[str, str], ...] = (
        ("0-14", "D0_14"), ("15-64", "D15_64"), ("65-74", "D65_74"),
        ("75-84", "D75_84"), ("85+", "D85p"))
    country: Optional[str] = "CountryCode"
    sex_codes: Tuple[Tuple[str, str], ...] = (("f", "female"), ("m", "male"))
    ignored_sexes: Tuple[str, ...] = ("b",)

    def required(self) -> List[str]:
        return [self.year, self.week, self.sex] + [col for _, col in self.ages]


STMF = ColumnMapping()


def _open_text(source) -> io.TextIOBase:
    if isinstance(source, (str, Path)):
        return open(source, newline="", encoding="utf-8-sig")
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(source.decode("utf-8-sig"), newline="")
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8-sig", newline="")


def parse_weekly_deaths(source, mapping: ColumnMapping = STMF,
                        country: Optional[str] = None,
                        delimiter: str = ",") -> List[WeeklyDeathRecord]:
    """Read weekly death counts into one record per (row, sex, age group).

    ``source`` may be a path, bytes, or a text/binary stream. Lines before
    the header row (the first row naming the year and week columns) are
    skipped, as STMF downloads carry a short preamble. When ``country`` is
    given, rows for other countries are skipped.
    """
    stream = _open_text(source)
    close = isinstance(source, (str, Path))
    try:
        return _parse_rows(csv.reader(stream, delimiter=delimiter), mapping, country)
    finally:
        if close:
            stream.close()


def _parse_rows(reader, mapping: ColumnMapping, country: Optional[str]):
    header = None
    for header_line, row in enumerate(reader, start=1):
        cells = [c.strip() for c in row]
        if mapping.year in cells and mapping.week in cells:
            header = cells
            break
    if header is None:
        return []
    missing = [c for c in mapping.required() if c not in header]
    if missing:
        raise ParseError(f"missing column(s): {', '.join(missing)}", header_line)
    col = {name: header.index(name) for name in mapping.required()}
    country_col = (header.index(mapping.country)
                   if country is not None and mapping.country in header else None)
    if country is not None and country_col is None:
        raise ParseError(f"cannot filter on country: no column {mapping.country!r}",
                         header_line)
    sex_codes = dict(mapping.sex_codes)

    records = []
    seen = {}
    unknown = []
    for line, row in enumerate(reader, start=header_line + 1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) < len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(row)}", line)
        if country_col is not None and row[country_col].strip() != country:
            continue
        code = row[col[mapping.sex]].strip()
        if code in mapping.ignored_sexes:
            continue
        if code not in sex_codes:
            unknown.append(line)
            continue
        sex = sex_codes[code]
        year = _parse_int(row[col[mapping.year]], "year", line)
        week = _parse_int(row[col[mapping.week]], "week", line)
        try:
            datetime.date.fromisocalendar(year, week, 1)
        except ValueError:
            raise ParseError(f"invalid ISO week {week} for year {year}", line) from None
        key = (year, week, sex)
        if key in seen:
            raise DuplicateDataError(
                f"duplicate row for {week_label(year, week)} sex {code} "
                f"(first seen on line {seen[key]})", line)
        seen[key] = line
        for age, name in mapping.ages:
            deaths = _parse_float(row[col[name]], name, line)
            records.append(WeeklyDeathRecord(year, week, sex, age, deaths))
    if unknown:
        shown = ", ".join(map(str, unknown[:10]))
        raise ParseError(f"unknown sex code on line(s) {shown}"
                         + (" ..." if len(unknown) > 10 else ""))
    return records


def _parse_int(text: str, what: str, line: int) -> int:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"unparsable {what} {text!r}", line) from None
    if not value.is_integer():
        raise ParseError(f"non-integer {what} {text!r}", line)
    return int(value)


def _parse_float(text: str, what: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"unparsable {what} {text!r}", line) from None
    if not math.isfinite(value) or value < 0:
        raise ParseError(f"{what} must be finite and non-negative, got {text!r}", line)
    return value


@dataclass(frozen=True)
class BaselineTable:
    """Median weekly deaths per (sex, age group, week 1..52)."""

    medians: Dict[Tuple[str, str, int], float]
    baseline_years: Tuple[int, ...]

    def median(self, sex: str, age: str, week: int) -> float:
        # week 53 borrows the week-52 median
        return self.medians[(sex, age, min(week, 52))]


def build_baseline(records: Iterable[WeeklyDeathRecord],
                   baseline_years: Iterable[int] = range(2015, 2020)) -> BaselineTable:
    years = tuple(sorted(set(baseline_years)))
    cells: Dict[Tuple[str, str, int], List[float]] = {}
    for rec in records:
        if rec.year in years and rec.week <= 52:
            cells.setdefault((rec.sex, rec.age_group, rec.week), []).append(rec.deaths)
    medians = {}
    for sex, age in GROUPS:
        for week in range(1, 53):
            values = cells.get((sex, age, week))
            if not values:
                raise MissingBaselineError(
                    f"no baseline data for {sex} {age} week {week} in years "
                    f"{years[0]}-{years[-1]}" if years else "no baseline years given")
            medians[(sex, age, week)] = float(statistics.median(values))
    return BaselineTable(medians, years)


@dataclass(frozen=True)
class ExcessSeries:
    """Per-group weekly actual, median, excess and rate, as T x 10 arrays.

    Columns follow :data:`GROUPS`. ``rate`` holds NaN where the median is
    zero and missing rates were requested.
    """

    week_labels: Tuple[str, ...]
    actual: np.ndarray
    median: np.ndarray
    excess: np.ndarray
    rate: np.ndarray
    groups: Tuple[Tuple[str, str], ...] = GROUPS
    week53_fallback: Tuple[str, ...] = field(default=())

    @property
    def n_weeks(self) -> int:
        return len(self.week_labels)

    @property
    def total_actual(self) -> np.ndarray:
        return self.actual.sum(axis=1)

    @property
    def total_median(self) -> np.ndarray:
        return self.median.sum(axis=1)

    @property
    def total_excess(self) -> np.ndarray:
        return self.excess.sum(axis=1)

    @property
    def total_rate(self) -> np.ndarray:
        return _rate(self.total_excess, self.total_median)

    def column(self, sex: str, age: str) -> int:
        return self.groups.index((sex, age))

    def index_of(self, label: str) -> int:
        try:
            return self.week_labels.index(label)
        except ValueError:
            raise InvalidSpanError(f"week {label} not in the excess series "
                                   f"({self.week_labels[0]}..{self.week_labels[-1]})") from None


def _rate(excess, median):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(median > 0, excess / np.where(median > 0, median, 1.0), np.nan)


def _week_span(start: Tuple[int, int], end: Tuple[int, int]) -> List[Tuple[int, int]]:
    if end < start:
        raise InvalidSpanError(f"span end {week_label(*end)} precedes start {week_label(*start)}")
    weeks = [start]
    while weeks[-1] != end:
        weeks.append(next_week(*weeks[-1]))
    return weeks


def compute_excess(records: Sequence[WeeklyDeathRecord], baseline: BaselineTable,
                   start: Optional[str] = None, end: Optional[str] = None,
                   null_rate: bool = False) -> ExcessSeries:
    """Excess deaths and rates for every week from ``start`` to ``end``.

    Both bounds default to the extent of ``records``. A zero median raises
    :class:`ZeroMedianError` unless ``null_rate`` is set, in which case the
    rate is NaN.
    """
    table = {(r.year, r.week, r.sex, r.age_group): r.deaths for r in records}
    if not table:
        raise InvalidSpanError("no records")
    present = sorted({(y, w) for y, w, _, _ in table})
    first = parse_week_label(start) if start else present[0]
    last = parse_week_label(end) if end else present[-1]
    weeks = _week_span(first, last)

    actual = np.empty((len(weeks), len(GROUPS)))
    median = np.empty_like(actual)
    for i, (year, week) in enumerate(weeks):
        for j, (sex, age) in enumerate(GROUPS):
            try:
                actual[i, j] = table[(year, week, sex, age)]
            except KeyError:
                raise InvalidSpanError(
                    f"no data for {week_label(year, week)} {sex} {age}") from None
            m = baseline.median(sex, age, week)
            if m == 0 and not null_rate:
                raise ZeroMedianError(
                    f"zero baseline median for {sex} {age} week {min(week, 52)} "
                    f"(needed by {week_label(year, week)})")
            median[i, j] = m

    excess = actual - median
    labels = tuple(week_label(y, w) for y, w in weeks)
    fallback = tuple(week_label(y, w) for y, w in weeks if w == 53)
    return ExcessSeries(labels, actual, median, excess, _rate(excess, median),
                        week53_fallback=fallback)


def build_detection_series(excess: ExcessSeries, start: Optional[str] = None,
                           end: Optional[str] = None, grouping: str = "all",
                           age_group: Optional[str] = None) -> MultiSeries:
    """Excess-rate matrix for the change-point detector.

    ``all`` gives ten columns (females by ascending age, then males);
    ``per-age-group`` the (female, male) pair for ``age_group``; ``totals``
    one column, the summed excess over the summed median, restricted to
    ``age_group`` when given.
    """
    i0 = excess.index_of(start) if start else 0
    i1 = excess.index_of(end) + 1 if end else excess.n_weeks
    if i1 <= i0:
        raise InvalidSpanError(f"empty span {start}..{end}")
    labels = excess.week_labels[i0:i1]
    _check_contiguous(labels)

    if grouping == "all":
        cols = list(range(len(excess.groups)))
        values = excess.rate[i0:i1, cols]
        names = [group_label(*g) for g in excess.groups]
    elif grouping == "per-age-group":
        if age_group not in AGE_GROUPS:
            raise ValueError(f"per-age-group needs one of {AGE_GROUPS}, got {age_group!r}")
        cols = [excess.column(sex, age_group) for sex in SEXES]
        values = excess.rate[i0:i1, cols]
        names = [group_label(sex, age_group) for sex in SEXES]
    elif grouping == "totals":
        if age_group is None:
            cols = list(range(len(excess.groups)))
            names = ["total"]
        else:
            if age_group not in AGE_GROUPS:
                raise ValueError(f"unknown age group {age_group!r}")
            cols = [excess.column(sex, age_group) for sex in SEXES]
            names = [f"total_{AGE_SUFFIX[age_group]}"]
        values = _rate(excess.excess[i0:i1, cols].sum(axis=1),
                       excess.median[i0:i1, cols].sum(axis=1))[:, None]
    else:
        raise ValueError(f"unknown grouping {grouping!r}; expected one of {GROUPINGS}")
    return MultiSeries(values, labels, tuple(names))


def _check_contiguous(labels: Sequence[str]):
    prev = None
    for label in labels:
        cur = parse_week_label(label)
        if prev is not None and cur != next_week(*prev):
            raise InvalidSpanError(f"gap in weeks between {week_label(*prev)} and {label}")
        prev = cur


def _fmt(x: float) -> str:
    return "" if math.isnan(x) else repr(float(x))


def write_excess_csv(excess: ExcessSeries, dest) -> None:
    """Write one row per group-week, chronological then in group order."""
    close = isinstance(dest, (str, Path))
    stream = open(dest, "w", newline="", encoding="utf-8") if close else dest
    try:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(EXCESS_COLUMNS)
        for i, label in enumerate(excess.week_labels):
            for j, (sex, age) in enumerate(excess.groups):
                writer.writerow([label, sex, age, _fmt(excess.actual[i, j]),
                                 _fmt(excess.median[i, j]), _fmt(excess.excess[i, j]),
                                 _fmt(excess.rate[i, j])])
    finally:
        if close:
            stream.close()


def excess_to_csv(excess: ExcessSeries) -> str:
    buf = io.StringIO()
    write_excess_csv(excess, buf)
    return buf.getvalue()


def read_excess_csv(source) -> ExcessSeries:
    stream = _open_text(source)
    close = isinstance(source, (str, Path))
    try:
        reader = csv.reader(stream)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != EXCESS_COLUMNS:
            raise ParseError(f"expected header {','.join(EXCESS_COLUMNS)}", 1)
        rows: Dict[str, Dict[Tuple[str, str], List[float]]] = {}
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(EXCESS_COLUMNS):
                raise ParseError(f"expected {len(EXCESS_COLUMNS)} fields", line)
            label, sex, age = row[:3]
            if (sex, age) not in GROUPS:
                raise ParseError(f"unknown group {sex}/{age}", line)
            try:
                parse_week_label(label)
                nums = [float(v) if v != "" else math.nan for v in row[3:]]
            except ValueError as exc:
                raise ParseError(str(exc), line) from None
            week = rows.setdefault(label, {})
            if (sex, age) in week:
                raise DuplicateDataError(f"duplicate row for {label} {sex} {age}", line)
            week[(sex, age)] = nums
    finally:
        if close:
            stream.close()

    labels = tuple(rows)
    _check_contiguous(labels)
    arr = np.empty((4, len(labels), len(GROUPS)))
    for i, label in enumerate(labels):
        for j, group in enumerate(GROUPS):
            if group not in rows[label]:
                raise InvalidSpanError(f"no row for {label} {group[0]} {group[1]}")
            arr[:, i, j] = rows[label][group]
    fallback = tuple(l for l in labels if l.endswith("W53"))
    return ExcessSeries(labels, arr[0], arr[1], arr[2], arr[3], week53_fallback=fallback)


def load_excess(path: Union[str, Path], country: Optional[str] = None,
                baseline_years: Iterable[int] = range(2015, 2020),
                null_rate: bool = False) -> ExcessSeries:
    """Raw STMF-style file to excess series in one call."""
    records = parse_weekly_deaths(path, country=country)
    baseline = build_baseline(records, baseline_years)
    return compute_excess(records, baseline, null_rate=null_rate)
