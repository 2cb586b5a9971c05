import csv
import io
import statistics

import numpy as np
import pytest

from edivisive.exceptions import (
    DuplicateDataError,
    InvalidSpanError,
    MissingBaselineError,
    ParseError,
    ZeroMedianError,
)
from edivisive.excess import (
    AGE_GROUPS,
    GROUPS,
    BaselineTable,
    ColumnMapping,
    WeeklyDeathRecord,
    build_baseline,
    build_detection_series,
    compute_excess,
    excess_to_csv,
    group_label,
    next_week,
    parse_week_label,
    parse_weekly_deaths,
    read_excess_csv,
    weeks_in_year,
)

HEADER = "CountryCode,Year,Week,Sex,D0_14,D15_64,D65_74,D75_84,D85p,DTotal\n"


def table(*rows):
    return (HEADER + "".join(r + "\n" for r in rows)).encode()


class TestParse:
    def test_stmf_row(self):
        recs = parse_weekly_deaths(table("BEL,2020,15,f,12,190,180,320,560,1262"))
        assert [(r.year, r.week, r.sex, r.age_group, r.deaths) for r in recs] == [
            (2020, 15, "female", "0-14", 12.0), (2020, 15, "female", "15-64", 190.0),
            (2020, 15, "female", "65-74", 180.0), (2020, 15, "female", "75-84", 320.0),
            (2020, 15, "female", "85+", 560.0)]

    def test_week_54(self):
        with pytest.raises(ParseError, match="line 3"):
            parse_weekly_deaths(table("BEL,2020,15,f,1,1,1,1,1,5", "BEL,2020,54,f,1,1,1,1,1,5"))

    def test_week_53_needs_long_year(self):
        assert parse_weekly_deaths(table("BEL,2015,53,m,1,1,1,1,1,5"))
        with pytest.raises(ParseError, match="line 2"):
            parse_weekly_deaths(table("BEL,2019,53,m,1,1,1,1,1,5"))

    def test_empty(self):
        assert parse_weekly_deaths(b"") == []
        assert parse_weekly_deaths(HEADER.encode()) == []

    def test_missing_column(self):
        with pytest.raises(ParseError, match="D85p"):
            parse_weekly_deaths(b"Year,Week,Sex,D0_14,D15_64,D65_74,D75_84\n2020,1,f,1,1,1,1\n")

    @pytest.mark.parametrize("row", ["BEL,2020,1,f,1,x,1,1,1,5", "BEL,2020,1,f,1,-2,1,1,1,5",
                                     "BEL,twenty,1,f,1,1,1,1,1,5", "BEL,2020,1,f,1,nan,1,1,1,5"])
    def test_bad_numbers(self, row):
        with pytest.raises(ParseError, match="line 2"):
            parse_weekly_deaths(table(row))

    def test_fractional_deaths(self):
        recs = parse_weekly_deaths(table("BEL,2020,1,m,0.5,1,1,1,1,4.5"))
        assert recs[0].deaths == 0.5

    def test_duplicate(self):
        with pytest.raises(DuplicateDataError, match="line 3"):
            parse_weekly_deaths(table("BEL,2020,1,f,1,1,1,1,1,5", "BEL,2020,1,f,2,2,2,2,2,10"))

    def test_both_sexes_ignored(self):
        recs = parse_weekly_deaths(table("BEL,2020,1,b,2,2,2,2,2,10", "BEL,2020,1,m,1,1,1,1,1,5"))
        assert {r.sex for r in recs} == {"male"}

    def test_unknown_sex_rows_listed(self):
        with pytest.raises(ParseError, match="line.* 2, 4"):
            parse_weekly_deaths(table("BEL,2020,1,x,1,1,1,1,1,5", "BEL,2020,1,m,1,1,1,1,1,5",
                                      "BEL,2020,2,u,1,1,1,1,1,5"))

    def test_country_filter(self):
        data = table("BEL,2020,1,f,1,1,1,1,1,5", "FRATNP,2020,1,f,9,9,9,9,9,45")
        assert {r.deaths for r in parse_weekly_deaths(data, country="BEL")} == {1.0}
        with pytest.raises(DuplicateDataError):
            parse_weekly_deaths(data)

    def test_preamble_skipped(self):
        data = b"Some title line\n\n" + table("BEL,2020,1,f,1,1,1,1,1,5")
        recs = parse_weekly_deaths(data)
        assert len(recs) == 5

    def test_custom_mapping(self):
        mapping = ColumnMapping(year="yr", week="wk", sex="g",
                                ages=tuple((a, f"a{i}") for i, a in enumerate(AGE_GROUPS)),
                                country=None, sex_codes=(("F", "female"), ("M", "male")))
        src = io.StringIO("yr;wk;g;a0;a1;a2;a3;a4\n2019;7;M;1;2;3;4;5\n")
        recs = parse_weekly_deaths(src, mapping, delimiter=";")
        assert [r.deaths for r in recs] == [1, 2, 3, 4, 5]
        assert recs[0].sex == "male"

    def test_path_and_binary_stream(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_bytes(table("BEL,2020,1,f,1,1,1,1,1,5"))
        assert parse_weekly_deaths(p) == parse_weekly_deaths(str(p))
        with open(p, "rb") as fh:
            assert parse_weekly_deaths(fh) == parse_weekly_deaths(p)


class TestWeeks:
    @pytest.mark.parametrize("year,n", [(2015, 53), (2016, 52), (2019, 52), (2020, 53)])
    def test_weeks_in_year(self, year, n):
        assert weeks_in_year(year) == n

    def test_next_week(self):
        assert next_week(2019, 52) == (2020, 1)
        assert next_week(2020, 52) == (2020, 53)
        assert next_week(2020, 53) == (2021, 1)

    def test_labels(self):
        assert parse_week_label("2019-W27") == (2019, 27)
        for bad in ("2019W27", "2019-W54", "2019-W53", "abc"):
            with pytest.raises(ValueError):
                parse_week_label(bad)


def records_for(values_by_year, sex="female", age="85+", week=10):
    return [WeeklyDeathRecord(y, week, sex, age, v) for y, v in values_by_year.items()]


def full_records(years, value=100.0, weeks=None):
    out = []
    for y in years:
        for w in range(1, (weeks or weeks_in_year(y)) + 1):
            for sex, age in GROUPS:
                out.append(WeeklyDeathRecord(y, w, sex, age, value))
    return out


class TestBaseline:
    def test_odd_median(self):
        recs = full_records(range(2015, 2020))
        recs = [r for r in recs if not (r.week == 10 and r.sex == "female" and r.age_group == "85+")]
        recs += records_for({2015: 100, 2016: 102, 2017: 98, 2018: 101, 2019: 99})
        assert build_baseline(recs).median("female", "85+", 10) == 100

    def test_even_median(self):
        recs = full_records(range(2015, 2019))
        recs = [r for r in recs if not (r.week == 10 and r.sex == "female" and r.age_group == "85+")]
        recs += records_for({2015: 100, 2016: 102, 2017: 98, 2018: 101})
        base = build_baseline(recs, range(2015, 2019))
        assert base.median("female", "85+", 10) == 100.5

    def test_table_shape(self):
        base = build_baseline(full_records(range(2015, 2020)))
        assert len(base.medians) == 52 * 10
        assert base.baseline_years == (2015, 2016, 2017, 2018, 2019)

    def test_week53_uses_week52(self):
        recs = full_records(range(2015, 2020))
        base = build_baseline(recs)
        assert base.median("male", "0-14", 53) == base.median("male", "0-14", 52)

    def test_missing_cell(self):
        recs = [r for r in full_records(range(2015, 2020))
                if not (r.week == 7 and r.sex == "male" and r.age_group == "15-64")]
        with pytest.raises(MissingBaselineError, match="male 15-64 week 7"):
            build_baseline(recs)

    def test_other_years_ignored(self):
        recs = full_records(range(2015, 2020)) + full_records([2020], value=1e6, weeks=20)
        assert build_baseline(recs).median("female", "0-14", 3) == 100.0


def tiny_baseline(value):
    return BaselineTable({(s, a, w): value for s, a in GROUPS for w in range(1, 53)}, (2015,))


class TestComputeExcess:
    def test_definition(self):
        recs = [WeeklyDeathRecord(2020, 5, s, a, 130.0) for s, a in GROUPS]
        ex = compute_excess(recs, tiny_baseline(100.0))
        assert ex.week_labels == ("2020-W05",)
        assert (ex.excess == 30).all()
        assert ex.rate[0, 0] == pytest.approx(0.30, abs=1e-15)

    def test_identity_case(self):
        recs = [WeeklyDeathRecord(2020, 5, s, a, 100.0) for s, a in GROUPS]
        ex = compute_excess(recs, tiny_baseline(100.0))
        assert (ex.excess == 0).all() and (ex.rate == 0).all()

    def test_totals(self):
        recs = [WeeklyDeathRecord(2020, 5, s, a, 100.0 + i) for i, (s, a) in enumerate(GROUPS)]
        ex = compute_excess(recs, tiny_baseline(100.0))
        assert ex.total_excess[0] == 45.0
        assert ex.total_median[0] == 1000.0
        assert ex.total_rate[0] == 0.045

    def test_zero_median_guard(self):
        recs = [WeeklyDeathRecord(2020, 5, s, a, 1.0) for s, a in GROUPS]
        with pytest.raises(ZeroMedianError, match="female 0-14 week 5"):
            compute_excess(recs, tiny_baseline(0.0))
        ex = compute_excess(recs, tiny_baseline(0.0), null_rate=True)
        assert np.isnan(ex.rate).all()
        assert (ex.excess == 1.0).all()

    def test_gap(self):
        recs = [WeeklyDeathRecord(2020, w, s, a, 1.0) for w in (1, 2, 4) for s, a in GROUPS]
        with pytest.raises(InvalidSpanError, match="2020-W03"):
            compute_excess(recs, tiny_baseline(1.0))

    def test_week53_fallback_noted(self):
        recs = [WeeklyDeathRecord(2020, w, s, a, 1.0) for w in (52, 53) for s, a in GROUPS]
        base = BaselineTable({k: (7.0 if k[2] == 52 else 1.0) for k in tiny_baseline(0).medians},
                             (2015,))
        ex = compute_excess(recs, base)
        assert ex.week53_fallback == ("2020-W53",)
        assert (ex.median[1] == 7.0).all()

    def test_span(self):
        recs = [WeeklyDeathRecord(2020, w, s, a, 1.0) for w in range(1, 11) for s, a in GROUPS]
        ex = compute_excess(recs, tiny_baseline(1.0), "2020-W03", "2020-W05")
        assert ex.week_labels == ("2020-W03", "2020-W04", "2020-W05")
        with pytest.raises(InvalidSpanError):
            compute_excess(recs, tiny_baseline(1.0), "2020-W05", "2020-W03")


class TestFixturePipeline:
    def test_spot_check_medians(self, stmf_path, stmf_records):
        base = build_baseline(stmf_records, range(2015, 2020))
        raw = {}
        with open(stmf_path) as fh:
            rows = list(csv.reader(fh))[1:]
        header = rows[0]
        for row in rows[1:]:
            r = dict(zip(header, row))
            raw[(int(r["Year"]), int(r["Week"]), r["Sex"])] = r
        for sex, code, col, age, week in [("female", "f", "D85p", "85+", 14),
                                          ("male", "m", "D15_64", "15-64", 1),
                                          ("female", "f", "D0_14", "0-14", 52)]:
            hand = statistics.median(float(raw[(y, week, code)][col]) for y in range(2015, 2020))
            assert base.median(sex, age, week) == hand

    def test_identities(self, stmf_excess):
        ex = stmf_excess
        assert (ex.median + ex.excess == ex.actual).all()
        ok = ~np.isnan(ex.rate)
        assert np.abs(ex.rate[ok] * ex.median[ok] - ex.excess[ok]).max() <= 1e-9
        assert (ex.total_excess == ex.excess.sum(axis=1)).all()
        assert (ex.total_median + ex.total_excess == ex.total_actual).all()

    def test_baseline_idempotence(self, stmf_records):
        base = build_baseline(stmf_records, range(2015, 2020))
        ex = compute_excess(stmf_records, base, "2015-W01", "2019-W52")
        for j in range(len(GROUPS)):
            for week in range(1, 53):
                rows = [i for i, l in enumerate(ex.week_labels) if l.endswith(f"W{week:02d}")]
                assert statistics.median(ex.excess[rows, j]) == 0

    def test_span_length(self, stmf_excess):
        # 2015-W01..2020-W20 spans 53 + 52 * 4 + 20 ISO weeks
        assert stmf_excess.n_weeks == 281
        assert stmf_excess.week53_fallback == ("2015-W53",)

    def test_round_trip(self, stmf_excess):
        text = excess_to_csv(stmf_excess)
        again = read_excess_csv(io.StringIO(text))
        for name in ("actual", "median", "excess", "rate"):
            np.testing.assert_array_equal(getattr(again, name), getattr(stmf_excess, name))
        assert again.week_labels == stmf_excess.week_labels
        assert excess_to_csv(again) == text

    def test_surge_positive(self, stmf_excess):
        j = stmf_excess.column("female", "85+")
        rates = [stmf_excess.rate[stmf_excess.index_of(f"2020-W{w}"), j] for w in (13, 14, 15)]
        assert min(rates) > 0.2


class TestDetectionSeries:
    def test_all_groups(self, stmf_excess):
        s = build_detection_series(stmf_excess, "2019-W27", "2020-W20", "all")
        assert s.values.shape == (46, 10)
        assert s.dim_labels[:5] == ("f_0_14", "f_15_64", "f_65_74", "f_75_84", "f_85p")
        assert s.dim_labels[5:] == ("m_0_14", "m_15_64", "m_65_74", "m_75_84", "m_85p")
        assert s.time_labels[0] == "2019-W27" and s.time_labels[-1] == "2020-W20"
        assert s.time_labels[38] == "2020-W13" and s.time_labels[43] == "2020-W18"

    def test_pair(self, stmf_excess):
        s = build_detection_series(stmf_excess, "2019-W27", grouping="per-age-group",
                                   age_group="85+")
        assert s.values.shape == (46, 2)
        assert s.dim_labels == ("f_85p", "m_85p")
        j = stmf_excess.column("male", "85+")
        np.testing.assert_array_equal(s.values[:, 1], stmf_excess.rate[-46:, j])

    def test_totals_one_week(self, stmf_excess):
        s = build_detection_series(stmf_excess, "2020-W15", "2020-W15", "totals")
        assert s.values.shape == (1, 1)
        i = stmf_excess.index_of("2020-W15")
        assert s.values[0, 0] == stmf_excess.total_rate[i]

    def test_totals_for_age_group(self, stmf_excess):
        s = build_detection_series(stmf_excess, "2020-W10", "2020-W12", "totals", "65-74")
        i = stmf_excess.index_of("2020-W10")
        cols = [stmf_excess.column(x, "65-74") for x in ("female", "male")]
        expect = stmf_excess.excess[i, cols].sum() / stmf_excess.median[i, cols].sum()
        assert s.values[0, 0] == expect
        assert s.dim_labels == ("total_65_74",)

    def test_bad_requests(self, stmf_excess):
        with pytest.raises(InvalidSpanError):
            build_detection_series(stmf_excess, "2021-W01")
        with pytest.raises(ValueError):
            build_detection_series(stmf_excess, grouping="per-age-group")
        with pytest.raises(ValueError):
            build_detection_series(stmf_excess, grouping="weekly")

    def test_group_label(self):
        assert group_label("female", "85+") == "f_85p"
