import numpy as np
import pytest

from condnorm import QualityFlag, SchemaError, TimeSeries
from condnorm.io import (
    flags_for_series,
    format_timestamp,
    load_covariates,
    load_flags,
    load_series,
    parse_timestamp,
    write_series,
)


def test_timestamp_roundtrip():
    epoch = parse_timestamp("2019-10-01T00:05:00Z")
    assert format_timestamp(epoch) == "2019-10-01T00:05:00Z"
    assert parse_timestamp("2019-10-01 00:05:00+00:00") == epoch


def test_bad_timestamp():
    with pytest.raises(SchemaError):
        parse_timestamp("yesterday")


def test_load_and_missing_cells(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text(
        "timestamp,a,b\n"
        "2019-10-01T00:00:00Z,1.5,2\n"
        "2019-10-01T00:05:00Z,,3\n"
        "2019-10-01T00:10:00Z,NA,4\n"
    )
    cov = load_covariates(path)
    assert cov.names == ("a", "b")
    assert cov.delta == 300
    assert cov.mask[:, 0].tolist() == [False, True, True]
    assert cov.values[0, 0] == 1.5


def test_missing_timestamp_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("time,a\n2019-10-01T00:00:00Z,1\n")
    with pytest.raises(SchemaError, match="bad.csv"):
        load_covariates(path)


def test_bad_number_reports_row(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("timestamp,a\n2019-10-01T00:00:00Z,1\n2019-10-01T00:05:00Z,oops\n")
    with pytest.raises(SchemaError, match="row 3"):
        load_covariates(path)


def test_series_write_read_roundtrip(tmp_path):
    ts = 1569888000 + 300 * np.arange(5)
    s = TimeSeries(
        name="turbidity",
        timestamps=ts,
        values=[1.25, np.nan, 3.0, -0.125, 1e-7],
        delta=300,
    )
    path = tmp_path / "s.csv"
    write_series(path, s)
    back = load_series(path, "turbidity")
    assert np.array_equal(back.mask, s.mask)
    assert np.array_equal(back.values[~back.mask], s.values[~s.mask])


def test_flags_loading_and_projection(tmp_path):
    path = tmp_path / "flags.csv"
    path.write_text(
        "timestamp,variable,flag\n"
        "2019-10-01T00:05:00Z,turbidity,range_flag\n"
        "2019-10-01T00:10:00Z,other,wiper\n"
        "2020-01-01T00:00:00Z,turbidity,manual\n"
    )
    records = load_flags(path)
    s = TimeSeries(
        name="turbidity",
        timestamps=1569888000 + 300 * np.arange(4),
        values=np.ones(4),
        delta=300,
    )
    flags = flags_for_series(s, records, "turbidity")
    assert flags[1] is QualityFlag.range_flag
    assert flags[0] is QualityFlag.clean  # out-of-range record ignored


def test_unknown_flag_value(tmp_path):
    path = tmp_path / "flags.csv"
    path.write_text("timestamp,variable,flag\n2019-10-01T00:05:00Z,a,bogus\n")
    with pytest.raises(SchemaError):
        load_flags(path)
