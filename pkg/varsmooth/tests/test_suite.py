"""Tests for the acceptance suite driver."""

from __future__ import annotations

import csv

import pytest

from varsmooth.suite import CRITERIA, SCALES, SuiteRow, run_suite, write_suite_csv


@pytest.fixture(scope="module")
def reduced_rows():
    return run_suite("reduced")


def test_every_criterion_passes_at_reduced_scale(reduced_rows):
    assert [row.criterion for row in reduced_rows] == list(CRITERIA)
    failed = {row.criterion: row.detail for row in reduced_rows if not row.passed}
    assert not failed


def test_reported_details(reduced_rows):
    rows = {row.criterion: row for row in reduced_rows}
    assert "drift=" in rows["whitney_sandwich"].detail
    assert "drift=" in rows["atomic_round_trip"].detail
    assert "quoted 0.5" in rows["weight_diagnostics"].detail
    assert rows["weight_diagnostics"].value == pytest.approx(0.5, abs=0.1)


def test_rows_follow_declaration_order():
    rows = run_suite("reduced", only=["trace_extension", "partition_of_unity"])
    assert [row.criterion for row in rows] == ["partition_of_unity", "trace_extension"]


def test_scales_and_criteria_are_declared():
    assert set(SCALES) == {"reduced", "desk"}
    assert SCALES["desk"].functions == 100
    assert SCALES["desk"].whitney_functions == 200
    assert SCALES["desk"].functions > SCALES["reduced"].functions
    assert len(CRITERIA) == 11


def test_unknown_scale_or_criterion():
    with pytest.raises(ValueError):
        run_suite("huge")
    with pytest.raises(ValueError, match="hardy_plus"):
        run_suite("reduced", only=["hardy_plus"])


def test_csv_output(tmp_path):
    path = tmp_path / "suite.csv"
    write_suite_csv([SuiteRow("hardy", True, 0.25, "ok"), SuiteRow("embedding_oracle", False, 3.0, "10 pairs")], path)
    with open(path, newline="") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["criterion", "passed", "value", "detail"]
    assert rows[1] == ["hardy", "1", "0.25", "ok"]
    assert rows[2] == ["embedding_oracle", "0", "3", "10 pairs"]


def test_csv_to_stdout(capsys):
    write_suite_csv([SuiteRow("hardy", True, 1.5, "x")])
    assert capsys.readouterr().out.splitlines()[1] == "hardy,1,1.5,x"
