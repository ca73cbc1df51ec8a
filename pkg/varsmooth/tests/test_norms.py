"""Tests for the Besov norm variants, spline approximation numbers and Hardy checks."""

from __future__ import annotations

import math

import numpy as np
import pytest

from varsmooth.errors import InvalidInputError
from varsmooth.gridfn import sample
from varsmooth.norms import (
    BesovParams,
    HardyBranch,
    NormVariant,
    breakdown_rows,
    compute_norm,
    default_k_work,
    hardy_bound,
    hardy_check,
    hardy_family_check,
    lq_aggregate,
    n_functionals,
    quasi_triangle_constant,
    spline_approx_numbers,
    write_breakdowns,
)
from varsmooth.weights import parse_weight_spec

FUNCTION_VARIANTS = ["bbar", "btilde", "seq", "v2", "v3", "v4"]


@pytest.fixture
def weights():
    return parse_weight_spec("const:s=1", 1, 2.0, 4)


@pytest.fixture
def params():
    return BesovParams(2, 2.0, 2.0, 2.0)


def test_lq_aggregate():
    assert lq_aggregate([3.0, 4.0], 2.0) == pytest.approx(5.0)
    assert lq_aggregate([3.0, -4.0], math.inf) == 4.0
    assert lq_aggregate([], 1.0) == 0.0


def test_constants():
    assert quasi_triangle_constant(0.5, 2.0) == pytest.approx(2.0)
    assert quasi_triangle_constant(2.0, math.inf) == 1.0
    assert default_k_work(6, 2) == 4
    assert default_k_work(1, 3) == 0


def test_invalid_parameters():
    with pytest.raises(InvalidInputError):
        BesovParams(0, 2.0, 2.0, 2.0)
    with pytest.raises(InvalidInputError):
        BesovParams(1, 2.0, 2.0, 2.0, c=1.0)


@pytest.mark.parametrize("variant", FUNCTION_VARIANTS)
def test_linear_functions_only_carry_the_zero_level(variant, weights, params):
    phi = sample(lambda x: 2 * x + 1, 6, 1)
    breakdown = compute_norm(phi, weights, params, variant)
    assert all(term == pytest.approx(0.0, abs=1e-8) for term in breakdown.terms.values())
    assert breakdown.total == pytest.approx(breakdown.zero_term, abs=1e-8)
    assert breakdown.zero_term > 0


def test_constant_seq_norm_is_the_l_r_norm(weights, params):
    phi = sample(lambda x: 2.0, 5, 1)
    assert compute_norm(phi, weights, params, NormVariant.seq).total == pytest.approx(2.0)


def test_variants_are_comparable(weights, params):
    phi = sample(lambda x: np.sin(3 * np.pi * x) + x ** 2, 6, 1)
    totals = [compute_norm(phi, weights, params, variant).total for variant in FUNCTION_VARIANTS]
    assert all(0 < total < math.inf for total in totals)
    assert max(totals) / min(totals) < 1e3


def test_exact_s_numbers_decrease_for_smooth_functions(weights, params):
    phi = sample(lambda x: np.exp(x), 6, 1)
    s = spline_approx_numbers(phi, weights, params)
    assert s.exact
    values = s.as_list()
    assert values[0] == pytest.approx(math.sqrt((math.exp(2) - 1) / 2), rel=1e-3)
    assert values[-1] < values[1]


def test_n_functionals(weights, params):
    phi = sample(lambda x: np.sin(2 * np.pi * x), 6, 1)
    result = n_functionals(phi, weights, params)
    for value in (result.n1, result.n2, result.n3, result.n4):
        assert 0 < value < math.inf
    assert set(result.breakdowns) == {"N1", "N2", "N3", "N4"}
    assert -1 in result.breakdowns["N1"].terms


def test_breakdown_rows_and_csv(tmp_path, weights, params):
    phi = sample(lambda x: x ** 2, 5, 1)
    breakdown = compute_norm(phi, weights, params, "seq")
    rows = breakdown_rows([breakdown])
    assert rows[0][:2] == ["seq", "-1"]
    assert len(rows) == len(breakdown.terms) + 1
    path = tmp_path / "norms.csv"
    write_breakdowns([breakdown], path)
    assert path.read_text().splitlines()[0] == "variant,k,term,total"


def test_hardy_single_sequences():
    impulse = hardy_check([1.0, 0.0, 0.0, 0.0], q=2.0, mu=1.0, beta=1.0)
    assert impulse.ratio == pytest.approx(1.0)
    assert impulse.verdict
    assert hardy_bound(1.0, 1.0, 1.0, None, "tail") == pytest.approx(2.0)
    head = hardy_check(np.ones(10), q=2.0, mu=1.0, beta=0.5, lam=1.5, branch=HardyBranch.head)
    assert head.ratio <= head.bound * (1 + 1e-9)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"q": 2.0, "mu": 1.0, "beta": 1.0},
        {"q": 1.0, "mu": 0.5, "beta": 0.5},
        {"q": math.inf, "mu": 2.0, "beta": 1.0},
        {"q": 2.0, "mu": 1.0, "beta": 0.5, "lam": 1.0, "branch": "head"},
    ],
)
def test_hardy_family_respects_the_bound(kwargs):
    report = hardy_family_check(trials=50, seed=3, **kwargs)
    assert report.verdict
    assert report.max_ratio <= report.bound * (1 + 1e-9)


def test_hardy_parameter_checks():
    with pytest.raises(InvalidInputError):
        hardy_check([1.0], q=1.0, mu=2.0, beta=1.0)
    with pytest.raises(InvalidInputError):
        hardy_check([1.0], q=2.0, mu=1.0, beta=1.0, lam=0.5, branch="head")
    with pytest.raises(InvalidInputError):
        hardy_check([1.0], q=2.0, mu=1.0, beta=0.0)
