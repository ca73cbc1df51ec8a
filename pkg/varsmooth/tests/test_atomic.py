"""Tests for the spline atomic decomposition and its level inequalities."""

from __future__ import annotations

import math

import numpy as np
import pytest

from varsmooth.atomic import (
    SplineSeries,
    coefficient_mass,
    decompose,
    level_inequality_check,
    minimum_mass_decomposition,
    n3_decomposition,
    read_series,
    reconstruct,
    series_norm_bound,
    single_level_series,
    truncation_errors,
    write_series,
)
from varsmooth.errors import InvalidInputError
from varsmooth.families import family
from varsmooth.gridfn import norm, sample
from varsmooth.norms import BesovParams
from varsmooth.splines import SplineFn, zero_spline
from varsmooth.weights import parse_weight_spec


@pytest.fixture
def params():
    return BesovParams(2, 2.0, 2.0, 2.0)


@pytest.fixture
def weights():
    return parse_weight_spec("const:s=1", 1, 2.0, 4)


@pytest.fixture
def series(weights, params):
    phi = sample(lambda x: np.sin(2 * np.pi * x) + 0.5 * x, 6, 1)
    return phi, decompose(phi, weights, params)


def test_telescoped_levels_reconstruct_the_finest_approximant(series):
    phi, s = series
    assert s.K == 4
    assert s.degree == 2
    error = norm(phi - reconstruct(s, level=6), 2.0)
    assert error == pytest.approx(s.metadata["reconstruction_error"], abs=1e-10)
    assert error < 0.05 * norm(phi, 2.0)


def test_quadratics_live_on_the_coarsest_level(weights, params):
    phi = sample(lambda x: x ** 2 - x, 6, 1)
    s = decompose(phi, weights, params, gate=False)
    masses = s.level_masses(weights, 2.0)
    assert masses[0] > 0
    assert all(masses[k] == pytest.approx(0.0, abs=1e-8) for k in range(1, s.K + 1))
    assert s.metadata["reconstruction_error"] == pytest.approx(0.0, abs=1e-8)


def test_partial_sums(series):
    _, s = series
    coarse = reconstruct(s, J=1, level=6)
    assert coarse.level == 6
    with pytest.raises(InvalidInputError):
        reconstruct(s, J=3, level=2)
    with pytest.raises(InvalidInputError):
        s.partial(7)


def test_alternative_representations_keep_the_sum(series, weights, params):
    _, s = series
    lightest = minimum_mass_decomposition(s, weights)
    assert np.allclose(lightest.partial().coeffs, s.partial().coeffs, atol=1e-8)
    assert coefficient_mass(lightest, weights, 2.0, 2.0) <= coefficient_mass(s, weights, 2.0, 2.0) * (1 + 1e-6)
    single = single_level_series(s)
    assert np.allclose(single.partial().coeffs, s.partial().coeffs)
    chosen = n3_decomposition(s, weights, params)
    best = min(coefficient_mass(c, weights, 2.0, 2.0) for c in (s, single, lightest))
    assert coefficient_mass(chosen, weights, 2.0, 2.0) == pytest.approx(best)


def test_series_bound_and_level_inequalities(series, weights, params):
    phi, s = series
    bound = series_norm_bound(s, weights, params)
    assert 0 < bound.ratio < math.inf
    report = level_inequality_check(phi, weights, params)
    assert report.mode == "higher_order"
    assert report.exponent == pytest.approx(1.0)
    assert 0 < report.max_ratio < math.inf


def test_series_file_round_trip(tmp_path, series):
    _, s = series
    path = tmp_path / "series.vsss"
    write_series(s, path)
    back = read_series(path)
    assert back.K == s.K
    for a, b in zip(back.levels, s.levels):
        assert np.array_equal(a.coeffs, b.coeffs)


def test_series_levels_must_match():
    with pytest.raises(InvalidInputError):
        SplineSeries(1, 2, (zero_spline(1, 2, 1),))
    with pytest.raises(InvalidInputError):
        SplineSeries(1, 2, (SplineFn(1, 1, 0, np.ones(2)),))


def test_bump_truncation_errors_decay_at_spline_order(params):
    bump = family("bump1", 1, 10, seed=11)[0]
    series = decompose(bump, parse_weight_spec("const:s=1", 1, 2.0, 10), params, gate=False)
    errors = truncation_errors(bump, series, params.r)
    assert len(errors) == series.K + 1
    first = series.K // 2
    slope = np.polyfit(np.arange(first, series.K + 1), np.log2(errors[first:]), 1)[0]
    assert slope <= -(params.l + 1) + 0.5
    assert errors[-1] == pytest.approx(series.metadata["reconstruction_error"])


def test_truncation_needs_a_fine_enough_grid(series):
    _, s = series
    with pytest.raises(InvalidInputError):
        truncation_errors(sample(lambda x: x, 1, 1), s, 2.0)
