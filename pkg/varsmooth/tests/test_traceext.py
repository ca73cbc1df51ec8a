"""Tests for plane traces, extensions, the averaging operator and the slab extension."""

from __future__ import annotations

import math

import numpy as np
import pytest

from varsmooth.atomic import SplineSeries
from varsmooth.errors import FormatError, InvalidInputError, NumericalError
from varsmooth.gridfn import read_gridfn, sample
from varsmooth.norms import BesovParams
from varsmooth.splines import SplineFn, index_count
from varsmooth.traceext import (
    PlaneSpec,
    SlabFunction,
    besov_extend,
    besov_trace,
    cutoff,
    derivative_bound_constant,
    discrete_kernels,
    extension_mass_ratio,
    make_averaging_op,
    psi_partition,
    read_slab,
    recovery_errors,
    restriction_trace,
    sobolev_extend,
    sobolev_trace_report,
    steklov_average,
    trace_function,
    trace_mass_ratio,
    trace_multiseq,
    write_slab,
)
from varsmooth.weights import example_weight, parse_weight_spec


def random_series(n, degree, K, seed=0):
    rng = np.random.default_rng(seed)
    levels = tuple(SplineFn(n, degree, k, rng.normal(size=(index_count(degree, k),) * n)) for k in range(K + 1))
    return SplineSeries(n, degree, levels)


@pytest.fixture
def plane():
    return PlaneSpec(2, 1)


def test_plane_spec_bounds():
    assert PlaneSpec(3, 1).n_second == 2
    with pytest.raises(InvalidInputError):
        PlaneSpec(2, 2)
    with pytest.raises(InvalidInputError):
        PlaneSpec(4, 1)


def test_trace_of_extension_is_identity(plane):
    s = random_series(1, 2, 2)
    back = besov_trace(besov_extend(s, plane), plane)
    for a, b in zip(back.levels, s.levels):
        assert np.allclose(a.coeffs, b.coeffs)


def test_trace_restricts_the_function(plane):
    s = random_series(2, 2, 2, seed=1)
    traced = besov_trace(s, plane)
    x = np.linspace(0.0, 0.99, 17)
    on_plane = s.partial().evaluate(np.stack([x, np.zeros_like(x)], axis=1))
    assert np.allclose(traced.partial().evaluate(x[:, None]), on_plane)


def test_trace_of_a_three_dimensional_series():
    ps = PlaneSpec(3, 1)
    s = random_series(3, 1, 1, seed=2)
    traced = besov_trace(s, ps)
    assert traced.n == 1
    x = np.linspace(0.0, 0.99, 9)
    points = np.stack([x, np.zeros_like(x), np.zeros_like(x)], axis=1)
    assert np.allclose(traced.partial().evaluate(x[:, None]), s.partial().evaluate(points))


def test_multiseq_trace_and_mass_ratios(plane):
    ms = parse_weight_spec("const:s=1", 2, 2.0, 2)
    traced = trace_multiseq(ms, plane)
    assert traced.n == 1
    assert traced.levels[2].shape == (4,)
    assert traced.levels[2][1] == pytest.approx(ms.levels[2][1, 0])
    s = random_series(2, 2, 2, seed=3)
    assert 0 < trace_mass_ratio(s, ms, plane, 2.0) < math.inf
    assert 0 < extension_mass_ratio(besov_trace(s, plane), ms, plane, 2.0) < math.inf


def test_restriction_and_function_traces(plane):
    phi = sample(lambda x, y: np.cos(x) * (1 + y), 4, 2)
    assert restriction_trace(phi, plane).values.shape == (16,)
    ms = parse_weight_spec("const:s=1", 2, 2.0, 2)
    traced = trace_function(phi, ms, BesovParams(2, 2.0, 2.0, 2.0), plane)
    assert traced.n == 1
    assert traced.level == 4
    assert np.allclose(traced.values, restriction_trace(phi, plane).values, atol=0.1)


@pytest.mark.parametrize("l, n", [(1, 1), (2, 1), (3, 1), (4, 2)])
def test_averaging_moments(l, n):
    ao = make_averaging_op(l, n)
    assert ao.combination.sum() == pytest.approx(1.0)
    assert np.allclose(ao.moment_residuals(), 0.0, atol=1e-10)


def test_averaging_reproduces_low_degree_polynomials():
    ao = make_averaging_op(3, 1)
    phi = sample(lambda x: 2 * x ** 2 - x + 1, 7, 1)
    smoothed = steklov_average(phi, 1 / 16, ao)
    interior = slice(40, 88)
    assert np.allclose(smoothed.values[interior], phi.values[interior], atol=1e-10)


def test_averaging_in_two_dimensions():
    ao = make_averaging_op(2, 2)
    phi = sample(lambda x, y: 3 * x - y + x * y, 6, 2)
    smoothed = steklov_average(phi, 1 / 16, ao)
    inner = (slice(20, 44), slice(20, 44))
    assert np.allclose(smoothed.values[inner], phi.values[inner], atol=1e-10)


def test_grid_weights_tend_to_the_stored_mu():
    ao = make_averaging_op(3, 1)
    fitted, _ = discrete_kernels(ao, 1 / 8, 2.0 ** -12)
    assert np.allclose(fitted, ao.combination, atol=1e-6)
    coarse, _ = discrete_kernels(ao, 1 / 8, 2.0 ** -5)
    assert not np.allclose(coarse, ao.combination, atol=1e-6)


def test_stored_weights_match_the_refit_on_a_fine_grid():
    ao = make_averaging_op(2, 1)
    phi = sample(lambda x: np.sin(3 * x), 12, 1)
    refit = steklov_average(phi, 1 / 8, ao)
    stored = steklov_average(phi, 1 / 8, ao, refit=False)
    assert np.allclose(stored.values, refit.values, atol=1e-6)


def test_averaging_rejects_sub_grid_radii():
    ao = make_averaging_op(2, 1)
    phi = sample(lambda x: x, 3, 1)
    with pytest.raises(NumericalError):
        steklov_average(phi, 1 / 16, ao)
    with pytest.raises(InvalidInputError):
        steklov_average(sample(lambda x, y: x, 3, 2), 0.25, ao)


def test_derivative_bound_and_recovery():
    ao = make_averaging_op(2, 1)
    phi = sample(lambda x: np.sin(4 * np.pi * x), 7, 1)
    assert 0 < derivative_bound_constant(phi, 4, ao) < math.inf
    errors = recovery_errors(phi, ao, [1 / 4, 1 / 32])
    assert errors[1 / 32] < errors[1 / 4]


def test_cutoff_and_partition():
    assert cutoff(np.array([0.0, 0.5, 1.0, 2.0])).tolist() == [1.0, 1.0, 0.0, 0.0]
    y = np.linspace(-0.5, 0.5, 41)
    parts = psi_partition(y, 4)
    assert parts.shape == (4, 41)
    assert np.allclose(parts.sum(axis=0), 1.0)
    assert np.all(parts >= -1e-15)
    with pytest.raises(InvalidInputError):
        psi_partition(y, 0)


def test_slab_extension_has_the_averaged_trace():
    ao = make_averaging_op(2, 1)
    phi = sample(lambda x: np.exp(x), 5, 1)
    slab = sobolev_extend(phi, ao, 3)
    assert slab.ky == 6
    assert slab.values.shape == (32, 64)
    expected = steklov_average(phi, 1 / 8, ao).values
    assert np.allclose(slab.plane_values().values, expected)
    with pytest.raises(NumericalError):
        sobolev_extend(phi, ao, 6)


def test_sobolev_trace_report():
    phi = sample(lambda x: np.sin(2 * np.pi * x), 5, 1)
    gamma = example_weight("normal", 1, 2.0, beta=0.5)
    report = sobolev_trace_report(phi, gamma, BesovParams(1, 2.0, 2.0, 2.0), 3)
    assert report.energy > 0
    assert report.trace_norm > 0
    assert 0 < report.ratio < math.inf


def test_slab_file_round_trip(tmp_path):
    slab = SlabFunction(1, 2, 2, np.arange(16.0))
    path = tmp_path / "slab.vsgf"
    write_slab(slab, path)
    assert "slab=1" in path.read_text().splitlines()[1]
    back = read_slab(path)
    assert back.ky == 2
    assert np.array_equal(back.values, slab.values)
    with pytest.raises(FormatError):
        read_gridfn(path)
