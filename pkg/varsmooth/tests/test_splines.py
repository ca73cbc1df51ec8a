"""Tests for B-spline evaluation, knot insertion and quasi-interpolation."""

from __future__ import annotations

import numpy as np
import pytest

from varsmooth.errors import FormatError, InvalidInputError
from varsmooth.gridfn import cell_centers, sample
from varsmooth.splines import (
    SplineFn,
    bspline_eval,
    coeff_stability,
    index_count,
    quasi_interpolant,
    read_spline,
    refine,
    smoothness_ratio,
    spline_lr_norm,
    spline_pieces,
    t_operator,
    write_spline,
)


def random_spline(n, degree, level, seed=0):
    rng = np.random.default_rng(seed)
    return SplineFn(n, degree, level, rng.normal(size=(index_count(degree, level),) * n))


def test_cardinal_bspline_values():
    assert bspline_eval(1, 1.0) == pytest.approx(1.0)
    assert bspline_eval(1, 0.5) == pytest.approx(0.5)
    assert bspline_eval(2, 1.5) == pytest.approx(0.75)
    assert bspline_eval(2, 3.0) == 0.0
    with pytest.raises(InvalidInputError):
        bspline_eval(-1, 0.0)


@pytest.mark.parametrize("n, degree, level", [(1, 1, 3), (1, 3, 2), (2, 2, 2)])
def test_partition_of_unity(n, degree, level):
    ones = SplineFn(n, degree, level, np.ones((index_count(degree, level),) * n))
    points = np.random.default_rng(1).uniform(0.0, 1.0, size=(50, n))
    assert np.allclose(ones.evaluate(points), 1.0)
    assert np.allclose(ones.sample(4).values, 1.0)


def test_refinement_keeps_values():
    S = random_spline(2, 2, 1)
    fine = refine(S, 3)
    assert fine.level == 3
    assert np.allclose(fine.sample(5).values, S.sample(5).values)
    with pytest.raises(InvalidInputError):
        refine(fine, 1)


def test_sum_of_different_levels():
    a, b = random_spline(1, 2, 1, seed=2), random_spline(1, 2, 3, seed=3)
    total = a + b
    assert total.level == 3
    assert np.allclose(total.sample(5).values, a.sample(5).values + b.sample(5).values)
    assert np.allclose((2 * a).coeffs, 2 * a.coeffs)


def test_quasi_interpolant_projects_splines():
    S = random_spline(1, 2, 2, seed=4)
    alpha = quasi_interpolant(spline_pieces(S), S.level, S.order).alpha
    assert np.allclose(alpha, S.coeffs, atol=1e-8)


def test_t_operator_reproduces_polynomials():
    phi = sample(lambda x, y: x ** 2 - x * y + 0.5 * y, 5, 2)
    T = t_operator(phi, 2, 3, 2.0)
    assert T.degree == 2
    assert np.allclose(T.sample(5).values, phi.values, atol=1e-8)


def test_coefficient_stability_is_two_sided():
    report = coeff_stability(random_spline(1, 2, 3, seed=5), 2.0)
    assert 0 < report.lower <= report.upper < np.inf
    assert report.overlap == 7


def test_smoothness_ratio_is_finite():
    value = smoothness_ratio(1, 2, [0.01, -0.02, 0.05], list(cell_centers(4)))
    assert 0 < value < np.inf


def test_lr_norm_of_unit_spline():
    ones = SplineFn(1, 2, 2, np.ones(index_count(2, 2)))
    assert spline_lr_norm(ones, 2.0) == pytest.approx(1.0)


def test_vsss_round_trip(tmp_path):
    S = random_spline(2, 1, 2, seed=6)
    path = tmp_path / "s.vsss"
    write_spline(S, path)
    assert path.read_text().splitlines()[1] == "n=2 degree=1 K=2"
    assert np.array_equal(read_spline(path).coeffs, S.coeffs)


def test_out_of_range_terms_are_rejected(tmp_path):
    path = tmp_path / "s.vsss"
    path.write_text("VSSS1\nn=1 degree=2 K=1\n0 0 1.0\n1 2 1.0\n")
    with pytest.raises(FormatError) as excinfo:
        read_spline(path)
    assert excinfo.value.line == 4
