"""Tests for local best polynomial approximation."""

from __future__ import annotations

import math

import numpy as np
import pytest

from varsmooth.errors import NumericalError
from varsmooth.geometry import DyadicCube
from varsmooth.gridfn import cell_centers, sample
from varsmooth.polyfit import DegreeMode, almost_best_field, best_poly, exponent_mask


def test_exponent_masks():
    assert exponent_mask(2, 2, DegreeMode.total).tolist() == [True, True, True, False]
    assert exponent_mask(2, 2, DegreeMode.coordinate).all()


@pytest.mark.parametrize("r", [1.0, 1.5, 2.0, math.inf])
def test_reproduces_polynomials_of_low_degree(r):
    phi = sample(lambda x: 3 * x - 1, 4, 1)
    fit = best_poly(phi, DyadicCube(1, (0,)), 2, r)
    assert fit.error == pytest.approx(0.0, abs=1e-7)
    assert fit.evaluate(np.array([[0.3]]))[0] == pytest.approx(-0.1, abs=1e-6)
    assert fit.derivative((1,), np.array([[0.2]]))[0] == pytest.approx(3.0, abs=1e-5)


def test_best_constant_errors():
    phi = sample(lambda x: x, 3, 1)
    cube = DyadicCube(0, (0,))
    assert best_poly(phi, cube, 1, math.inf).error == pytest.approx(7 / 16, abs=1e-7)
    assert best_poly(phi, cube, 1, 2.0).error == pytest.approx(math.sqrt(21) / 16)


def test_irls_never_loses_to_least_squares():
    phi = sample(lambda x: np.abs(x - 0.4) ** 0.5, 5, 1)
    cube = DyadicCube(0, (0,))
    fit = best_poly(phi, cube, 2, 1.5)
    ls = best_poly(phi, cube, 2, 2.0)
    centers = cell_centers(5)[:, None]
    ls_error = float(np.sum(np.abs(phi.values - ls.evaluate(centers)) ** 1.5) / 32) ** (1 / 1.5)
    assert fit.error <= ls_error + 1e-12
    assert fit.constant >= 1.0 - 1e-9


def test_field_reproduces_coordinate_polynomials():
    phi = sample(lambda x, y: x * y + 2 * x - y, 4, 2)
    field = almost_best_field(phi, 2, 2, 2.0)
    assert field.max_error() == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(field.sample(4).values, phi.values)
    assert field.constant == 1.0


def test_field_with_linear_program_pieces():
    phi = sample(lambda x: np.floor(4 * x), 4, 1)
    field = almost_best_field(phi, 2, 1, 1.0)
    assert field.max_error() == pytest.approx(0.0, abs=1e-7)
    assert field.evaluate(np.array([[0.6]]))[0] == pytest.approx(2.0, abs=1e-7)


def test_cubes_finer_than_the_grid_fail():
    phi = sample(lambda x: x, 2, 1)
    with pytest.raises(NumericalError):
        best_poly(phi, DyadicCube(3, (0,)), 1, 2.0)
    with pytest.raises(NumericalError):
        almost_best_field(phi, 3, 1, 2.0)
