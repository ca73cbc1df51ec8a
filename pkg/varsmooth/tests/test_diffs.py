"""Tests for finite differences and the local difference functionals."""

from __future__ import annotations

import math

import numpy as np
import pytest

from varsmooth.diffs import (
    OmegaMode,
    avg_diff,
    avg_diff_field,
    binomial_weights,
    delta_level,
    delta_lr,
    forward_diff,
    modulus,
    subadditivity_constant,
    whitney_ratios,
)
from varsmooth.errors import InvalidInputError
from varsmooth.geometry import DyadicCube
from varsmooth.gridfn import sample


@pytest.fixture
def wave():
    return sample(lambda x: np.sin(2 * np.pi * x) + x ** 2, 5, 1)


def test_binomial_weights():
    assert binomial_weights(2) == (1.0, -2.0, 1.0)
    assert binomial_weights(3) == (-1.0, 3.0, -3.0, 1.0)


def test_forward_difference_of_a_line():
    g = sample(lambda x: x, 4, 1)
    assert forward_diff(g, (0.125,), (0.03,), 1) == pytest.approx(0.125)
    assert forward_diff(g, (0.125,), (0.03,), 2) == pytest.approx(0.0, abs=1e-15)
    assert forward_diff(g, (0.1,), (0.9,), 2) == 0.0
    with pytest.raises(InvalidInputError):
        forward_diff(g, (0.1,), (0.1,), 0)


@pytest.mark.parametrize("mode", [OmegaMode.full, OmegaMode.cube])
def test_differences_annihilate_low_degree_polynomials(mode):
    line = sample(lambda x, y: 2 * x - y + 1, 4, 2)
    quadratic = sample(lambda x: 3 * x ** 2 - x, 5, 1)
    assert np.allclose(delta_level(line, 1, 2, 2.0, mode), 0.0, atol=1e-12)
    assert np.allclose(delta_level(quadratic, 2, 3, 2.0, mode), 0.0, atol=1e-12)
    assert np.all(delta_level(quadratic, 2, 1, 2.0, mode) > 0)


@pytest.mark.parametrize("mode", [OmegaMode.full, OmegaMode.cube])
def test_level_field_matches_single_cubes(wave, mode):
    field = delta_level(wave, 2, 2, 2.0, mode)
    for m in range(4):
        assert field[m] == pytest.approx(delta_lr(wave, DyadicCube(2, (m,)), 2, 2.0, mode), rel=1e-9)


def test_pointwise_average_matches_the_field(wave):
    field = avg_diff_field(wave, 0.125, 2, 2.0)
    x = (7 + 0.5) / 32
    assert avg_diff(wave, 0.125, (x,), 2, 2.0) == pytest.approx(field[7], rel=1e-9)


def test_modulus_dominates_zero_and_vanishes_on_constants(wave):
    constant = sample(lambda x: 1.5, 4, 1)
    assert modulus(constant, DyadicCube(1, (0,)), 1, 2.0) == pytest.approx(0.0, abs=1e-15)
    assert modulus(wave, DyadicCube(1, (0,)), 1, math.inf) > 0


def test_whitney_sandwich_is_finite(wave):
    ratios = whitney_ratios(wave, 2, 2, 2.0, H=8)
    assert len(ratios.modulus_ratio) == 4
    mod_spread, approx_spread = ratios.spread()
    assert math.isfinite(mod_spread) and mod_spread >= 1.0
    assert math.isfinite(approx_spread) and approx_spread >= 1.0


def test_subadditivity_constant_is_finite(wave):
    value = subadditivity_constant(wave, 2, 1, 2.0)
    assert 0 < value < math.inf
    with pytest.raises(InvalidInputError):
        subadditivity_constant(wave, 0, 1, 2.0)
