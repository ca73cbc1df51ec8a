"""Tests for the seeded test-function families."""

from __future__ import annotations

import numpy as np
import pytest

from varsmooth.errors import InvalidInputError
from varsmooth.families import family, parse_family, random_spline


@pytest.mark.parametrize(
    "name, expected",
    [("smooth20", ("smooth", 20)), ("piecewise3", ("piecewise", 3)), (" spline50 ", ("spline", 50))],
)
def test_parse_family(name, expected):
    assert parse_family(name) == expected


@pytest.mark.parametrize("name", ["smooth", "wiggly5", "smooth0", "bump-3"])
def test_parse_family_rejects(name):
    with pytest.raises(InvalidInputError):
        parse_family(name)


@pytest.mark.parametrize("kind", ["smooth", "piecewise", "bump", "spline"])
def test_members_have_the_requested_shape(kind):
    members = family(f"{kind}4", 2, 5, seed=3)
    assert len(members) == 4
    for g in members:
        assert g.n == 2 and g.level == 5
        assert g.values.shape == (32, 32)
        assert np.all(np.isfinite(g.values))


def test_families_are_reproducible_and_seed_dependent():
    first = family("smooth5", 1, 6, seed=11)
    again = family("smooth5", 1, 6, seed=11)
    other = family("smooth5", 1, 6, seed=12)
    assert all(np.array_equal(a.values, b.values) for a, b in zip(first, again))
    assert not all(np.array_equal(a.values, b.values) for a, b in zip(first, other))


def test_members_differ_within_a_family():
    a, b = family("bump2", 1, 7, seed=0)
    assert not np.array_equal(a.values, b.values)


def test_bump_vanishes_near_the_corners():
    for g in family("bump3", 2, 6, seed=5):
        assert g.values[0, 0] == 0.0
        assert g.values.max() > 0.0


def test_random_spline_coefficients():
    spline = random_spline(np.random.default_rng(0), 2, 3, 2)
    assert spline.coeffs.shape == (7, 7)
    assert spline.order == 4
