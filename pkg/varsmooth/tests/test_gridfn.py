"""Tests for sampled grid functions, quadrature and the VSGF format."""

from __future__ import annotations

import numpy as np
import pytest

from varsmooth.errors import FormatError, InvalidInputError
from varsmooth.geometry import Box, DyadicCube
from varsmooth.gridfn import (
    GridFunction,
    blocks,
    cube_lr_norms,
    evaluate,
    expand,
    lr_norm,
    norm,
    read_gridfn,
    sample,
    write_gridfn,
)


def test_sample_and_norms_of_a_constant():
    g = sample(lambda x, y: 3.0, 3, 2)
    assert g.values.shape == (8, 8)
    assert norm(g, 2.0) == pytest.approx(3.0)
    assert norm(g, np.inf) == pytest.approx(3.0)
    assert lr_norm(g, DyadicCube(1, (0, 0)), 1.0).value == pytest.approx(3.0 / 4)


def test_partial_box_uses_cell_overlaps():
    g = sample(lambda x: 1.0, 2, 1)
    assert lr_norm(g, Box((0.1,), (0.3,)), 1.0).value == pytest.approx(0.3)
    assert lr_norm(g, Box((0.8,), (1.0,)), 1.0).value == pytest.approx(0.2)


def test_blocks_and_expand_are_inverse_layouts():
    values = np.arange(16.0).reshape(4, 4)
    grouped = blocks(values, 1)
    assert grouped.shape == (2, 2, 4)
    assert sorted(grouped[0, 1]) == [2.0, 3.0, 6.0, 7.0]
    assert expand(np.array([[1.0, 2.0], [3.0, 4.0]]), 2)[3, 0] == 3.0
    local = cube_lr_norms(values, 2, 1, np.inf)
    assert local[1, 1] == 15.0


def test_evaluate_looks_up_owning_cells():
    g = sample(lambda x: x, 2, 1)
    assert evaluate(g, np.array([[0.1], [0.99]])).tolist() == [0.125, 0.875]


def test_vsgf_round_trip(tmp_path):
    g = sample(lambda x, y: np.sin(x) + y ** 2, 2, 2)
    path = tmp_path / "g.vsgf"
    write_gridfn(g, path)
    assert path.read_text().startswith("VSGF1\nn=2 K=2\n")
    back = read_gridfn(path)
    assert np.array_equal(back.values, g.values)


def test_malformed_files_report_the_line(tmp_path):
    path = tmp_path / "bad.vsgf"
    path.write_text("VSGF1\nn=1 K=1\n1.0 nope\n")
    with pytest.raises(FormatError) as excinfo:
        read_gridfn(path)
    assert excinfo.value.line == 3
    path.write_text("VSGF1\nn=1 K=2\n1 2 3\n")
    with pytest.raises(FormatError):
        read_gridfn(path)


def test_non_finite_samples_are_rejected():
    with pytest.raises(InvalidInputError):
        GridFunction(1, 1, np.array([1.0, np.nan]))
    with pytest.raises(InvalidInputError):
        sample(lambda x: 1.0 / (x - x), 2, 1)
