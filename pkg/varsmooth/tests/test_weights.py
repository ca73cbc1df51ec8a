"""Tests for multiple sequences, weight generation and the class diagnostics."""

from __future__ import annotations

import math

import numpy as np
import pytest

from varsmooth.errors import FormatError, InvalidInputError, NumericalError
from varsmooth.gridfn import GridFunction, sample
from varsmooth.weights import (
    MultiSeq,
    ProductPowerWeight,
    WeightSequence,
    associate,
    bar_sequence,
    check_Aloc_p,
    check_nontrivial,
    check_X_class,
    check_Y_class,
    estimate_deltas,
    example_weight,
    generate_from_weight,
    level_sequence,
    parse_weight_spec,
    read_multiseq,
    scale_levels,
    theta_sigma,
    write_multiseq,
)


@pytest.fixture
def smoothness_one():
    return parse_weight_spec("const:s=1", 1, 2.0, 4)


def test_associate_of_constant_weights():
    constant = GridFunction(1, 3, np.full(8, 2.0))
    ms = associate(WeightSequence((constant,) * 3, 2.0))
    for k, level in enumerate(ms.levels):
        assert np.allclose(level, 2.0 * 2.0 ** (-k / 2))


def test_bar_sequence_inverts_associate(smoothness_one):
    back = associate(bar_sequence(smoothness_one))
    for a, b in zip(back.levels, smoothness_one.levels):
        assert np.allclose(a, b)


def test_power_of_two_growth_has_unit_exponents(smoothness_one):
    report = check_X_class(smoothness_one)
    assert report.verdict
    assert report.alpha1 == pytest.approx(1.0)
    assert report.alpha2 == pytest.approx(1.0)
    assert report.alpha3 == pytest.approx(0.0)
    assert report.satisfies(alpha1_min=0.5, alpha2_max=2.0)
    assert not report.satisfies(alpha1_min=1.5)
    assert check_Y_class(smoothness_one).kind == "Y"


def test_constant_sequence_is_flat():
    report = check_X_class(level_sequence(2, 2.0, 3, lambda k: 1.0))
    assert report.alpha1 == pytest.approx(0.0)
    assert report.alpha2 == pytest.approx(0.0)
    assert report.c1 == pytest.approx(1.0)


def test_exact_and_quadrature_generation_agree():
    exact = generate_from_weight(ProductPowerWeight((0.0, 0.0), 2.0), 2.0, 3, 1)
    quadrature = generate_from_weight(lambda x, y: 1.0 + 0.0 * x * y, 2.0, 3, 1)
    for k in range(4):
        assert np.allclose(exact.levels[k], 2.0 ** -k)
        assert np.allclose(quadrature.levels[k], exact.levels[k])


def test_generation_rejects_infinite_p():
    with pytest.raises(InvalidInputError):
        generate_from_weight(ProductPowerWeight((0.0, 0.0), 2.0), math.inf, 2, 1)


def test_deltas_of_unit_weight():
    ms = generate_from_weight(ProductPowerWeight((0.0, 0.0), 2.0), 2.0, 4, 1)
    deltas = estimate_deltas(ms)
    assert deltas.delta1 == pytest.approx(1.0)
    assert deltas.delta2 == pytest.approx(1.0)
    assert deltas.constants["delta1"] == pytest.approx(1.0)
    with pytest.raises(NumericalError):
        estimate_deltas(ms.truncated(1))


def test_example_weights():
    tangential = example_weight("tangential", 1, 2.0, beta=2.0)
    assert tangential.exponents == (2.0, 0.0)
    assert tangential(np.array([0.5]), np.array([0.3]))[0] == pytest.approx(0.5)
    with pytest.raises(InvalidInputError):
        example_weight("radial", 1, 2.0)


def test_local_muckenhoupt_of_constant_weight():
    gamma = sample(lambda x, y: 3.0, 3, 2)
    assert check_Aloc_p(gamma, 2.0) == pytest.approx(1.0)
    assert check_Aloc_p(gamma, 1.0) == pytest.approx(1.0)
    with pytest.raises(InvalidInputError):
        check_Aloc_p(gamma, math.inf)


def test_theta_sigma():
    assert theta_sigma(2.0, 1.0) == pytest.approx(2.0)
    assert math.isinf(theta_sigma(2.0, 2.0))
    with pytest.raises(InvalidInputError):
        theta_sigma(2.0, 3.0)


def test_nontriviality_follows_the_smoothness_budget():
    assert check_nontrivial(level_sequence(1, 2.0, 8, lambda k: 1.0), 2).nontrivial
    too_smooth = parse_weight_spec("const:s=3", 1, 2.0, 6)
    assert not check_nontrivial(too_smooth, 1).nontrivial


def test_weight_spec_kinds(tmp_path):
    power = parse_weight_spec("power:beta=0,s=0", 1, 2.0, 3)
    assert np.allclose(power.levels[2], 0.5)
    generated = parse_weight_spec("generated:beta=0", 1, 2.0, 2)
    assert np.allclose(generated.levels[1], 0.5)
    path = tmp_path / "w.vsms"
    write_multiseq(power, path)
    assert parse_weight_spec(f"file:{path}", 1, 2.0, 1).K == 1
    with pytest.raises(InvalidInputError):
        parse_weight_spec("wavy:s=1", 1, 2.0, 2)
    with pytest.raises(InvalidInputError):
        parse_weight_spec("const:s", 1, 2.0, 2)


def test_vsms_round_trip(tmp_path, smoothness_one):
    path = tmp_path / "w.vsms"
    write_multiseq(smoothness_one, path)
    assert read_multiseq(path) == smoothness_one


def test_incomplete_vsms_is_rejected(tmp_path):
    path = tmp_path / "w.vsms"
    path.write_text("VSMS1\nn=1 p=2 K=1\n0 0 1.0\n1 0 0.5\n")
    with pytest.raises(FormatError):
        read_multiseq(path)
    path.write_text("VSMS1\nn=1 p=2 K=1\n0 0 1.0\n1 5 0.5\n")
    with pytest.raises(FormatError) as excinfo:
        read_multiseq(path)
    assert excinfo.value.line == 4


def test_multiseq_rejects_nonpositive_entries():
    with pytest.raises(InvalidInputError):
        MultiSeq(1, 2.0, (np.array([1.0]), np.array([1.0, 0.0])))


def test_inflated_first_level_moves_the_constant_not_the_slope():
    ms = level_sequence(1, 2.0, 5, lambda k: 8.0 if k == 0 else 2.0 ** k)
    report = check_X_class(ms)
    assert report.alpha1 == pytest.approx(1.0)
    assert report.c1 == pytest.approx(8.0)
    assert report.verdict


def test_irregular_entries_fail_the_class_test():
    rng = np.random.default_rng(3)
    levels = tuple(10.0 ** rng.uniform(-12.0, 12.0, size=2 ** k) for k in range(6))
    report = check_X_class(MultiSeq(1, 2.0, levels))
    assert not report.passed["decay"]
    assert not report.passed["neighbor"]
    assert not report.verdict


def test_single_outlier_cube_sets_the_neighbor_exponent():
    ms = parse_weight_spec("const:s=1", 1, 2.0, 4)
    levels = [arr.copy() for arr in ms.levels]
    levels[4][5] *= 2.0
    report = check_X_class(MultiSeq(1, 2.0, tuple(levels)))
    assert report.alpha3 == pytest.approx(1.0)
    assert report.passed["neighbor"]


def test_gamma1_separates_the_two_classes():
    n, l, p = 1, 1, 2.0
    gamma1 = example_weight("gamma1", n, p, eps=0.1)
    assert gamma1.exponents == pytest.approx((-0.9, -0.9))
    ms = scale_levels(generate_from_weight(gamma1, p, 5, n), l)
    x_report = check_X_class(ms, p, theta_sigma(p, 1.0), p)
    y_report = check_Y_class(ms, p)
    assert x_report.verdict
    assert x_report.alpha2 == pytest.approx(0.95, abs=1e-6)
    assert x_report.alpha2 < l
    assert y_report.alpha2 == pytest.approx(1.4, abs=1e-6)
    assert y_report.alpha2 >= l + n / (2 * p)


@pytest.mark.parametrize("beta", [0.5, 2.0, 6.0])
def test_tangential_power_weights_have_unit_delta1(beta):
    ms = generate_from_weight(example_weight("tangential", 1, 2.0, beta), 2.0, 5, 1)
    assert estimate_deltas(ms).delta1 == pytest.approx(1.0)


def test_normal_power_weight_delta1_is_not_capped():
    ms = generate_from_weight(example_weight("normal", 1, 2.0, 2.0), 2.0, 5, 1)
    deltas = estimate_deltas(ms)
    assert deltas.delta1 == pytest.approx(3.0)
    assert deltas.delta2 == pytest.approx(1.0)


def test_critical_and_growing_sequences_are_trivial():
    l = 2
    critical = check_nontrivial(level_sequence(1, 2.0, 8, lambda k: 2.0 ** (k * l)), l)
    assert not critical.converging and not critical.nontrivial
    growing = check_nontrivial(level_sequence(1, 2.0, 8, lambda k: 2.0 ** (k * l) * (k + 1)), l)
    assert not growing.nontrivial
    assert math.isinf(growing.tail_estimate)


def test_slow_convergence_is_not_resolved():
    l = 2
    report = check_nontrivial(level_sequence(1, 2.0, 8, lambda k: 2.0 ** (k * (l - 0.01))), l)
    assert report.converging
    assert not report.nontrivial
    assert report.tail_estimate > report.partial_sums[-1]
