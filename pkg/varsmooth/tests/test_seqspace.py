"""Tests for weighted sequence spaces and the embedding criteria."""

from __future__ import annotations

import math

import numpy as np
import pytest

from varsmooth.errors import FormatError, InvalidInputError
from varsmooth.seqspace import (
    SeqSpace,
    besov_embedding,
    brute_force_operator_norm,
    embedding_criterion,
    extremal_bundle,
    from_multiseq,
    read_seqspace,
    seq_norm,
    write_seqspace,
)
from varsmooth.weights import parse_weight_spec

J = 12
SIZE = 5


def make_space(p=2.0, q=2.0, beta_slope=0.0, seed=0):
    rng = np.random.default_rng(seed)
    js = np.arange(1, J + 1, dtype=float)
    weights = tuple(rng.uniform(1.0, 2.0, SIZE) for _ in range(J))
    return SeqSpace(2.0 ** (beta_slope * js), weights, p, q)


def unit_bundle():
    return [np.zeros(SIZE) for _ in range(J)]


def test_norm_of_zero_and_of_a_single_entry():
    sp = make_space()
    a = unit_bundle()
    assert seq_norm(a, sp) == 0.0
    a[3][2] = -2.0
    assert seq_norm(a, sp) == pytest.approx(sp.beta[3] * sp.weights[3][2] * 2.0)


def test_space_validation():
    with pytest.raises(InvalidInputError):
        SeqSpace(np.ones(2), (np.ones(3),), 2.0, 2.0)
    with pytest.raises(InvalidInputError):
        SeqSpace(np.ones(1), (np.array([1.0, 0.0]),), 2.0, 2.0)
    with pytest.raises(InvalidInputError):
        seq_norm([np.zeros(SIZE)], make_space())
    assert make_space().truncated(4).sizes == (SIZE,) * 4


def test_identical_spaces_embed_continuously_but_not_compactly():
    sp = make_space()
    verdict = embedding_criterion(sp, sp)
    assert verdict.continuous
    assert not verdict.compact
    assert math.isinf(verdict.p_star) and math.isinf(verdict.q_star)
    assert verdict.value == pytest.approx(1.0)
    assert verdict.as_row()["continuous"] is True


def test_decaying_level_weights_embed_compactly():
    source = make_space()
    target = SeqSpace(source.beta * 2.0 ** -np.arange(1, J + 1), source.weights, 2.0, 2.0)
    verdict = embedding_criterion(source, target)
    assert verdict.continuous and verdict.compact
    assert verdict.level_terms[0] == pytest.approx(0.5)


def test_growing_level_weights_do_not_embed():
    source = make_space()
    target = SeqSpace(source.beta * 2.0 ** np.arange(1, J + 1), source.weights, 2.0, 2.0)
    assert not embedding_criterion(source, target).continuous


def test_finite_q_star_sums_the_level_terms():
    source = make_space(q=2.0)
    target = SeqSpace(source.beta * 2.0 ** -np.arange(1, J + 1), source.weights, 2.0, 1.0)
    verdict = embedding_criterion(source, target)
    assert verdict.q_star == pytest.approx(2.0)
    assert verdict.value == pytest.approx(math.sqrt(sum(4.0 ** -j for j in range(1, J + 1))))
    assert verdict.continuous and verdict.compact


@pytest.mark.parametrize("p1, p2", [(2.0, 2.0), (4.0, 2.0), (math.inf, 1.0)])
def test_brute_force_matches_the_criterion(p1, p2):
    source = make_space(p=p1, seed=1)
    target = SeqSpace(source.beta * 2.0 ** -np.arange(1, J + 1), make_space(seed=2).weights, p2, 2.0)
    verdict = embedding_criterion(source, target)
    estimate = brute_force_operator_norm(source, target, trials=30, seed=4)
    assert estimate == pytest.approx(verdict.value, rel=1e-9)
    bundle = extremal_bundle(source, target)
    assert seq_norm(bundle, target) / seq_norm(bundle, source) == pytest.approx(verdict.value, rel=1e-9)


def test_mismatched_index_sets_are_rejected():
    small = SeqSpace(np.ones(2), (np.ones(2), np.ones(2)), 2.0, 2.0)
    large = SeqSpace(np.ones(2), (np.ones(2), np.ones(3)), 2.0, 2.0)
    with pytest.raises(InvalidInputError):
        embedding_criterion(small, large)


def test_besov_coefficient_spaces():
    smoother = parse_weight_spec("const:s=1", 1, 2.0, 7)
    rougher = parse_weight_spec("const:s=0", 1, 2.0, 7)
    sp = from_multiseq(smoother, 2.0)
    assert sp.J == 8
    assert sp.sizes[3] == 8
    verdict = besov_embedding(smoother, 2.0, rougher, 2.0)
    assert verdict.continuous and verdict.compact
    assert not besov_embedding(rougher, 2.0, smoother, 2.0).continuous


def test_vsqs_round_trip(tmp_path):
    sp = make_space(p=1.5, q=math.inf)
    path = tmp_path / "space.vsqs"
    write_seqspace(sp, path)
    back = read_seqspace(path)
    assert back.p == 1.5 and math.isinf(back.q)
    assert np.array_equal(back.beta, sp.beta)
    assert all(np.array_equal(a, b) for a, b in zip(back.weights, sp.weights))


def test_malformed_vsqs_reports_the_line(tmp_path):
    path = tmp_path / "space.vsqs"
    path.write_text("VSQS1\n1 2 2\n1 1.0\n1 0 1.0 extra field\n")
    with pytest.raises(FormatError) as excinfo:
        read_seqspace(path)
    assert excinfo.value.line == 4
    path.write_text("VSQS1\n1 2 2\n1 1.0\n1 1 1.0\n")
    with pytest.raises(FormatError):
        read_seqspace(path)
