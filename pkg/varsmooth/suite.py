"""Acceptance checks that exercise the whole package at reduced or desk scale."""

from __future__ import annotations

import csv
import itertools
import logging
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Tuple, Union

import numpy as np

from varsmooth.atomic import SplineSeries, decompose, reconstruct, truncation_errors
from varsmooth.diffs import shifted_difference, whitney_ratios
from varsmooth.families import family, random_spline
from varsmooth.gridfn import GridFunction, norm, sample
from varsmooth.norms import (
    BesovParams,
    HardyBranch,
    NormVariant,
    compute_norm,
    default_k_work,
    hardy_family_check,
    n_functionals,
)
from varsmooth.polyfit import almost_best_field
from varsmooth.seqspace import SeqSpace, brute_force_operator_norm, embedding_criterion
from varsmooth.splines import collocation_matrix, quasi_interpolant, refine, spline_pieces
from varsmooth.traceext import (
    PlaneSpec,
    besov_extend,
    besov_trace,
    derivative_bound_constant,
    extension_mass_ratio,
    make_averaging_op,
    recovery_errors,
    sobolev_trace_report,
    steklov_average,
    trace_mass_ratio,
)
from varsmooth.weights import (
    CONSTANT_CAP,
    ProductPowerWeight,
    check_X_class,
    check_Y_class,
    estimate_deltas,
    example_weight,
    generate_from_weight,
    parse_weight_spec,
    scale_levels,
    theta_sigma,
)
from varsmooth.workers import spawn_generators

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SuiteScale:
    functions: int
    random_splines: int
    hardy_trials: int
    space_pairs: int
    series: int
    level_1d: int
    level_2d: int
    whitney_functions: int


SCALES = {
    "reduced": SuiteScale(
        functions=6, random_splines=10, hardy_trials=100, space_pairs=10, series=10,
        level_1d=6, level_2d=4, whitney_functions=6,
    ),
    "desk": SuiteScale(
        functions=100, random_splines=50, hardy_trials=1000, space_pairs=100, series=50,
        level_1d=8, level_2d=5, whitney_functions=200,
    ),
}

# relative change allowed when the finest level grows by one
STABILITY_TOLERANCE = 0.1
BUMP_EXTRA_LEVELS = 4
HARDY_LENGTH = 40
WHITNEY_DIRECTIONS = {1: 64, 2: 8}


@dataclass
class SuiteRow:
    criterion: str
    passed: bool
    value: float
    detail: str


def _partition_of_unity(scale: SuiteScale) -> SuiteRow:
    points = np.random.default_rng(0).random(1000)
    worst = 0.0
    for degree, k in itertools.product(range(4), range(7)):
        worst = max(worst, float(np.max(np.abs(collocation_matrix(degree, k, points).sum(axis=1) - 1.0))))
    return SuiteRow("partition_of_unity", worst <= 1e-12, worst, "degrees 0..3, k <= 6, 1000 points")


def _quasi_projection(scale: SuiteScale) -> SuiteRow:
    worst = 0.0
    rngs = iter(spawn_generators(1, 4 * 2 * scale.random_splines))
    for l, k in itertools.product(range(1, 5), (1, 2)):
        for _ in range(scale.random_splines):
            S = random_spline(next(rngs), 1, l - 1, k)
            projected = quasi_interpolant(spline_pieces(S), k, l).to_spline()
            worst = max(worst, float(np.max(np.abs(projected.coeffs - S.coeffs))))
    points = np.random.default_rng(2).random((200, 1))
    for l in range(1, 5):
        poly = np.polynomial.Polynomial(np.arange(1.0, l + 1.0))
        phi = sample(lambda x: poly(x), 6, 1)
        spline = quasi_interpolant(almost_best_field(phi, 2, l, 2.0), 2, l).to_spline()
        worst = max(worst, float(np.max(np.abs(spline.evaluate(points) - poly(points[:, 0])))))
    return SuiteRow("quasi_interpolant_projection", worst <= 1e-9, worst, "random splines and polynomials, l <= 4")


def _difference_annihilation(scale: SuiteScale) -> SuiteRow:
    worst = 0.0
    for l in range(1, 5):
        poly = np.polynomial.Polynomial(np.linspace(1.0, -1.0, l))
        values = sample(lambda x, y: poly(x) + 0.5 * poly(y), 5, 2).values
        for shift in ((1, 0), (0, 2), (1, 1), (2, -1)):
            diff, _ = shifted_difference(values, shift, l)
            if diff is not None:
                worst = max(worst, float(np.max(np.abs(diff))))
    points = np.random.default_rng(3).random((500, 2))
    for rng in spawn_generators(4, scale.random_splines):
        S = random_spline(rng, 2, 2, 1)
        worst_refine = float(np.max(np.abs(refine(S, 3).evaluate(points) - S.evaluate(points))))
        worst = max(worst, worst_refine)
    return SuiteRow("difference_annihilation", worst <= 1e-10, worst, "lattice differences and knot insertion")


def _drift(coarse: float, fine: float) -> float:
    """Relative change of a reported constant when the finest level grows by one."""

    return abs(fine - coarse) / abs(coarse) if coarse else math.inf


def _whitney_constant(scale: SuiteScale, n: int, level: int, l: int, r: float) -> float:
    worst = 0.0
    for phi in family(f"piecewise{scale.whitney_functions}", n, level, seed=5):
        for k in range(default_k_work(level, l) + 1):
            ratios = whitney_ratios(phi, k, l, r, H=WHITNEY_DIRECTIONS[n])
            for values in (ratios.modulus_ratio, ratios.best_approx_ratio):
                if values:
                    worst = max(worst, max(values), 1.0 / min(values))
    return worst


def _whitney(scale: SuiteScale) -> SuiteRow:
    worst, drift = 0.0, 0.0
    for n, level in ((1, scale.level_1d), (2, scale.level_2d)):
        for l, r in ((1, 2.0), (2, 2.0), (2, 1.0)):
            coarse = _whitney_constant(scale, n, level, l, r)
            fine = _whitney_constant(scale, n, level + 1, l, r)
            worst = max(worst, coarse, fine)
            drift = max(drift, _drift(coarse, fine))
    passed = worst <= 100.0 and drift < STABILITY_TOLERANCE
    return SuiteRow("whitney_sandwich", passed, worst, f"n=1,2 (l,r) in (1,2),(2,2),(2,1) refinement drift={drift:.3g}")


def _equivalence_spread(scale: SuiteScale, level: int) -> float:
    bp = BesovParams(2, 2.0, 2.0, 2.0)
    k_work = default_k_work(level, bp.l)
    worst = 1.0
    variants = (NormVariant.seq, NormVariant.v2, NormVariant.v3, NormVariant.v4)
    weights = {
        "const": parse_weight_spec("const:s=1", 1, bp.p, k_work),
        "normal": scale_levels(generate_from_weight(example_weight("normal", 1, bp.p, 0.5), bp.p, k_work, 1), 1.0),
    }
    for ms in weights.values():
        totals = {v: [] for v in variants}
        for phi in family(f"smooth{scale.functions}", 1, level, seed=7):
            for v in variants:
                totals[v].append(compute_norm(phi, ms, bp, v, k_work).total)
        for a, b in itertools.combinations(variants, 2):
            ratios = np.array(totals[a]) / np.array(totals[b])
            worst = max(worst, float(ratios.max() / ratios.min()))
    return worst


def _equivalence(scale: SuiteScale) -> SuiteRow:
    coarse = _equivalence_spread(scale, scale.level_1d)
    fine = _equivalence_spread(scale, scale.level_1d + 1)
    drift = _drift(coarse, fine)
    passed = max(coarse, fine) <= 1e3 and drift < STABILITY_TOLERANCE
    return SuiteRow("norm_equivalence", passed, coarse, f"max/min of pairwise ratios, refinement drift={drift:.3g}")


def _chain_constants(scale: SuiteScale, bp: BesovParams, level: int) -> Tuple[float, float, bool]:
    """``max N4/||phi||`` and ``max ||phi||/N3`` over the smooth family, with the ``N3 <= N4`` check."""

    ms = parse_weight_spec("const:s=1", 1, bp.p, level)
    chain_ok = True
    upper, lower = 0.0, 0.0
    for phi in family(f"smooth{scale.functions}", 1, level, seed=13):
        nf = n_functionals(phi, ms, bp)
        seq = compute_norm(phi, ms, bp, NormVariant.seq).total
        chain_ok = chain_ok and nf.n3 <= nf.n4 * (1 + 1e-9)
        upper = max(upper, nf.n4 / seq)
        lower = max(lower, seq / nf.n3)
    return upper, lower, chain_ok


def _truncation_slope(phi: GridFunction, bp: BesovParams) -> float:
    """Slope of ``log2`` truncation errors over the finest half of the levels."""

    ms = parse_weight_spec("const:s=1", phi.n, bp.p, phi.level)
    errors = truncation_errors(phi, decompose(phi, ms, bp, gate=False), bp.r)
    first = (len(errors) - 1) // 2
    js = np.arange(first, len(errors), dtype=float)
    return float(np.polyfit(js, np.log2(np.maximum(errors[first:], 1e-300)), 1)[0])


def _round_trip(scale: SuiteScale) -> SuiteRow:
    level = scale.level_1d
    bp = BesovParams(2, 2.0, 2.0, 2.0)
    ms = parse_weight_spec("const:s=1", 1, bp.p, level)
    spline_error = 0.0
    for phi in family(f"spline{scale.functions}", 1, level, seed=9, degree=bp.l):
        series = decompose(phi, ms, bp, gate=False)
        spline_error = max(spline_error, norm(phi - reconstruct(series, level=level), bp.r))

    bump = family("bump1", 1, level + BUMP_EXTRA_LEVELS, seed=11)[0]
    slope = _truncation_slope(bump, bp)

    upper, lower, chain_ok = _chain_constants(scale, bp, level)
    fine_upper, fine_lower, fine_ok = _chain_constants(scale, bp, level + 1)
    drift = max(_drift(upper, fine_upper), _drift(lower, fine_lower))
    passed = (
        spline_error <= 1e-6
        and slope <= -(bp.l + 1) + 0.5
        and chain_ok
        and fine_ok
        and drift < STABILITY_TOLERANCE
    )
    detail = f"slope={slope:.3f} C={upper:.3g} C'={lower:.3g} chain={chain_ok and fine_ok} drift={drift:.3g}"
    return SuiteRow("atomic_round_trip", passed, spline_error, detail)


def _hardy(scale: SuiteScale) -> SuiteRow:
    worst, drift = 0.0, 0.0
    passed = True
    for beta, mu, q in itertools.product((0.5, 1.0, 2.0), (0.5, 1.0), (1.0, 2.0, math.inf)):
        for branch in HardyBranch:
            reports = [
                hardy_family_check(q, mu, beta, beta + 1.0, branch, trials=scale.hardy_trials, length=length, seed=17)
                for length in (HARDY_LENGTH, HARDY_LENGTH + 1)
            ]
            passed = passed and all(report.verdict for report in reports)
            worst = max(worst, *(report.max_ratio / report.bound for report in reports))
            drift = max(drift, _drift(reports[0].max_ratio, reports[1].max_ratio))
    passed = passed and drift < STABILITY_TOLERANCE
    return SuiteRow("hardy", passed, worst, f"largest ratio over the analytic bound, length drift={drift:.3g}")



def _random_space(rng: np.random.Generator, J: int, size: int, slope: float, p: float, q: float) -> SeqSpace:
    js = np.arange(1, J + 1, dtype=float)
    beta = 2.0 ** (slope * js) * rng.uniform(1.0, 2.0, J)
    weights = tuple(rng.uniform(1.0, 2.0, size) for _ in range(J))
    return SeqSpace(beta, weights, p, q)


def _embedding_oracle(scale: SuiteScale) -> SuiteRow:
    disagreements = 0
    exponents = (1.0, 2.0, math.inf)
    for rng in spawn_generators(19, scale.space_pairs):
        slope = float(rng.choice([-1.0, 1.0]))
        p1, q1, p2, q2 = (float(rng.choice(exponents)) for _ in range(4))
        seed = int(rng.integers(1 << 31))
        source = _random_space(rng, 24, 64, 0.0, p1, q1)
        target = _random_space(rng, 24, 64, slope, p2, q2)
        spaces = {J: (source.truncated(J), target.truncated(J)) for J in (12, 24)}
        verdict = embedding_criterion(*spaces[12])
        small = brute_force_operator_norm(*spaces[12], trials=20, seed=seed)
        large = brute_force_operator_norm(*spaces[24], trials=20, seed=seed)
        growth = large / small
        agrees = growth < 1.2 if verdict.continuous else growth >= 10.0
        disagreements += 0 if agrees else 1
    return SuiteRow("embedding_oracle", disagreements == 0, float(disagreements), f"{scale.space_pairs} random pairs")


def _trace_constants(scale: SuiteScale, K: int) -> Tuple[float, float, float]:
    """Identity defect and the largest trace and extension mass ratios over damped random series.

    Level ``k`` is damped by ``2^{-2k}`` so the weighted masses form a convergent geometric series.
    """

    ps = PlaneSpec(2, 1)
    identity = 0.0
    trace_ratio, ext_ratio = 0.0, 0.0
    ms = parse_weight_spec("const:s=1", 2, 2.0, K)
    rngs = iter(spawn_generators(23, 2 * scale.series))
    for _ in range(scale.series):
        plane_rng, full_rng = next(rngs), next(rngs)
        plane = SplineSeries(1, 2, tuple(4.0 ** -k * random_spline(plane_rng, 1, 2, k) for k in range(K + 1)))
        back = besov_trace(besov_extend(plane, ps), ps)
        for a, b in zip(plane.levels, back.levels):
            identity = max(identity, float(np.max(np.abs(a.coeffs - b.coeffs))))
        full = SplineSeries(2, 2, tuple(4.0 ** -k * random_spline(full_rng, 2, 2, k) for k in range(K + 1)))
        trace_ratio = max(trace_ratio, trace_mass_ratio(full, ms, ps, 2.0))
        ext_ratio = max(ext_ratio, extension_mass_ratio(plane, ms, ps, 2.0))
    return identity, trace_ratio, ext_ratio


def _trace_extension(scale: SuiteScale) -> SuiteRow:
    identity, trace_ratio, ext_ratio = _trace_constants(scale, 3)
    _, fine_trace, fine_ext = _trace_constants(scale, 4)
    drift = max(_drift(trace_ratio, fine_trace), _drift(ext_ratio, fine_ext))
    passed = (
        identity <= 1e-12
        and max(trace_ratio, ext_ratio, fine_trace, fine_ext) <= CONSTANT_CAP
        and drift < STABILITY_TOLERANCE
    )
    detail = f"trace={trace_ratio:.4g} extension={ext_ratio:.4g} drift={drift:.3g}"
    return SuiteRow("trace_extension", passed, identity, detail)


def _averaging(scale: SuiteScale) -> SuiteRow:
    level = scale.level_1d + 1
    reproduction = 0.0
    for l in (1, 2, 3, 4):
        ao = make_averaging_op(l, 1)
        poly = np.polynomial.Polynomial(np.linspace(0.5, 1.5, l))
        phi = sample(lambda x: poly(x), level, 1)
        eps = 2.0 ** -4
        smoothed = steklov_average(phi, eps, ao).values
        margin = int(math.ceil((l + 1) * eps / phi.h)) + 1
        reproduction = max(reproduction, float(np.max(np.abs((smoothed - phi.values)[margin:-margin]))))
    ao = make_averaging_op(2, 1)
    decreasing = True
    constants = []
    deltas = [2.0 ** -j for j in range(2, 6)]
    for phi in family(f"smooth{min(scale.functions, 20)}", 1, level, seed=29):
        errors = [recovery_errors(phi, ao, deltas)[d] for d in deltas]
        decreasing = decreasing and all(b < a for a, b in zip(errors, errors[1:]))
        constants.append(derivative_bound_constant(phi, 4, ao))
    energy_ratios = []
    bp = BesovParams(1, 2.0, 2.0, 2.0)
    for gamma in (ProductPowerWeight((0.0, 0.0), 2.0), example_weight("normal", 1, 2.0, 0.5)):
        for phi in family(f"smooth{scale.functions}", 1, scale.level_1d, seed=31):
            energy_ratios.append(sobolev_trace_report(phi, gamma, bp, K=3).ratio)
    spread = max(energy_ratios) / min(energy_ratios)
    derivative_c = max(constants)
    passed = reproduction <= 1e-8 and decreasing and derivative_c <= CONSTANT_CAP and spread <= 1e3
    detail = f"recovery_decreasing={decreasing} derivative_C={derivative_c:.4g} energy_spread={spread:.4g}"
    return SuiteRow("averaging_and_slab", passed, reproduction, detail)


def _weight_diagnostics(scale: SuiteScale) -> SuiteRow:
    """Child-sum exponents of ``|x_1|^beta`` and the class separation of ``gamma1``.

    The child sums of a tangential power weight are exactly ``2^{-(j-k)}`` times
    the parent, so ``delta1`` is 1 for every ``beta``. The row gates on that
    value and reports its distance from the 1/2 quoted for this weight.
    """

    K = 5
    delta1 = {}
    for beta in (0.5, 1.0, 2.0):
        gamma = example_weight("tangential", 1, 2.0, beta)
        delta1[beta] = estimate_deltas(generate_from_weight(gamma, 2.0, K, 1), d=1).delta1
    quoted_gap = max(abs(v - 0.5) for v in delta1.values())
    deltas_ok = all(abs(v - 1.0) <= 0.1 for v in delta1.values())

    n, l, p = 1, 1, 2.0
    gamma1 = example_weight("gamma1", n, p, eps=0.1)
    ms = scale_levels(generate_from_weight(gamma1, p, K, n), l)
    x_report = check_X_class(ms, p, theta_sigma(p, 1.0), p)
    y_report = check_Y_class(ms, p)
    separated = x_report.verdict and x_report.alpha2 < l and y_report.alpha2 >= l + n / (2.0 * p)
    shown = " ".join(f"{beta:g}:{v:.3f}" for beta, v in delta1.items())
    detail = (
        f"delta1 by beta {shown} (quoted 0.5) "
        f"X alpha2={x_report.alpha2:.4g} Y alpha2={y_report.alpha2:.4g}"
    )
    return SuiteRow("weight_diagnostics", deltas_ok and separated, quoted_gap, detail)



CRITERIA: Dict[str, Callable[[SuiteScale], SuiteRow]] = {
    "partition_of_unity": _partition_of_unity,
    "quasi_interpolant_projection": _quasi_projection,
    "difference_annihilation": _difference_annihilation,
    "whitney_sandwich": _whitney,
    "norm_equivalence": _equivalence,
    "atomic_round_trip": _round_trip,
    "hardy": _hardy,
    "embedding_oracle": _embedding_oracle,
    "trace_extension": _trace_extension,
    "averaging_and_slab": _averaging,
    "weight_diagnostics": _weight_diagnostics,
}


def run_suite(scale: str = "reduced", only: Optional[Iterable[str]] = None) -> List[SuiteRow]:
    """Evaluate the selected criteria, in declaration order."""

    if scale not in SCALES:
        raise ValueError(f"unknown suite scale {scale!r}")
    selected = set(only) if only is not None else set(CRITERIA)
    unknown = selected - set(CRITERIA)
    if unknown:
        raise ValueError(f"unknown criteria: {', '.join(sorted(unknown))}")
    rows = []
    for name, check in CRITERIA.items():
        if name not in selected:
            continue
        started = time.perf_counter()
        row = check(SCALES[scale])
        logger.info("%s: passed=%s value=%.4g (%.1fs)", name, row.passed, row.value, time.perf_counter() - started)
        rows.append(row)
    return rows


def write_suite_csv(rows: Iterable[SuiteRow], path: Optional[Union[str, Path]] = None) -> None:
    handle = open(path, "w", newline="", encoding="utf-8") if path else sys.stdout
    try:
        writer = csv.writer(handle)
        writer.writerow(["criterion", "passed", "value", "detail"])
        for row in rows:
            writer.writerow([row.criterion, int(row.passed), format(row.value, ".6g"), row.detail])
    finally:
        if path:
            handle.close()
