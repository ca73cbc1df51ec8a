"""Besov-type norms of sampled functions, spline approximation numbers and Hardy checks."""

from __future__ import annotations

import csv
import itertools
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import lsqr

from varsmooth.diffs import OmegaMode, avg_diff_field, delta_level, delta_lr, modulus, window_delta_field
from varsmooth.errors import InvalidInputError, NumericalError
from varsmooth.geometry import DyadicCube, cube_box, unit_box
from varsmooth.gridfn import GridFunction, cell_centers, cube_lr_norms, evaluate, expand, lr_value, mesh, norm
from varsmooth.polyfit import DegreeMode, best_error
from varsmooth.splines import collocation_matrix, t_operator
from varsmooth.weights import MultiSeq, WeightSequence, bar_sequence
from varsmooth.workers import parallel_map, spawn_generators

logger = logging.getLogger(__name__)

DENSE_LIMIT = 4_000_000
HARDY_TOLERANCE = 1e-9
HARDY_DRAW = 64


class NormVariant(str, Enum):
    bbar = "bbar"
    btilde = "btilde"
    seq = "seq"
    v2 = "v2"
    v3 = "v3"
    v4 = "v4"
    n1 = "N1"
    n2 = "N2"
    n3 = "N3"
    n4 = "N4"


@dataclass(frozen=True)
class BesovParams:
    """Difference order ``l``, exponents ``p, q, r`` and dilation ``c``."""

    l: int
    p: float
    q: float
    r: float
    c: float = 2.0

    def __post_init__(self) -> None:
        if int(self.l) != self.l or self.l < 1:
            raise InvalidInputError(f"l must be a positive integer, got {self.l}")
        for name in ("p", "q", "r"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"exponent {name} must be positive")
        if not self.c > 1:
            raise InvalidInputError(f"dilation c must exceed 1, got {self.c}")


@dataclass
class NormBreakdown:
    """Per-level terms, the zero-level term and their aggregate."""

    variant: str
    q: float
    terms: Dict[int, float] = field(default_factory=dict)
    zero_term: float = 0.0
    total: float = 0.0
    exact: bool = True

    def recompute(self) -> float:
        return lq_aggregate([self.terms[k] for k in sorted(self.terms)], self.q) + self.zero_term


def lq_aggregate(values: Iterable[float], q: float) -> float:
    """``(sum v^q)^{1/q}``, or the max for ``q = inf``; empty input gives 0."""

    arr = np.abs(np.asarray(list(values), dtype=float))
    if arr.size == 0:
        return 0.0
    if math.isinf(q):
        return float(arr.max())
    return float(np.sum(arr ** q) ** (1.0 / q))


def quasi_triangle_constant(p: float, q: float) -> float:
    def factor(e: float) -> float:
        return 1.0 if math.isinf(e) else max(1.0, 2.0 ** (1.0 / e - 1.0))

    return factor(p) * factor(q)


def weighted_lp(t: np.ndarray, values: np.ndarray, p: float) -> float:
    """``(sum_m t_m^p v_m^p)^{1/p}`` over one level."""

    product = np.abs(np.asarray(t) * np.asarray(values))
    if math.isinf(p):
        return float(product.max()) if product.size else 0.0
    return float(np.sum(product ** p) ** (1.0 / p))


def default_k_work(level: int, l: int) -> int:
    """Finest level whose cubes still hold enough cells for order-``l`` differences."""

    return max(0, level - math.ceil(math.log2(l + 1)))


def _k_range(phi: GridFunction, bp: BesovParams, top: int, k_work: Optional[int]) -> int:
    limit = default_k_work(phi.level, bp.l) if k_work is None else k_work
    if limit > phi.level:
        raise NumericalError(f"K_work={limit} exceeds the grid level {phi.level}", "norms", "k_range")
    return min(limit, top)


def zero_level_term(phi: GridFunction, ms: MultiSeq, bp: BesovParams) -> float:
    """``t_{0,0} ||phi | L_r(Q_{0,0})||``: the unit box is the only level-0 cube."""

    return ms.levels[0].reshape(-1)[0] * norm(phi, bp.r)


def _resample(t: GridFunction, level: int) -> np.ndarray:
    if t.level == level:
        return t.values
    grids = mesh(level, t.n)
    points = np.stack([g.reshape(-1) for g in grids], axis=1)
    return evaluate(t, points).reshape((2 ** level,) * t.n)


def _function_norm(
    phi: GridFunction,
    t: WeightSequence,
    bp: BesovParams,
    variant: NormVariant,
    k_work: Optional[int],
) -> NormBreakdown:
    top = _k_range(phi, bp, t.K, k_work)
    domain = unit_box(phi.n)
    breakdown = NormBreakdown(variant.value, bp.q)
    for k in range(1, top + 1):
        if variant is NormVariant.bbar:
            local = avg_diff_field(phi, 2.0 ** -k, bp.l, bp.r)
        else:
            local = window_delta_field(phi, k, bp.l, bp.r)
        weighted = _resample(t.levels[k], phi.level) * local
        breakdown.terms[k] = lr_value(weighted, phi.level, domain, bp.p)
    t0 = _resample(t.levels[0], phi.level)
    # x + I^n covers the unit box for every x in it
    breakdown.zero_term = lr_value(t0, phi.level, domain, bp.p) * norm(phi, bp.r)
    breakdown.total = breakdown.recompute()
    return breakdown


def norm_bbar(phi: GridFunction, t: WeightSequence, bp: BesovParams, k_work: Optional[int] = None) -> NormBreakdown:
    """Averaged-difference norm, levels ``1..K_work``."""

    return _function_norm(phi, t, bp, NormVariant.bbar, k_work)


def norm_btilde(phi: GridFunction, t: WeightSequence, bp: BesovParams, k_work: Optional[int] = None) -> NormBreakdown:
    """Sliding-window norm built on ``delta^l_r(x + 2^{-k} I^n)``, levels ``1..K_work``."""

    return _function_norm(phi, t, bp, NormVariant.btilde, k_work)


def norm_seq(phi: GridFunction, ms: MultiSeq, bp: BesovParams, k_work: Optional[int] = None) -> NormBreakdown:
    """Cube-sequence norm ``||(sum_m t_{k,m}^p delta(Q_{k,m})^p)^{1/p} | l_q||``."""

    top = _k_range(phi, bp, ms.K, k_work)
    breakdown = NormBreakdown(NormVariant.seq.value, bp.q)
    for k in range(top + 1):
        local = delta_level(phi, k, bp.l, bp.r, OmegaMode.full)
        breakdown.terms[k] = weighted_lp(ms.levels[k], local, bp.p)
    breakdown.zero_term = zero_level_term(phi, ms, bp)
    breakdown.total = breakdown.recompute()
    return breakdown


def _dilated_functional(phi: GridFunction, k: int, bp: BesovParams, variant: NormVariant) -> np.ndarray:
    def one(index: Sequence[int]) -> float:
        box = cube_box(DyadicCube(k, tuple(index)), bp.c)
        if variant is NormVariant.v2:
            return delta_lr(phi, box, bp.l, bp.r, OmegaMode.cube)
        scale = 1.0 if math.isinf(bp.r) else 2.0 ** (k * phi.n / bp.r)
        if variant is NormVariant.v3:
            return scale * best_error(phi, box, bp.l, bp.r, DegreeMode.total)
        return scale * modulus(phi, box, bp.l, bp.r)

    indices = list(itertools.product(range(2 ** k), repeat=phi.n))
    return np.array(parallel_map(one, indices)).reshape((2 ** k,) * phi.n)


def norm_variant(
    phi: GridFunction,
    ms: MultiSeq,
    bp: BesovParams,
    variant: Union[str, NormVariant],
    k_work: Optional[int] = None,
) -> NormBreakdown:
    """Dilated-cube norms: ``v2`` differences, ``v3`` best approximation, ``v4`` modulus."""

    variant = NormVariant(variant)
    if variant not in (NormVariant.v2, NormVariant.v3, NormVariant.v4):
        raise InvalidInputError(f"{variant.value} is not a dilated-cube variant")
    top = _k_range(phi, bp, ms.K, k_work)
    breakdown = NormBreakdown(variant.value, bp.q)
    for k in range(top + 1):
        breakdown.terms[k] = weighted_lp(ms.levels[k], _dilated_functional(phi, k, bp, variant), bp.p)
    breakdown.zero_term = zero_level_term(phi, ms, bp)
    breakdown.total = breakdown.recompute()
    return breakdown


@dataclass
class SNumbers:
    """Spline approximation numbers ``s_{-1} .. s_{K}``; ``exact`` is False for the surrogate."""

    values: Dict[int, float]
    exact: bool

    def as_list(self) -> List[float]:
        return [self.values[k] for k in sorted(self.values)]


def _spline_design(degree: int, k: int, level: int, n: int) -> sparse.csr_matrix:
    B = sparse.csr_matrix(collocation_matrix(degree, k, cell_centers(level)))
    design = B
    for _ in range(n - 1):
        design = sparse.kron(design, B, format="csr")
    return design


def _exact_level(phi: GridFunction, t_k: np.ndarray, k: int, l: int) -> float:
    """Weighted least squares over the degree ``l-1`` splines of level ``k``."""

    design = _spline_design(l - 1, k, phi.level, phi.n)
    cell_weights = expand(t_k ** 2, phi.level).reshape(-1) * phi.cell_volume
    sw = np.sqrt(cell_weights)
    rhs = phi.flat() * sw
    weighted = sparse.diags(sw) @ design
    if weighted.shape[0] * weighted.shape[1] <= DENSE_LIMIT:
        coeffs, *_ = np.linalg.lstsq(weighted.toarray(), rhs, rcond=None)
    else:
        result = lsqr(weighted, rhs, atol=1e-14, btol=1e-14, iter_lim=20 * weighted.shape[1])
        coeffs = result[0]
        logger.debug("lsqr level %d stopped with flag %d after %d iterations", k, result[1], result[2])
    residual = rhs - weighted @ coeffs
    return float(np.sqrt(np.sum(residual ** 2)))


def t_residual_term(phi: GridFunction, t_k: np.ndarray, k: int, bp: BesovParams) -> float:
    """``(sum_m t_{k,m}^p ||phi - T_k phi | L_r(Q_{k,m})||^p)^{1/p}``."""

    approx = t_operator(phi, k, bp.l, bp.r).sample(phi.level)
    local = cube_lr_norms((phi - approx).values, phi.level, k, bp.r)
    return weighted_lp(t_k, local, bp.p)


def spline_approx_numbers(
    phi: GridFunction, ms: MultiSeq, bp: BesovParams, k_work: Optional[int] = None
) -> SNumbers:
    """Exact weighted least squares for ``p = r = 2``; otherwise the T-operator upper bound."""

    top = _k_range(phi, bp, ms.K, k_work)
    exact = bp.p == 2.0 and bp.r == 2.0
    values: Dict[int, float] = {-1: zero_level_term(phi, ms, bp)}
    for k in range(top + 1):
        if exact:
            values[k] = _exact_level(phi, ms.levels[k], k, bp.l)
        else:
            values[k] = t_residual_term(phi, ms.levels[k], k, bp)
    if not exact:
        logger.debug("s-numbers for p=%s r=%s use the quasi-interpolant surrogate", bp.p, bp.r)
    return SNumbers(values, exact)


@dataclass
class NFunctionals:
    n1: float
    n2: float
    n3: float
    n4: float
    s_numbers: SNumbers
    breakdowns: Dict[str, NormBreakdown] = field(default_factory=dict)


def n_functionals(
    phi: GridFunction, ms: MultiSeq, bp: BesovParams, k_work: Optional[int] = None
) -> NFunctionals:
    """``N1``/``N2`` from order-``l`` spline approximation, ``N3``/``N4`` from order-``l+1`` atoms."""

    from varsmooth.atomic import decompose, level_mass, n3_decomposition, quasi_levels

    top = _k_range(phi, bp, ms.K, k_work)
    s_numbers = spline_approx_numbers(phi, ms, bp, top)
    n1 = NormBreakdown(NormVariant.n1.value, bp.q, dict(s_numbers.values))
    n1.total = n1.recompute()
    n1.exact = s_numbers.exact

    n2 = NormBreakdown(NormVariant.n2.value, bp.q)
    for k in range(top + 1):
        n2.terms[k] = t_residual_term(phi, ms.levels[k], k, bp)
    n2.zero_term = zero_level_term(phi, ms, bp)
    n2.total = n2.recompute()

    approximants = quasi_levels(phi, bp, top)
    n4 = NormBreakdown(NormVariant.n4.value, bp.q, {k: level_mass(U, ms, bp.p) for k, U in enumerate(approximants)})
    n4.total = n4.recompute()
    series = decompose(phi, ms, bp, top, gate=False, approximants=approximants)
    lightest = n3_decomposition(series, ms, bp)
    n3 = NormBreakdown(NormVariant.n3.value, bp.q, lightest.level_masses(ms, bp.p), exact=False)
    n3.total = n3.recompute()
    n3_value = n3.total
    logger.info("N1=%.6g N2=%.6g N3<=%.6g N4=%.6g", n1.total, n2.total, n3_value, n4.total)
    return NFunctionals(
        n1.total,
        n2.total,
        n3_value,
        n4.total,
        s_numbers,
        {"N1": n1, "N2": n2, "N3": n3, "N4": n4},
    )


def compute_norm(
    phi: GridFunction,
    ms: MultiSeq,
    bp: BesovParams,
    variant: Union[str, NormVariant],
    k_work: Optional[int] = None,
) -> NormBreakdown:
    """Dispatch on the variant tag; function-weight variants use the bar sequence of ``ms``."""

    variant = NormVariant(variant)
    if variant in (NormVariant.bbar, NormVariant.btilde):
        t = bar_sequence(ms, max(ms.K, phi.level))
        fn = norm_bbar if variant is NormVariant.bbar else norm_btilde
        return fn(phi, t, bp, k_work)
    if variant is NormVariant.seq:
        return norm_seq(phi, ms, bp, k_work)
    if variant in (NormVariant.v2, NormVariant.v3, NormVariant.v4):
        return norm_variant(phi, ms, bp, variant, k_work)
    return n_functionals(phi, ms, bp, k_work).breakdowns[variant.value]


def _format(value: float) -> str:
    return "inf" if math.isinf(value) else format(float(value), ".17g")


def breakdown_rows(rows: Iterable[NormBreakdown]) -> List[List[str]]:
    """``variant,k,term,total`` rows; the zero-level term is written at ``k = -1``."""

    out = []
    for breakdown in rows:
        if -1 not in breakdown.terms:
            out.append([breakdown.variant, "-1", _format(breakdown.zero_term), _format(breakdown.total)])
        for k in sorted(breakdown.terms):
            out.append([breakdown.variant, str(k), _format(breakdown.terms[k]), _format(breakdown.total)])
    return out


def write_breakdowns(rows: Iterable[NormBreakdown], path: Union[str, Path]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["variant", "k", "term", "total"])
        writer.writerows(breakdown_rows(rows))


class HardyBranch(str, Enum):
    """``tail``: ``b_k`` from the sums over ``j >= k``; ``head``: damped sums over ``j <= k``."""

    tail = "tail"
    head = "head"


@dataclass
class HardyResult:
    lhs: float
    rhs: float
    ratio: float
    bound: float
    verdict: bool


def _check_hardy_params(q: float, mu: float, beta: float, lam: Optional[float], branch: HardyBranch) -> None:
    if not (q > 0 and mu > 0):
        raise InvalidInputError("q and mu must be positive")
    if mu > q:
        raise InvalidInputError(f"Hardy inequality needs mu <= q, got mu={mu}, q={q}")
    if branch is HardyBranch.tail and not beta > 0:
        raise InvalidInputError("tail sums need beta > 0")
    if branch is HardyBranch.head:
        if beta < 0:
            raise InvalidInputError("beta must be nonnegative")
        if lam is None or not lam > beta:
            raise InvalidInputError("head sums need lambda > beta")


def hardy_bound(q: float, mu: float, beta: float, lam: Optional[float], branch: Union[str, HardyBranch]) -> float:
    """Analytic constant ``(1 - 2^{-gamma nu})^{-1/nu}`` with ``nu = min(mu, q)``."""

    branch = HardyBranch(branch)
    gamma = beta if branch is HardyBranch.tail else float(lam) - beta
    nu = min(mu, q)
    return float((1.0 - 2.0 ** (-gamma * nu)) ** (-1.0 / nu))


def hardy_sequences(
    a: Sequence[float], mu: float, lam: Optional[float], branch: HardyBranch
) -> np.ndarray:
    mags = np.abs(np.asarray(a, dtype=float)) ** mu
    if branch is HardyBranch.tail:
        return np.cumsum(mags[::-1])[::-1] ** (1.0 / mu)
    ks = np.arange(mags.size)
    damped = np.cumsum(2.0 ** (ks * mu * float(lam)) * mags)
    return 2.0 ** (-ks * float(lam)) * damped ** (1.0 / mu)


def hardy_check(
    a: Sequence[float],
    q: float,
    mu: float,
    beta: float,
    lam: Optional[float] = None,
    branch: Union[str, HardyBranch] = HardyBranch.tail,
) -> HardyResult:
    """Both sides of the weighted ``l_q`` inequality for one sequence."""

    branch = HardyBranch(branch)
    _check_hardy_params(q, mu, beta, lam, branch)
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 1 or not np.all(np.isfinite(arr)):
        raise InvalidInputError("Hardy sequence must be a finite one-dimensional array")
    b = hardy_sequences(arr, mu, lam, branch)
    scale = 2.0 ** (np.arange(arr.size) * beta)
    lhs = lq_aggregate(scale * b, q)
    rhs = lq_aggregate(scale * arr, q)
    bound = hardy_bound(q, mu, beta, lam, branch)
    if rhs == 0.0:
        return HardyResult(lhs, rhs, 0.0 if lhs == 0.0 else math.inf, bound, lhs == 0.0)
    ratio = lhs / rhs
    return HardyResult(lhs, rhs, ratio, bound, ratio <= bound * (1 + HARDY_TOLERANCE))


@dataclass
class HardyFamilyReport:
    max_ratio: float
    bound: float
    verdict: bool
    trials: int


def hardy_family_check(
    q: float,
    mu: float,
    beta: float,
    lam: Optional[float] = None,
    branch: Union[str, HardyBranch] = HardyBranch.tail,
    trials: int = 1000,
    length: int = 40,
    seed: int = 0,
) -> HardyFamilyReport:
    """Largest ratio over random sequences with random decay rates and sparsity.

    Every trial draws at least ``HARDY_DRAW`` entries and keeps the first
    ``length``, so runs that differ only in ``length`` share their prefixes.
    """

    branch = HardyBranch(branch)
    _check_hardy_params(q, mu, beta, lam, branch)

    size = max(length, HARDY_DRAW)

    def trial(rng: np.random.Generator) -> float:
        ks = np.arange(size)
        decay = rng.uniform(0.0, 2.0 * beta + 1.0)
        a = rng.standard_normal(size) * 2.0 ** (-decay * ks)
        a[rng.random(size) < rng.uniform(0.0, 0.8)] = 0.0
        a = a[:length]
        if not np.any(a):
            a[rng.integers(length)] = 1.0
        return hardy_check(a, q, mu, beta, lam, branch).ratio

    ratios = parallel_map(trial, spawn_generators(seed, trials))
    worst = float(max(ratios))
    bound = hardy_bound(q, mu, beta, lam, branch)
    return HardyFamilyReport(worst, bound, bool(worst <= bound * (1 + HARDY_TOLERANCE)), trials)
