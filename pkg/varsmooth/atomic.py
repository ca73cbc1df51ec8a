"""Spline atomic decomposition, reconstruction and the level inequalities behind them."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import lsqr

from varsmooth.errors import InvalidInputError
from varsmooth.gridfn import GridFunction, cube_lr_norms, norm
from varsmooth.norms import (
    BesovParams,
    default_k_work,
    lq_aggregate,
    spline_approx_numbers,
    weighted_lp,
)
from varsmooth.diffs import OmegaMode, delta_level
from varsmooth.splines import (
    SplineFn,
    index_count,
    read_terms,
    refine,
    spline_from_terms,
    subdivision_matrix,
    t_operator,
    write_terms,
    zero_spline,
)
from varsmooth.weights import ClassReport, DeltaExponents, MultiSeq, check_X_class, check_Y_class, theta_sigma

logger = logging.getLogger(__name__)

MIN_MASS_TOLERANCE = 1e-14


@dataclass(frozen=True, eq=False)
class SplineSeries:
    """``sum_k sum_m beta_{k,m} N_{k,m}`` with one :class:`SplineFn` per level ``0..K``."""

    n: int
    degree: int
    levels: Tuple[SplineFn, ...]
    metadata: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.levels:
            raise InvalidInputError("a spline series needs at least one level")
        for k, level in enumerate(self.levels):
            if (level.n, level.degree, level.level) != (self.n, self.degree, k):
                raise InvalidInputError(f"series level {k} has the wrong dimension, degree or level")

    @property
    def K(self) -> int:
        return len(self.levels) - 1

    def partial(self, J: Optional[int] = None) -> SplineFn:
        """``sum_{k <= J} v_k`` expressed in the level-``J`` basis."""

        J = self.K if J is None else J
        if not 0 <= J <= self.K:
            raise InvalidInputError(f"partial sum level {J} outside 0..{self.K}")
        total = zero_spline(self.n, self.degree, J)
        for level in self.levels[: J + 1]:
            total = total + refine(level, J)
        return total

    def level_masses(self, ms: MultiSeq, p: float) -> Dict[int, float]:
        return {k: level_mass(level, ms, p) for k, level in enumerate(self.levels)}

    def terms(self) -> List[Tuple[int, Tuple[int, ...], float]]:
        out = []
        for level in self.levels:
            out.extend(level.terms())
        return out


def spline_weights(ms: MultiSeq, k: int, degree: int) -> np.ndarray:
    """``t_{k,m}`` over spline indices; boundary indices use the nearest in-range cube."""

    if k > ms.K:
        raise InvalidInputError(f"multiple sequence has no level {k}")
    idx = np.clip(np.arange(-degree, 2 ** k), 0, 2 ** k - 1)
    return ms.levels[k][np.ix_(*([idx] * ms.n))]


def level_mass(S: SplineFn, ms: MultiSeq, p: float) -> float:
    return weighted_lp(spline_weights(ms, S.level, S.degree), S.coeffs, p)


def coefficient_mass(s: SplineSeries, ms: MultiSeq, p: float, q: float) -> float:
    """``l_q(l_p(t |beta|))`` over the levels of a series."""

    return lq_aggregate(s.level_masses(ms, p).values(), q)


def atom_gate(ms: MultiSeq, bp: BesovParams, theta: Optional[float] = None) -> Tuple[ClassReport, bool]:
    """Class test for atoms of degree ``l``: ``alpha1 > n(1/theta - 1/r)`` and ``alpha2 < l``."""

    theta = min(1.0, bp.p, bp.r) if theta is None else theta
    report = check_X_class(ms, bp.p, theta_sigma(bp.p, theta), bp.p)
    threshold = ms.n * (1.0 / theta - (0.0 if math.isinf(bp.r) else 1.0 / bp.r))
    return report, report.satisfies(alpha1_min=threshold, alpha2_max=float(bp.l))


def quasi_levels(phi: GridFunction, bp: BesovParams, top: int) -> List[SplineFn]:
    """``U_k = T_k(phi)`` with degree-``l`` splines for ``k = 0..top``."""

    return [t_operator(phi, k, bp.l + 1, bp.r) for k in range(top + 1)]


def decompose(
    phi: GridFunction,
    ms: MultiSeq,
    bp: BesovParams,
    k_work: Optional[int] = None,
    gate: bool = True,
    approximants: Optional[Sequence[SplineFn]] = None,
) -> SplineSeries:
    """Telescoped quasi-interpolants: ``beta_0 = U_0`` and ``beta_k = U_k - U_{k-1}``.

    A failed class test is logged; the series is computed regardless.
    """

    top = min(default_k_work(phi.level, bp.l) if k_work is None else k_work, ms.K)
    gate_passed = None
    if gate:
        report, gate_passed = atom_gate(ms, bp)
        if not gate_passed:
            logger.warning(
                "Weight fails the atom class test (alpha1=%.4g alpha2=%.4g); norm equivalence is not guaranteed",
                report.alpha1,
                report.alpha2,
            )
    U = list(approximants) if approximants is not None else quasi_levels(phi, bp, top)
    if len(U) < top + 1:
        raise InvalidInputError("not enough approximants for the requested levels")
    levels = [U[0]]
    for k in range(1, top + 1):
        levels.append(SplineFn(phi.n, bp.l, k, U[k].coeffs - refine(U[k - 1], k).coeffs))
    error = norm(phi - U[top].sample(phi.level), bp.r)
    logger.info("Decomposed into %d levels, reconstruction error %.3e", top + 1, error)
    metadata = {"r": bp.r, "reconstruction_error": error, "gate_passed": gate_passed}
    return SplineSeries(phi.n, bp.l, tuple(levels), metadata)


def reconstruct(s: SplineSeries, J: Optional[int] = None, level: Optional[int] = None) -> GridFunction:
    """Partial sum through level ``J`` sampled on the level-``level`` grid."""

    J = s.K if J is None else J
    level = s.K if level is None else level
    if level < J:
        raise InvalidInputError("sampling grid is coarser than the partial sum")
    return s.partial(J).sample(level)


def truncation_errors(phi: GridFunction, s: SplineSeries, r: float) -> List[float]:
    """``||phi - sum_{k <= J} v_k||_r`` on the grid of ``phi`` for ``J = 0..K``."""

    if phi.level < s.K:
        raise InvalidInputError("series is finer than the sampling grid")
    return [norm(phi - reconstruct(s, J, phi.level), r) for J in range(s.K + 1)]



def _refinement_operator(n: int, degree: int, k: int, K: int) -> sparse.csr_matrix:
    one_d = sparse.identity(index_count(degree, k), format="csr")
    for j in range(k, K):
        one_d = sparse.csr_matrix(subdivision_matrix(degree, j)) @ one_d
    full = one_d
    for _ in range(n - 1):
        full = sparse.kron(full, one_d, format="csr")
    return full


def minimum_mass_decomposition(s: SplineSeries, ms: MultiSeq) -> SplineSeries:
    """Smallest ``l_2(l_2(t beta))`` bundle whose level-``K`` sum equals that of ``s``.

    In scaled unknowns ``y_k = t_k beta_k`` this is a minimum-norm solution of a
    consistent underdetermined system, which ``lsqr`` returns from a zero start.
    """

    K = s.K
    target = s.partial(K).coeffs.reshape(-1)
    blocks_, inverse_weights = [], []
    for k in range(K + 1):
        w_inv = 1.0 / spline_weights(ms, k, s.degree).reshape(-1)
        inverse_weights.append(w_inv)
        blocks_.append(_refinement_operator(s.n, s.degree, k, K) @ sparse.diags(w_inv))
    system = sparse.hstack(blocks_, format="csr")
    y = lsqr(system, target, atol=MIN_MASS_TOLERANCE, btol=MIN_MASS_TOLERANCE, iter_lim=50 * system.shape[1])[0]
    levels, offset = [], 0
    for k, w_inv in enumerate(inverse_weights):
        size = w_inv.size
        levels.append(SplineFn(s.n, s.degree, k, y[offset:offset + size] * w_inv))
        offset += size
    return SplineSeries(s.n, s.degree, tuple(levels), {**s.metadata, "minimum_mass": True})


def single_level_series(s: SplineSeries) -> SplineSeries:
    """All mass carried by the finest level: ``beta_K = U_K``, earlier levels empty."""

    levels = [zero_spline(s.n, s.degree, k) for k in range(s.K)] + [s.partial(s.K)]
    return SplineSeries(s.n, s.degree, tuple(levels), dict(s.metadata))


def n3_decomposition(s: SplineSeries, ms: MultiSeq, bp: BesovParams) -> SplineSeries:
    """Lightest of the candidate representations of the same truncated function."""

    candidates = [s, single_level_series(s)]
    if bp.p == 2.0 and bp.q == 2.0:
        candidates.append(minimum_mass_decomposition(s, ms))
    return min(candidates, key=lambda c: coefficient_mass(c, ms, bp.p, bp.q))


@dataclass
class SeriesBound:
    lhs: float
    rhs: float
    ratio: float
    theta: float
    gate_passed: bool


def series_norm_bound(
    s: SplineSeries,
    ms: MultiSeq,
    bp: BesovParams,
    theta: Optional[float] = None,
    oversample: int = 3,
) -> SeriesBound:
    """Approximation of the limit by partial sums against the ``2^{kn/theta}``-weighted level masses."""

    theta = min(1.0, bp.p, bp.r) if theta is None else theta
    _, gate_passed = atom_gate(ms, bp, theta)
    if s.K > ms.K:
        raise InvalidInputError("series is deeper than the multiple sequence")
    level = s.K + oversample
    limit = s.partial().sample(level)
    inv_r = 0.0 if math.isinf(bp.r) else 1.0 / bp.r
    lhs_terms, rhs_terms = [], []
    for k in range(s.K + 1):
        t_k = ms.levels[k]
        partial = s.partial(k).sample(level)
        gap = cube_lr_norms((limit - partial).values, level, k, bp.r)
        lhs_terms.append(weighted_lp(t_k * 2.0 ** (k * s.n * inv_r), gap, bp.p))
        piece = cube_lr_norms(s.levels[k].sample(level).values, level, k, bp.r)
        rhs_terms.append(weighted_lp(t_k * 2.0 ** (k * s.n / theta), piece, bp.p))
    zero = ms.levels[0].reshape(-1)[0] * norm(limit, bp.r)
    lhs = lq_aggregate(lhs_terms, bp.q) + zero
    rhs = lq_aggregate(rhs_terms, bp.q)
    ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
    return SeriesBound(lhs, rhs, ratio, theta, gate_passed)


class InequalityMode(str, Enum):
    """``generated``: weights built from a shell-generated sequence; ``higher_order``: X-class weights."""

    generated = "generated"
    higher_order = "higher_order"


@dataclass
class LevelInequalityReport:
    mode: str
    exponent: float
    lhs: Dict[int, float]
    rhs: Dict[int, float]
    ratios: Dict[int, float]

    @property
    def max_ratio(self) -> float:
        finite = [v for v in self.ratios.values() if math.isfinite(v)]
        return max(finite) if finite else 0.0


def level_inequality_check(
    phi: GridFunction,
    ms: MultiSeq,
    bp: BesovParams,
    mode: Union[str, InequalityMode] = InequalityMode.higher_order,
    deltas: Optional[DeltaExponents] = None,
    d: int = 1,
    eps: float = 0.0,
    mu: Optional[float] = None,
    alpha2: Optional[float] = None,
    k_work: Optional[int] = None,
) -> LevelInequalityReport:
    """Weighted cube differences at each level against a damped aggregate of spline errors.

    ``higher_order`` compares with order ``l+1`` approximation numbers and exponent
    ``l - alpha2``. ``generated`` uses order ``l`` and exponent
    ``min(l, l - 1 + (delta2 - eps)/p) + d (delta1 - eps)/p - alpha2``; with ``d = 0``
    it reduces to ``l - alpha2``.
    """

    mode = InequalityMode(mode)
    mu = min(1.0, bp.p, bp.r) if mu is None else mu
    if not mu > 0:
        raise InvalidInputError("mu must be positive")
    top = min(default_k_work(phi.level, bp.l + 1) if k_work is None else k_work, ms.K)
    if mode is InequalityMode.higher_order:
        if alpha2 is None:
            alpha2 = check_X_class(ms, bp.p, math.inf, bp.p).alpha2
        exponent = bp.l - alpha2
        approx_params = BesovParams(bp.l + 1, bp.p, bp.q, bp.r, bp.c)
    else:
        if alpha2 is None:
            alpha2 = check_Y_class(ms, bp.p).alpha2
        if d == 0:
            exponent = bp.l - alpha2
        else:
            if deltas is None:
                raise InvalidInputError("generated mode needs the delta exponents of the weight")
            lam = min(bp.l, bp.l - 1 + (deltas.delta2 - eps) / bp.p)
            exponent = lam + d * (deltas.delta1 - eps) / bp.p - alpha2
        approx_params = bp
    s_numbers = spline_approx_numbers(phi, ms, approx_params, top).values
    lhs, rhs, ratios = {}, {}, {}
    for k in range(top + 1):
        lhs[k] = weighted_lp(ms.levels[k], delta_level(phi, k, bp.l, bp.r, OmegaMode.full), bp.p)
        damped = [2.0 ** (j * mu * exponent) * s_numbers[j] ** mu for j in range(-1, k + 1)]
        rhs[k] = 2.0 ** (-k * exponent) * sum(damped) ** (1.0 / mu)
        ratios[k] = lhs[k] / rhs[k] if rhs[k] > 0 else (0.0 if lhs[k] == 0 else math.inf)
    return LevelInequalityReport(mode.value, exponent, lhs, rhs, ratios)


def write_series(s: SplineSeries, path: Union[str, Path]) -> None:
    write_terms(path, s.n, s.degree, s.K, s.terms())


def read_series(path: Union[str, Path]) -> SplineSeries:
    n, degree, K, terms = read_terms(path)
    grouped: Dict[int, list] = {k: [] for k in range(K + 1)}
    for k, m, beta in terms:
        grouped[k].append((k, m, beta))
    levels = tuple(spline_from_terms(n, degree, k, grouped[k]) for k in range(K + 1))
    return SplineSeries(n, degree, levels, {"source": str(path)})
