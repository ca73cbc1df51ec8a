"""Weight sequences, multiple sequences and weight-class diagnostics."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from varsmooth.errors import FormatError, InvalidInputError, NumericalError
from varsmooth.geometry import DyadicCube, cube_box, unit_ball_volume
from varsmooth.gridfn import (
    GridFunction,
    blocks,
    box_weights,
    cube_lr_norms,
    expand,
    separable_sum,
)

logger = logging.getLogger(__name__)

VSMS_MAGIC = "VSMS1"
CONSTANT_CAP = 1.0e3
ALOC_DILATIONS = (1.0, 1.5, 2.0)


@dataclass(frozen=True)
class WeightSequence:
    """Strictly positive weights ``t_0 .. t_K`` sampled on a common grid."""

    levels: Tuple[GridFunction, ...]
    p: float

    def __post_init__(self) -> None:
        if not self.p > 0:
            raise InvalidInputError(f"integrability exponent must be positive, got {self.p}")
        if not self.levels:
            raise InvalidInputError("a weight sequence needs at least one level")
        for k, t in enumerate(self.levels):
            if np.any(t.values <= 0):
                raise InvalidInputError(f"weight at level {k} is not strictly positive")

    @property
    def K(self) -> int:
        return len(self.levels) - 1

    @property
    def n(self) -> int:
        return self.levels[0].n


@dataclass(frozen=True, eq=False)
class MultiSeq:
    """``t_{k,m}`` for ``k = 0..K`` stored as arrays of shape ``(2^k,)*n``."""

    n: int
    p: float
    levels: Tuple[np.ndarray, ...] = field(repr=False)

    def __post_init__(self) -> None:
        if not self.p > 0:
            raise InvalidInputError(f"integrability exponent must be positive, got {self.p}")
        frozen = []
        for k, raw in enumerate(self.levels):
            arr = np.array(raw, dtype=float).reshape((2 ** k,) * self.n)
            if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
                raise InvalidInputError(f"multiple sequence entries at level {k} must be finite and > 0")
            arr.setflags(write=False)
            frozen.append(arr)
        if not frozen:
            raise InvalidInputError("a multiple sequence needs at least one level")
        object.__setattr__(self, "levels", tuple(frozen))

    @property
    def K(self) -> int:
        return len(self.levels) - 1

    def entry(self, k: int, m: Sequence[int]) -> float:
        return float(self.levels[k][tuple(m)])

    def clipped_entry(self, k: int, m: Sequence[int]) -> float:
        """Entry of the nearest in-range cube, used for boundary spline indices."""

        top = 2 ** k - 1
        return float(self.levels[k][tuple(min(max(int(i), 0), top) for i in m)])

    def truncated(self, K: int) -> "MultiSeq":
        return MultiSeq(self.n, self.p, self.levels[: K + 1])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MultiSeq):
            return NotImplemented
        return (
            self.n == other.n
            and self.p == other.p
            and len(self.levels) == len(other.levels)
            and all(np.array_equal(a, b) for a, b in zip(self.levels, other.levels))
        )


def _inv(p: float) -> float:
    return 0.0 if math.isinf(p) else 1.0 / p


def level_sequence(n: int, p: float, K: int, factor: Callable[[int], float]) -> MultiSeq:
    """Constant-in-x entries ``factor(k) * |Q_{k,m}|^{1/p}``."""

    return MultiSeq(
        n,
        p,
        tuple(np.full((2 ** k,) * n, factor(k) * 2.0 ** (-k * n * _inv(p))) for k in range(K + 1)),
    )


def scale_levels(ms: MultiSeq, exponent: float) -> MultiSeq:
    """Multiply level ``k`` by ``2^{k * exponent}``."""

    return MultiSeq(ms.n, ms.p, tuple(arr * 2.0 ** (k * exponent) for k, arr in enumerate(ms.levels)))


def associate(t: WeightSequence) -> MultiSeq:
    """``t_{k,m} = ||t_k | L_p(Q_{k,m})||`` (sup for ``p = inf``)."""

    levels = []
    for k, tk in enumerate(t.levels):
        if tk.level < k:
            raise InvalidInputError(f"weight t_{k} is sampled coarser than level {k}")
        levels.append(cube_lr_norms(tk.values, tk.level, k, t.p))
    return MultiSeq(t.n, t.p, tuple(levels))


def bar_values(ms: MultiSeq, k: int) -> np.ndarray:
    return ms.levels[k] * 2.0 ** (k * ms.n * _inv(ms.p))


def bar_sequence(ms: MultiSeq, level: Optional[int] = None) -> WeightSequence:
    """Piecewise-constant ``2^{kn/p} t_{k,m}`` on each half-open cube."""

    resolution = ms.K if level is None else level
    if resolution < ms.K:
        raise InvalidInputError("bar sequence resolution must not be coarser than K")
    return WeightSequence(
        tuple(GridFunction(ms.n, resolution, expand(bar_values(ms, k), resolution)) for k in range(ms.K + 1)),
        ms.p,
    )


@dataclass
class ClassReport:
    """Fitted exponents and constants for the growth and neighbor conditions."""

    alpha1: float
    alpha2: float
    alpha3: float
    c1: float
    c2: float
    sigma1: float
    sigma2: float
    passed: Dict[str, bool]
    kind: str = "X"
    decay_profile: Dict[int, float] = field(default_factory=dict)
    growth_profile: Dict[int, float] = field(default_factory=dict)
    residuals: Dict[str, float] = field(default_factory=dict)

    @property
    def verdict(self) -> bool:
        return all(self.passed.values())

    def satisfies(self, alpha1_min: Optional[float] = None, alpha2_max: Optional[float] = None) -> bool:
        if not self.verdict:
            return False
        if alpha1_min is not None and not self.alpha1 > alpha1_min:
            return False
        if alpha2_max is not None and not self.alpha2 < alpha2_max:
            return False
        return True


def _power_mean(values: np.ndarray, sigma: float) -> np.ndarray:
    """Per-cube ``(mean v^sigma)^{1/sigma}`` along the last axis; ``sigma = inf`` is the max."""

    if math.isinf(sigma):
        return values.max(axis=-1)
    return np.mean(values ** sigma, axis=-1) ** (1.0 / sigma)


def _power_law_fit(profile: Dict[int, float]) -> Tuple[float, float, float]:
    """Least-squares slope of a bucketed ``log2`` profile and the offset of its upper envelope.

    The slope is fitted on the buckets ``j - k >= 1`` (all buckets when fewer
    than two of those exist); the offset is the smallest constant that puts
    every bucket, including ``j = k``, under the fitted line.
    """

    ds = sorted(d for d in profile if d > 0)
    if len(ds) < 2:
        ds = sorted(profile)
    if len(ds) < 2:
        return 0.0, max(profile.values(), default=0.0), 0.0
    xs = np.array(ds, dtype=float)
    ys = np.array([profile[d] for d in ds])
    slope, intercept = np.polyfit(xs, ys, 1)
    residual = float(np.sqrt(np.mean((ys - (slope * xs + intercept)) ** 2)))
    offset = max(value - slope * d for d, value in profile.items())
    return float(slope), float(offset), residual


def _neighbor_log_ratio(ms: MultiSeq) -> float:
    worst = 0.0
    for arr in ms.levels:
        logs = np.log2(arr)
        n = arr.ndim
        for off in itertools.product((-1, 0, 1), repeat=n):
            if not any(off):
                continue
            src = tuple(slice(max(0, -o), arr.shape[i] - max(0, o)) for i, o in enumerate(off))
            dst = tuple(slice(max(0, o), arr.shape[i] - max(0, -o)) for i, o in enumerate(off))
            if any(s.start >= s.stop for s in src):
                continue
            worst = max(worst, float(np.max(np.abs(logs[src] - logs[dst]))))
    return worst


def check_X_class(ms: MultiSeq, p: Optional[float] = None, sigma1: float = math.inf, sigma2: Optional[float] = None) -> ClassReport:
    """Fit the growth exponents over all level pairs ``k <= j`` and cubes.

    ``alpha1`` bounds the averaged decay of ``bar t_k / bar t_j`` and ``alpha2``
    its averaged growth. Both are log-linear regressions of the worst ratio in
    each ``j - k`` bucket; the constants are the upper envelopes of the
    profiles around those lines. A condition passes when its constant stays
    within ``CONSTANT_CAP``, so irregular sequences fail rather than being
    absorbed by a steeper slope. Geometric constant-in-x sequences fit exactly
    with unit constants.
    """

    p = ms.p if p is None else p
    sigma2 = p if sigma2 is None else sigma2
    if not (sigma1 > 0 and sigma2 > 0):
        raise InvalidInputError("sigma exponents must be positive")
    decay: Dict[int, float] = {}
    growth: Dict[int, float] = {}
    bars = [bar_values(ms, k) for k in range(ms.K + 1)]
    for k in range(ms.K + 1):
        for j in range(k, ms.K + 1):
            children = blocks(bars[j], k)
            with np.errstate(over="raise", divide="raise"):
                try:
                    lower = bars[k] * _power_mean(1.0 / children, sigma1)
                    upper = _power_mean(children, sigma2) / bars[k]
                except FloatingPointError as exc:
                    raise NumericalError(
                        "overflow while evaluating class ratios", "weights", "check_X_class"
                    ) from exc
            d = j - k
            decay[d] = max(decay.get(d, -math.inf), float(np.log2(lower).max()))
            growth[d] = max(growth.get(d, -math.inf), float(np.log2(upper).max()))

    decay_slope, log_c1, res1 = _power_law_fit(decay)
    alpha2, log_c2, res2 = _power_law_fit(growth)
    alpha1 = -decay_slope
    c1, c2 = 2.0 ** log_c1, 2.0 ** log_c2
    alpha3 = _neighbor_log_ratio(ms)
    cap = math.log2(CONSTANT_CAP) + 1e-9
    passed = {
        "decay": bool(log_c1 <= cap),
        "growth": bool(log_c2 <= cap),
        "neighbor": bool(alpha3 <= cap),
    }
    for name, ok in passed.items():
        if not ok:
            logger.info("Class %s condition needs a constant above %.0f", name, CONSTANT_CAP)
    report = ClassReport(alpha1, alpha2, alpha3, c1, c2, sigma1, sigma2, passed,
                         decay_profile=decay, growth_profile=growth,
                         residuals={"decay": res1, "growth": res2})
    logger.debug("X-class fit: alpha1=%.6g alpha2=%.6g alpha3=%.6g C1=%.4g C2=%.4g", alpha1, alpha2, alpha3, c1, c2)
    return report


def check_Y_class(ms: MultiSeq, p: Optional[float] = None) -> ClassReport:
    """Pointwise-ratio class test, i.e. the sup/inf form of :func:`check_X_class`."""

    report = check_X_class(ms, p, math.inf, math.inf)
    report.kind = "Y"
    return report


def theta_sigma(p: float, theta: float) -> float:
    """``sigma_1 = theta * p'_theta`` with ``p_theta = p / theta``."""

    if not 0 < theta <= p:
        raise InvalidInputError("theta must lie in (0, p]")
    p_theta = p / theta
    if p_theta <= 1.0:
        return math.inf
    return theta * p_theta / (p_theta - 1.0)


def check_Aloc_p(gamma: GridFunction, p: float, a: float = 1.0) -> float:
    """Largest sampled local Muckenhoupt product over cubes and dilations with side ``<= a``.

    For ``p = 1`` the product is the cube average divided by the smallest
    sampled value on the cube.
    """

    if p < 1 or math.isinf(p):
        raise InvalidInputError("A^loc_p is checked for p in [1, inf)")
    values = gamma.values
    if np.any(values <= 0):
        raise InvalidInputError("weight must be strictly positive")
    dual = None if p == 1 else values ** (-1.0 / (p - 1.0))
    worst = 0.0
    for k in range(gamma.level + 1):
        for dilation in ALOC_DILATIONS:
            if dilation * 2.0 ** -k > a * (1 + 1e-12):
                continue
            if dilation == 1.0:
                grouped = blocks(values, k)
                mean = grouped.mean(axis=-1)
                if dual is None:
                    ratio = mean / grouped.min(axis=-1)
                else:
                    ratio = mean * blocks(dual, k).mean(axis=-1) ** (p - 1.0)
                worst = max(worst, float(ratio.max()))
                continue
            for index in itertools.product(range(2 ** k), repeat=gamma.n):
                box = cube_box(DyadicCube(k, index), dilation)
                w = box_weights(box, gamma.level)
                volume = float(np.prod([wi.sum() for wi in w]))
                mean = separable_sum(values, w) / volume
                if dual is None:
                    mask = np.ix_(*[wi > 0 for wi in w])
                    ratio = mean / values[mask].min()
                else:
                    ratio = mean * (separable_sum(dual, w) / volume) ** (p - 1.0)
                worst = max(worst, float(ratio))
    return worst


@dataclass(frozen=True)
class ProductPowerWeight:
    """``gamma(z)^p = prod_i |z_i|^{a_i}`` on ``R^{n+d}``."""

    exponents: Tuple[float, ...]
    p: float

    def __call__(self, *coords: np.ndarray) -> np.ndarray:
        density = np.ones(np.broadcast(*coords).shape)
        for z, a in zip(coords, self.exponents):
            if a:
                density = density * np.abs(z) ** a
        return density ** (1.0 / self.p)


def _power_integral(lower: np.ndarray, upper: np.ndarray, a: float) -> np.ndarray:
    """``int_lower^upper x^a dx`` for ``0 <= lower < upper``."""

    if a <= -1.0:
        if np.any(lower <= 0):
            raise NumericalError("power weight is not integrable at the origin", "weights", "generate_from_weight")
        if a == -1.0:
            return np.log(upper / lower)
    return (upper ** (a + 1.0) - lower ** (a + 1.0)) / (a + 1.0)


def _exact_shell_masses(weight: ProductPowerWeight, k: int, n: int, d: int) -> np.ndarray:
    top = 2 ** k
    edges = np.arange(top + 1, dtype=float) / top
    out = np.ones((top,) * n)
    for axis in range(n):
        factor = _power_integral(edges[:-1], edges[1:], weight.exponents[axis])
        shape = [1] * n
        shape[axis] = top
        out = out * factor.reshape(shape)
    radial = 2.0 * _power_integral(np.array(2.0 ** (-k - 1)), np.array(2.0 ** -k), weight.exponents[n])
    return out * float(radial)


def _normal_nodes(k: int, d: int) -> Tuple[List[np.ndarray], np.ndarray]:
    """Quadrature nodes and weights for the annulus ``2^{-k-1} < |y| < 2^{-k}`` in ``R^d``."""

    outer, inner = 2.0 ** -k, 2.0 ** (-k - 1)
    if d == 1:
        radial = inner + (np.arange(8) + 0.5) * (outer - inner) / 8
        nodes = np.concatenate([-radial[::-1], radial])
        weights = np.full(nodes.size, (outer - inner) / 8)
        return [nodes], weights
    if d == 2:
        radial = inner + (np.arange(8) + 0.5) * (outer - inner) / 8
        angles = (np.arange(16) + 0.5) * 2 * math.pi / 16
        rr, aa = np.meshgrid(radial, angles, indexing="ij")
        weights = (rr * (outer - inner) / 8 * 2 * math.pi / 16).reshape(-1)
        return [(rr * np.cos(aa)).reshape(-1), (rr * np.sin(aa)).reshape(-1)], weights
    axis = -outer + (np.arange(16) + 0.5) * 2 * outer / 16
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    radius = np.sqrt(sum(g ** 2 for g in grids))
    mask = (radius > inner) & (radius < outer)
    cell = (2 * outer / 16) ** d
    weights = np.full(int(mask.sum()), cell)
    target = unit_ball_volume(d) * (outer ** d - inner ** d)
    weights *= target / weights.sum()
    return [g[mask] for g in grids], weights


def _quadrature_shell_masses(gamma: Callable[..., np.ndarray], p: float, k: int, n: int, d: int) -> np.ndarray:
    sub = 4
    top = 2 ** k
    axis = (np.arange(top * sub, dtype=float) + 0.5) / (top * sub)
    x_grids = np.meshgrid(*([axis] * n), indexing="ij")
    y_nodes, y_weights = _normal_nodes(k, d)
    x_coords = [g[..., None] for g in x_grids]
    y_coords = [y.reshape((1,) * n + (-1,)) for y in y_nodes]
    with np.errstate(all="ignore"):
        density = np.asarray(gamma(*x_coords, *y_coords), dtype=float) ** p
    density = np.broadcast_to(density, x_grids[0].shape + (y_weights.size,))
    if not np.all(np.isfinite(density)):
        raise NumericalError("weight is not finite at a quadrature node", "weights", "generate_from_weight")
    along_normal = density @ y_weights
    cell = (1.0 / (top * sub)) ** n
    return blocks(along_normal, k).sum(axis=-1) * cell


def generate_from_weight(gamma: Callable[..., np.ndarray], p: float, k_work: int, n: int, d: int = 1) -> MultiSeq:
    """``gamma_hat_{k,m} = ||gamma | L_p(Xi_{k,m})||`` for ``k = 0..k_work``."""

    if math.isinf(p) or not p > 0:
        raise InvalidInputError("generated multiple sequences need a finite p > 0")
    exact = isinstance(gamma, ProductPowerWeight) and d == 1 and gamma.p == p
    levels = []
    for k in range(k_work + 1):
        masses = _exact_shell_masses(gamma, k, n, d) if exact else _quadrature_shell_masses(gamma, p, k, n, d)
        if not np.all(np.isfinite(masses)) or np.any(masses <= 0):
            raise NumericalError(f"shell quadrature at level {k} is not finite and positive", "weights", "generate_from_weight")
        levels.append(masses ** (1.0 / p))
    return MultiSeq(n, p, tuple(levels))


def example_weight(name: str, n: int, p: float, beta: float = 1.0, eps: float = 0.1, d: int = 1) -> ProductPowerWeight:
    """Named power weights on ``R^{n+d}``.

    ``tangential``: ``|x_1|^beta``; ``normal``: ``|y_1|^beta``. ``gamma1`` and
    ``gamma2`` put ``-(1-eps)`` and ``p-1-eps`` on every one of the ``n+d``
    coordinates, the normal ones included.
    """

    zeros = [0.0] * (n + d)
    if name == "tangential":
        zeros[0] = beta
    elif name == "normal":
        zeros[n] = beta
    elif name == "gamma1":
        zeros = [-(1.0 - eps)] * (n + d)
    elif name == "gamma2":
        zeros = [p - 1.0 - eps] * (n + d)
    else:
        raise InvalidInputError(f"unknown example weight {name!r}")
    return ProductPowerWeight(tuple(zeros), p)


@dataclass
class DeltaExponents:
    delta1: float
    delta2: float
    delta3: float
    residuals: Dict[str, float]
    constants: Dict[str, float] = field(default_factory=dict)


def _positive_delta(value: float, name: str) -> float:
    if value <= 0:
        logger.warning("Fitted %s=%.4g is not positive; clamping", name, value)
        return 1e-6
    return value



def _face_fractions(power: np.ndarray, k: int) -> np.ndarray:
    """Share of each level-``k`` cube's mass carried by its one-layer boundary slabs."""

    n = power.ndim
    top = 2 ** k
    width = power.shape[0] // top
    interleaved = power.reshape(sum(((top, width) for _ in range(n)), ()))
    inner_axes = tuple(range(1, 2 * n, 2))
    total = interleaved.sum(axis=inner_axes)
    worst = np.zeros(total.shape)
    for axis in inner_axes:
        for edge in (0, width - 1):
            slab = np.take(interleaved, [edge], axis=axis)
            share = slab.sum(axis=inner_axes) / total
            worst = np.maximum(worst, share)
    return worst


def estimate_deltas(ms: MultiSeq, p: Optional[float] = None, d: int = 1) -> DeltaExponents:
    """Fit the decay exponents of a shell-generated multiple sequence.

    ``delta1`` is the regression slope of the worst child-sum ratio
    ``sum_children t_j^p / t_k^p`` against ``d (j - k)``, and ``delta2`` that of
    the worst boundary-slab share against ``j - k``. Neither is capped at 1: a
    weight concentrating away from the boundary decays faster than volume.
    The constants are the envelopes of the profiles around the fitted lines.
    """

    if ms.K < 2:
        raise NumericalError("at least three levels are needed to fit delta exponents", "weights", "estimate_deltas")
    p = ms.p if p is None else p
    powers = [arr ** p for arr in ms.levels]
    children_profile: Dict[int, float] = {0: 0.0}
    slab_profile: Dict[int, float] = {0: 0.0}
    for k in range(ms.K + 1):
        for j in range(k + 1, ms.K + 1):
            dist = j - k
            ratio = blocks(powers[j], k).sum(axis=-1) / powers[k]
            children_profile[dist] = max(children_profile.get(dist, -math.inf), float(np.log2(ratio).max()))
            share = _face_fractions(powers[j], k)
            slab_profile[dist] = max(slab_profile.get(dist, -math.inf), float(np.log2(share).max()))
    slope1, offset1, res1 = _power_law_fit(children_profile)
    slope2, offset2, res2 = _power_law_fit(slab_profile)
    deltas = DeltaExponents(
        delta1=_positive_delta(-slope1 / d, "delta1"),
        delta2=_positive_delta(-slope2, "delta2"),
        delta3=_neighbor_log_ratio(ms),
        residuals={"delta1": res1, "delta2": res2},
        constants={"delta1": 2.0 ** offset1, "delta2": 2.0 ** offset2},
    )
    logger.debug("Delta fit: %s", deltas)
    return deltas



@dataclass
class NontrivialityReport:
    nontrivial: bool
    converging: bool
    terms: List[float]
    partial_sums: List[float]
    decay_slope: float
    tail_estimate: float


def check_nontrivial(
    ms: MultiSeq,
    l: int,
    p: Optional[float] = None,
    q: float = 2.0,
    tol: float = 1e-3,
    cauchy_rtol: float = 1e-8,
) -> NontrivialityReport:
    """Decide whether ``sum_k (int_Q 2^{-klp} t_k^p)^{q/p}`` converges.

    The terms over the second half of the levels are fitted by a geometric
    ratio. ``converging`` records a ratio below one; ``nontrivial`` further
    requires the extrapolated tail beyond ``K`` to be below ``cauchy_rtol`` of
    the extrapolated total, so a slowly converging series is not reported as
    resolved from too few levels. For ``q = inf`` the terms only need to stay
    bounded.
    """

    p = ms.p if p is None else p
    terms = []
    for k, arr in enumerate(ms.levels):
        if math.isinf(p):
            level_mass = 2.0 ** (-k * l) * float(arr.max())
        else:
            level_mass = (2.0 ** (-k * l * p) * float(np.sum(arr ** p))) ** (1.0 / p)
        terms.append(level_mass if math.isinf(q) else level_mass ** q)
    start = max(0, len(terms) // 2 - 1)
    ks = np.arange(start, len(terms), dtype=float)
    logs = np.log2(np.maximum(np.array(terms[start:]), np.finfo(float).tiny))
    slope = float(np.polyfit(ks, logs, 1)[0]) if ks.size > 1 else 0.0
    partial = list(np.cumsum(terms)) if not math.isinf(q) else list(np.maximum.accumulate(terms))
    if math.isinf(q):
        converging = nontrivial = slope <= tol
        tail = 0.0
    else:
        converging = slope < -tol
        ratio = 2.0 ** slope
        tail = terms[-1] * ratio / (1.0 - ratio) if converging else math.inf
        nontrivial = converging and tail <= cauchy_rtol * (partial[-1] + tail)
        if converging and not nontrivial:
            logger.info(
                "Series converges with ratio %.4g but its tail %.3g is unresolved at K=%d", ratio, tail, ms.K
            )
    return NontrivialityReport(
        bool(nontrivial),
        bool(converging),
        [float(t) for t in terms],
        [float(s) for s in partial],
        slope,
        float(tail),
    )



def _power_level_masses(beta: float, k: int, n: int, p: float) -> np.ndarray:
    top = 2 ** k
    edges = np.arange(top + 1, dtype=float) / top
    first = _power_integral(edges[:-1], edges[1:], beta)
    rest = 2.0 ** (-k * (n - 1))
    out = first.reshape((top,) + (1,) * (n - 1)) * np.ones((top,) * n) * rest
    return out ** (1.0 / p)


def parse_weight_spec(spec: str, n: int, p: float, k_work: int) -> MultiSeq:
    """Build a multiple sequence from ``const:``, ``power:``, ``generated:`` or ``file:`` specs."""

    kind, _, rest = spec.partition(":")
    kind = kind.strip().lower()
    if kind == "file":
        ms = read_multiseq(rest.strip())
        if ms.n != n:
            raise InvalidInputError(f"weight file has n={ms.n}, expected {n}")
        return ms.truncated(min(ms.K, k_work))
    params: Dict[str, float] = {}
    for item in filter(None, (part.strip() for part in rest.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise InvalidInputError(f"malformed weight parameter {item!r}")
        try:
            params[key.strip()] = float(value)
        except ValueError as exc:
            raise InvalidInputError(f"weight parameter {key} is not numeric") from exc
    s = params.get("s", 0.0)
    if kind == "const":
        return level_sequence(n, p, k_work, lambda k: 2.0 ** (k * s))
    if math.isinf(p):
        raise InvalidInputError(f"{kind} weights need a finite p")
    beta = params.get("beta", 1.0)
    if kind == "power":
        base = MultiSeq(n, p, tuple(_power_level_masses(beta, k, n, p) for k in range(k_work + 1)))
        return scale_levels(base, s)
    if kind == "generated":
        d = int(params.get("d", 1))
        gamma = example_weight("normal", n, p, beta=beta, d=d)
        return scale_levels(generate_from_weight(gamma, p, k_work, n, d), s)
    raise InvalidInputError(f"unknown weight kind {kind!r}")


def _format_float(value: float) -> str:
    return "inf" if math.isinf(value) else format(float(value), ".17g")


def write_multiseq(ms: MultiSeq, path: Union[str, Path]) -> None:
    lines = [VSMS_MAGIC, f"n={ms.n} p={_format_float(ms.p)} K={ms.K}"]
    for k, arr in enumerate(ms.levels):
        for index in itertools.product(range(2 ** k), repeat=ms.n):
            coords = " ".join(str(i) for i in index)
            lines.append(f"{k} {coords} {_format_float(arr[index])}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_multiseq(path: Union[str, Path]) -> MultiSeq:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != VSMS_MAGIC:
        raise FormatError(f"missing {VSMS_MAGIC} magic line", str(path), 1)
    header = dict(token.partition("=")[::2] for token in lines[1].split()) if len(lines) > 1 else {}
    try:
        n, p, K = int(header["n"]), float(header["p"]), int(header["K"])
    except (KeyError, ValueError) as exc:
        raise FormatError("header must read n=<int> p=<float> K=<int>", str(path), 2) from exc
    levels = [np.full((2 ** k,) * n, np.nan) for k in range(K + 1)]
    for lineno, line in enumerate(lines[2:], start=3):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) != n + 2:
            raise FormatError(f"expected {n + 2} fields", str(path), lineno)
        try:
            k = int(tokens[0])
            index = tuple(int(t) for t in tokens[1:-1])
            value = float(tokens[-1])
        except ValueError as exc:
            raise FormatError("unparseable entry", str(path), lineno) from exc
        if not 0 <= k <= K or any(not 0 <= i < 2 ** k for i in index):
            raise FormatError(f"index out of range for level {k}", str(path), lineno)
        levels[k][index] = value
    for k, arr in enumerate(levels):
        if np.any(np.isnan(arr)):
            raise FormatError(f"level {k} is incomplete", str(path))
    return MultiSeq(n, p, tuple(levels))
