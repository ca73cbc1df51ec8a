"""Traces on coordinate planes, spline extensions, averaging operators and the slab extension."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate
from scipy.ndimage import convolve1d

from varsmooth.atomic import SplineSeries, coefficient_mass, decompose, reconstruct
from varsmooth.diffs import window_delta_field
from varsmooth.errors import FormatError, InvalidInputError, NumericalError
from varsmooth.gridfn import GridFunction, cell_centers, header_int, read_payload, write_payload
from varsmooth.norms import BesovParams, default_k_work, norm_seq
from varsmooth.splines import SplineFn, bspline_eval, index_count
from varsmooth.weights import MultiSeq, generate_from_weight, scale_levels

logger = logging.getLogger(__name__)

# moments of the profile are integrated once per order
_PROFILE_MOMENTS: Dict[int, float] = {}


@dataclass(frozen=True)
class PlaneSpec:
    """The plane ``x'' = 0`` keeping the first ``n_prime`` coordinates of ``R^n``."""

    n: int
    n_prime: int

    def __post_init__(self) -> None:
        if self.n not in (1, 2, 3):
            raise InvalidInputError(f"dimension must be 1, 2 or 3, got {self.n}")
        if not 1 <= self.n_prime < self.n:
            raise InvalidInputError(f"plane dimension must lie in 1..{self.n - 1}, got {self.n_prime}")

    @property
    def n_second(self) -> int:
        return self.n - self.n_prime


def _origin_values(degree: int, k: int) -> np.ndarray:
    """``N^degree(2^k * 0 - m)`` over ``m = -degree .. 2^k - 1``."""

    m = np.arange(index_count(degree, k)) - degree
    return np.asarray(bspline_eval(degree, -m.astype(float)), dtype=float).reshape(-1)


def _trace_level(S: SplineFn, ps: PlaneSpec) -> SplineFn:
    vector = _origin_values(S.degree, S.level)
    coeffs = S.coeffs
    for _ in range(ps.n_second):
        coeffs = np.tensordot(coeffs, vector, axes=([coeffs.ndim - 1], [0]))
    return SplineFn(ps.n_prime, S.degree, S.level, coeffs)


def _check_plane(s: SplineSeries, ps: PlaneSpec, n: int) -> None:
    if s.n != n:
        raise InvalidInputError(f"series lives in dimension {s.n}, plane expects {n}")


def besov_trace(s: SplineSeries, ps: PlaneSpec) -> SplineSeries:
    """Restrict every atom to ``x'' = 0``; only indices with ``N(-m'') != 0`` contribute."""

    _check_plane(s, ps, ps.n)
    levels = tuple(_trace_level(level, ps) for level in s.levels)
    metadata = dict(s.metadata, trace_of=ps.n)
    return SplineSeries(ps.n_prime, s.degree, levels, metadata)


def besov_extend(s: SplineSeries, ps: PlaneSpec) -> SplineSeries:
    """Copy ``alpha'_{k,m'}`` onto every ``(m', m'')`` whose atom is nonzero on the plane.

    The values ``N(-m'')`` sum to one, so tracing the result returns the input.
    """

    _check_plane(s, ps, ps.n_prime)
    levels = []
    for S in s.levels:
        support = (_origin_values(S.degree, S.level) != 0.0).astype(float)
        coeffs = S.coeffs
        for _ in range(ps.n_second):
            coeffs = np.multiply.outer(coeffs, support)
        levels.append(SplineFn(ps.n, S.degree, S.level, coeffs))
    return SplineSeries(ps.n, s.degree, tuple(levels), dict(s.metadata, extended_to=ps.n))


def trace_multiseq(ms: MultiSeq, ps: PlaneSpec) -> MultiSeq:
    """``t'_{k,m'} = t_{k,(m',0)}``."""

    if ms.n != ps.n:
        raise InvalidInputError(f"multiple sequence has dimension {ms.n}, plane expects {ps.n}")
    index = (Ellipsis,) + (0,) * ps.n_second
    return MultiSeq(ps.n_prime, ms.p, tuple(np.array(level[index]) for level in ms.levels))


def _mass_ratio(numerator: float, denominator: float) -> float:
    if denominator == 0.0:
        return 0.0 if numerator == 0.0 else math.inf
    return numerator / denominator


def trace_mass_ratio(s: SplineSeries, ms: MultiSeq, ps: PlaneSpec, q: float) -> float:
    """Coefficient mass of the trace over the mass of ``s``."""

    traced = besov_trace(s, ps)
    return _mass_ratio(
        coefficient_mass(traced, trace_multiseq(ms, ps), ms.p, q),
        coefficient_mass(s, ms, ms.p, q),
    )


def extension_mass_ratio(s: SplineSeries, ms: MultiSeq, ps: PlaneSpec, q: float) -> float:
    """Coefficient mass of the extension of a plane series over its own mass."""

    extended = besov_extend(s, ps)
    return _mass_ratio(
        coefficient_mass(extended, ms, ms.p, q),
        coefficient_mass(s, trace_multiseq(ms, ps), ms.p, q),
    )


def restriction_trace(phi: GridFunction, ps: PlaneSpec) -> GridFunction:
    """Values of the finest cells touching ``x'' = 0``."""

    if phi.n != ps.n:
        raise InvalidInputError(f"grid function has dimension {phi.n}, plane expects {ps.n}")
    index = (Ellipsis,) + (0,) * ps.n_second
    return GridFunction(ps.n_prime, phi.level, phi.values[index])


def trace_function(
    phi: GridFunction, ms: MultiSeq, bp: BesovParams, ps: PlaneSpec, k_work: Optional[int] = None
) -> GridFunction:
    """Trace through the atomic decomposition, sampled on the plane grid of ``phi``."""

    series = decompose(phi, ms, bp, k_work=k_work, gate=False)
    return reconstruct(besov_trace(series, ps), level=max(series.K, phi.level))


# -- averaging operator ---------------------------------------------------------


def bump_profile(u: np.ndarray) -> np.ndarray:
    """``exp(-1/(1-u^2))`` on ``|u| < 1``, zero elsewhere."""

    u = np.asarray(u, dtype=float)
    inside = np.abs(u) < 1.0
    safe = np.where(inside, 1.0 - u ** 2, 1.0)
    return np.where(inside, np.exp(-1.0 / safe), 0.0)


def profile_moment(order: int) -> float:
    """``int u^order theta(u) du`` for the unit-mass profile."""

    if order not in _PROFILE_MOMENTS:
        mass = integrate.quad(lambda u: float(bump_profile(np.array(u))), -1.0, 1.0)[0]
        value = integrate.quad(lambda u: u ** order * float(bump_profile(np.array(u))), -1.0, 1.0)[0]
        _PROFILE_MOMENTS[order] = value / mass
    return _PROFILE_MOMENTS[order]


def _composite_moment(order: int, j: int) -> float:
    """Moment of ``theta * theta_j`` with ``theta_j`` dilated by ``j``."""

    return sum(
        math.comb(order, a) * profile_moment(a) * profile_moment(order - a) * float(j) ** (order - a)
        for a in range(order + 1)
    )


def _moment_system(l: int, moment: Callable[[int, int], float]) -> np.ndarray:
    """Rows ``i = 0..l-1``: even rows match composite moments, odd rows fix ``sum c_j j^i = 0``."""

    A = np.empty((l, l))
    for i in range(l):
        for j in range(1, l + 1):
            A[i, j - 1] = moment(i, j) if i % 2 == 0 else float(j) ** i
    rhs = np.zeros(l)
    rhs[0] = 1.0
    return np.linalg.solve(A, rhs)


@dataclass(frozen=True)
class AveragingOp:
    """``E_eps = sum_j mu_j j^n (theta_eps * theta_{j eps} * .)`` with the unit-mass tensor bump."""

    l: int
    n: int
    mu: Tuple[float, ...]

    @property
    def combination(self) -> np.ndarray:
        """Weights ``c_j = mu_j j^n`` of the unit-mass composite kernels."""

        j = np.arange(1, self.l + 1, dtype=float)
        return np.asarray(self.mu) * j ** self.n

    def moment_residuals(self) -> np.ndarray:
        """``sum_j c_j M_i(j) - [i == 0]`` for the even orders ``i < l``."""

        c = self.combination
        out = []
        for i in range(0, self.l, 2):
            total = sum(c[j - 1] * _composite_moment(i, j) for j in range(1, self.l + 1))
            out.append(total - (1.0 if i == 0 else 0.0))
        return np.asarray(out)


def make_averaging_op(l: int, n: int) -> AveragingOp:
    """Weights for which ``E_eps`` reproduces polynomials of degree below ``l``.

    The tensor structure makes the one-dimensional moment rows sufficient for ``l <= 4``.
    """

    if l < 1:
        raise InvalidInputError("averaging order must be positive")
    if n not in (1, 2, 3):
        raise InvalidInputError(f"dimension must be 1, 2 or 3, got {n}")
    if l > 4 and n > 1:
        logger.warning("Mixed even moments are not matched for l=%d in dimension %d", l, n)
    c = _moment_system(l, _composite_moment)
    j = np.arange(1, l + 1, dtype=float)
    op = AveragingOp(l, n, tuple(float(v) for v in c / j ** n))
    logger.debug("Averaging operator l=%d n=%d mu=%s", l, n, op.mu)
    return op


def _discrete_profile(radius: float, h: float) -> Tuple[np.ndarray, np.ndarray]:
    half = max(0, int(math.ceil(radius / h)) - 1)
    offsets = np.arange(-half, half + 1) * h
    weights = bump_profile(offsets / radius)
    return offsets, weights / weights.sum()


def discrete_kernels(ao: AveragingOp, eps: float, h: float) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Per-axis composite kernels and weights matching their discrete moments."""

    kernels = []
    for j in range(1, ao.l + 1):
        inner = _discrete_profile(j * eps, h)[1]
        outer = _discrete_profile(eps, h)[1]
        kernels.append(np.convolve(outer, inner))

    def moment(i: int, j: int) -> float:
        kernel = kernels[j - 1]
        half = (kernel.size - 1) // 2
        u = np.arange(-half, half + 1) * h / eps
        return float(np.sum(kernel * u ** i))

    return _moment_system(ao.l, moment), kernels


def steklov_average(phi: GridFunction, eps: float, ao: AveragingOp, refit: bool = True) -> GridFunction:
    """``E_eps[phi]`` on the grid of ``phi``; the function is taken as zero outside the box.

    The composite kernels are sampled on the grid. With ``refit`` their weights
    are re-solved from the sampled moments, which reproduces polynomials on the
    grid itself and tends to ``ao.combination`` as ``h / eps -> 0``. Without it
    the stored ``mu_j`` are applied as they are.
    """

    if ao.n != phi.n:
        raise InvalidInputError(f"operator built for n={ao.n}, function has n={phi.n}")
    if eps < phi.h:
        raise NumericalError(
            f"averaging radius {eps:g} is below the grid spacing {phi.h:g}", "traceext", "steklov_average"
        )
    fitted, kernels = discrete_kernels(ao, eps, phi.h)
    weights = fitted if refit else ao.combination
    total = np.zeros_like(phi.values)

    for c, kernel in zip(weights, kernels):
        smoothed = phi.values
        for axis in range(phi.n):
            smoothed = convolve1d(smoothed, kernel, axis=axis, mode="constant", cval=0.0)
        total = total + c * smoothed
    return phi.with_values(total)


def _multi_indices(n: int, order: int) -> List[Tuple[int, ...]]:
    return [a for a in itertools.product(range(order + 1), repeat=n) if sum(a) == order]


def derivative_bound_constant(phi: GridFunction, k: int, ao: AveragingOp, floor: float = 1e-12) -> float:
    """``max |D^alpha E_eps phi| eps^l / delta^l(x + eps I^n)`` over interior cells, ``eps = 2^{-k}``.

    Derivatives are forward differences of the smoothed grid.
    """

    eps = math.ldexp(1.0, -k)
    l = ao.l
    smoothed = steklov_average(phi, eps, ao).values
    delta = window_delta_field(phi, k, l, 1.0)
    margin = int(math.ceil((l + 2) * eps / phi.h))
    if 2 * margin >= phi.cells - l:
        raise NumericalError(
            f"no interior cells at level {k} for grid level {phi.level}", "traceext", "derivative_bound_constant"
        )
    inner = tuple(slice(margin, phi.cells - margin) for _ in range(phi.n))
    worst = 0.0
    for alpha in _multi_indices(phi.n, l):
        derivative = smoothed
        for axis, order in enumerate(alpha):
            if order:
                derivative = np.diff(derivative, n=order, axis=axis) / phi.h ** order
        derivative = derivative[inner]
        local = delta[inner]
        mask = local > floor
        if np.any(mask):
            worst = max(worst, float(np.max(np.abs(derivative[mask]) * eps ** l / local[mask])))
    return worst


def recovery_errors(phi: GridFunction, ao: AveragingOp, deltas: Sequence[float]) -> Dict[float, float]:
    """``int |phi - E_delta phi|`` over the unit box for each radius."""

    out = {}
    for delta in deltas:
        diff = phi.values - steklov_average(phi, delta, ao).values
        out[float(delta)] = float(np.sum(np.abs(diff)) * phi.cell_volume)
    return out


# -- slab extension -------------------------------------------------------------


def _step(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        f = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        g = np.where(1.0 - t > 0, np.exp(-1.0 / np.where(1.0 - t > 0, 1.0 - t, 1.0)), 0.0)
    return f / (f + g)


def cutoff(s: np.ndarray) -> np.ndarray:
    """Smooth, equal to one on ``[0, 1/2]`` and zero from ``1`` on."""

    return _step(2.0 * (1.0 - np.asarray(s, dtype=float)))


def psi_partition(y: np.ndarray, K: int) -> np.ndarray:
    """``psi_1..psi_K`` at ``y`` stacked on a leading axis; they sum to one on ``|y| <= 1/2``."""

    if K < 1:
        raise InvalidInputError("the partition needs K >= 1")
    radius = np.abs(np.asarray(y, dtype=float))
    G = [cutoff(2.0 ** k * radius) for k in range(K + 1)]
    parts = [G[k - 1] - G[k] for k in range(1, K)]
    parts.append(G[K - 1])
    return np.stack(parts)


@dataclass(frozen=True, eq=False)
class SlabFunction:
    """Values on ``[0,1]^n x (-1,1)``: ``2^level`` cells per tangential axis, ``2^ky`` normal cells."""

    n: int
    level: int
    ky: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if self.n not in (1, 2, 3):
            raise InvalidInputError(f"tangential dimension must be 1, 2 or 3, got {self.n}")
        if self.level < 0 or self.ky < 1:
            raise InvalidInputError("slab levels must satisfy K >= 0 and Ky >= 1")
        shape = (2 ** self.level,) * self.n + (2 ** self.ky,)
        arr = np.array(self.values, dtype=float)
        if arr.size != int(np.prod(shape)):
            raise InvalidInputError(f"expected {int(np.prod(shape))} slab values, got {arr.size}")
        arr = arr.reshape(shape)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def hy(self) -> float:
        return 2.0 / 2 ** self.ky

    def y_centers(self) -> np.ndarray:
        return -1.0 + (np.arange(2 ** self.ky) + 0.5) * self.hy

    def plane_values(self) -> GridFunction:
        """Average of the two normal cells adjacent to ``y = 0``."""

        mid = 2 ** (self.ky - 1)
        return GridFunction(self.n, self.level, 0.5 * (self.values[..., mid - 1] + self.values[..., mid]))


def sobolev_extend(phi: GridFunction, ao: AveragingOp, K: int, ky: Optional[int] = None) -> SlabFunction:
    """``f(x, y) = sum_k psi_k(y) E_{2^{-k}}[phi](x)`` for ``k = 1..K``."""

    if K > phi.level:
        raise NumericalError(
            f"level {K} averages below the grid spacing of level {phi.level}", "traceext", "sobolev_extend"
        )
    ky = phi.level + 1 if ky is None else ky
    slab = SlabFunction(phi.n, phi.level, ky, np.zeros((2 ** phi.level,) * phi.n + (2 ** ky,)))
    partition = psi_partition(slab.y_centers(), K)
    values = np.zeros(slab.values.shape)
    for k in range(1, K + 1):
        averaged = steklov_average(phi, math.ldexp(1.0, -k), ao).values
        values += averaged[..., None] * partition[k - 1]
    logger.info("Extended n=%d level=%d function into the slab with K=%d Ky=%d", phi.n, phi.level, K, ky)
    return SlabFunction(phi.n, phi.level, ky, values)


def sobolev_energy(f: SlabFunction, gamma: Callable[..., np.ndarray], l: int, p: float) -> float:
    """``sum_{|alpha| <= l} ||gamma D^alpha f | L_p||`` with centered differences."""

    if min(2 ** f.level, 2 ** f.ky) <= l:
        raise NumericalError("slab grid too coarse for the derivative order", "traceext", "sobolev_energy")
    x = cell_centers(f.level)
    coords = np.meshgrid(*([x] * f.n), f.y_centers(), indexing="ij")
    with np.errstate(divide="ignore"):
        density = np.broadcast_to(np.asarray(gamma(*coords), dtype=float), f.values.shape)
    if not np.all(np.isfinite(density)):
        raise NumericalError("weight is not finite at a slab cell center", "traceext", "sobolev_energy")
    spacing = [2.0 ** -f.level] * f.n + [f.hy]
    cell = 2.0 ** (-f.level * f.n) * f.hy
    total = 0.0
    for order in range(l + 1):
        for alpha in _multi_indices(f.n + 1, order):
            derivative = f.values
            for axis, count in enumerate(alpha):
                for _ in range(count):
                    derivative = np.gradient(derivative, spacing[axis], axis=axis)
            weighted = np.abs(derivative * density)
            if math.isinf(p):
                total += float(weighted.max())
            else:
                total += float(np.sum(weighted ** p) * cell) ** (1.0 / p)
    return total


@dataclass(frozen=True)
class SobolevTraceReport:
    energy: float
    trace_norm: float

    @property
    def ratio(self) -> float:
        return _mass_ratio(self.energy, self.trace_norm)


def sobolev_trace_report(
    phi: GridFunction,
    gamma: Callable[..., np.ndarray],
    bp: BesovParams,
    K: int,
    ky: Optional[int] = None,
) -> SobolevTraceReport:
    """Weighted energy of the slab extension against the sequence norm with ``2^{kl} gamma_hat``."""

    k_work = default_k_work(phi.level, bp.l)
    ms = scale_levels(generate_from_weight(gamma, bp.p, k_work, phi.n, d=1), bp.l)
    f = sobolev_extend(phi, make_averaging_op(bp.l, phi.n), K, ky)
    energy = sobolev_energy(f, gamma, bp.l, bp.p)
    trace_norm = norm_seq(phi, ms, bp, k_work).total
    return SobolevTraceReport(energy, trace_norm)


def write_slab(f: SlabFunction, path: Union[str, Path]) -> None:
    write_payload(path, {"n": f.n, "K": f.level, "slab": 1, "Ky": f.ky}, f.values)


def read_slab(path: Union[str, Path]) -> SlabFunction:
    header, numbers = read_payload(path)
    if header.get("slab") != "1":
        raise FormatError("file is not a slab function", str(path), 2)
    n = header_int(header, "n", path)
    level = header_int(header, "K", path)
    ky = header_int(header, "Ky", path)
    expected = 2 ** (n * level + ky)
    if numbers.size != expected:
        raise FormatError(f"expected {expected} values, found {numbers.size}", str(path))
    return SlabFunction(n, level, ky, numbers)
