"""Uniform tensor B-splines: evaluation, knot insertion, quasi-interpolation and the T operator."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import polynomial as power_series
from scipy.special import comb

from varsmooth.errors import FormatError, InvalidInputError
from varsmooth.geometry import DyadicCube, cube_box, level_cubes
from varsmooth.gridfn import GridFunction, cell_centers, cube_lr_norms, lr_norm
from varsmooth.polyfit import DegreeMode, PiecewisePoly, almost_best_field, best_error, legendre_matrix

logger = logging.getLogger(__name__)

VSSS_MAGIC = "VSSS1"

SplineTerm = Tuple[int, Tuple[int, ...], float]


def bspline_eval(degree: int, t: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Cardinal B-spline with knots ``0, 1, ..., degree + 1``; zero outside its support."""

    if degree < 0:
        raise InvalidInputError("spline degree must be nonnegative")
    arr = np.asarray(t, dtype=float)

    def basis(d: int, x: np.ndarray) -> np.ndarray:
        if d == 0:
            return ((x >= 0.0) & (x < 1.0)).astype(float)
        return (x * basis(d - 1, x) + (d + 1 - x) * basis(d - 1, x - 1.0)) / d

    values = basis(degree, arr)
    return float(values) if values.ndim == 0 else values


def index_count(degree: int, k: int) -> int:
    """Indices ``m = -degree .. 2^k - 1`` whose support meets the unit interval."""

    return 2 ** k + degree


def collocation_matrix(degree: int, k: int, points: np.ndarray) -> np.ndarray:
    """``B[p, j] = N^degree(2^k x_p - m_j)`` with ``m_j = j - degree``."""

    x = np.asarray(points, dtype=float).reshape(-1, 1)
    m = np.arange(index_count(degree, k)) - degree
    return np.asarray(bspline_eval(degree, 2.0 ** k * x - m[None, :]))


@dataclass(frozen=True, eq=False)
class SplineFn:
    """``sum_m beta_m N_{k,m}`` on ``[0,1]^n``; ``coeffs[j]`` holds ``beta_{j - degree}``."""

    n: int
    degree: int
    level: int
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if self.degree < 0 or self.level < 0:
            raise InvalidInputError("spline degree and level must be nonnegative")
        arr = np.array(self.coeffs, dtype=float)
        shape = (index_count(self.degree, self.level),) * self.n
        if arr.size != int(np.prod(shape)):
            raise InvalidInputError(f"expected {int(np.prod(shape))} spline coefficients, got {arr.size}")
        arr = arr.reshape(shape)
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("spline coefficients must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "coeffs", arr)

    @property
    def order(self) -> int:
        return self.degree + 1

    def coefficient(self, m: Sequence[int]) -> float:
        position = tuple(int(mi) + self.degree for mi in m)
        if any(not 0 <= p < self.coeffs.shape[0] for p in position):
            return 0.0
        return float(self.coeffs[position])

    def indices(self) -> Iterable[Tuple[int, ...]]:
        return itertools.product(range(-self.degree, 2 ** self.level), repeat=self.n)

    def terms(self) -> List[SplineTerm]:
        return [
            (self.level, m, float(self.coeffs[tuple(mi + self.degree for mi in m)]))
            for m in self.indices()
            if self.coeffs[tuple(mi + self.degree for mi in m)] != 0.0
        ]

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return tensor_eval(self, points)

    def sample(self, level: int) -> GridFunction:
        return evaluate_grid(self, level)

    def __add__(self, other: "SplineFn") -> "SplineFn":
        if (self.n, self.degree) != (other.n, other.degree):
            raise InvalidInputError("splines of different dimension or degree")
        level = max(self.level, other.level)
        a, b = refine(self, level), refine(other, level)
        return SplineFn(self.n, self.degree, level, a.coeffs + b.coeffs)

    def __mul__(self, scalar: float) -> "SplineFn":
        return SplineFn(self.n, self.degree, self.level, self.coeffs * float(scalar))

    __rmul__ = __mul__


def zero_spline(n: int, degree: int, level: int) -> SplineFn:
    return SplineFn(n, degree, level, np.zeros((index_count(degree, level),) * n))


def tensor_eval(S: SplineFn, points: np.ndarray) -> np.ndarray:
    """Values at ``points`` of shape ``(P, n)`` using only the ``(degree+1)^n`` active terms."""

    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != S.n:
        raise InvalidInputError(f"points must have {S.n} coordinates")
    top = 2 ** S.level
    scaled = np.clip(pts, 0.0, 1.0) * top
    base = np.clip(np.floor(scaled).astype(int), 0, top - 1)
    local = np.minimum(scaled - base, np.nextafter(1.0, 0.0))
    offsets = np.arange(S.degree + 1)
    # active m per axis: base - degree + j, stored at position base + j
    values = [np.asarray(bspline_eval(S.degree, local[:, [axis]] + S.degree - offsets[None, :])) for axis in range(S.n)]
    total = np.zeros(len(pts))
    for combo in itertools.product(offsets, repeat=S.n):
        weight = np.ones(len(pts))
        position = []
        for axis, j in enumerate(combo):
            weight = weight * values[axis][:, j]
            position.append(base[:, axis] + j)
        total += weight * S.coeffs[tuple(position)]
    return total


def evaluate_grid(S: SplineFn, level: int) -> GridFunction:
    """Cell-center samples on the level-``level`` grid, contracted one axis at a time."""

    B = collocation_matrix(S.degree, S.level, cell_centers(level))
    out = S.coeffs
    for _ in range(S.n):
        out = np.tensordot(out, B.T, axes=([0], [0]))
    return GridFunction(S.n, level, out)


def subdivision_matrix(degree: int, k: int) -> np.ndarray:
    """One-level knot insertion ``beta'_{2m+i} += 2^{-degree} C(degree+1, i) beta_m``."""

    rows, cols = index_count(degree, k + 1), index_count(degree, k)
    R = np.zeros((rows, cols))
    mask = comb(degree + 1, np.arange(degree + 2)) * 2.0 ** -degree
    for m in range(-degree, 2 ** k):
        for i, weight in enumerate(mask):
            child = 2 * m + i
            if -degree <= child < 2 ** (k + 1):
                R[child + degree, m + degree] += weight
    return R


def refine(S: SplineFn, j: int) -> SplineFn:
    """Re-express ``S`` in the level-``j`` basis; values on the unit box are unchanged."""

    if j < S.level:
        raise InvalidInputError(f"cannot refine level {S.level} spline down to level {j}")
    coeffs = S.coeffs
    for k in range(S.level, j):
        R = subdivision_matrix(S.degree, k)
        for _ in range(S.n):
            coeffs = np.tensordot(coeffs, R.T, axes=([0], [0]))
    return SplineFn(S.n, S.degree, j, coeffs)


@dataclass(frozen=True, eq=False)
class QuasiCoeffs:
    level: int
    degree: int
    n: int
    alpha: np.ndarray = field(repr=False)
    provenance: Dict[str, object] = field(default_factory=dict)

    def to_spline(self) -> SplineFn:
        return SplineFn(self.n, self.degree, self.level, self.alpha)


def dual_weights(m: int, k: int, l: int, tau: float) -> np.ndarray:
    """``a_nu = (-1)^{l-1-nu} / (l-1)! * D^{l-1-nu} psi_m(tau)`` for ``nu = 0..l-1``."""

    roots = [(m + j) / 2.0 ** k for j in range(1, l)]
    psi = power_series.polyfromroots(roots) * (-1.0) ** (l - 1)
    weights = np.empty(l)
    for nu in range(l):
        order = l - 1 - nu
        derivative = power_series.polyder(psi, order) if order else psi
        weights[nu] = (-1.0) ** order / math.factorial(l - 1) * power_series.polyval(tau, derivative)
    return weights


def _axis_functionals(pp: PiecewisePoly, k: int, l: int, L: int) -> Tuple[np.ndarray, np.ndarray]:
    """Per-axis owner cube index and contracted vector ``a^T E`` for every spline index."""

    top = 2 ** k
    m_values = np.arange(-(l - 1), top)
    tau = (np.clip(m_values, 0, top - 1) + 0.5) / top
    owners = np.minimum(np.floor(tau * 2 ** pp.level).astype(int), 2 ** pp.level - 1)
    side = 2.0 ** -pp.level
    vectors = np.empty((len(m_values), L))
    for row, (m, t, owner) in enumerate(zip(m_values, tau, owners)):
        u = np.array([2.0 * (t - (owner + 0.5) * side) / side])
        E = np.stack([legendre_matrix(u, L, nu, 2.0 / side)[0] for nu in range(l)])
        vectors[row] = dual_weights(int(m), k, l, float(t)) @ E
    return owners, vectors


def quasi_interpolant(pp: PiecewisePoly, k: int, l: int) -> QuasiCoeffs:
    """Coefficients of the degree ``l-1`` quasi-interpolant built from per-cube polynomials.

    Derivatives at each center are read analytically from the polynomial piece
    owning that center. Boundary indices use the center of the nearest in-domain
    cell, which lies in the support of the basis function.
    """

    if pp.l > l:
        raise InvalidInputError(f"polynomial pieces of order {pp.l} exceed spline order {l}")
    L = l
    padded: Dict[Tuple[int, ...], np.ndarray] = {}
    for index, piece in pp.pieces.items():
        tensor = np.zeros((L,) * pp.n)
        tensor[tuple(slice(0, pp.l) for _ in range(pp.n))] = piece.coeffs
        padded[index] = tensor
    owners, vectors = _axis_functionals(pp, k, l, L)
    count = len(owners)
    alpha = np.empty((count,) * pp.n)
    for position in itertools.product(range(count), repeat=pp.n):
        key = tuple(int(owners[p]) for p in position)
        if key not in padded:
            raise InvalidInputError(f"no polynomial piece owns the center for index {position}")
        value = padded[key]
        for p in position:
            value = np.tensordot(vectors[p], value, axes=([0], [0]))
        alpha[position] = float(value)
    provenance = {"source_level": pp.level, "r": pp.r, "constant": pp.constant, "derivatives": "analytic"}
    return QuasiCoeffs(k, l - 1, pp.n, alpha, provenance)


def spline_pieces(S: SplineFn) -> PiecewisePoly:
    """Exact per-cube polynomial pieces of ``S`` on its own tiling."""

    extra = max(0, math.ceil(math.log2(S.order)))
    fine = S.sample(S.level + extra + 1)
    return almost_best_field(fine, S.level, S.order, 2.0, DegreeMode.coordinate)


def t_operator(
    phi: GridFunction, k: int, l: int, r: float, mode: DegreeMode = DegreeMode.coordinate
) -> SplineFn:
    """Quasi-interpolant of the level-``k`` almost-best piecewise polynomial of ``phi``."""

    field_ = almost_best_field(phi, k, l, r, mode)
    return quasi_interpolant(field_, k, l).to_spline()


def local_error_ratios(phi: GridFunction, k: int, l: int, r: float, floor: float = 1e-12) -> np.ndarray:
    """``||phi - T_k phi||_{L_r(Q)} / E_l(phi, (1+l) Q)_r`` per level-``k`` cube.

    Cubes whose local best error falls under ``floor`` are reported as NaN.
    """

    T = t_operator(phi, k, l, r)
    residual = phi - T.sample(phi.level)
    lhs = cube_lr_norms(residual.values, phi.level, k, r)
    ratios = np.full(lhs.shape, np.nan)
    for cube in level_cubes(k, phi.n):
        error = best_error(phi, cube_box(cube, 1.0 + l), l, r, DegreeMode.coordinate)
        if error > floor:
            ratios[cube.index] = lhs[cube.index] / error
    return ratios


@dataclass(frozen=True)
class StabilityReport:
    """Per-cube ratios ``||S||_{L_r(Q)} / (sum |beta|^r 2^{-kn})^{1/r}``."""

    lower: float
    upper: float
    overlap: int
    ratios: Tuple[float, ...] = field(repr=False)


def _local_coefficient_norms(S: SplineFn, r: float) -> np.ndarray:
    """Coefficient mass of the ``(degree+1)^n`` splines meeting each level cube."""

    mags = np.abs(S.coeffs)
    width = S.degree + 1
    top = 2 ** S.level
    windows = np.lib.stride_tricks.sliding_window_view(mags, (width,) * S.n)
    flat = windows.reshape((top,) * S.n + (-1,))
    if math.isinf(r):
        return flat.max(axis=-1)
    return (np.sum(flat ** r, axis=-1) * 2.0 ** (-S.level * S.n)) ** (1.0 / r)


def coeff_stability(S: SplineFn, r: float, oversample: int = 3) -> StabilityReport:
    """Two-sided comparison of local spline norms and local coefficient norms."""

    if not r > 0:
        raise InvalidInputError("exponent r must be positive")
    grid = S.sample(S.level + oversample)
    lhs = cube_lr_norms(grid.values, grid.level, S.level, r)
    rhs = _local_coefficient_norms(S, r)
    active = rhs > 0
    ratios = lhs[active] / rhs[active]
    if ratios.size == 0:
        return StabilityReport(math.nan, math.nan, 2 * S.order + 1, ())
    return StabilityReport(float(ratios.min()), float(ratios.max()), 2 * S.order + 1, tuple(float(x) for x in ratios))


def smoothness_ratio(degree: int, k: int, steps: Sequence[float], points: Sequence[float]) -> float:
    """``max |Delta^{degree+1}(h) N_{k,0}(x)| / (2^k |h|)^degree`` over a lattice of ``(x, h)``."""

    l = degree + 1
    worst = 0.0
    binom = comb(l, np.arange(l + 1)) * (-1.0) ** (l - np.arange(l + 1))
    for h in steps:
        if h == 0:
            continue
        for x in points:
            nodes = 2.0 ** k * (x + np.arange(l + 1) * h)
            diff = float(binom @ np.asarray(bspline_eval(degree, nodes)))
            worst = max(worst, abs(diff) / (2.0 ** k * abs(h)) ** degree)
    return worst


def write_terms(
    path: Union[str, Path], n: int, degree: int, K: int, terms: Iterable[SplineTerm]
) -> None:
    lines = [VSSS_MAGIC, f"n={n} degree={degree} K={K}"]
    for k, m, beta in terms:
        lines.append(" ".join([str(k), *(str(mi) for mi in m), format(float(beta), ".17g")]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_terms(path: Union[str, Path]) -> Tuple[int, int, int, List[SplineTerm]]:
    """Parse a spline series file into ``(n, degree, K, terms)``."""

    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or text[0].strip() != VSSS_MAGIC:
        raise FormatError(f"missing {VSSS_MAGIC} magic line", str(path), 1)
    if len(text) < 2:
        raise FormatError("missing header line", str(path), 2)
    header: Dict[str, int] = {}
    for token in text[1].split():
        key, sep, value = token.partition("=")
        try:
            header[key] = int(value)
        except ValueError as exc:
            raise FormatError(f"malformed header token {token!r}", str(path), 2) from exc
        if not sep:
            raise FormatError(f"malformed header token {token!r}", str(path), 2)
    try:
        n, degree, K = header["n"], header["degree"], header["K"]
    except KeyError as exc:
        raise FormatError(f"header lacks {exc.args[0]}=", str(path), 2) from exc
    terms: List[SplineTerm] = []
    for lineno, line in enumerate(text[2:], start=3):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != n + 2:
            raise FormatError(f"expected {n + 2} fields, found {len(fields)}", str(path), lineno)
        try:
            k = int(fields[0])
            m = tuple(int(v) for v in fields[1:-1])
            beta = float(fields[-1])
        except ValueError as exc:
            raise FormatError(f"malformed term {line!r}", str(path), lineno) from exc
        if not math.isfinite(beta):
            raise FormatError("non-finite coefficient", str(path), lineno)
        if not 0 <= k <= K or any(not -degree <= mi < 2 ** k for mi in m):
            raise FormatError(f"index ({k}, {m}) outside the admissible range", str(path), lineno)
        terms.append((k, m, beta))
    return n, degree, K, terms


def spline_from_terms(n: int, degree: int, level: int, terms: Iterable[SplineTerm]) -> SplineFn:
    """Sum terms of any level ``<= level`` into one level-``level`` spline."""

    per_level: Dict[int, np.ndarray] = {}
    for k, m, beta in terms:
        if k > level:
            raise InvalidInputError(f"term of level {k} exceeds target level {level}")
        coeffs = per_level.setdefault(k, np.zeros((index_count(degree, k),) * n))
        coeffs[tuple(mi + degree for mi in m)] += beta
    total = zero_spline(n, degree, level)
    for k, coeffs in per_level.items():
        total = total + refine(SplineFn(n, degree, k, coeffs), level)
    return total


def write_spline(S: SplineFn, path: Union[str, Path]) -> None:
    write_terms(path, S.n, S.degree, S.level, S.terms())


def read_spline(path: Union[str, Path]) -> SplineFn:
    n, degree, K, terms = read_terms(path)
    return spline_from_terms(n, degree, K, terms)


def spline_lr_norm(S: SplineFn, r: float, oversample: int = 3) -> float:
    grid = S.sample(S.level + oversample)
    return lr_norm(grid, DyadicCube(0, (0,) * S.n), r).value
