"""Local best L_r approximation by polynomials on cubes."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Sequence, Tuple

import numpy as np
from numpy.polynomial import legendre
from scipy.optimize import linprog

from varsmooth.errors import InvalidInputError, NumericalError
from varsmooth.geometry import Box, DyadicCube, cube_of_point, unit_box
from varsmooth.gridfn import GridFunction, Region, as_box, blocks, box_weights
from varsmooth.workers import parallel_map

logger = logging.getLogger(__name__)

IRLS_ITERATIONS = 50
IRLS_TOLERANCE = 1e-10
QUASI_NORM_CONSTANT = 1.25
LP_CONSTANT = 1.0


class DegreeMode(str, Enum):
    """``total``: degree < l; ``coordinate``: every per-axis degree < l."""

    total = "total"
    coordinate = "coordinate"


def exponent_mask(n: int, l: int, mode: DegreeMode) -> np.ndarray:
    """Flat mask over the ``(l,)*n`` coefficient tensor selecting admissible monomials."""

    grid = np.array(list(itertools.product(range(l), repeat=n))).reshape(-1, n)
    if DegreeMode(mode) is DegreeMode.total:
        return grid.sum(axis=1) <= l - 1
    return np.ones(len(grid), dtype=bool)


def legendre_matrix(u: np.ndarray, l: int, order: int = 0, scale: float = 1.0) -> np.ndarray:
    """Values of ``d^order/dx^order L_a`` for ``a < l`` at chart points ``u``."""

    if order == 0:
        return legendre.legvander(u, l - 1)
    columns = []
    for a in range(l):
        unit = np.zeros(l)
        unit[a] = 1.0
        columns.append(legendre.legval(u, legendre.legder(unit, order)) if order <= a else np.zeros_like(u))
    return np.stack(columns, axis=-1) * scale ** order


def _row_kron(matrices: Sequence[np.ndarray]) -> np.ndarray:
    design = matrices[0]
    for m in matrices[1:]:
        design = (design[:, :, None] * m[:, None, :]).reshape(design.shape[0], -1)
    return design


@dataclass(frozen=True, eq=False)
class LocalPoly:
    """Polynomial on a cube written in the tensor Legendre basis of the cube chart."""

    box: Box
    l: int
    r: float
    mode: DegreeMode
    coeffs: np.ndarray = field(repr=False)
    error: float = 0.0
    constant: float = 1.0

    @property
    def n(self) -> int:
        return self.box.dim

    def chart(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        center = np.asarray(self.box.center)
        sides = np.asarray(self.box.sides)
        return 2.0 * (pts - center) / sides

    def derivative(self, nu: Sequence[int], points: np.ndarray) -> np.ndarray:
        u = self.chart(points)
        mats = [
            legendre_matrix(u[:, axis], self.l, int(order), 2.0 / self.box.sides[axis])
            for axis, order in enumerate(nu)
        ]
        return _row_kron(mats) @ self.coeffs.reshape(-1)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return self.derivative((0,) * self.n, points)


def _sample_cells(phi: GridFunction, box: Box) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Centers, overlap volumes and values of the fine cells meeting ``box``."""

    if min(box.sides) < phi.h * (1 - 1e-12):
        raise NumericalError("cube is smaller than one fine cell", "polyfit", "best_poly")
    weights = box_weights(box, phi.level)
    ranges = [np.nonzero(w > 0)[0] for w in weights]
    if any(rng.size == 0 for rng in ranges):
        raise InvalidInputError("cube does not meet the unit box")
    centers_axis = [(rng + 0.5) * phi.h for rng in ranges]
    grids = np.meshgrid(*centers_axis, indexing="ij")
    centers = np.stack([g.reshape(-1) for g in grids], axis=1)
    w_grids = np.meshgrid(*[w[rng] for w, rng in zip(weights, ranges)], indexing="ij")
    volume = np.prod(np.stack([g.reshape(-1) for g in w_grids], axis=1), axis=1)
    values = phi.values[np.ix_(*ranges)].reshape(-1)
    return centers, volume, values


def _design(box: Box, centers: np.ndarray, l: int, mask: np.ndarray) -> np.ndarray:
    u = 2.0 * (centers - np.asarray(box.center)) / np.asarray(box.sides)
    return _row_kron([legendre.legvander(u[:, axis], l - 1) for axis in range(box.dim)])[:, mask]


def _objective(res: np.ndarray, w: np.ndarray, r: float) -> float:
    if math.isinf(r):
        return float(np.max(np.abs(res))) if res.size else 0.0
    return float(np.sum(w * np.abs(res) ** r) ** (1.0 / r))


def _weighted_lstsq(D: np.ndarray, f: np.ndarray, w: np.ndarray) -> np.ndarray:
    sw = np.sqrt(w)
    coeffs, *_ = np.linalg.lstsq(D * sw[:, None], f * sw, rcond=None)
    return coeffs


def _lp_fit(D: np.ndarray, f: np.ndarray, w: np.ndarray, r: float) -> np.ndarray:
    P, m = D.shape
    if math.isinf(r):
        cost = np.concatenate([np.zeros(m), [1.0]])
        slack = -np.ones((P, 1))
    else:
        cost = np.concatenate([np.zeros(m), w])
        slack = -np.eye(P)
    A_ub = np.block([[D, slack], [-D, slack]])
    b_ub = np.concatenate([f, -f])
    bounds = [(None, None)] * m + [(0, None)] * (A_ub.shape[1] - m)
    result = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if not result.success:
        raise NumericalError(f"linear program failed: {result.message}", "polyfit", "best_poly")
    return result.x[:m]


def _irls(D: np.ndarray, f: np.ndarray, w: np.ndarray, r: float, start: np.ndarray) -> np.ndarray:
    best = start
    best_obj = _objective(f - D @ start, w, r)
    coeffs = start
    floor = 1e-12 * max(1.0, float(np.max(np.abs(f))) if f.size else 1.0)
    for _ in range(IRLS_ITERATIONS):
        res = f - D @ coeffs
        reweight = w * np.maximum(np.abs(res), floor) ** (r - 2.0)
        proposal = _weighted_lstsq(D, f, reweight)
        obj = _objective(f - D @ proposal, w, r)
        if obj > best_obj:
            proposal = 0.5 * (proposal + best)
            obj = _objective(f - D @ proposal, w, r)
        change = np.linalg.norm(proposal - coeffs) / max(np.linalg.norm(coeffs), 1e-300)
        coeffs = proposal
        if obj < best_obj:
            best, best_obj = proposal, obj
        if change < IRLS_TOLERANCE:
            break
    return best


def _dual_lower_bound(D: np.ndarray, f: np.ndarray, w: np.ndarray, res: np.ndarray, r: float) -> float:
    """Lower bound on the best error from a residual-shaped multiplier orthogonal to the basis."""

    if math.isinf(r):
        scale = np.max(np.abs(res))
        lam = np.sign(res) * (np.abs(res) / scale) ** 64 if scale > 0 else np.zeros_like(res)
    else:
        lam = w * np.sign(res) * np.abs(res) ** (r - 1.0)
    correction, *_ = np.linalg.lstsq(D, lam, rcond=None)
    lam = lam - D @ correction
    if math.isinf(r):
        dual = float(np.sum(np.abs(lam)))
    elif r == 1.0:
        dual = float(np.max(np.abs(lam) / w))
    else:
        conj = r / (r - 1.0)
        dual = float(np.sum(np.abs(lam) ** conj * w ** (-conj / r)) ** (1.0 / conj))
    if dual <= 0:
        return 0.0
    return max(0.0, float(lam @ f) / dual)


def _fit(D: np.ndarray, f: np.ndarray, w: np.ndarray, r: float) -> Tuple[np.ndarray, float, float]:
    """Coefficients, achieved error and realized constant ``A``."""

    if r == 2.0:
        coeffs = _weighted_lstsq(D, f, w)
        return coeffs, _objective(f - D @ coeffs, w, r), 1.0
    if r == 1.0 or math.isinf(r):
        coeffs = _lp_fit(D, f, w, r)
        return coeffs, _objective(f - D @ coeffs, w, r), LP_CONSTANT
    if r > 1.0:
        coeffs = _irls(D, f, w, r, _weighted_lstsq(D, f, w))
        error = _objective(f - D @ coeffs, w, r)
        if error <= 1e-14:
            return coeffs, error, 1.0
        lower = _dual_lower_bound(D, f, w, f - D @ coeffs, r)
        constant = error / lower if lower > 0 else math.inf
        if constant > QUASI_NORM_CONSTANT:
            logger.warning("IRLS certificate for r=%.3g is loose: A=%.4g", r, constant)
        return coeffs, error, constant
    coeffs = _irls(D, f, w, r, _lp_fit(D, f, w, 1.0))
    return coeffs, _objective(f - D @ coeffs, w, r), QUASI_NORM_CONSTANT


def _full_tensor(coeffs: np.ndarray, mask: np.ndarray, n: int, l: int) -> np.ndarray:
    full = np.zeros(l ** n)
    full[mask] = coeffs
    return full.reshape((l,) * n)


def best_poly(phi: GridFunction, Q: Region, l: int, r: float, mode: DegreeMode = DegreeMode.total) -> LocalPoly:
    """Best (or certified almost-best) polynomial approximation of ``phi`` on ``Q`` in ``L_r``."""

    if l < 1:
        raise InvalidInputError("polynomial order l must be at least 1")
    if not r > 0:
        raise InvalidInputError("exponent r must be positive")
    mode = DegreeMode(mode)
    box = as_box(Q)
    domain_part = box.intersect(unit_box(phi.n))
    if domain_part is None:
        raise InvalidInputError("cube does not meet the unit box")
    centers, volume, values = _sample_cells(phi, box)
    mask = exponent_mask(phi.n, l, mode)
    D = _design(box, centers, l, mask)
    coeffs, error, constant = _fit(D, values, volume, r)
    return LocalPoly(box, l, r, mode, _full_tensor(coeffs, mask, phi.n, l), error, constant)


def best_error(phi: GridFunction, Q: Region, l: int, r: float, mode: DegreeMode = DegreeMode.total) -> float:
    return best_poly(phi, Q, l, r, mode).error


@dataclass(frozen=True, eq=False)
class PiecewisePoly:
    """``g_k = sum_m P_{Q_{k,m}} chi_{Q_{k,m}}`` over the level-``k`` tiling."""

    level: int
    l: int
    r: float
    n: int
    pieces: Dict[Tuple[int, ...], LocalPoly] = field(repr=False)

    @property
    def constant(self) -> float:
        return max((piece.constant for piece in self.pieces.values()), default=1.0)

    def piece(self, index: Sequence[int]) -> LocalPoly:
        key = tuple(int(i) for i in index)
        if key not in self.pieces:
            raise InvalidInputError(f"no polynomial piece for cube {key} at level {self.level}")
        return self.pieces[key]

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty(len(pts))
        for row, x in enumerate(pts):
            owner = cube_of_point(x, self.level)
            out[row] = self.piece(owner.index).evaluate(x[None, :])[0]
        return out

    def sample(self, level: int) -> GridFunction:
        """Values at the cell centers of a grid at least as fine as the tiling."""

        if level < self.level:
            raise InvalidInputError("sampling grid must not be coarser than the tiling")
        width = 2 ** (level - self.level)
        local = (np.arange(width) + 0.5) / width
        values = np.zeros((2 ** level,) * self.n)
        for index, piece in self.pieces.items():
            cube = DyadicCube(self.level, index)
            grids = np.meshgrid(*[(m + local) * cube.side for m in index], indexing="ij")
            pts = np.stack([g.reshape(-1) for g in grids], axis=1)
            values[cube.cell_slices(level)] = piece.evaluate(pts).reshape((width,) * self.n)
        return GridFunction(self.n, level, values)

    def max_error(self) -> float:
        return max((piece.error for piece in self.pieces.values()), default=0.0)


def almost_best_field(
    phi: GridFunction,
    k: int,
    l: int,
    r: float,
    mode: DegreeMode = DegreeMode.coordinate,
) -> PiecewisePoly:
    """Per-cube almost-best polynomials on every level-``k`` cube."""

    if k > phi.level:
        raise NumericalError(f"level {k} cubes are smaller than one fine cell", "polyfit", "almost_best_field")
    mode = DegreeMode(mode)
    indices = list(itertools.product(range(2 ** k), repeat=phi.n))
    if r == 2.0:
        pieces = _least_squares_level(phi, k, l, mode, indices)
    else:
        fitted = parallel_map(lambda index: best_poly(phi, DyadicCube(k, index), l, r, mode), indices)
        pieces = dict(zip(indices, fitted))
    field_ = PiecewisePoly(k, l, r, phi.n, pieces)
    logger.debug("Level %d field: l=%d r=%s A=%.4g", k, l, r, field_.constant)
    return field_


def _least_squares_level(
    phi: GridFunction, k: int, l: int, mode: DegreeMode, indices: List[Tuple[int, ...]]
) -> Dict[Tuple[int, ...], LocalPoly]:
    """All cubes of a level share one design matrix, so one pseudo-inverse serves every cube."""

    width = 2 ** (phi.level - k)
    local = (2.0 * np.arange(width) + 1.0) / width - 1.0
    grids = np.meshgrid(*([local] * phi.n), indexing="ij")
    u = np.stack([g.reshape(-1) for g in grids], axis=1)
    mask = exponent_mask(phi.n, l, mode)
    D = _row_kron([legendre.legvander(u[:, axis], l - 1) for axis in range(phi.n)])[:, mask]
    grouped = blocks(phi.values, k)
    samples = grouped.reshape(-1, grouped.shape[-1]).T
    coeffs = np.linalg.pinv(D) @ samples
    residual = samples - D @ coeffs
    errors = np.sqrt(np.sum(residual ** 2, axis=0) * phi.cell_volume)
    side = 2.0 ** -k
    pieces = {}
    for column, index in enumerate(indices):
        box = Box(tuple(m * side for m in index), (side,) * phi.n)
        pieces[index] = LocalPoly(
            box, l, 2.0, mode, _full_tensor(coeffs[:, column], mask, phi.n, l), float(errors[column]), 1.0
        )
    return pieces
