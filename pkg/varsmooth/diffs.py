"""Finite differences on sampled functions and the cube functionals built from them."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.ndimage import correlate1d, maximum_filter
from scipy.special import comb

from varsmooth.errors import InvalidInputError
from varsmooth.geometry import Box, DyadicCube, cube_box, unit_box
from varsmooth.gridfn import GridFunction, Region, as_box, blocks, box_weights, evaluate
from varsmooth.polyfit import DegreeMode, best_error

logger = logging.getLogger(__name__)

DEFAULT_DIRECTIONS = 64


class OmegaMode(str, Enum):
    """Domain in which the difference segment must stay."""

    full = "full"
    cube = "cube"


@dataclass(frozen=True)
class DiffParams:
    l: int
    r: float

    def __post_init__(self) -> None:
        if self.l < 1 or int(self.l) != self.l:
            raise InvalidInputError(f"difference order must be a positive integer, got {self.l}")
        if not self.r > 0:
            raise InvalidInputError(f"averaging exponent must be positive, got {self.r}")


@lru_cache(maxsize=None)
def binomial_weights(l: int) -> Tuple[float, ...]:
    """Coefficients of ``g(x + jh)`` in the order-``l`` forward difference."""

    return tuple(float((-1) ** (l + j) * comb(l, j, exact=True)) for j in range(l + 1))


def _in_unit_box(points: np.ndarray) -> np.ndarray:
    return np.all((points >= 0.0) & (points <= 1.0), axis=-1)


def forward_diff(g: GridFunction, h: Sequence[float], x: Sequence[float], l: int) -> float:
    """``sum_j C_l^j (-1)^{l+j} g(x + jh)``, or 0 when ``[x, x + lh]`` leaves the unit box."""

    DiffParams(l, 1.0)
    xv = np.asarray(x, dtype=float)
    hv = np.asarray(h, dtype=float)
    if not (_in_unit_box(xv) and _in_unit_box(xv + l * hv)):
        return 0.0
    points = np.array([xv + j * hv for j in range(l + 1)])
    return float(np.dot(binomial_weights(l), evaluate(g, points)))


def lattice_offsets(radius: float, level: int, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Integer offsets covering the open cube ``(-radius, radius)^n`` and their volumes.

    Each offset stands for the fine cell around ``s * 2^{-level}``; its weight is
    the overlap of that cell with the cube, so the weights sum to ``(2 radius)^n``.
    """

    h = math.ldexp(1.0, -level)
    reach = int(math.floor(radius / h + 0.5))
    axis = np.arange(-reach, reach + 1)
    axis_w = np.clip(np.minimum(axis * h + h / 2, radius) - np.maximum(axis * h - h / 2, -radius), 0.0, None)
    keep = axis_w > 0
    axis, axis_w = axis[keep], axis_w[keep]
    offsets = np.array(list(itertools.product(axis, repeat=n)), dtype=int).reshape(-1, n)
    weights = np.array([np.prod(w) for w in itertools.product(axis_w, repeat=n)])
    return offsets, weights


def _segment_starts(shape: Sequence[int], shift: Sequence[int], l: int) -> Optional[Tuple[slice, ...]]:
    starts = []
    for dim, s in zip(shape, shift):
        span = l * int(s)
        lo, hi = max(0, -span), dim - max(0, span)
        if lo >= hi:
            return None
        starts.append(slice(lo, hi))
    return tuple(starts)


def shifted_difference(values: np.ndarray, shift: Sequence[int], l: int) -> Tuple[Optional[np.ndarray], Optional[Tuple[slice, ...]]]:
    """Order-``l`` difference along an integer lattice shift at every admissible start cell."""

    starts = _segment_starts(values.shape, shift, l)
    if starts is None:
        return None, None
    out = np.zeros(tuple(s.stop - s.start for s in starts))
    for j, c in enumerate(binomial_weights(l)):
        window = tuple(slice(s.start + j * int(d), s.stop + j * int(d)) for s, d in zip(starts, shift))
        out += c * values[window]
    return out, starts


def difference_field(g: GridFunction, radius: float, l: int, r: float) -> np.ndarray:
    """Per-cell ``sum_h w_h |Delta^l(h) g(x)|^r`` over lattice shifts in ``radius * I^n``.

    Segments leaving the unit box contribute zero; ``r = inf`` returns the max.
    """

    offsets, weights = lattice_offsets(radius, g.level, g.n)
    acc = np.zeros(g.values.shape)
    for shift, w in zip(offsets, weights):
        delta, starts = shifted_difference(g.values, shift, l)
        if delta is None:
            continue
        if math.isinf(r):
            acc[starts] = np.maximum(acc[starts], np.abs(delta))
        else:
            acc[starts] += w * np.abs(delta) ** r
    return acc


def avg_diff(g: GridFunction, t: float, x: Sequence[float], l: int, r: float) -> float:
    """``(t^{-n} int_{t I^n} |Delta^l(h) g(x)|^r dh)^{1/r}`` on the fine lattice."""

    DiffParams(l, r)
    if not t > 0:
        raise InvalidInputError("averaging scale must be positive")
    xv = np.asarray(x, dtype=float)
    offsets, weights = lattice_offsets(t, g.level, g.n)
    steps = offsets * g.h
    ends = xv + l * steps
    valid = _in_unit_box(ends) & bool(_in_unit_box(xv))
    deltas = np.zeros(len(offsets))
    if np.any(valid):
        coeffs = binomial_weights(l)
        for j, c in enumerate(coeffs):
            deltas[valid] += c * evaluate(g, xv + j * steps[valid])
    if math.isinf(r):
        return float(np.max(np.abs(deltas)))
    return float((np.sum(weights * np.abs(deltas) ** r) / t ** g.n) ** (1.0 / r))


def avg_diff_field(g: GridFunction, t: float, l: int, r: float) -> np.ndarray:
    field = difference_field(g, t, l, r)
    if math.isinf(r):
        return field
    return (field / t ** g.n) ** (1.0 / r)


def _omega_range(g: GridFunction, box: Box, mode: OmegaMode) -> Tuple[slice, ...]:
    if mode is OmegaMode.full:
        return tuple(slice(0, g.cells) for _ in range(g.n))
    centers = (np.arange(g.cells) + 0.5) * g.h
    ranges = []
    for lo, hi in zip(box.lower, box.upper):
        inside = np.nonzero((centers >= lo) & (centers <= hi))[0]
        if inside.size == 0:
            return tuple(slice(0, 0) for _ in range(g.n))
        ranges.append(slice(int(inside[0]), int(inside[-1]) + 1))
    return tuple(ranges)


def _restricted_power_sum(
    g: GridFunction,
    box: Box,
    omega: Tuple[slice, ...],
    shifts: np.ndarray,
    shift_weights: np.ndarray,
    l: int,
    r: float,
) -> float:
    """``sum_h w_h sum_x vol(x in box) |Delta^l(h) g(x)|^r`` with segments inside ``omega``."""

    sub = g.values[omega]
    if sub.size == 0:
        return 0.0
    x_weights = [w[s] for w, s in zip(box_weights(box, g.level), omega)]
    total = 0.0
    for shift, w in zip(shifts, shift_weights):
        delta, starts = shifted_difference(sub, shift, l)
        if delta is None:
            continue
        local = [xw[s] for xw, s in zip(x_weights, starts)]
        if math.isinf(r):
            mask = np.ix_(*[lw > 0 for lw in local])
            picked = np.abs(delta)[mask]
            if picked.size:
                total = max(total, float(picked.max()))
            continue
        contraction = np.abs(delta) ** r
        for lw in local:
            contraction = np.tensordot(lw, contraction, axes=([0], [0]))
        total += w * float(contraction)
    return total


def delta_lr(g: GridFunction, Q: Region, l: int, r: float, mode: OmegaMode = OmegaMode.full) -> float:
    """``(r(Q)^{-2n} int_{r(Q) I^n} int_Q |Delta^l(h, Omega) g(x)|^r dx dh)^{1/r}``.

    ``mode = full`` keeps segments inside the unit box, ``mode = cube`` inside ``Q``.
    """

    DiffParams(l, r)
    mode = OmegaMode(mode)
    box = as_box(Q)
    rho = box.side
    shifts, shift_weights = lattice_offsets(rho, g.level, g.n)
    domain_box = box.intersect(unit_box(g.n))
    if domain_box is None:
        return 0.0
    omega = _omega_range(g, domain_box, mode)
    total = _restricted_power_sum(g, box, omega, shifts, shift_weights, l, r)
    if math.isinf(r):
        return total
    return float((total / rho ** (2 * g.n)) ** (1.0 / r))


def delta_level(g: GridFunction, k: int, l: int, r: float, mode: OmegaMode = OmegaMode.full) -> np.ndarray:
    """:func:`delta_lr` for every level-``k`` cube at once, shape ``(2^k,)*n``."""

    DiffParams(l, r)
    mode = OmegaMode(mode)
    if k > g.level:
        raise InvalidInputError(f"level {k} is finer than the grid level {g.level}")
    rho = math.ldexp(1.0, -k)
    width = 2 ** (g.level - k)
    shifts, shift_weights = lattice_offsets(rho, g.level, g.n)
    acc = np.zeros(g.values.shape)
    for shift, w in zip(shifts, shift_weights):
        delta, starts = shifted_difference(g.values, shift, l)
        if delta is None:
            continue
        magnitude = np.abs(delta)
        if mode is OmegaMode.cube:
            mask = np.ones(magnitude.shape, dtype=bool)
            for axis, (sl, s) in enumerate(zip(starts, shift)):
                idx = np.arange(sl.start, sl.stop)
                same = (idx // width) == ((idx + l * int(s)) // width)
                shape = [1] * g.n
                shape[axis] = -1
                mask = mask & same.reshape(shape)
            magnitude = np.where(mask, magnitude, 0.0)
        if math.isinf(r):
            acc[starts] = np.maximum(acc[starts], magnitude)
        else:
            acc[starts] += w * magnitude ** r
    grouped = blocks(acc, k)
    if math.isinf(r):
        return grouped.max(axis=-1)
    per_cube = grouped.sum(axis=-1) * g.cell_volume
    return (per_cube / rho ** (2 * g.n)) ** (1.0 / r)


def window_delta_field(g: GridFunction, k: int, l: int, r: float) -> np.ndarray:
    """``delta^l_r(x + 2^{-k} I^n)`` at every cell center, windows clipped to the unit box."""

    rho = math.ldexp(1.0, 1 - k)
    field = difference_field(g, rho, l, r)
    half = min(2 ** (g.level - k), g.cells)
    kernel = np.ones(2 * half + 1)
    kernel[0] = kernel[-1] = 0.5
    if math.isinf(r):
        return maximum_filter(field, size=2 * half + 1, mode="constant", cval=0.0)
    window = field
    for axis in range(g.n):
        window = correlate1d(window, kernel, axis=axis, mode="constant", cval=0.0)
    window = window * g.cell_volume
    return (window / rho ** (2 * g.n)) ** (1.0 / r)


def _direction_axis(extent: int, directions: int) -> np.ndarray:
    full = np.arange(-extent, extent + 1)
    if full.size <= directions:
        return full
    return np.unique(np.round(np.linspace(-extent, extent, directions)).astype(int))


def modulus(g: GridFunction, Q: Region, l: int, r: float, H: int = DEFAULT_DIRECTIONS) -> float:
    """``max_h ||Delta^l(h, Q) g | L_r||`` over at most ``H`` lattice steps per axis."""

    DiffParams(l, r)
    if H < 1:
        raise InvalidInputError("modulus needs at least one direction per axis")
    box = as_box(Q)
    domain_box = box.intersect(unit_box(g.n))
    if domain_box is None:
        return 0.0
    omega = _omega_range(g, domain_box, OmegaMode.cube)
    axes = []
    for sl in omega:
        extent = (sl.stop - sl.start - 1) // l if sl.stop > sl.start else 0
        axes.append(_direction_axis(extent, H))
    best = 0.0
    for shift in itertools.product(*axes):
        if not any(shift):
            continue
        value = _restricted_power_sum(g, box, omega, np.array([shift]), np.ones(1), l, r)
        if not math.isinf(r):
            value = value ** (1.0 / r)
        best = max(best, value)
    return float(best)


def subadditivity_constant(g: GridFunction, k: int, l: int, r: float, c: float = 2.0) -> float:
    """Smallest ``C`` with ``delta(cQ, cQ) <= C * sum delta(cQ', cQ')`` over the
    level-``k-1`` cubes ``Q'`` whose dilations meet ``cQ``."""

    if k < 1:
        raise InvalidInputError("subadditivity compares a level with the one above it")
    coarse: Dict[Tuple[int, ...], Tuple[Box, float]] = {}
    for index in itertools.product(range(2 ** (k - 1)), repeat=g.n):
        box = cube_box(DyadicCube(k - 1, index), c)
        coarse[index] = (box, delta_lr(g, box, l, r, OmegaMode.cube))
    worst = 0.0
    for index in itertools.product(range(2 ** k), repeat=g.n):
        box = cube_box(DyadicCube(k, index), c)
        value = delta_lr(g, box, l, r, OmegaMode.cube)
        if value == 0.0:
            continue
        support = sum(v for b, v in coarse.values() if b.intersect(box) is not None)
        if support == 0.0:
            return math.inf
        worst = max(worst, value / support)
    return worst


@dataclass
class WhitneyRatios:
    """Per-cube ratios against ``delta(Q, Q)``; cubes with vanishing ``delta`` are skipped."""

    modulus_ratio: List[float]
    best_approx_ratio: List[float]

    def spread(self) -> Tuple[float, float]:
        """Max/min spread of both sandwiches."""

        def _spread(values: List[float]) -> float:
            return max(values) / min(values) if values and min(values) > 0 else math.inf

        return _spread(self.modulus_ratio), _spread(self.best_approx_ratio)


def whitney_ratios(g: GridFunction, k: int, l: int, r: float, H: int = DEFAULT_DIRECTIONS, floor: float = 1e-12) -> WhitneyRatios:
    mod_ratios, approx_ratios = [], []
    for index in itertools.product(range(2 ** k), repeat=g.n):
        cube = DyadicCube(k, index)
        delta = delta_lr(g, cube, l, r, OmegaMode.cube)
        if delta <= floor:
            continue
        scale = 1.0 if math.isinf(r) else cube.volume ** (-1.0 / r)
        mod_ratios.append(scale * modulus(g, cube, l, r, H) / delta)
        approx_ratios.append(scale * best_error(g, cube, l, r, DegreeMode.total) / delta)
    return WhitneyRatios(mod_ratios, approx_ratios)
