"""Dyadic cubes, boxes and annular shells over the unit box."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gamma as gamma_fn

from varsmooth.errors import InvalidInputError

MAX_DIMENSION = 3


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``lower + [0, sides]``."""

    lower: Tuple[float, ...]
    sides: Tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.lower) != len(self.sides):
            raise InvalidInputError("box corner and sides have different lengths")
        if any(not side > 0 for side in self.sides):
            raise InvalidInputError(f"box sides must be positive, got {self.sides}")

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def upper(self) -> Tuple[float, ...]:
        return tuple(lo + side for lo, side in zip(self.lower, self.sides))

    @property
    def center(self) -> Tuple[float, ...]:
        return tuple(lo + 0.5 * side for lo, side in zip(self.lower, self.sides))

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    @property
    def side(self) -> float:
        """Largest side length, ``r(Q)`` for cubes."""

        return max(self.sides)

    def intersect(self, other: "Box") -> Optional["Box"]:
        lower = tuple(max(a, b) for a, b in zip(self.lower, other.lower))
        upper = tuple(min(a, b) for a, b in zip(self.upper, other.upper))
        if any(hi <= lo for lo, hi in zip(lower, upper)):
            return None
        return Box(lower, tuple(hi - lo for lo, hi in zip(lower, upper)))

    def contains_box(self, other: "Box", tol: float = 1e-15) -> bool:
        return all(
            a <= b + tol and bu <= au + tol
            for a, b, au, bu in zip(self.lower, other.lower, self.upper, other.upper)
        )

    def contains_point(self, x: Sequence[float]) -> bool:
        """Closed-box membership."""

        return all(lo <= xi <= hi for lo, xi, hi in zip(self.lower, x, self.upper))


def unit_box(n: int) -> Box:
    return Box((0.0,) * n, (1.0,) * n)


@dataclass(frozen=True)
class DyadicCube:
    """Open cube ``prod (m_i / 2^k, (m_i + 1) / 2^k)``."""

    level: int
    index: Tuple[int, ...]

    def __post_init__(self) -> None:
        if self.level < 0:
            raise InvalidInputError(f"cube level must be nonnegative, got {self.level}")
        if not 1 <= len(self.index) <= MAX_DIMENSION:
            raise InvalidInputError(f"cube dimension must be 1..{MAX_DIMENSION}")

    @property
    def dim(self) -> int:
        return len(self.index)

    @property
    def side(self) -> float:
        return math.ldexp(1.0, -self.level)

    @property
    def volume(self) -> float:
        return self.side ** self.dim

    @property
    def lower(self) -> Tuple[float, ...]:
        return tuple(m * self.side for m in self.index)

    @property
    def center(self) -> Tuple[float, ...]:
        return tuple((m + 0.5) * self.side for m in self.index)

    def in_domain(self) -> bool:
        return all(0 <= m < 2 ** self.level for m in self.index)

    def children(self) -> List["DyadicCube"]:
        offsets = itertools.product((0, 1), repeat=self.dim)
        return [
            DyadicCube(self.level + 1, tuple(2 * m + o for m, o in zip(self.index, off)))
            for off in offsets
        ]

    def contains(self, other: "DyadicCube") -> bool:
        if other.level < self.level or other.dim != self.dim:
            return False
        return ancestor(other, self.level) == self

    def cell_slices(self, resolution: int) -> Tuple[slice, ...]:
        """Index ranges of the level-``resolution`` cells filling this cube."""

        if resolution < self.level:
            raise InvalidInputError("cube is finer than the requested grid")
        width = 2 ** (resolution - self.level)
        return tuple(slice(m * width, (m + 1) * width) for m in self.index)


@dataclass(frozen=True)
class Shell:
    """``Q_{k,m} x (2^{-k} B^d minus 2^{-k-1} B^d)`` in ``R^{n+d}``."""

    cube: DyadicCube
    codim: int

    def __post_init__(self) -> None:
        if self.codim < 1:
            raise InvalidInputError("shell codimension must be positive")

    @property
    def outer_radius(self) -> float:
        return self.cube.side

    @property
    def inner_radius(self) -> float:
        return 0.5 * self.cube.side


def unit_ball_volume(d: int) -> float:
    return float(math.pi ** (d / 2.0) / gamma_fn(d / 2.0 + 1.0))


def cube_box(c: DyadicCube, dilation: float = 1.0) -> Box:
    """Box concentric with ``c`` whose side is ``dilation * 2^{-k}``."""

    if not dilation > 0:
        raise InvalidInputError(f"dilation must be positive, got {dilation}")
    side = dilation * c.side
    return Box(tuple(x - 0.5 * side for x in c.center), (side,) * c.dim)


def ancestor(c: DyadicCube, level: int) -> DyadicCube:
    if level > c.level:
        raise InvalidInputError(f"ancestor level {level} exceeds cube level {c.level}")
    shift = c.level - level
    return DyadicCube(level, tuple(m >> shift for m in c.index))


def neighbors(c: DyadicCube) -> List[DyadicCube]:
    """Same-level cubes with ``|m_i - m~_i| <= 1`` inside the domain, ``c`` included."""

    top = 2 ** c.level
    found = []
    for off in itertools.product((-1, 0, 1), repeat=c.dim):
        index = tuple(m + o for m, o in zip(c.index, off))
        if all(0 <= i < top for i in index):
            found.append(DyadicCube(c.level, index))
    return found


def shell_measure(s: Shell) -> float:
    d = s.codim
    annulus = unit_ball_volume(d) * (s.outer_radius ** d - s.inner_radius ** d)
    return s.cube.volume * annulus


def level_cubes(level: int, n: int) -> Iterator[DyadicCube]:
    """All in-domain cubes of a level in row-major index order."""

    for index in itertools.product(range(2 ** level), repeat=n):
        yield DyadicCube(level, index)


def cube_of_point(x: Sequence[float], level: int) -> DyadicCube:
    """The cube of the half-open tiling owning ``x``; ``x_i = 1`` joins the last cube."""

    top = 2 ** level
    index = tuple(min(max(int(math.floor(xi * top)), 0), top - 1) for xi in x)
    return DyadicCube(level, index)
