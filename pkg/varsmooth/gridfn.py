"""Piecewise-constant sampled functions on the unit box, L_r quadrature and VSGF I/O."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Sequence, Tuple, Union

import numpy as np

from varsmooth.errors import FormatError, InvalidInputError
from varsmooth.geometry import Box, DyadicCube, unit_box

logger = logging.getLogger(__name__)

VSGF_MAGIC = "VSGF1"

Region = Union[Box, DyadicCube]


@dataclass(frozen=True, eq=False)
class GridFunction:
    """One value per finest cell of the level-``level`` grid over ``[0,1]^n``."""

    n: int
    level: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if self.n not in (1, 2, 3):
            raise InvalidInputError(f"dimension must be 1, 2 or 3, got {self.n}")
        if self.level < 0:
            raise InvalidInputError("grid level must be nonnegative")
        arr = np.array(self.values, dtype=float)
        expected = (2 ** self.level,) * self.n
        if arr.size != 2 ** (self.n * self.level):
            raise InvalidInputError(
                f"expected {2 ** (self.n * self.level)} values for n={self.n} K={self.level}, got {arr.size}"
            )
        arr = arr.reshape(expected)
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("grid function values must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def cells(self) -> int:
        return 2 ** self.level

    @property
    def h(self) -> float:
        return math.ldexp(1.0, -self.level)

    @property
    def cell_volume(self) -> float:
        return self.h ** self.n

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def with_values(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(self.n, self.level, values)

    def __add__(self, other: "GridFunction") -> "GridFunction":
        _check_compatible(self, other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        _check_compatible(self, other)
        return self.with_values(self.values - other.values)

    def __mul__(self, scalar: float) -> "GridFunction":
        return self.with_values(self.values * float(scalar))

    __rmul__ = __mul__


@dataclass(frozen=True)
class LrNorm:
    r: float
    value: float

    def __float__(self) -> float:
        return self.value


def _check_compatible(a: GridFunction, b: GridFunction) -> None:
    if a.n != b.n or a.level != b.level:
        raise InvalidInputError("grid functions live on different grids")


def cell_centers(level: int) -> np.ndarray:
    count = 2 ** level
    return (np.arange(count, dtype=float) + 0.5) / count


def mesh(level: int, n: int) -> List[np.ndarray]:
    axis = cell_centers(level)
    return list(np.meshgrid(*([axis] * n), indexing="ij"))


def sample(expression: Callable[..., object], level: int, n: int = 1) -> GridFunction:
    """Evaluate ``expression(x_1, ..., x_n)`` at every cell center.

    The expression receives coordinate arrays and may return a scalar, which is
    broadcast to the grid.
    """

    coords = mesh(level, n)
    with np.errstate(all="ignore"):
        raw = np.asarray(expression(*coords), dtype=float)
    values = np.broadcast_to(raw, coords[0].shape).copy()
    if not np.all(np.isfinite(values)):
        raise InvalidInputError("expression produced a non-finite sample")
    return GridFunction(n, level, values)


def zeros(level: int, n: int = 1) -> GridFunction:
    return GridFunction(n, level, np.zeros((2 ** level,) * n))


def as_box(region: Region) -> Box:
    if isinstance(region, DyadicCube):
        return Box(region.lower, (region.side,) * region.dim)
    return region


def axis_overlaps(lower: float, upper: float, level: int) -> np.ndarray:
    """Overlap length of each cell of a level-``level`` axis with ``[lower, upper]``."""

    count = 2 ** level
    edges = np.arange(count + 1, dtype=float) / count
    left = np.maximum(edges[:-1], lower)
    right = np.minimum(edges[1:], upper)
    return np.clip(right - left, 0.0, None)


def box_weights(region: Region, level: int) -> List[np.ndarray]:
    box = as_box(region)
    return [axis_overlaps(lo, hi, level) for lo, hi in zip(box.lower, box.upper)]


def separable_sum(values: np.ndarray, weights: Sequence[np.ndarray]) -> float:
    """``sum_i prod_a w_a[i_a] * values[i]`` contracted one axis at a time."""

    out = values
    for w in weights:
        out = np.tensordot(w, out, axes=([0], [0]))
    return float(out)


def lr_value(values: np.ndarray, level: int, region: Region, r: float) -> float:
    weights = box_weights(region, level)
    if any(not np.any(w > 0) for w in weights):
        return 0.0
    magnitude = np.abs(values)
    if math.isinf(r):
        mask = np.ones(values.shape, dtype=bool)
        for axis, w in enumerate(weights):
            shape = [1] * values.ndim
            shape[axis] = -1
            mask = mask & (w > 0).reshape(shape)
        return float(magnitude[mask].max())
    total = separable_sum(magnitude ** r, weights)
    return float(total ** (1.0 / r))


def lr_norm(g: GridFunction, region: Region, r: float) -> LrNorm:
    """Midpoint-rule ``(int_{region cap [0,1]^n} |g|^r)^{1/r}``; ``r = inf`` takes the max."""

    if not r > 0:
        raise InvalidInputError(f"exponent r must be positive, got {r}")
    return LrNorm(r, lr_value(g.values, g.level, region, r))


def norm(g: GridFunction, r: float) -> float:
    return lr_value(g.values, g.level, unit_box(g.n), r)


def blocks(values: np.ndarray, k: int) -> np.ndarray:
    """Group a fine grid into its level-``k`` cubes: shape ``(2^k,)*n + (cells per cube,)``."""

    n = values.ndim
    top = 2 ** k
    width = values.shape[0] // top
    if width * top != values.shape[0]:
        raise InvalidInputError(f"level {k} is finer than the grid")
    interleaved = values.reshape(sum(((top, width) for _ in range(n)), ()))
    order = tuple(range(0, 2 * n, 2)) + tuple(range(1, 2 * n, 2))
    return interleaved.transpose(order).reshape((top,) * n + (width ** n,))


def cube_lr_norms(values: np.ndarray, level: int, k: int, r: float) -> np.ndarray:
    """L_r norms over every level-``k`` cube of a level-``level`` grid."""

    grouped = np.abs(blocks(values, k))
    if math.isinf(r):
        return grouped.max(axis=-1)
    cell_volume = math.ldexp(1.0, -level * values.ndim)
    return (np.sum(grouped ** r, axis=-1) * cell_volume) ** (1.0 / r)


def expand(cube_values: np.ndarray, level: int) -> np.ndarray:
    """Piecewise-constant prolongation of a level-``k`` cube array onto a finer grid."""

    factor = 2 ** level // cube_values.shape[0]
    out = cube_values
    for axis in range(cube_values.ndim):
        out = np.repeat(out, factor, axis=axis)
    return out


def evaluate(g: GridFunction, points: np.ndarray) -> np.ndarray:
    """Fine-cell lookup at ``points`` of shape ``(P, n)``."""

    pts = np.atleast_2d(np.asarray(points, dtype=float))
    index = np.clip(np.floor(pts * g.cells).astype(int), 0, g.cells - 1)
    return g.values[tuple(index.T)]


def _format_value(value: float) -> str:
    return format(float(value), ".17g")


def write_payload(path: Union[str, Path], header: Dict[str, object], values: np.ndarray) -> None:
    tokens = " ".join(f"{key}={value}" for key, value in header.items())
    lines = [VSGF_MAGIC, tokens]
    flat = np.asarray(values, dtype=float).reshape(-1)
    width = values.shape[-1] if values.ndim > 1 else min(8, flat.size) or 1
    for start in range(0, flat.size, width):
        lines.append(" ".join(_format_value(v) for v in flat[start:start + width]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_payload(path: Union[str, Path]) -> Tuple[Dict[str, str], np.ndarray]:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or text[0].strip() != VSGF_MAGIC:
        raise FormatError(f"missing {VSGF_MAGIC} magic line", str(path), 1)
    if len(text) < 2:
        raise FormatError("missing header line", str(path), 2)
    header: Dict[str, str] = {}
    for token in text[1].split():
        key, sep, value = token.partition("=")
        if not sep or not value:
            raise FormatError(f"malformed header token {token!r}", str(path), 2)
        header[key] = value
    for required in ("n", "K"):
        if required not in header:
            raise FormatError(f"header lacks {required}=", str(path), 2)
    numbers: List[float] = []
    for lineno, line in enumerate(text[2:], start=3):
        for token in line.split():
            try:
                value = float(token)
            except ValueError as exc:
                raise FormatError(f"not a number: {token!r}", str(path), lineno) from exc
            if not math.isfinite(value):
                raise FormatError(f"non-finite value {token!r}", str(path), lineno)
            numbers.append(value)
    return header, np.asarray(numbers, dtype=float)


def header_int(header: Dict[str, str], key: str, path: Union[str, Path]) -> int:
    try:
        return int(header[key])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"header field {key} must be an integer", str(path), 2) from exc


def write_gridfn(g: GridFunction, path: Union[str, Path]) -> None:
    write_payload(path, {"n": g.n, "K": g.level}, g.values)


def read_gridfn(path: Union[str, Path]) -> GridFunction:
    header, numbers = read_payload(path)
    if header.get("slab") == "1":
        raise FormatError("slab file passed where a grid function was expected", str(path), 2)
    n = header_int(header, "n", path)
    level = header_int(header, "K", path)
    expected = 2 ** (n * level)
    if numbers.size != expected:
        raise FormatError(f"expected {expected} values, found {numbers.size}", str(path))
    logger.debug("Read grid function n=%d K=%d from %s", n, level, path)
    return GridFunction(n, level, numbers)
