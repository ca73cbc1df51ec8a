"""Seeded test-function families over the unit box, addressed as ``smooth20``, ``spline50`` and so on."""

from __future__ import annotations

import logging
import re
from typing import Callable, Dict, List, Tuple

import numpy as np

from varsmooth.errors import InvalidInputError
from varsmooth.gridfn import GridFunction, mesh
from varsmooth.splines import SplineFn, index_count
from varsmooth.workers import spawn_generators

logger = logging.getLogger(__name__)

_NAME = re.compile(r"^(smooth|piecewise|bump|spline)(\d+)$")

Member = Callable[[np.random.Generator, int, int, int], GridFunction]


def parse_family(name: str) -> Tuple[str, int]:
    match = _NAME.match(name.strip())
    if not match:
        raise InvalidInputError(f"unknown family {name!r}; expected smooth<N>, piecewise<N>, bump<N> or spline<N>")
    size = int(match.group(2))
    if size < 1:
        raise InvalidInputError("a family needs at least one member")
    return match.group(1), size


def _smooth(rng: np.random.Generator, n: int, level: int, degree: int) -> GridFunction:
    coords = mesh(level, n)
    values = np.zeros(coords[0].shape)
    for _ in range(3):
        freq = rng.integers(1, 4, size=n)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        argument = sum(f * x for f, x in zip(freq, coords))
        values += rng.normal() * np.sin(np.pi * argument + phase)
    return GridFunction(n, level, values)


def _piecewise(rng: np.random.Generator, n: int, level: int, degree: int) -> GridFunction:
    smooth = _smooth(rng, n, level, degree).values
    coords = mesh(level, n)
    normal = rng.normal(size=n)
    offset = float(normal @ rng.uniform(0.25, 0.75, size=n))
    side = sum(a * x for a, x in zip(normal, coords)) > offset
    return GridFunction(n, level, smooth + rng.normal() * side)


def _bump(rng: np.random.Generator, n: int, level: int, degree: int) -> GridFunction:
    coords = mesh(level, n)
    center = rng.uniform(0.3, 0.7, size=n)
    radius = rng.uniform(0.15, 0.3)
    dist2 = sum((x - c) ** 2 for x, c in zip(coords, center)) / radius ** 2
    inside = dist2 < 1.0
    values = np.where(inside, np.exp(-1.0 / np.where(inside, 1.0 - dist2, 1.0)), 0.0)
    return GridFunction(n, level, rng.uniform(0.5, 2.0) * values)


def random_spline(rng: np.random.Generator, n: int, degree: int, level: int) -> SplineFn:
    return SplineFn(n, degree, level, rng.normal(size=(index_count(degree, level),) * n))


def _spline(rng: np.random.Generator, n: int, level: int, degree: int) -> GridFunction:
    spline_level = max(0, min(2, level - 3))
    return random_spline(rng, n, degree, spline_level).sample(level)


_MEMBERS: Dict[str, Member] = {
    "smooth": _smooth,
    "piecewise": _piecewise,
    "bump": _bump,
    "spline": _spline,
}


def family(name: str, n: int, level: int, seed: int = 0, degree: int = 2) -> List[GridFunction]:
    """Members of the named family; member ``i`` draws from the ``i``-th child of ``seed``.

    ``degree`` only affects the ``spline`` family.
    """

    kind, size = parse_family(name)
    member = _MEMBERS[kind]
    out = [member(rng, n, level, degree) for rng in spawn_generators(seed, size)]
    logger.debug("Built family %s n=%d level=%d seed=%d", name, n, level, seed)
    return out
