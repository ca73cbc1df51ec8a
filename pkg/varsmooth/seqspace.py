"""Weighted sequence spaces ``l_q(beta l_p(w))`` and their embedding criteria."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from varsmooth.errors import FormatError, InvalidInputError
from varsmooth.norms import lq_aggregate, weighted_lp
from varsmooth.weights import MultiSeq
from varsmooth.workers import parallel_map, spawn_generators

logger = logging.getLogger(__name__)

VSQS_MAGIC = "VSQS1"

Bundle = Sequence[np.ndarray]


@dataclass(frozen=True, eq=False)
class SeqSpace:
    """Level weights ``beta_j`` and inner weights ``w_{j,m}`` for ``j = 1..J``.

    ``weights[j - 1]`` is a flat array over the finite index set ``M_j``.
    """

    beta: np.ndarray
    weights: Tuple[np.ndarray, ...]
    p: float
    q: float

    def __post_init__(self) -> None:
        beta = np.array(self.beta, dtype=float).reshape(-1)
        weights = tuple(np.array(w, dtype=float).reshape(-1) for w in self.weights)
        if beta.size == 0 or beta.size != len(weights):
            raise InvalidInputError(f"{beta.size} level weights for {len(weights)} index sets")
        if not np.all(beta > 0) or any(w.size == 0 or not np.all(w > 0) for w in weights):
            raise InvalidInputError("sequence space weights must be positive")
        if not (self.p > 0 and self.q > 0):
            raise InvalidInputError("exponents p and q must be positive")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "weights", weights)

    @property
    def J(self) -> int:
        return self.beta.size

    @property
    def sizes(self) -> Tuple[int, ...]:
        return tuple(w.size for w in self.weights)

    def truncated(self, J: int) -> "SeqSpace":
        if not 1 <= J <= self.J:
            raise InvalidInputError(f"truncation {J} outside 1..{self.J}")
        return SeqSpace(self.beta[:J], self.weights[:J], self.p, self.q)


def _check_bundle(a: Bundle, sp: SeqSpace) -> List[np.ndarray]:
    if len(a) != sp.J:
        raise InvalidInputError(f"bundle has {len(a)} levels, space has {sp.J}")
    out = []
    for j, (level, w) in enumerate(zip(a, sp.weights), start=1):
        arr = np.asarray(level, dtype=float).reshape(-1)
        if arr.size != w.size:
            raise InvalidInputError(f"level {j} has {arr.size} entries, index set has {w.size}")
        out.append(arr)
    return out


def seq_norm(a: Bundle, sp: SeqSpace) -> float:
    """``|| ( beta_j || w_j a_j | l_p || )_j | l_q ||``."""

    levels = _check_bundle(a, sp)
    return lq_aggregate(
        (b * weighted_lp(w, level, sp.p) for b, w, level in zip(sp.beta, sp.weights, levels)), sp.q
    )


def _star(e2: float, e1: float) -> float:
    """``1/e* = max(0, 1/e2 - 1/e1)``."""

    inv = max(0.0, (0.0 if math.isinf(e2) else 1.0 / e2) - (0.0 if math.isinf(e1) else 1.0 / e1))
    return math.inf if inv == 0.0 else 1.0 / inv


def _check_pair(sp1: SeqSpace, sp2: SeqSpace) -> None:
    if sp1.sizes != sp2.sizes:
        raise InvalidInputError("embedding criteria need identical index sets")


def _quartiles(values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    size = max(1, values.size // 4)
    return values[:size], values[-size:]


@dataclass
class EmbeddingVerdict:
    """Finite-truncation reading of the embedding criteria.

    ``asymptotic_inferred`` marks verdicts read from trends over ``j`` rather than exact limits.
    """

    continuous: bool
    compact: bool
    value: float
    p_star: float
    q_star: float
    level_terms: List[float] = field(default_factory=list)
    asymptotic_inferred: bool = True

    def as_row(self) -> Dict[str, object]:
        return {
            "continuous": self.continuous,
            "compact": self.compact,
            "value": self.value,
            "p_star": self.p_star,
            "q_star": self.q_star,
        }


def level_ratio_terms(sp1: SeqSpace, sp2: SeqSpace) -> Tuple[np.ndarray, float, float]:
    """``beta2_j/beta1_j * ||w2_j / w1_j | l_{p*}||`` for every level, with ``p*`` and ``q*``."""

    _check_pair(sp1, sp2)
    p_star = _star(sp2.p, sp1.p)
    q_star = _star(sp2.q, sp1.q)
    terms = np.array(
        [
            b2 / b1 * weighted_lp(np.ones_like(w1), w2 / w1, p_star)
            for b1, b2, w1, w2 in zip(sp1.beta, sp2.beta, sp1.weights, sp2.weights)
        ]
    )
    return terms, p_star, q_star


def _weights_diverge(sp1: SeqSpace, sp2: SeqSpace) -> bool:
    """``w1/w2`` grows along the index order on every level."""

    for w1, w2 in zip(sp1.weights, sp2.weights):
        ratio = w1 / w2
        head, tail = _quartiles(ratio)
        if not tail.min() >= 2.0 * head.max():
            return False
    return True


def embedding_criterion(sp1: SeqSpace, sp2: SeqSpace, unbounded_index: bool = False) -> EmbeddingVerdict:
    """Continuity and compactness of ``sp1 -> sp2`` read off the truncation.

    A finite sum or supremum is accepted when the last quartile of the level terms does not
    outgrow the first; the zero limit needs the last quartile at most half the first with a
    nonincreasing trend. The index divergence condition only applies with ``unbounded_index``.
    """

    terms, p_star, q_star = level_ratio_terms(sp1, sp2)
    value = lq_aggregate(terms, q_star)
    head, tail = _quartiles(terms)
    if math.isinf(q_star):
        continuous = bool(tail.max() <= 2.0 * head.max())
        trend = np.diff(terms)
        vanishing = bool(tail.max() <= 0.5 * head.max() and np.all(trend <= 1e-12 * max(1.0, head.max())))
    else:
        powered = terms ** q_star
        continuous = bool(powered[-head.size:].sum() <= 0.5 * powered[: head.size].sum())
        vanishing = continuous
    compact = continuous and vanishing
    if compact and math.isinf(p_star) and unbounded_index:
        compact = _weights_diverge(sp1, sp2)
    verdict = EmbeddingVerdict(continuous, compact, value, p_star, q_star, [float(t) for t in terms])
    logger.debug("Embedding p*=%s q*=%s value=%.6g continuous=%s compact=%s", p_star, q_star, value, continuous, compact)
    return verdict


def _indicator(values: np.ndarray) -> np.ndarray:
    out = np.zeros_like(values)
    out[int(np.argmax(values))] = 1.0
    return out


def extremal_bundle(sp1: SeqSpace, sp2: SeqSpace) -> List[np.ndarray]:
    """Bundle attaining equality in both Hölder steps of the criterion bound."""

    terms, p_star, q_star = level_ratio_terms(sp1, sp2)
    inner_exp = 0.0 if math.isinf(sp1.p) else p_star / sp1.p
    outer_exp = 0.0 if math.isinf(sp1.q) else q_star / sp1.q
    scales = _indicator(terms) if math.isinf(q_star) else terms ** outer_exp
    bundle = []
    for scale, b1, w1, w2 in zip(scales, sp1.beta, sp1.weights, sp2.weights):
        x = w2 / w1
        y = _indicator(x) if math.isinf(p_star) else x ** inner_exp
        norm_y = weighted_lp(np.ones_like(y), y, sp1.p)
        bundle.append(scale / b1 * y / (w1 * norm_y) if norm_y > 0 else np.zeros_like(y))
    return bundle


def _ratio(a: Bundle, sp1: SeqSpace, sp2: SeqSpace) -> float:
    denominator = seq_norm(a, sp1)
    return seq_norm(a, sp2) / denominator if denominator > 0 else 0.0


def brute_force_operator_norm(sp1: SeqSpace, sp2: SeqSpace, trials: int = 200, seed: int = 0) -> float:
    """Largest ``||a|sp2|| / ||a|sp1||`` over single coordinates, the extremal bundle and random bundles."""

    _check_pair(sp1, sp2)
    best = max(
        float(np.max(b2 * w2 / (b1 * w1)))
        for b1, b2, w1, w2 in zip(sp1.beta, sp2.beta, sp1.weights, sp2.weights)
    )
    best = max(best, _ratio(extremal_bundle(sp1, sp2), sp1, sp2))

    def trial(rng: np.random.Generator) -> float:
        bundle = [rng.standard_normal(size) * (rng.random(size) < 0.5) for size in sp1.sizes]
        return _ratio(bundle, sp1, sp2)

    if trials > 0:
        best = max(best, max(parallel_map(trial, spawn_generators(seed, trials))))
    return best


def from_multiseq(ms: MultiSeq, q: float) -> SeqSpace:
    """Level ``k`` of ``ms`` becomes level ``j = k + 1`` with ``beta_j = 1``."""

    return SeqSpace(np.ones(ms.K + 1), tuple(level.reshape(-1) for level in ms.levels), ms.p, q)


def besov_embedding(
    ms1: MultiSeq, q1: float, ms2: MultiSeq, q2: float, unbounded_index: bool = False
) -> EmbeddingVerdict:
    """Embedding of the sequence-weighted Besov spaces through their coefficient spaces."""

    return embedding_criterion(from_multiseq(ms1, q1), from_multiseq(ms2, q2), unbounded_index)


def write_seqspace(sp: SeqSpace, path: Union[str, Path]) -> None:
    lines = [VSQS_MAGIC, f"{sp.J} {sp.p:.17g} {sp.q:.17g}"]
    lines.extend(f"{j} {b:.17g}" for j, b in enumerate(sp.beta, start=1))
    for j, w in enumerate(sp.weights, start=1):
        lines.extend(f"{j} {m} {value:.17g}" for m, value in enumerate(w))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_seqspace(path: Union[str, Path]) -> SeqSpace:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or text[0].strip() != VSQS_MAGIC:
        raise FormatError(f"missing {VSQS_MAGIC} magic line", str(path), 1)
    try:
        J_token, p_token, q_token = text[1].split()
        J, p, q = int(J_token), float(p_token), float(q_token)
    except (IndexError, ValueError) as exc:
        raise FormatError("header must read 'J p q'", str(path), 2) from exc
    beta: Dict[int, float] = {}
    entries: Dict[int, Dict[int, float]] = {}
    for lineno, line in enumerate(text[2:], start=3):
        fields = line.split()
        if not fields:
            continue
        if len(fields) not in (2, 3):
            raise FormatError(f"expected 2 or 3 fields, found {len(fields)}", str(path), lineno)
        try:
            j = int(fields[0])
            if len(fields) == 2:
                beta[j] = float(fields[1])
            else:
                entries.setdefault(j, {})[int(fields[1])] = float(fields[2])
        except ValueError as exc:
            raise FormatError(f"malformed line {line!r}", str(path), lineno) from exc
        if not 1 <= j <= J:
            raise FormatError(f"level {j} outside 1..{J}", str(path), lineno)
    if sorted(beta) != list(range(1, J + 1)):
        raise FormatError("every level needs exactly one beta line", str(path))
    weights = []
    for j in range(1, J + 1):
        level = entries.get(j, {})
        if sorted(level) != list(range(len(level))) or not level:
            raise FormatError(f"level {j} indices must run 0..|M_j|-1", str(path))
        weights.append(np.array([level[m] for m in range(len(level))]))
    return SeqSpace(np.array([beta[j] for j in range(1, J + 1)]), tuple(weights), p, q)
