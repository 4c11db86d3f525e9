"""Exact similarity measures over sketches.

These are the brute-force oracles the LSH paths are checked against, and the
scores used whenever a search rescores its candidates exactly. All
divergences are in nats.
"""

import logging
import math
from collections.abc import Iterable
from dataclasses import dataclass
from enum import Enum

import numpy as np
from core.errors import DimensionError
from core.sketch import DatasetSketch, ProbabilityVector
from engine.sketchcore import (
    SharedFeature,
    normalize_rows,
    project_shared,
    row_weighted_center,
)
from scipy.special import rel_entr

logger = logging.getLogger("model-scout.metrics")

LN2 = math.log(2.0)
KL_SMOOTHING_EPSILON = 1e-9

# Rows per block when building pairwise JS matrices.
_PAIRWISE_CHUNK = 64


class MetricKind(str, Enum):
    KL = "kl"
    JS = "js"
    HELLINGER_SQ = "hellinger_sq"
    JACCARD = "jaccard"
    L2_CENTER = "l2_center"
    ADAPTIVITY = "adaptivity"


@dataclass(frozen=True)
class MetricValue:
    value: float
    kind: MetricKind
    # Set when the value is a convention rather than a measurement
    # (infinite KL, Jaccard of two empty sets).
    flagged: bool = False

    def __post_init__(self):
        if math.isnan(self.value) or self.value < 0:
            raise ValueError(f"{self.kind.value} must be a non-negative number")
        if math.isinf(self.value) and not self.flagged:
            raise ValueError(f"unflagged infinite {self.kind.value}")

    def __float__(self) -> float:
        return self.value


def to_bits(nats: float) -> float:
    return nats / LN2


def _entries(vector: ProbabilityVector | np.ndarray) -> np.ndarray:
    if isinstance(vector, ProbabilityVector):
        return vector.entries
    return np.asarray(vector, dtype=np.float64)


def _pair(P, Q) -> tuple[np.ndarray, np.ndarray]:
    p, q = _entries(P), _entries(Q)
    if p.shape != q.shape:
        raise DimensionError(f"dimension mismatch: {p.shape[0]} vs {q.shape[0]}")
    return p, q


def kl_divergence(
    P: ProbabilityVector, Q: ProbabilityVector, *, smoothing: bool = False
) -> MetricValue:
    """KL(P || Q) in nats.

    A bin with mass under P but none under Q yields a flagged infinity, unless
    ``smoothing`` adds a tiny epsilon to both sides and renormalizes.
    """
    p, q = _pair(P, Q)
    if smoothing:
        p = (p + KL_SMOOTHING_EPSILON) / (p + KL_SMOOTHING_EPSILON).sum()
        q = (q + KL_SMOOTHING_EPSILON) / (q + KL_SMOOTHING_EPSILON).sum()
    value = float(rel_entr(p, q).sum())
    if math.isinf(value):
        logger.warning("KL divergence is infinite: Q has zero mass where P has mass")
        return MetricValue(math.inf, MetricKind.KL, flagged=True)
    return MetricValue(max(value, 0.0), MetricKind.KL)


def _js(p: np.ndarray, q: np.ndarray) -> float:
    m = (p + q) / 2.0
    value = 0.5 * rel_entr(p, m).sum() + 0.5 * rel_entr(q, m).sum()
    return min(max(float(value), 0.0), LN2)


def js_divergence(P: ProbabilityVector, Q: ProbabilityVector) -> MetricValue:
    p, q = _pair(P, Q)
    return MetricValue(_js(p, q), MetricKind.JS)


def hellinger_sq(P: ProbabilityVector, Q: ProbabilityVector) -> MetricValue:
    p, q = _pair(P, Q)
    value = 1.0 - float(np.sqrt(p * q).sum())
    return MetricValue(min(max(value, 0.0), 1.0), MetricKind.HELLINGER_SQ)


def jaccard(a: Iterable[str], b: Iterable[str]) -> MetricValue:
    """Jaccard similarity of the distinct tokens; multiplicities are ignored."""
    sa, sb = set(a), set(b)
    union = sa | sb
    if not union:
        logger.warning("Jaccard of two empty token sets taken as 0")
        return MetricValue(0.0, MetricKind.JACCARD, flagged=True)
    return MetricValue(len(sa & sb) / len(union), MetricKind.JACCARD)


def pairwise_js(source: np.ndarray, target: np.ndarray) -> np.ndarray:
    """JS divergence of every source row against every target row.

    Returns an array of shape (len(source), len(target)).
    """
    if source.shape[1] != target.shape[1]:
        raise DimensionError(
            f"dimension mismatch: {source.shape[1]} vs {target.shape[1]}"
        )
    out = np.empty((source.shape[0], target.shape[0]), dtype=np.float64)
    t = target[None, :, :]
    for start in range(0, source.shape[0], _PAIRWISE_CHUNK):
        s = source[start : start + _PAIRWISE_CHUNK, None, :]
        m = (s + t) / 2.0
        block = 0.5 * rel_entr(s, m).sum(axis=2) + 0.5 * rel_entr(t, m).sum(axis=2)
        out[start : start + _PAIRWISE_CHUNK] = block
    return np.clip(out, 0.0, LN2)


def adaptivity_matches(matched: np.ndarray, *, pair_count: bool = False) -> int:
    """Matches in a (source, target) boolean partition matrix.

    Counts the distinct target partitions with a match, or every matching
    pair when ``pair_count`` is set.
    """
    if pair_count:
        return int(matched.sum())
    return int(matched.any(axis=0).sum())


def exact_adaptivity(
    source: DatasetSketch,
    target: DatasetSketch,
    shared: Iterable[SharedFeature],
    t: float,
    *,
    pair_count: bool = False,
) -> MetricValue:
    """Fraction of target partitions within JS ``t`` of some source partition."""
    if t < 0:
        raise ValueError("JS threshold must be >= 0")
    projection = project_shared(source, target, shared)
    matched = (
        pairwise_js(
            normalize_rows(projection.source_counts),
            normalize_rows(projection.target_counts),
        )
        <= t
    )
    nt = matched.shape[1]
    value = adaptivity_matches(matched, pair_count=pair_count) / nt
    return MetricValue(value, MetricKind.ADAPTIVITY)


def dataset_js(
    source: DatasetSketch, target: DatasetSketch, shared: Iterable[SharedFeature]
) -> MetricValue:
    """JS divergence between the two whole datasets over the shared features."""
    projection = project_shared(source, target, shared)
    p = normalize_rows(projection.source_counts.sum(axis=0, keepdims=True))[0]
    q = normalize_rows(projection.target_counts.sum(axis=0, keepdims=True))[0]
    return MetricValue(_js(p, q), MetricKind.JS)


def l2_center_distance(
    source: DatasetSketch, target: DatasetSketch, shared: Iterable[SharedFeature]
) -> MetricValue:
    projection = project_shared(source, target, shared)
    source_center = row_weighted_center(
        normalize_rows(projection.source_counts), projection.source_rows
    )
    target_center = row_weighted_center(
        normalize_rows(projection.target_counts), projection.target_rows
    )
    value = float(np.linalg.norm(source_center - target_center))
    return MetricValue(value, MetricKind.L2_CENTER)
