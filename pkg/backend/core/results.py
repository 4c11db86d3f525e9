from dataclasses import dataclass
from enum import Enum


class Metric(str, Enum):
    ADAPTIVITY = "adaptivity"
    JS = "js"
    L2_CENTER = "l2_center"


@dataclass(frozen=True)
class SearchConfig:
    t1: float = 0.5
    t2: float = 0.5
    t_adaptivity: float = 0.5
    t_js: float = 0.1
    metric: Metric = Metric.ADAPTIVITY
    # None picks exact rescoring automatically for small candidate sets.
    exact_rescoring: bool | None = None
    pair_count: bool = False
    top: int | None = None

    def __post_init__(self):
        for name in ("t1", "t2", "t_adaptivity"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if self.t_js < 0:
            raise ValueError(f"t_js must be >= 0, got {self.t_js}")
        if self.top is not None and self.top < 1:
            raise ValueError("top must be >= 1")


@dataclass(frozen=True)
class FeatureMatch:
    query_feature_id: int
    model_feature_id: int
    estimated_jaccard: float


@dataclass(frozen=True)
class OverlapCandidate:
    model_id: str
    matched_feature_pairs: tuple[FeatureMatch, ...]
    overlap_ratio: float

    @property
    def pairing(self) -> tuple[tuple[int, int], ...]:
        return tuple(
            (m.query_feature_id, m.model_feature_id)
            for m in self.matched_feature_pairs
        )


@dataclass(frozen=True)
class SearchResult:
    """One ranked model.

    ``score`` is what the ranking uses: adaptivity, -JS or -L2. It equals
    ``exact_score`` when the candidate was rescored, otherwise the LSH
    estimate, which is always kept in ``estimated_score``.
    """

    model_id: str
    overlap_ratio: float
    score: float
    num_matches: int
    nt: int
    estimated_score: float
    exact_score: float | None = None


def rank_results(results: list[SearchResult]) -> list[SearchResult]:
    return sorted(results, key=lambda r: (-r.score, r.model_id))
