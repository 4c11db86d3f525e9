"""Two-stage model search.

Stage one finds models whose features overlap the query's (MinHash band
lookups). Stage two scores each candidate over the shared feature subspace by
adaptivity, JS divergence or distance between dataset centers, either from
JS-LSH / L2-LSH signatures computed at query time or exactly from sketches.
"""

import logging
from collections import defaultdict
from dataclasses import replace

import numpy as np
from core.errors import EmptyDistributionError, ParamsError
from core.hashing import JsLshParams
from core.results import (
    FeatureMatch,
    Metric,
    OverlapCandidate,
    SearchConfig,
    SearchResult,
    rank_results,
)
from core.sketch import DatasetSketch
from engine.lsh import (
    MAX_HELLINGER_DISTANCE,
    bands_collide,
    estimate_distance,
    estimate_jaccard,
    estimate_js,
    hash_matrix,
    jslsh_matrix,
    match_matrix,
    scaled_params,
)
from engine.metrics import adaptivity_matches, jaccard, pairwise_js, to_bits
from engine.registry import Registry, RegistryState, feature_signatures
from engine.sketchcore import (
    SharedProjection,
    expand_feature,
    normalize_rows,
    project_shared,
    row_weighted_center,
)

logger = logging.getLogger("model-scout.search")

RESCORING_MAX_CANDIDATES = 64

RegistryLike = Registry | RegistryState


def _check_query(query: DatasetSketch, state: RegistryState) -> None:
    expected = state.manifest.bins_per_numeric_feature
    if query.bins_per_numeric_feature != expected:
        raise ParamsError(
            f"query sketch uses {query.bins_per_numeric_feature} bins per numeric "
            f"feature, registry uses {expected}"
        )


def overlap_search(
    query: DatasetSketch, registry: RegistryLike, config: SearchConfig
) -> list[OverlapCandidate]:
    """Models sharing more than ``t1`` of the query's features.

    A (query feature, model feature) pair is a candidate when any MinHash band
    matches, and is kept when the fraction of equal MinHash slots reaches
    ``t2``. Query features are then matched one-to-one, greedily by
    descending estimated Jaccard.
    """
    state = registry.snapshot()
    _check_query(query, state)
    if not state.records:
        return []
    query_signatures = feature_signatures(query, state.manifest)

    looked_up: set[tuple[int, str, int]] = set()
    for qfid, matrix in query_signatures.items():
        for table, row in zip(state.tables, matrix):
            for model_id, mfid in table.lookup(row):
                looked_up.add((qfid, model_id, mfid))

    pairs: defaultdict[str, list[FeatureMatch]] = defaultdict(list)
    for qfid, model_id, mfid in looked_up:
        estimate = estimate_jaccard(
            query_signatures[qfid], state.signatures[model_id][mfid]
        )
        if estimate >= config.t2:
            pairs[model_id].append(FeatureMatch(qfid, mfid, estimate))

    num_query_features = len(query.descriptors)
    candidates = []
    for model_id, matches in pairs.items():
        matches.sort(
            key=lambda m: (
                -m.estimated_jaccard,
                m.query_feature_id,
                m.model_feature_id,
            )
        )
        used_query, used_model, chosen = set(), set(), []
        for match in matches:
            if match.query_feature_id in used_query:
                continue
            if match.model_feature_id in used_model:
                continue
            used_query.add(match.query_feature_id)
            used_model.add(match.model_feature_id)
            chosen.append(match)
        ratio = len(chosen) / num_query_features
        if ratio > config.t1:
            chosen.sort(key=lambda m: m.query_feature_id)
            candidates.append(OverlapCandidate(model_id, tuple(chosen), ratio))
    candidates.sort(key=lambda c: (-c.overlap_ratio, c.model_id))
    logger.debug(
        "Overlap search: %d pairs looked up, %d candidates",
        len(looked_up),
        len(candidates),
    )
    return candidates


def _whole(counts: np.ndarray) -> np.ndarray:
    return normalize_rows(counts.sum(axis=0, keepdims=True))


def lsh_partition_matches(
    projection: SharedProjection, params: JsLshParams, t_js: float
) -> np.ndarray:
    """(source, target) partition pairs whose JS-LSH signatures share a band."""
    params = scaled_params(params, t_js)
    source, target = (
        jslsh_matrix(normalize_rows(counts), params, projection.labels)
        for counts in (projection.source_counts, projection.target_counts)
    )
    return match_matrix(source, target)


def _score_adaptivity(
    projection: SharedProjection,
    candidate: OverlapCandidate,
    state: RegistryState,
    config: SearchConfig,
    rescore: bool,
) -> SearchResult:
    matched = lsh_partition_matches(
        projection, state.manifest.jslsh_params, config.t_js
    )
    nt = matched.shape[1]
    estimated = adaptivity_matches(matched, pair_count=config.pair_count)
    num_matches, exact = estimated, None
    if rescore:
        exact_matched = (
            pairwise_js(
                normalize_rows(projection.source_counts),
                normalize_rows(projection.target_counts),
            )
            <= config.t_js
        )
        num_matches = adaptivity_matches(exact_matched, pair_count=config.pair_count)
        exact = num_matches / nt
    return SearchResult(
        model_id=candidate.model_id,
        overlap_ratio=candidate.overlap_ratio,
        score=exact if rescore else estimated / nt,
        num_matches=num_matches,
        nt=nt,
        estimated_score=estimated / nt,
        exact_score=exact,
    )


def _score_js(
    projection: SharedProjection,
    candidate: OverlapCandidate,
    state: RegistryState,
    config: SearchConfig,
    rescore: bool,
) -> SearchResult:
    source = _whole(projection.source_counts)
    target = _whole(projection.target_counts)
    params = scaled_params(state.manifest.jslsh_params, config.t_js)
    source_hashes = jslsh_matrix(source, params, projection.labels)[0]
    target_hashes = jslsh_matrix(target, params, projection.labels)[0]
    matched = bands_collide(source_hashes, target_hashes)
    estimated = estimate_js(float(np.mean(source_hashes == target_hashes)), params.r)
    exact = None
    if rescore:
        exact = float(pairwise_js(source, target)[0, 0])
        matched = exact <= config.t_js
    return SearchResult(
        model_id=candidate.model_id,
        overlap_ratio=candidate.overlap_ratio,
        score=-exact if rescore else -estimated,
        num_matches=int(matched),
        nt=1,
        estimated_score=-estimated,
        exact_score=-exact if rescore else None,
    )


def _score_l2(
    projection: SharedProjection,
    candidate: OverlapCandidate,
    state: RegistryState,
    config: SearchConfig,
    rescore: bool,
) -> SearchResult:
    source = row_weighted_center(
        normalize_rows(projection.source_counts), projection.source_rows
    )
    target = row_weighted_center(
        normalize_rows(projection.target_counts), projection.target_rows
    )
    params = state.manifest.l2lsh_params
    source_hashes = hash_matrix(source, params, projection.labels)[0]
    target_hashes = hash_matrix(target, params, projection.labels)[0]
    estimated = estimate_distance(
        float(np.mean(source_hashes == target_hashes)),
        params.r,
        upper=MAX_HELLINGER_DISTANCE,
    )
    exact = float(np.linalg.norm(source - target)) if rescore else None
    return SearchResult(
        model_id=candidate.model_id,
        overlap_ratio=candidate.overlap_ratio,
        score=-exact if rescore else -estimated,
        num_matches=int(bands_collide(source_hashes, target_hashes)),
        nt=1,
        estimated_score=-estimated,
        exact_score=-exact if rescore else None,
    )


_SCORERS = {
    Metric.ADAPTIVITY: _score_adaptivity,
    Metric.JS: _score_js,
    Metric.L2_CENTER: _score_l2,
}


def should_rescore(
    config: SearchConfig,
    num_candidates: int,
    max_candidates: int = RESCORING_MAX_CANDIDATES,
) -> bool:
    if config.exact_rescoring is not None:
        return config.exact_rescoring
    return num_candidates <= max_candidates


def score_candidates(
    query: DatasetSketch,
    candidates: list[OverlapCandidate],
    registry: RegistryLike,
    config: SearchConfig,
    *,
    rescore: bool,
) -> list[SearchResult]:
    """Score every candidate with the configured metric, without thresholds.

    The query is the target: adaptivity counts matched query partitions.
    Candidates whose shared projection leaves a partition empty are skipped.
    """
    state = registry.snapshot()
    scorer = _SCORERS[Metric(config.metric)]
    results = []
    for candidate in candidates:
        source = state.sketch_for(candidate.model_id)
        try:
            projection = project_shared(source, query, candidate.pairing)
            result = scorer(projection, candidate, state, config, rescore)
        except EmptyDistributionError as e:
            logger.warning("Skipping candidate %s: %s", candidate.model_id, e)
            continue
        logger.debug(
            "Scored %s: score=%.6f estimated=%.6f",
            candidate.model_id,
            result.score,
            result.estimated_score,
        )
        results.append(result)
    return results


def _passes(result: SearchResult, config: SearchConfig, rescore: bool) -> bool:
    metric = Metric(config.metric)
    if metric is Metric.ADAPTIVITY:
        return result.score >= config.t_adaptivity
    if metric is Metric.JS:
        if rescore:
            return -result.score <= config.t_js
        return result.num_matches > 0
    # Center distance has no threshold; every candidate is ranked.
    return True


def _finish(
    results: list[SearchResult], config: SearchConfig, rescore: bool
) -> list[SearchResult]:
    ranked = rank_results([r for r in results if _passes(r, config, rescore)])
    if config.top is not None:
        ranked = ranked[: config.top]
    return ranked


def _metric_search(
    metric: Metric,
    query: DatasetSketch,
    candidates: list[OverlapCandidate],
    registry: RegistryLike,
    config: SearchConfig,
    max_candidates: int,
) -> list[SearchResult]:
    config = _with_metric(config, metric)
    rescore = should_rescore(config, len(candidates), max_candidates)
    results = score_candidates(query, candidates, registry, config, rescore=rescore)
    return _finish(results, config, rescore)


def _with_metric(config: SearchConfig, metric: Metric) -> SearchConfig:
    if Metric(config.metric) is metric:
        return config
    return replace(config, metric=metric)


def adaptivity_search(
    query: DatasetSketch,
    candidates: list[OverlapCandidate],
    registry: RegistryLike,
    config: SearchConfig,
    max_candidates: int = RESCORING_MAX_CANDIDATES,
) -> list[SearchResult]:
    return _metric_search(
        Metric.ADAPTIVITY, query, candidates, registry, config, max_candidates
    )


def js_search(
    query: DatasetSketch,
    candidates: list[OverlapCandidate],
    registry: RegistryLike,
    config: SearchConfig,
    max_candidates: int = RESCORING_MAX_CANDIDATES,
) -> list[SearchResult]:
    """Adaptivity with one partition per side: whole-dataset JS."""
    return _metric_search(
        Metric.JS, query, candidates, registry, config, max_candidates
    )


def l2_search(
    query: DatasetSketch,
    candidates: list[OverlapCandidate],
    registry: RegistryLike,
    config: SearchConfig,
    max_candidates: int = RESCORING_MAX_CANDIDATES,
) -> list[SearchResult]:
    return _metric_search(
        Metric.L2_CENTER, query, candidates, registry, config, max_candidates
    )


def search(
    query: DatasetSketch,
    registry: RegistryLike,
    config: SearchConfig,
    max_candidates: int = RESCORING_MAX_CANDIDATES,
) -> list[SearchResult]:
    """Overlap search followed by the configured metric's search."""
    state = registry.snapshot()
    candidates = overlap_search(query, state, config)
    metric = Metric(config.metric)
    results = _metric_search(metric, query, candidates, state, config, max_candidates)
    logger.info(
        "Search by %s: %d candidates, %d results",
        metric.value,
        len(candidates),
        len(results),
    )
    return results


def score_unit(metric: Metric, score: float, bits: bool) -> float:
    """Convert a JS score to bits for reporting; other metrics pass through."""
    if bits and Metric(metric) is Metric.JS:
        return to_bits(score)
    return score


def shared_feature_candidates(
    query: DatasetSketch, registry: RegistryLike
) -> list[OverlapCandidate]:
    """Every registered model paired with the query on identically named features.

    Bypasses the MinHash stage; evaluation uses it to score all models.
    """
    state = registry.snapshot()
    _check_query(query, state)
    query_whole = query.whole
    candidates = []
    for record in state.list_models():
        sketch = state.sketches[record.dataset_id]
        whole = sketch.whole
        matches = []
        for descriptor in query.descriptors:
            other = sketch.descriptor(descriptor.feature_id)
            if other is None or other.kind is not descriptor.kind:
                continue
            similarity = jaccard(
                expand_feature(query_whole.feature(descriptor.feature_id), descriptor),
                expand_feature(whole.feature(other.feature_id), other),
            )
            matches.append(
                FeatureMatch(descriptor.feature_id, other.feature_id, similarity.value)
            )
        if matches:
            ratio = len(matches) / len(query.descriptors)
            candidates.append(OverlapCandidate(record.model_id, tuple(matches), ratio))
    return candidates


def result_row(result: SearchResult, metric: Metric, bits: bool = False) -> dict:
    """Plain report row of one result; the CLI and the service both emit these."""
    exact = result.exact_score
    return {
        "model_id": result.model_id,
        "overlap_ratio": result.overlap_ratio,
        "score": score_unit(metric, result.score, bits),
        "estimated_score": score_unit(metric, result.estimated_score, bits),
        "exact_score": None if exact is None else score_unit(metric, exact, bits),
        "num_matches": result.num_matches,
        "nt": result.nt,
    }


def score_label(metric: Metric, bits: bool = False) -> str:
    metric = Metric(metric)
    if metric is Metric.JS:
        return "bits" if bits else "nats"
    return "fraction" if metric is Metric.ADAPTIVITY else "distance"
