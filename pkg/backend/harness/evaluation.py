"""How well each metric predicts the accuracy of a source model on a target.

Per query, the scores a metric gives the registered models are correlated
(Pearson) with the true target accuracies, and the metric's top pick is
checked against the true top-1 and top-2 models.
"""

import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd
from core.errors import DataError, DegenerateInputError
from core.results import Metric, SearchConfig
from core.sketch import DatasetSketch
from engine.search import RegistryLike, score_candidates, shared_feature_candidates
from scipy.stats import pearsonr

logger = logging.getLogger("model-scout.evaluation")

SOURCE_ACCURACY = "source_accuracy"
REPORT_COLUMNS = ["query_id", "metric", "n_models", "pearson", "top1_hit", "top2_hit"]
TRUTH_COLUMNS = ["source_model_id", "target_dataset_id", "target_accuracy"]


@dataclass(frozen=True)
class AccuracyRow:
    source_model_id: str
    target_dataset_id: str
    target_accuracy: float

    def __post_init__(self):
        if not 0.0 <= self.target_accuracy <= 1.0:
            raise ValueError(
                f"target accuracy of ({self.source_model_id}, "
                f"{self.target_dataset_id}) must lie in [0, 1]"
            )


@dataclass(frozen=True)
class AccuracyTable:
    rows: tuple[AccuracyRow, ...]
    source_accuracy: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        seen = set()
        for row in self.rows:
            key = (row.source_model_id, row.target_dataset_id)
            if key in seen:
                raise DataError(f"duplicate accuracy row for {key}")
            seen.add(key)
        for model_id, accuracy in self.source_accuracy.items():
            if not 0.0 <= accuracy <= 1.0:
                raise DataError(f"source accuracy of {model_id} must lie in [0, 1]")

    @property
    def targets(self) -> list[str]:
        return sorted({row.target_dataset_id for row in self.rows})

    def for_target(self, dataset_id: str) -> dict[str, float]:
        return {
            row.source_model_id: row.target_accuracy
            for row in self.rows
            if row.target_dataset_id == dataset_id
        }

    @classmethod
    def read_csv(cls, path: str | Path) -> "AccuracyTable":
        try:
            frame = pd.read_csv(path, skipinitialspace=True)
        except (pd.errors.ParserError, pd.errors.EmptyDataError, OSError) as e:
            raise DataError(f"cannot read accuracy table {path}: {e}") from e
        frame.columns = [str(c).strip() for c in frame.columns]
        missing = [c for c in TRUTH_COLUMNS if c not in frame.columns]
        if missing:
            raise DataError(f"accuracy table {path} lacks columns {missing}")
        try:
            rows = tuple(
                AccuracyRow(str(s), str(t), float(a))
                for s, t, a in frame[TRUTH_COLUMNS].itertuples(index=False)
            )
        except ValueError as e:
            raise DataError(f"accuracy table {path}: {e}") from e
        return cls(rows)

    def to_csv(self, path: str | Path) -> None:
        frame = pd.DataFrame(
            [
                (r.source_model_id, r.target_dataset_id, r.target_accuracy)
                for r in self.rows
            ],
            columns=TRUTH_COLUMNS,
        )
        frame.to_csv(path, index=False)


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError("pearson needs two sequences of equal length")
    if x.size < 2:
        raise DegenerateInputError("pearson needs at least two points")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise DegenerateInputError("pearson is undefined for zero variance")
    return float(pearsonr(x, y)[0])


def _kth_accuracy(accuracies: Mapping[str, float], k: int) -> float:
    ordered = sorted(accuracies.values(), reverse=True)
    return ordered[min(k, len(ordered)) - 1]


def topk_hit(
    chosen: str | None, accuracies: Mapping[str, float], k: int, query_id: str = ""
) -> bool:
    """Whether ``chosen`` is among the true top-k; ties with the k-th count."""
    if chosen is None:
        return False
    if chosen not in accuracies:
        raise DataError(f"no target accuracy for ({chosen}, {query_id})")
    return accuracies[chosen] >= _kth_accuracy(accuracies, k)


def topk_error(
    rankings: Mapping[str, Sequence[str]], truth: AccuracyTable, k: int
) -> float:
    """Fraction of queries whose first-ranked model is not in the true top-k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not rankings:
        raise DataError("no rankings to evaluate")
    wrong = 0
    for query_id, ranking in rankings.items():
        accuracies = truth.for_target(query_id)
        if not accuracies:
            raise DataError(f"no target accuracies for query {query_id}")
        chosen = ranking[0] if ranking else None
        if not topk_hit(chosen, accuracies, k, query_id):
            wrong += 1
    return wrong / len(rankings)


@dataclass(frozen=True)
class EvalRow:
    query_id: str
    metric: str
    n_models: int
    pearson: float
    top1_hit: bool
    top2_hit: bool


@dataclass(frozen=True)
class MetricSummary:
    metric: str
    mean_pearson: float
    top1_error: float
    top2_error: float


@dataclass
class EvalReport:
    rows: list[EvalRow]
    summary: list[MetricSummary]

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame([vars(r) for r in self.rows], columns=REPORT_COLUMNS)

    def summary_frame(self) -> pd.DataFrame:
        return pd.DataFrame([vars(s) for s in self.summary])

    def write_csv(self, path: str | Path) -> None:
        self.frame().to_csv(path, index=False)


def metric_row(
    query_id: str,
    metric: str,
    values: Mapping[str, float],
    truth: AccuracyTable,
    higher_is_better: bool = True,
) -> tuple[EvalRow, list[str]]:
    """Evaluate one metric's raw values for one query.

    Returns the report row and the ranking the metric implies.
    """
    accuracies = truth.for_target(query_id)
    missing = sorted(m for m in values if m not in accuracies)
    if missing:
        raise DataError(f"no target accuracy for ({missing[0]}, {query_id})")
    sign = -1.0 if higher_is_better else 1.0
    ranking = sorted(values, key=lambda m: (sign * values[m], m))
    models = sorted(values)
    try:
        correlation = pearson(
            [values[m] for m in models], [accuracies[m] for m in models]
        )
    except DegenerateInputError:
        logger.warning("Pearson undefined for %s / %s", query_id, metric)
        correlation = math.nan
    chosen = ranking[0] if ranking else None
    row = EvalRow(
        query_id=query_id,
        metric=metric,
        n_models=len(values),
        pearson=correlation,
        top1_hit=topk_hit(chosen, accuracies, 1, query_id),
        top2_hit=topk_hit(chosen, accuracies, 2, query_id),
    )
    return row, ranking


def compare_metrics(
    registry: RegistryLike,
    queries: Mapping[str, DatasetSketch],
    truth: AccuracyTable,
    config: SearchConfig | None = None,
    *,
    rescore: bool = True,
) -> EvalReport:
    """Score every model sharing features with each query by every metric.

    Values keep their sign: adaptivity and source accuracy grow with fitness,
    JS and L2 shrink.
    """
    config = config or SearchConfig()
    state = registry.snapshot()
    source_accuracy = {
        r.model_id: r.source_accuracy
        for r in state.list_models()
        if r.source_accuracy is not None
    }
    source_accuracy.update(truth.source_accuracy)

    rows: list[EvalRow] = []
    rankings: dict[str, dict[str, list[str]]] = {}
    for query_id in sorted(queries):
        query = queries[query_id]
        candidates = shared_feature_candidates(query, state)
        for metric in Metric:
            results = score_candidates(
                query,
                candidates,
                state,
                replace(config, metric=metric),
                rescore=rescore,
            )
            if metric is Metric.ADAPTIVITY:
                values = {r.model_id: r.score for r in results}
            else:
                values = {r.model_id: -r.score for r in results}
            row, ranking = metric_row(
                query_id,
                metric.value,
                values,
                truth,
                higher_is_better=metric is Metric.ADAPTIVITY,
            )
            rows.append(row)
            rankings.setdefault(metric.value, {})[query_id] = ranking
        scored = {c.model_id for c in candidates}
        baseline = {m: a for m, a in source_accuracy.items() if m in scored}
        if baseline:
            row, ranking = metric_row(query_id, SOURCE_ACCURACY, baseline, truth)
            rows.append(row)
            rankings.setdefault(SOURCE_ACCURACY, {})[query_id] = ranking

    summary = []
    for metric, per_query in rankings.items():
        correlations = [
            r.pearson for r in rows if r.metric == metric and not math.isnan(r.pearson)
        ]
        summary.append(
            MetricSummary(
                metric=metric,
                mean_pearson=float(np.mean(correlations)) if correlations else math.nan,
                top1_error=topk_error(per_query, truth, 1),
                top2_error=topk_error(per_query, truth, 2),
            )
        )
    logger.info("Evaluated %d queries over %d metrics", len(queries), len(summary))
    return EvalReport(rows=rows, summary=summary)
