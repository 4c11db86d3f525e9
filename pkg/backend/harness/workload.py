"""Synthetic workloads: families of datasets drawn from shifted mixtures.

Every feature of family ``g`` follows ``(1 - shift) * base + shift * c_g`` over
equal-width bins on [0, 1], with ``c_g`` drawn from a Dirichlet. Datasets in a
family may add their own jitter. The "target accuracy" of a source model on a
target dataset is a fixed decreasing function of the exact JS divergence
between the two generating distributions.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from core.errors import InputError
from core.sketch import DatasetSketch
from dotenv import dotenv_values
from engine.metrics import LN2, pairwise_js
from engine.sketchcore import ingest_frame

from harness.evaluation import AccuracyRow, AccuracyTable

logger = logging.getLogger("model-scout.workload")

TRUTH_PROXY = "target_accuracy = 1 - JS(generating distributions) / ln 2"


@dataclass(frozen=True)
class SyntheticWorkloadSpec:
    num_families: int = 4
    datasets_per_family: int = 3
    rows_per_dataset: int = 1000
    num_features: int = 4
    shift: float = 0.8
    seed: int = 0
    bins: int = 32
    queries_per_family: int = 1
    jitter: float = 0.0
    concentration: float = 0.3

    def __post_init__(self):
        for name in (
            "num_families",
            "datasets_per_family",
            "rows_per_dataset",
            "num_features",
            "bins",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.queries_per_family < 0:
            raise ValueError("queries_per_family must be >= 0")
        if not 0.0 <= self.shift <= 1.0:
            raise ValueError("shift must lie in [0, 1]")
        if not 0.0 <= self.jitter <= 1.0:
            raise ValueError("jitter must lie in [0, 1]")
        if self.concentration <= 0:
            raise ValueError("concentration must be positive")


_SPEC_TYPES = {
    "num_families": int,
    "datasets_per_family": int,
    "rows_per_dataset": int,
    "num_features": int,
    "shift": float,
    "seed": int,
    "bins": int,
    "queries_per_family": int,
    "jitter": float,
    "concentration": float,
}


def load_workload_spec(path: str | Path, **overrides) -> SyntheticWorkloadSpec:
    """Read a ``key = value`` workload file; unknown keys are rejected."""
    if not Path(path).is_file():
        raise InputError(f"workload spec {path} does not exist")
    values = {}
    for key, raw in dotenv_values(path).items():
        name = key.strip().lower()
        if name not in _SPEC_TYPES:
            raise InputError(f"unknown workload setting '{key}'")
        try:
            values[name] = _SPEC_TYPES[name](raw)
        except (TypeError, ValueError) as e:
            raise InputError(f"bad value for '{key}': {raw!r}") from e
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return SyntheticWorkloadSpec(**values)
    except ValueError as e:
        raise InputError(str(e)) from e


@dataclass
class Workload:
    spec: SyntheticWorkloadSpec
    # dataset_id -> table of numeric columns f0..f{n-1} on [0, 1]
    tables: dict[str, pd.DataFrame]
    # dataset_id -> generating distribution, shape (features, bins)
    distributions: dict[str, np.ndarray]
    family_of: dict[str, int]
    source_ids: list[str]
    query_ids: list[str]
    truth: AccuracyTable
    source_accuracy: dict[str, float] = field(default_factory=dict)

    def model_id(self, dataset_id: str) -> str:
        return f"model-{dataset_id}"

    def reference(self) -> DatasetSketch:
        return reference_sketch(self.spec.num_features, self.spec.bins)

    def sketch(
        self, dataset_id: str, partition_size_m: int = 500, **options
    ) -> DatasetSketch:
        return ingest_frame(
            self.tables[dataset_id],
            partition_size_m=partition_size_m,
            bins_per_numeric_feature=self.spec.bins,
            dataset_id=dataset_id,
            reference=self.reference(),
            **options,
        )


def feature_names(num_features: int) -> list[str]:
    return [f"f{i}" for i in range(num_features)]


def reference_sketch(num_features: int, bins: int) -> DatasetSketch:
    """A two-row sketch whose numeric edges split [0, 1] into ``bins`` bins."""
    frame = pd.DataFrame({name: [0.0, 1.0] for name in feature_names(num_features)})
    return ingest_frame(
        frame,
        partition_size_m=2,
        bins_per_numeric_feature=bins,
        dataset_id="reference",
    )


def flatten_distribution(distribution: np.ndarray) -> np.ndarray:
    """Concatenate per-feature distributions, normalized by the grand total."""
    flat = distribution.reshape(-1)
    return flat / flat.sum()


def _sample_table(
    rng: np.random.Generator, distribution: np.ndarray, rows: int
) -> pd.DataFrame:
    num_features, bins = distribution.shape
    columns = {}
    for name, probabilities in zip(feature_names(num_features), distribution):
        chosen = rng.choice(bins, size=rows, p=probabilities)
        columns[name] = (chosen + rng.random(rows)) / bins
    return pd.DataFrame(columns)


def generate_workload(spec: SyntheticWorkloadSpec) -> Workload:
    rng = np.random.default_rng(spec.seed)
    shape = (spec.num_features, spec.bins)
    alpha = np.full(spec.bins, spec.concentration)
    base = rng.dirichlet(np.ones(spec.bins), size=spec.num_features)

    tables, distributions, family_of = {}, {}, {}
    source_ids, query_ids = [], []
    per_family = spec.datasets_per_family + spec.queries_per_family
    for g in range(spec.num_families):
        component = rng.dirichlet(alpha, size=spec.num_features)
        family = (1.0 - spec.shift) * base + spec.shift * component
        for i in range(per_family):
            noise = rng.dirichlet(np.ones(spec.bins), size=spec.num_features)
            distribution = (1.0 - spec.jitter) * family + spec.jitter * noise
            distribution /= distribution.sum(axis=1, keepdims=True)
            is_query = i >= spec.datasets_per_family
            dataset_id = f"q{g:03d}-{i:02d}" if is_query else f"d{g:03d}-{i:02d}"
            tables[dataset_id] = _sample_table(
                rng, distribution, spec.rows_per_dataset
            )
            distributions[dataset_id] = distribution.reshape(shape)
            family_of[dataset_id] = g
            (query_ids if is_query else source_ids).append(dataset_id)

    source_accuracy = {
        f"model-{d}": float(a)
        for d, a in zip(source_ids, rng.uniform(0.7, 0.95, len(source_ids)))
    }
    workload = Workload(
        spec=spec,
        tables=tables,
        distributions=distributions,
        family_of=family_of,
        source_ids=source_ids,
        query_ids=query_ids,
        truth=AccuracyTable(()),
        source_accuracy=source_accuracy,
    )
    workload.truth = truth_table(workload)
    logger.info(
        "Generated workload: %d source tables, %d queries",
        len(source_ids),
        len(query_ids),
    )
    return workload


def truth_table(workload: Workload) -> AccuracyTable:
    """Proxy target accuracies of every source model on every query dataset."""
    if not workload.query_ids:
        return AccuracyTable((), dict(workload.source_accuracy))
    sources = np.stack(
        [flatten_distribution(workload.distributions[d]) for d in workload.source_ids]
    )
    queries = np.stack(
        [flatten_distribution(workload.distributions[d]) for d in workload.query_ids]
    )
    js = pairwise_js(sources, queries)
    rows = tuple(
        AccuracyRow(
            source_model_id=workload.model_id(source),
            target_dataset_id=query,
            target_accuracy=float(np.clip(1.0 - js[i, j] / LN2, 0.0, 1.0)),
        )
        for i, source in enumerate(workload.source_ids)
        for j, query in enumerate(workload.query_ids)
    )
    return AccuracyTable(rows, dict(workload.source_accuracy))
