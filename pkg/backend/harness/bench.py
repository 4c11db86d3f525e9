"""Benchmarks over synthetic workloads.

Every run yields plain dict records; ``write_records`` emits them as JSON lines
after a versioned header line.
"""

import json
import logging
import time
from collections.abc import Iterable, Sequence
from dataclasses import replace
from pathlib import Path
from typing import Any

import numpy as np
from core.errors import InputError
from core.hashing import JsLshParams
from core.record import ModelRecord, RegistryManifest
from core.results import Metric, SearchConfig
from engine.lsh import JsLshIndex
from engine.metrics import LN2, hellinger_sq, js_divergence, pairwise_js
from engine.registry import Registry
from engine.search import score_candidates, shared_feature_candidates
from engine.sketchcore import flatten

from harness.workload import SyntheticWorkloadSpec, Workload, generate_workload

logger = logging.getLogger("model-scout.bench")

BENCH_FORMAT = "model-scout/bench"
BENCH_VERSION = 1
SWEEP_PARAMETERS = ("r", "K", "L", "bins")
DEFAULT_SWEEPS = {
    "r": (0.5, 1.0, 1.5, 2.0, 3.0),
    "K": (4, 6, 8, 10, 12),
    "L": (5, 10, 20, 30, 40),
    "bins": (8, 16, 32, 64),
}
SPEEDUP_SPEC = SyntheticWorkloadSpec(
    num_families=54, datasets_per_family=3, queries_per_family=0
)
LATENCY_PARTITION_SIZES = (300, 500, 800)


def header(mode: str, **fields: Any) -> dict[str, Any]:
    return {"format": BENCH_FORMAT, "version": BENCH_VERSION, "mode": mode, **fields}


def write_records(
    path: str | Path | None, head: dict[str, Any], records: Iterable[dict[str, Any]]
) -> list[str]:
    """JSON lines, header first; written to ``path`` when given."""
    lines = [json.dumps(head, sort_keys=True)]
    lines.extend(json.dumps(r, sort_keys=True) for r in records)
    if path is not None:
        Path(path).write_text("\n".join(lines) + "\n")
    return lines


def with_seed(params: JsLshParams, seed: int | None) -> JsLshParams:
    return params if seed is None else replace(params, master_seed=seed)


def workload_vectors(
    workload: Workload,
) -> tuple[list[str], tuple[str, ...], np.ndarray]:
    """Whole-dataset distributions of every table over one label space."""
    ids = sorted(workload.tables)
    labels: tuple[str, ...] = ()
    rows = []
    for dataset_id in ids:
        sketch = workload.sketch(dataset_id)
        vector = flatten(sketch.whole, sketch.feature_ids, sketch)
        if labels and vector.labels != labels:
            raise InputError(f"table {dataset_id} is binned differently")
        labels = vector.labels
        rows.append(vector.entries)
    return ids, labels, np.stack(rows)


def exact_neighbors(vectors: np.ndarray, t_js: float) -> set[tuple[int, int]]:
    js = pairwise_js(vectors, vectors)
    i, j = np.nonzero(np.triu(js <= t_js, k=1))
    return set(zip(i.tolist(), j.tolist()))


def brute_force_neighbors(vectors: np.ndarray, t_js: float) -> set[tuple[int, int]]:
    """One exact JS per pair of tables."""
    found = set()
    for i in range(len(vectors)):
        for j in range(i + 1, len(vectors)):
            if js_divergence(vectors[i], vectors[j]).value <= t_js:
                found.add((i, j))
    return found


def lsh_neighbors(
    vectors: np.ndarray, labels: Sequence[str], params: JsLshParams, t_js: float
) -> set[tuple[int, int]]:
    index = JsLshIndex(params, labels, t_js)
    index.add_many(list(range(len(vectors))), vectors)
    found = set()
    for j, vector in enumerate(vectors):
        found.update((i, j) for i in index.query(vector) if i < j)
    return found


def precision_recall(
    found: set[tuple[int, int]], truth: set[tuple[int, int]]
) -> tuple[float, float]:
    hits = len(found & truth)
    precision = hits / len(found) if found else 1.0
    recall = hits / len(truth) if truth else 1.0
    return precision, recall


def _timed(fn, *args):
    start = time.perf_counter()
    result = fn(*args)
    return result, time.perf_counter() - start


def sweep(
    parameter: str,
    values: Sequence[float] | None = None,
    spec: SyntheticWorkloadSpec | None = None,
    params: JsLshParams | None = None,
    t_js: float = 0.1,
) -> list[dict[str, Any]]:
    """Precision, recall and latency of JS-LSH neighbour search per value."""
    if parameter not in SWEEP_PARAMETERS:
        raise InputError(f"cannot sweep '{parameter}'; choose from {SWEEP_PARAMETERS}")
    spec = spec or SyntheticWorkloadSpec()
    params = params or JsLshParams()
    values = values or DEFAULT_SWEEPS[parameter]

    cached = None
    records = []
    for value in values:
        run_params, run_spec = params, spec
        if parameter == "r":
            run_params = params.with_width(float(value))
        elif parameter == "K":
            run_params = replace(params, k_per_band=int(value))
        elif parameter == "L":
            run_params = replace(params, num_bands=int(value))
        else:
            run_spec = replace(spec, bins=int(value))
        if parameter == "bins" or cached is None:
            _, labels, vectors = workload_vectors(generate_workload(run_spec))
            truth = exact_neighbors(vectors, t_js)
            cached = labels, vectors, truth
        labels, vectors, truth = cached
        found, seconds = _timed(lsh_neighbors, vectors, labels, run_params, t_js)
        precision, recall = precision_recall(found, truth)
        records.append(
            {
                "parameter": parameter,
                "value": value,
                "precision": precision,
                "recall": recall,
                "seconds": seconds,
                "true_pairs": len(truth),
                "reported_pairs": len(found),
            }
        )
        logger.info(
            "Sweep %s=%s: precision %.3f recall %.3f",
            parameter,
            value,
            precision,
            recall,
        )
    return records


def speedup(
    spec: SyntheticWorkloadSpec | None = None,
    params: JsLshParams | None = None,
    t_js: float = 0.1,
    repeats: int = 3,
) -> dict[str, Any]:
    """LSH neighbour search against exact all-pairs JS, best of ``repeats``.

    The exact side is timed twice: one JS call per pair, and the vectorized
    pairwise matrix. Precision and recall are measured against the latter.
    """
    spec = spec or SPEEDUP_SPEC
    params = params or JsLshParams()
    _, labels, vectors = workload_vectors(generate_workload(spec))
    brute_times, vectorized_times, lsh_times = [], [], []
    for _ in range(max(repeats, 1)):
        _, seconds = _timed(brute_force_neighbors, vectors, t_js)
        brute_times.append(seconds)
        truth, seconds = _timed(exact_neighbors, vectors, t_js)
        vectorized_times.append(seconds)
        found, seconds = _timed(lsh_neighbors, vectors, labels, params, t_js)
        lsh_times.append(seconds)
    precision, recall = precision_recall(found, truth)
    brute, vectorized, lsh = min(brute_times), min(vectorized_times), min(lsh_times)
    record = {
        "tables": len(vectors),
        "brute_force_seconds": brute,
        "vectorized_seconds": vectorized,
        "lsh_seconds": lsh,
        "speedup": brute / lsh if lsh > 0 else float("inf"),
        "speedup_vs_vectorized": vectorized / lsh if lsh > 0 else float("inf"),
        "precision": precision,
        "recall": recall,
    }
    logger.info(
        "Speedup over %d tables: %.2fx per pair, %.2fx vectorized",
        len(vectors),
        record["speedup"],
        record["speedup_vs_vectorized"],
    )
    return record


def _registry_at(workload: Workload, partition_size_m: int) -> Registry:
    registry = Registry(
        RegistryManifest(bins_per_numeric_feature=workload.spec.bins)
    )
    for dataset_id in workload.source_ids:
        registry.register_model(
            ModelRecord(model_id=workload.model_id(dataset_id), dataset_id=dataset_id),
            workload.sketch(dataset_id, partition_size_m),
        )
    return registry


def latency(
    spec: SyntheticWorkloadSpec | None = None,
    partition_sizes: Sequence[int] = LATENCY_PARTITION_SIZES,
    config: SearchConfig | None = None,
) -> list[dict[str, Any]]:
    """Per-query LSH scoring time of adaptivity against single-shot JS."""
    spec = spec or SyntheticWorkloadSpec()
    config = config or SearchConfig()
    workload = generate_workload(spec)
    if not workload.query_ids:
        raise InputError("latency needs a workload with queries")
    records = []
    for m in partition_sizes:
        registry = _registry_at(workload, m)
        timings = {Metric.ADAPTIVITY: 0.0, Metric.JS: 0.0}
        for query_id in workload.query_ids:
            query = workload.sketch(query_id, m)
            candidates = shared_feature_candidates(query, registry)
            for metric in timings:
                _, seconds = _timed(
                    lambda: score_candidates(
                        query,
                        candidates,
                        registry,
                        replace(config, metric=metric),
                        rescore=False,
                    )
                )
                timings[metric] += seconds
        queries = len(workload.query_ids)
        adaptivity = timings[Metric.ADAPTIVITY] / queries
        js = timings[Metric.JS] / queries
        records.append(
            {
                "partition_size": m,
                "adaptivity_seconds": adaptivity,
                "js_seconds": js,
                "overhead": adaptivity / js if js > 0 else float("inf"),
            }
        )
        logger.info("Partition size %d: adaptivity overhead %.2fx", m, adaptivity / js)
    return records


def hellinger_js_band(
    spec: SyntheticWorkloadSpec | None = None,
) -> dict[str, Any]:
    """Range of JS / squared Hellinger over every pair of workload tables.

    In nats the ratio stays within [ln 2, 1].
    """
    _, _, vectors = workload_vectors(generate_workload(spec or SyntheticWorkloadSpec()))
    ratios = []
    for i in range(len(vectors)):
        for j in range(i + 1, len(vectors)):
            h2 = hellinger_sq(vectors[i], vectors[j]).value
            if h2 > 0:
                ratios.append(js_divergence(vectors[i], vectors[j]).value / h2)
    if not ratios:
        raise InputError("no distinct pairs to compare")
    return {
        "pairs": len(ratios),
        "min_ratio": float(np.min(ratios)),
        "max_ratio": float(np.max(ratios)),
        "mean_ratio": float(np.mean(ratios)),
        "lower_bound": LN2,
        "upper_bound": 1.0,
    }
