import json
from dataclasses import replace

import pytest
from core.errors import InputError
from engine.metrics import LN2

from harness.bench import (
    BENCH_FORMAT,
    SPEEDUP_SPEC,
    brute_force_neighbors,
    exact_neighbors,
    hellinger_js_band,
    header,
    latency,
    precision_recall,
    speedup,
    sweep,
    workload_vectors,
    write_records,
)
from harness.workload import SyntheticWorkloadSpec
from tests.conftest import SMALL_SPEC

SWEEP_SPEC = SyntheticWorkloadSpec(rows_per_dataset=500)


def test_records_are_json_lines(tmp_path):
    head = header("sweep", parameter="r")
    path = tmp_path / "bench.jsonl"
    lines = write_records(path, head, [{"value": 1.5, "recall": 1.0}])
    assert path.read_text().splitlines() == lines
    first = json.loads(lines[0])
    assert first["format"] == BENCH_FORMAT
    assert first["mode"] == "sweep"
    assert json.loads(lines[1]) == {"value": 1.5, "recall": 1.0}


def test_precision_recall():
    truth = {(0, 1), (2, 3)}
    assert precision_recall({(0, 1), (1, 2)}, truth) == (0.5, 0.5)
    assert precision_recall(set(), truth) == (1.0, 0.0)
    assert precision_recall(set(), set()) == (1.0, 1.0)


def test_brute_force_matches_exact_pairs(workload):
    ids, labels, vectors = workload_vectors(workload)
    assert len(ids) == len(vectors) == 9
    assert len(labels) == vectors.shape[1]
    assert brute_force_neighbors(vectors, 0.1) == exact_neighbors(vectors, 0.1)
    # Sources and query of one family are all mutual neighbours.
    assert len(exact_neighbors(vectors, 0.1)) >= 3 * 3


def test_sweep_width():
    records = sweep("r", (0.5, 1.5, 3.0), spec=SWEEP_SPEC)
    assert [r["value"] for r in records] == [0.5, 1.5, 3.0]
    recall = {r["value"]: r["recall"] for r in records}
    assert recall[3.0] >= recall[0.5]
    assert recall[1.5] >= 0.85
    assert all(r["true_pairs"] == records[0]["true_pairs"] for r in records)


def test_sweep_rejects_unknown_parameter():
    with pytest.raises(InputError):
        sweep("width")


def test_speedup():
    record = speedup(replace(SPEEDUP_SPEC, rows_per_dataset=300), repeats=1)
    assert record["tables"] == 162
    assert record["speedup"] >= 2.0
    assert record["vectorized_seconds"] > 0
    assert record["speedup_vs_vectorized"] == pytest.approx(
        record["vectorized_seconds"] / record["lsh_seconds"]
    )
    assert record["recall"] >= 0.85


def test_latency():
    records = latency(SMALL_SPEC, partition_sizes=(200, 300))
    assert [r["partition_size"] for r in records] == [200, 300]
    for record in records:
        assert record["adaptivity_seconds"] > 0
        assert record["js_seconds"] > 0


def test_adaptivity_overhead_stays_bounded():
    spec = replace(SMALL_SPEC, rows_per_dataset=5000)
    [record] = latency(spec, partition_sizes=(500,))
    assert record["overhead"] < 10


def test_latency_needs_queries():
    with pytest.raises(InputError):
        latency(replace(SMALL_SPEC, queries_per_family=0))


def test_ratio_band():
    record = hellinger_js_band(SMALL_SPEC)
    assert record["pairs"] == 9 * 8 // 2
    assert record["min_ratio"] >= LN2 - 1e-9
    assert record["max_ratio"] <= 1.0 + 1e-9
    assert record["lower_bound"] == LN2
