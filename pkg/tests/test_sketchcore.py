from collections import Counter

import numpy as np
import pandas as pd
import pytest
from core.errors import EmptyDistributionError, IngestError, ProjectionError
from core.sketch import BinnedFeature, FeatureKind, feature_id_for
from engine.sketchcore import (
    assign_bins,
    expand_feature,
    flatten,
    infer_schema,
    ingest_frame,
    ingest_table,
    project_shared,
    quantize_numeric,
    read_csv_table,
)

from tests.conftest import make_sketch


def test_partition_count_and_residue():
    frame = pd.DataFrame({"v": np.arange(1001, dtype=float)})
    sketch = ingest_frame(frame, partition_size_m=500, dataset_id="t")
    assert sketch.num_partitions == 3
    assert [p.rows for p in sketch.partitions] == [500, 500, 1]
    assert sketch.total_rows == 1001

    dropped = ingest_frame(
        frame, partition_size_m=500, dataset_id="t", drop_residue=True
    )
    assert dropped.num_partitions == 2
    assert dropped.total_rows == 1000


def test_exact_multiple_has_no_residue():
    frame = pd.DataFrame({"v": np.arange(1000, dtype=float)})
    sketch = ingest_frame(frame, partition_size_m=500, dataset_id="t")
    assert sketch.num_partitions == 2


def test_counts_sum_to_present_values():
    sketch = make_sketch("t", {"v": [0.0, 1.0, 2.0, None, 4.0]}, partition_size_m=5)
    feature = sketch.partitions[0].features[0]
    assert feature.total == 4
    assert sum(feature.counts) == 4


def test_quantize_constant_column():
    assert quantize_numeric([3.0, 3.0, 3.0], 32) == (2.5, 3.5)
    sketch = make_sketch("t", {"v": [3.0] * 5}, partition_size_m=5)
    assert sketch.descriptors[0].num_bins == 1


def test_quantize_equal_width():
    edges = quantize_numeric([0.0, 10.0], 4)
    assert edges == (0.0, 2.5, 5.0, 7.5, 10.0)


def test_assign_bins_puts_maximum_in_last_bin():
    codes = assign_bins(np.array([0.0, 2.5, 10.0, np.nan, 42.0]), (0.0, 5.0, 10.0))
    assert codes.tolist() == [0, 0, 1, -1, 1]


def test_infer_schema():
    frame = pd.DataFrame({"a": ["1", "2.5", ""], "b": ["x", "1", "y"]})
    assert infer_schema(frame) == [
        ("a", FeatureKind.NUMERIC),
        ("b", FeatureKind.CATEGORICAL),
    ]


def test_categorical_vocabulary_is_sorted():
    sketch = make_sketch("t", {"c": ["b", "a", "b", "c"]}, partition_size_m=4)
    descriptor = sketch.descriptors[0]
    assert descriptor.categories == ("a", "b", "c")
    assert sketch.partitions[0].features[0].counts == (1, 2, 1)


def test_non_numeric_value_in_numeric_column():
    with pytest.raises(IngestError, match="row 2"):
        ingest_table(
            [[1.0], ["oops"]],
            [("v", "numeric")],
            partition_size_m=2,
            bins_per_numeric_feature=4,
        )


def test_record_width_mismatch():
    with pytest.raises(IngestError, match="record 2"):
        ingest_table(
            [[1.0, "a"], [2.0]],
            [("v", "numeric"), ("c", "categorical")],
            partition_size_m=2,
            bins_per_numeric_feature=4,
        )


def test_exclude_column():
    sketch = make_sketch(
        "t", {"v": [1.0, 2.0], "label": ["x", "y"]}, exclude=["label"]
    )
    assert [d.name for d in sketch.descriptors] == ["v"]


def test_empty_table():
    with pytest.raises(IngestError):
        ingest_frame(pd.DataFrame({"v": []}), dataset_id="t")


def test_reference_binning_reuses_edges():
    reference = make_sketch("ref", {"v": [0.0, 1.0]}, bins=4)
    sketch = make_sketch(
        "t", {"v": [0.1, 0.6, 2.0]}, bins=4, reference=reference
    )
    assert sketch.descriptors[0].edges == reference.descriptors[0].edges
    # 2.0 lies past the last edge and clamps into the last bin.
    assert sketch.partitions[0].features[0].counts == (1, 0, 1, 1)


def test_shuffle_is_deterministic():
    frame = pd.DataFrame({"v": np.arange(100, dtype=float)})
    a = ingest_frame(frame, partition_size_m=10, dataset_id="t", shuffle_seed=3)
    b = ingest_frame(frame, partition_size_m=10, dataset_id="t", shuffle_seed=3)
    plain = ingest_frame(frame, partition_size_m=10, dataset_id="t")
    assert a == b
    assert a != plain


def test_flatten_normalizes_by_grand_total():
    sketch = make_sketch(
        "t", {"c": ["a", "a", "b", "b"], "d": ["x", "x", "x", "y"]}, partition_size_m=4
    )
    vector = flatten(sketch.partitions[0], sketch.feature_ids, sketch)
    assert vector.is_normalized()
    assert vector.dimension == 4
    assert sorted(vector.entries.tolist()) == [0.125, 0.25, 0.25, 0.375]
    assert set(vector.labels) == {"c=a", "c=b", "d=x", "d=y"}


def test_flatten_errors():
    sketch = make_sketch("t", {"c": ["a", "b"]}, partition_size_m=2)
    with pytest.raises(ProjectionError):
        flatten(sketch.partitions[0], [])
    with pytest.raises(ProjectionError):
        flatten(sketch.partitions[0], [feature_id_for("missing")])


def test_flatten_of_empty_feature():
    sketch = make_sketch(
        "t",
        {"v": [1.0, None, None, None], "c": ["a", "b", "a", "b"]},
        partition_size_m=2,
    )
    with pytest.raises(EmptyDistributionError):
        flatten(sketch.partitions[1], [feature_id_for("v")])


def test_project_shared_layout():
    target = make_sketch("target", {"c": ["a", "b"]}, partition_size_m=2)
    source = make_sketch("source", {"c": ["b", "z", "z"]}, partition_size_m=3)
    projection = project_shared(source, target, [feature_id_for("c")])
    assert projection.labels == ("c=a", "c=b", "c=z")
    assert projection.target_counts.tolist() == [[1.0, 1.0, 0.0]]
    assert projection.source_counts.tolist() == [[0.0, 1.0, 2.0]]


def test_project_shared_requires_features():
    sketch = make_sketch("t", {"c": ["a"]}, partition_size_m=1)
    with pytest.raises(ProjectionError):
        project_shared(sketch, sketch, [])
    with pytest.raises(ProjectionError):
        project_shared(sketch, sketch, [feature_id_for("other")])


def test_four_values_in_two_partitions_of_two_bins():
    sketch = make_sketch("t", {"v": [1.0, 2.0, 3.0, 4.0]}, partition_size_m=2, bins=2)
    assert sketch.descriptors[0].edges == (1.0, 2.5, 4.0)
    assert sketch.num_partitions == 2
    assert sketch.partitions[0].features[0].counts == (2, 0)
    assert sketch.partitions[1].features[0].counts == (0, 2)


def test_partition_counts_add_up_to_the_whole_table():
    rng = np.random.default_rng(7)
    frame = pd.DataFrame(
        {"v": rng.normal(size=1001), "c": rng.choice(list("abcde"), size=1001)}
    )
    partitioned = ingest_frame(frame, partition_size_m=100, dataset_id="t")
    single = ingest_frame(frame, partition_size_m=1001, dataset_id="t")
    assert partitioned.num_partitions == 11
    assert single.num_partitions == 1
    for fid in partitioned.feature_ids:
        np.testing.assert_array_equal(
            partitioned.count_matrix(fid).sum(axis=0), single.count_matrix(fid)[0]
        )


def test_flatten_ignores_subset_order():
    sketch = make_sketch(
        "t", {"c": ["a", "a", "b", "b"], "d": ["x", "x", "x", "y"]}, partition_size_m=4
    )
    partition = sketch.partitions[0]
    forward = flatten(partition, [feature_id_for("c"), feature_id_for("d")], sketch)
    backward = flatten(partition, [feature_id_for("d"), feature_id_for("c")], sketch)
    np.testing.assert_array_equal(forward.entries, backward.entries)
    assert forward.labels == backward.labels


def test_expand_feature():
    sketch = make_sketch(
        "t", {"c": ["b", "a", "b"], "v": [0.0, 0.0, 1.0]}, partition_size_m=3, bins=2
    )
    whole = sketch.whole
    c = sketch.descriptor(feature_id_for("c"))
    v = sketch.descriptor(feature_id_for("v"))
    assert expand_feature(whole.feature(c.feature_id), c) == Counter(
        {"c=a": 1, "c=b": 2}
    )
    assert expand_feature(whole.feature(v.feature_id), v) == Counter(
        {"v#0/2": 2, "v#1/2": 1}
    )
    with pytest.raises(ProjectionError):
        expand_feature(BinnedFeature(c.feature_id, (3,), 3), c)


def test_short_csv_row(tmp_path):
    path = tmp_path / "short.csv"
    path.write_text("a,b\n1,x\n2\n3,y\n")
    with pytest.raises(IngestError, match="line 3"):
        read_csv_table(path)

    path.write_text("a,b\n1,x\n\n3,y\n")
    assert len(read_csv_table(path)) == 2
