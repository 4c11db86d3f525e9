"""Ingestion of tabular data into partitioned sketches, and projections over them."""

import csv
import json
import logging
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from core.errors import EmptyDistributionError, IngestError, ProjectionError
from core.sketch import (
    BinnedFeature,
    DatasetSketch,
    FeatureDescriptor,
    FeatureKind,
    PartitionSketch,
    ProbabilityVector,
    canonical_name,
)

logger = logging.getLogger("model-scout.sketch")

Schema = Sequence[tuple[str, FeatureKind | str]]

# A shared feature is either one id present on both sides or an explicit
# (target_feature_id, source_feature_id) pair.
SharedFeature = int | tuple[int, int]


def quantize_numeric(values: Iterable[float], bins: int) -> tuple[float, ...]:
    """Equal-width bin edges over the observed [min, max] of the finite values.

    A constant column yields a single bin centred on the value.
    """
    if bins < 1:
        raise IngestError("number of bins must be >= 1")
    array = np.asarray(list(values), dtype=np.float64)
    array = array[np.isfinite(array)]
    if array.size == 0:
        raise IngestError("numeric feature has no finite values")
    low, high = float(array.min()), float(array.max())
    if low == high:
        return (low - 0.5, high + 0.5)
    return tuple(float(e) for e in np.linspace(low, high, bins + 1))


def assign_bins(values: np.ndarray, edges: Sequence[float]) -> np.ndarray:
    """Bin index per value; the maximum lands in the last bin, NaN maps to -1.

    Values outside the edges clamp to the first or last bin.
    """
    edges_arr = np.asarray(edges, dtype=np.float64)
    num_bins = len(edges_arr) - 1
    codes = np.searchsorted(edges_arr, values, side="right") - 1
    codes = np.clip(codes, 0, num_bins - 1)
    return np.where(np.isfinite(values), codes, -1).astype(np.int64)


def _strip(series: pd.Series) -> pd.Series:
    return series.map(lambda v: v.strip() if isinstance(v, str) else v)


def _is_missing(series: pd.Series) -> pd.Series:
    blank = series.map(lambda v: isinstance(v, str) and not v.strip())
    return series.isna() | blank.astype(bool)


def infer_schema(frame: pd.DataFrame) -> list[tuple[str, FeatureKind]]:
    """Numeric when every non-missing value parses as a decimal number."""
    schema = []
    for name in frame.columns:
        column = frame[name]
        present = column[~_is_missing(column)]
        parsed = pd.to_numeric(_strip(present), errors="coerce")
        if len(present) and not parsed.isna().any():
            schema.append((str(name), FeatureKind.NUMERIC))
        else:
            schema.append((str(name), FeatureKind.CATEGORICAL))
    return schema


def load_schema(path: str | Path) -> list[tuple[str, FeatureKind]]:
    """Read a JSON object mapping column name to ``numeric`` or ``categorical``."""
    try:
        raw = json.loads(Path(path).read_text())
        return [(str(name), FeatureKind(kind)) for name, kind in raw.items()]
    except (OSError, ValueError, AttributeError) as e:
        raise IngestError(f"invalid schema file {path}: {e}") from e


def _check_field_counts(path: str | Path) -> None:
    """Every row must have as many fields as the header."""
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            return
        for row in reader:
            if row and len(row) != len(header):
                raise IngestError(
                    f"{path}: line {reader.line_num} has {len(row)} fields, "
                    f"header has {len(header)}"
                )


def read_csv_table(path: str | Path) -> pd.DataFrame:
    try:
        _check_field_counts(path)
        frame = pd.read_csv(path, dtype=str, keep_default_na=True)
    except (
        pd.errors.ParserError,
        pd.errors.EmptyDataError,
        OSError,
        UnicodeDecodeError,
        csv.Error,
    ) as e:
        raise IngestError(f"cannot read {path}: {e}") from e
    if frame.empty:
        raise IngestError(f"{path} has no data rows")
    return frame


def _numeric_codes(
    name: str, column: pd.Series, bins: int, reference: FeatureDescriptor | None
) -> tuple[FeatureDescriptor, np.ndarray]:
    missing = _is_missing(column)
    parsed = pd.to_numeric(_strip(column.where(~missing)), errors="coerce")
    bad = parsed.isna() & ~missing
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise IngestError(
            f"non-numeric value {column.iloc[row]!r} in numeric column '{name}' "
            f"(row {row + 1})"
        )
    values = parsed.to_numpy(dtype=np.float64)
    values[~np.isfinite(values)] = np.nan
    if reference is not None:
        descriptor = FeatureDescriptor.numeric(name, reference.edges)
    else:
        descriptor = FeatureDescriptor.numeric(name, quantize_numeric(values, bins))
    return descriptor, assign_bins(values, descriptor.edges)


def _categorical_codes(
    name: str, column: pd.Series, reference: FeatureDescriptor | None
) -> tuple[FeatureDescriptor, np.ndarray]:
    missing = _is_missing(column).to_numpy()
    tokens = column.map(lambda v: str(v).strip()).to_numpy(dtype=object)
    observed = sorted({t for t, m in zip(tokens, missing) if not m})
    if reference is not None:
        known = set(reference.categories)
        vocabulary = list(reference.categories)
        vocabulary += [t for t in observed if t not in known]
    else:
        vocabulary = observed
    if not vocabulary:
        raise IngestError(f"categorical column '{name}' has no values")
    descriptor = FeatureDescriptor.categorical(name, vocabulary)
    index = descriptor.category_index
    codes = np.array(
        [-1 if m else index[t] for t, m in zip(tokens, missing)], dtype=np.int64
    )
    return descriptor, codes


def ingest_frame(
    frame: pd.DataFrame,
    schema: Schema | None = None,
    partition_size_m: int = 500,
    bins_per_numeric_feature: int = 32,
    *,
    dataset_id: str = "dataset",
    exclude: Iterable[str] = (),
    drop_residue: bool = False,
    shuffle_seed: int | None = None,
    reference: DatasetSketch | None = None,
) -> DatasetSketch:
    """Sketch a table: bin every feature over the whole table, then count per
    partition of ``partition_size_m`` consecutive rows."""
    if partition_size_m < 1:
        raise IngestError("partition size must be >= 1")
    if frame.empty:
        raise IngestError("cannot sketch an empty table")
    if schema is None:
        schema = infer_schema(frame)
    excluded = {canonical_name(e) for e in exclude}
    schema = [
        (n, FeatureKind(k)) for n, k in schema if canonical_name(n) not in excluded
    ]
    if not schema:
        raise IngestError("no features left to sketch")
    names = [canonical_name(n) for n, _ in schema]
    if len(set(names)) != len(names):
        raise IngestError("schema contains duplicate feature names")
    missing_columns = [n for n, _ in schema if n not in frame.columns]
    if missing_columns:
        raise IngestError(f"columns missing from table: {missing_columns}")

    num_rows = len(frame)
    order = np.arange(num_rows)
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(num_rows)
    frame = frame.iloc[order].reset_index(drop=True)

    num_partitions = -(-num_rows // partition_size_m)
    if drop_residue and num_rows % partition_size_m:
        num_partitions -= 1
        if num_partitions == 0:
            raise IngestError("dropping the residue partition leaves no data")
    kept_rows = min(num_rows, num_partitions * partition_size_m)
    partition_of_row = np.arange(kept_rows) // partition_size_m

    ref_descriptors = {}
    if reference is not None:
        ref_descriptors = {d.canonical_name: d for d in reference.descriptors}

    descriptors: list[FeatureDescriptor] = []
    counts: dict[int, np.ndarray] = {}
    for name, kind in schema:
        ref = ref_descriptors.get(canonical_name(name))
        if ref is not None and ref.kind is not kind:
            raise IngestError(f"feature '{name}' is {kind.value} but {ref.kind.value} "
                              "in the reference sketch")
        if kind is FeatureKind.NUMERIC:
            descriptor, codes = _numeric_codes(
                name, frame[name], bins_per_numeric_feature, ref
            )
        else:
            descriptor, codes = _categorical_codes(name, frame[name], ref)
        codes = codes[:kept_rows]
        present = codes >= 0
        num_bins = descriptor.num_bins
        flat = np.bincount(
            partition_of_row[present] * num_bins + codes[present],
            minlength=num_partitions * num_bins,
        )
        descriptors.append(descriptor)
        counts[descriptor.feature_id] = flat.reshape(num_partitions, num_bins)

    descriptors.sort(key=lambda d: d.feature_id)
    partitions = []
    for p in range(num_partitions):
        rows = min(partition_size_m, kept_rows - p * partition_size_m)
        features = tuple(
            BinnedFeature(
                feature_id=d.feature_id,
                counts=tuple(int(c) for c in counts[d.feature_id][p]),
                total=int(counts[d.feature_id][p].sum()),
            )
            for d in descriptors
        )
        partitions.append(
            PartitionSketch(partition_index=p, rows=rows, features=features)
        )

    sketch = DatasetSketch(
        dataset_id=dataset_id,
        descriptors=tuple(descriptors),
        partitions=tuple(partitions),
        partition_size_m=partition_size_m,
        total_rows=kept_rows,
        bins_per_numeric_feature=bins_per_numeric_feature,
    )
    logger.info(
        "Sketched %s: %d rows, %d partitions, %d features",
        dataset_id,
        kept_rows,
        num_partitions,
        len(descriptors),
    )
    return sketch


def ingest_table(
    rows: Sequence[Sequence[Any]],
    schema: Schema,
    partition_size_m: int,
    bins_per_numeric_feature: int,
    **options,
) -> DatasetSketch:
    """Sketch in-memory records; each record holds one value per schema entry."""
    if not rows:
        raise IngestError("cannot sketch an empty table")
    width = len(schema)
    for number, record in enumerate(rows, start=1):
        if len(record) != width:
            raise IngestError(
                f"record {number} has {len(record)} values, schema has {width}"
            )
    frame = pd.DataFrame(list(rows), columns=[n for n, _ in schema], dtype=object)
    return ingest_frame(
        frame, schema, partition_size_m, bins_per_numeric_feature, **options
    )


def flatten(
    partition: PartitionSketch,
    feature_subset: Iterable[int],
    sketch: DatasetSketch | None = None,
) -> ProbabilityVector:
    """Concatenate the requested features' counts in ascending id order and
    normalize by the grand total.

    Labels are attached when the owning ``sketch`` is given.
    """
    ids = sorted(set(feature_subset))
    chunks, labels = [], []
    for fid in ids:
        feature = partition.feature(fid)
        if feature is None:
            raise ProjectionError(f"feature {fid} not in partition")
        chunks.append(np.asarray(feature.counts, dtype=np.float64))
        if sketch is not None:
            labels.extend(sketch.descriptor(fid).bin_labels)
    if not chunks:
        raise ProjectionError("empty feature subset")
    counts = np.concatenate(chunks)
    total = counts.sum()
    if total <= 0:
        raise EmptyDistributionError(
            f"partition {partition.partition_index} has no counts over the subset"
        )
    return ProbabilityVector(entries=counts / total, labels=tuple(labels))


def expand_feature(
    feature: BinnedFeature, descriptor: FeatureDescriptor
) -> Counter[str]:
    """Occupied bin tokens with their multiplicities."""
    if len(feature.counts) != descriptor.num_bins:
        raise ProjectionError(
            f"counts of feature {feature.feature_id} do not match its descriptor"
        )
    return Counter(
        {descriptor.bin_label(i): c for i, c in enumerate(feature.counts) if c > 0}
    )


@dataclass(frozen=True, eq=False)
class SharedProjection:
    """Counts of two datasets laid out over one common label space."""

    labels: tuple[str, ...]
    source_counts: np.ndarray
    target_counts: np.ndarray
    source_rows: np.ndarray
    target_rows: np.ndarray

    @property
    def dimension(self) -> int:
        return len(self.labels)


def normalize_pairing(shared: Iterable[SharedFeature]) -> list[tuple[int, int]]:
    pairs = {(s, s) if isinstance(s, int) else (int(s[0]), int(s[1])) for s in shared}
    return sorted(pairs)


def _relabel(descriptor: FeatureDescriptor, name: str) -> list[str]:
    if descriptor.kind is FeatureKind.NUMERIC:
        return [f"{name}#{i}/{descriptor.num_bins}" for i in range(descriptor.num_bins)]
    return [f"{name}={c}" for c in descriptor.categories]


def project_shared(
    source: DatasetSketch,
    target: DatasetSketch,
    shared: Iterable[SharedFeature],
) -> SharedProjection:
    """Lay out both datasets' partitions over the shared features' bins.

    Each pair contributes the target feature's bin labels followed by any
    source-only labels; a side lacking a label counts zero there.
    """
    pairing = normalize_pairing(shared)
    if not pairing:
        raise ProjectionError("shared feature space is empty")
    labels: list[str] = []
    source_blocks, target_blocks = [], []
    for target_fid, source_fid in pairing:
        t_desc = target.descriptor(target_fid)
        s_desc = source.descriptor(source_fid)
        if t_desc is None or s_desc is None:
            raise ProjectionError(
                f"shared feature ({target_fid}, {source_fid}) missing from a sketch"
            )
        if t_desc.kind is not s_desc.kind:
            raise ProjectionError(f"feature '{t_desc.name}' differs in kind")
        name = t_desc.canonical_name
        t_labels = _relabel(t_desc, name)
        s_labels = _relabel(s_desc, name)
        extra = sorted(set(s_labels) - set(t_labels))
        layout = t_labels + extra
        position = {label: i for i, label in enumerate(layout)}

        t_block = np.zeros((target.num_partitions, len(layout)), dtype=np.float64)
        t_block[:, : len(t_labels)] = target.count_matrix(target_fid)
        s_block = np.zeros((source.num_partitions, len(layout)), dtype=np.float64)
        s_block[:, [position[label] for label in s_labels]] = source.count_matrix(
            source_fid
        )
        labels.extend(layout)
        source_blocks.append(s_block)
        target_blocks.append(t_block)
    return SharedProjection(
        labels=tuple(labels),
        source_counts=np.hstack(source_blocks),
        target_counts=np.hstack(target_blocks),
        source_rows=source.partition_rows,
        target_rows=target.partition_rows,
    )


def normalize_rows(counts: np.ndarray) -> np.ndarray:
    """Turn per-partition count rows into probability rows."""
    totals = counts.sum(axis=1, keepdims=True)
    if np.any(totals <= 0):
        empty = int(np.flatnonzero(totals[:, 0] <= 0)[0])
        raise EmptyDistributionError(f"partition {empty} has no counts over the subset")
    return counts / totals


def row_weighted_center(probabilities: np.ndarray, rows: np.ndarray) -> np.ndarray:
    return np.average(probabilities, axis=0, weights=rows)
