"""Succinct dataset sketches: per-partition, per-feature bin occurrence counts.

A sketch never holds raw rows. Each partition stores, for every feature, the
number of values that fell into each bin; numeric features share one set of
bin edges across all partitions of a dataset.
"""

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np

NORMALIZATION_TOLERANCE = 1e-9


class FeatureKind(str, Enum):
    NUMERIC = "numeric"
    CATEGORICAL = "categorical"


def canonical_name(name: str) -> str:
    return name.strip().lower()


def feature_id_for(name: str) -> int:
    """Stable non-negative 63-bit identifier derived from the canonical name."""
    digest = hashlib.blake2b(canonical_name(name).encode("utf-8"), digest_size=8)
    return int.from_bytes(digest.digest(), "big") >> 1


@dataclass(frozen=True)
class FeatureDescriptor:
    """Bin structure of one feature.

    Numeric features carry ``B + 1`` strictly increasing edges; categorical
    features carry their vocabulary, where a category's position is its bin.
    """

    feature_id: int
    name: str
    kind: FeatureKind
    edges: tuple[float, ...] = ()
    categories: tuple[str, ...] = ()

    def __post_init__(self):
        if self.feature_id != feature_id_for(self.name):
            raise ValueError(f"feature_id does not match name '{self.name}'")
        if self.kind is FeatureKind.NUMERIC:
            if len(self.edges) < 2:
                raise ValueError(f"numeric feature '{self.name}' needs >= 2 edges")
            if any(b <= a for a, b in zip(self.edges, self.edges[1:])):
                raise ValueError(f"bin edges of '{self.name}' must strictly increase")
            if self.categories:
                raise ValueError(f"numeric feature '{self.name}' has categories")
        else:
            if not self.categories:
                raise ValueError(f"categorical feature '{self.name}' has no bins")
            if len(set(self.categories)) != len(self.categories):
                raise ValueError(f"duplicate categories in '{self.name}'")
            if self.edges:
                raise ValueError(f"categorical feature '{self.name}' has edges")

    @classmethod
    def numeric(cls, name: str, edges) -> "FeatureDescriptor":
        return cls(
            feature_id=feature_id_for(name),
            name=name,
            kind=FeatureKind.NUMERIC,
            edges=tuple(float(e) for e in edges),
        )

    @classmethod
    def categorical(cls, name: str, categories) -> "FeatureDescriptor":
        return cls(
            feature_id=feature_id_for(name),
            name=name,
            kind=FeatureKind.CATEGORICAL,
            categories=tuple(str(c) for c in categories),
        )

    @property
    def canonical_name(self) -> str:
        return canonical_name(self.name)

    @property
    def num_bins(self) -> int:
        if self.kind is FeatureKind.NUMERIC:
            return len(self.edges) - 1
        return len(self.categories)

    @cached_property
    def category_index(self) -> dict[str, int]:
        return {c: i for i, c in enumerate(self.categories)}

    def bin_label(self, index: int) -> str:
        """Canonical token of one bin, shared by MinHash and JS-LSH.

        Equal labels in two datasets denote the same bin of the same feature.
        """
        if self.kind is FeatureKind.NUMERIC:
            return f"{self.canonical_name}#{index}/{self.num_bins}"
        return f"{self.canonical_name}={self.categories[index]}"

    @cached_property
    def bin_labels(self) -> tuple[str, ...]:
        return tuple(self.bin_label(i) for i in range(self.num_bins))


@dataclass(frozen=True)
class BinnedFeature:
    feature_id: int
    counts: tuple[int, ...]
    total: int

    def __post_init__(self):
        if any(c < 0 for c in self.counts):
            raise ValueError("bin counts must be non-negative")
        if sum(self.counts) != self.total:
            raise ValueError("bin counts do not sum to total")


@dataclass(frozen=True)
class PartitionSketch:
    partition_index: int
    rows: int
    features: tuple[BinnedFeature, ...]

    def __post_init__(self):
        if self.partition_index < 0 or self.rows < 0:
            raise ValueError("partition index and rows must be non-negative")
        ids = [f.feature_id for f in self.features]
        if any(b <= a for a, b in zip(ids, ids[1:])):
            raise ValueError("partition feature ids must be sorted and unique")
        # Missing values are dropped, so a feature may hold fewer than `rows`.
        for feature in self.features:
            if feature.total > self.rows:
                raise ValueError("feature total exceeds partition rows")

    @cached_property
    def _by_id(self) -> dict[int, BinnedFeature]:
        return {f.feature_id: f for f in self.features}

    def feature(self, feature_id: int) -> BinnedFeature | None:
        return self._by_id.get(feature_id)

    @property
    def feature_ids(self) -> tuple[int, ...]:
        return tuple(f.feature_id for f in self.features)


@dataclass(frozen=True)
class DatasetSketch:
    dataset_id: str
    descriptors: tuple[FeatureDescriptor, ...]
    partitions: tuple[PartitionSketch, ...]
    partition_size_m: int
    total_rows: int
    bins_per_numeric_feature: int

    def __post_init__(self):
        if self.partition_size_m < 1:
            raise ValueError("partition_size_m must be >= 1")
        if not self.partitions:
            raise ValueError("a dataset sketch needs at least one partition")
        if any(p.rows != self.partition_size_m for p in self.partitions[:-1]):
            raise ValueError("only the last partition may differ from m rows")
        if self.partitions[-1].rows > self.partition_size_m:
            raise ValueError("residue partition larger than m rows")
        if sum(p.rows for p in self.partitions) != self.total_rows:
            raise ValueError("partition rows do not sum to total_rows")
        ids = [d.feature_id for d in self.descriptors]
        if any(b <= a for a, b in zip(ids, ids[1:])):
            raise ValueError("descriptors must be sorted by feature_id and unique")
        bins = {d.feature_id: d.num_bins for d in self.descriptors}
        for partition in self.partitions:
            for feature in partition.features:
                if feature.feature_id not in bins:
                    raise ValueError(
                        f"feature {feature.feature_id} missing from descriptors"
                    )
                if len(feature.counts) != bins[feature.feature_id]:
                    raise ValueError("bin count length differs from descriptor")

    @cached_property
    def _descriptors_by_id(self) -> dict[int, FeatureDescriptor]:
        return {d.feature_id: d for d in self.descriptors}

    def descriptor(self, feature_id: int) -> FeatureDescriptor | None:
        return self._descriptors_by_id.get(feature_id)

    @property
    def feature_ids(self) -> tuple[int, ...]:
        return tuple(d.feature_id for d in self.descriptors)

    @property
    def num_partitions(self) -> int:
        return len(self.partitions)

    @cached_property
    def _count_matrices(self) -> dict[int, np.ndarray]:
        matrices = {}
        for desc in self.descriptors:
            matrix = np.zeros((self.num_partitions, desc.num_bins), dtype=np.int64)
            for row, partition in enumerate(self.partitions):
                feature = partition.feature(desc.feature_id)
                if feature is not None:
                    matrix[row] = feature.counts
            matrix.setflags(write=False)
            matrices[desc.feature_id] = matrix
        return matrices

    def count_matrix(self, feature_id: int) -> np.ndarray:
        """Per-partition counts of one feature, shape (partitions, bins)."""
        return self._count_matrices[feature_id]

    @cached_property
    def partition_rows(self) -> np.ndarray:
        return np.array([p.rows for p in self.partitions], dtype=np.float64)

    @cached_property
    def whole(self) -> PartitionSketch:
        """The whole dataset folded into a single partition."""
        features = tuple(
            BinnedFeature(
                feature_id=fid,
                counts=tuple(int(c) for c in matrix.sum(axis=0)),
                total=int(matrix.sum()),
            )
            for fid, matrix in self._count_matrices.items()
        )
        return PartitionSketch(
            partition_index=0, rows=self.total_rows, features=features
        )

    def as_single_partition(self) -> "DatasetSketch":
        return DatasetSketch(
            dataset_id=self.dataset_id,
            descriptors=self.descriptors,
            partitions=(self.whole,),
            partition_size_m=max(self.total_rows, 1),
            total_rows=self.total_rows,
            bins_per_numeric_feature=self.bins_per_numeric_feature,
        )


@dataclass(frozen=True, eq=False)
class ProbabilityVector:
    entries: np.ndarray
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.labels and len(self.labels) != len(self.entries):
            raise ValueError("labels must match the vector dimension")

    @property
    def dimension(self) -> int:
        return int(self.entries.shape[0])

    def is_normalized(self, tolerance: float = NORMALIZATION_TOLERANCE) -> bool:
        return bool(
            np.all(self.entries >= 0)
            and abs(float(self.entries.sum()) - 1.0) <= tolerance
        )
