import logging
import threading
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np
from core.errors import ConflictError, NotFoundError, ParamsError
from core.record import (
    ModelRecord,
    RegistrationReceipt,
    RegistryManifest,
    RemovalReceipt,
)
from core.sketch import DatasetSketch
from engine.lsh import band_digest, minhash_matrix
from engine.sketchcore import expand_feature

logger = logging.getLogger("model-scout.registry")


@dataclass(frozen=True)
class Posting:
    model_id: str
    feature_id: int
    values: tuple[int, ...]


@dataclass(frozen=True)
class BandTable:
    """One band's buckets: signature digest -> postings sharing that digest."""

    band_index: int
    buckets: Mapping[int, frozenset[Posting]] = field(
        default_factory=lambda: MappingProxyType({})
    )

    def lookup(self, values: Iterable[int]) -> set[tuple[str, int]]:
        values = tuple(int(v) for v in values)
        bucket = self.buckets.get(band_digest(values), frozenset())
        return {(p.model_id, p.feature_id) for p in bucket if p.values == values}

    def with_postings(self, postings: Iterable[Posting]) -> "BandTable":
        buckets = dict(self.buckets)
        for posting in postings:
            digest = band_digest(posting.values)
            buckets[digest] = buckets.get(digest, frozenset()) | {posting}
        return BandTable(self.band_index, MappingProxyType(buckets))

    def without_model(self, model_id: str) -> "BandTable":
        buckets = {}
        for digest, postings in self.buckets.items():
            kept = frozenset(p for p in postings if p.model_id != model_id)
            if kept:
                buckets[digest] = kept
        return BandTable(self.band_index, MappingProxyType(buckets))

    @property
    def num_postings(self) -> int:
        return sum(len(p) for p in self.buckets.values())


@dataclass(frozen=True)
class RegistryState:
    """An immutable view of the registry; searches run against one snapshot."""

    manifest: RegistryManifest
    records: Mapping[str, ModelRecord]
    sketches: Mapping[str, DatasetSketch]
    # model_id -> feature_id -> MinHash matrix of shape (L, K)
    signatures: Mapping[str, Mapping[int, np.ndarray]]
    tables: tuple[BandTable, ...]

    def snapshot(self) -> "RegistryState":
        return self

    def get(self, model_id: str) -> ModelRecord:
        record = self.records.get(model_id)
        if record is None:
            raise NotFoundError(f"model '{model_id}' is not registered")
        return record

    def sketch_for(self, model_id: str) -> DatasetSketch:
        return self.sketches[self.get(model_id).dataset_id]

    def signatures_for(self, model_id: str) -> Mapping[int, np.ndarray]:
        self.get(model_id)
        return self.signatures[model_id]

    def list_models(self) -> list[ModelRecord]:
        return [self.records[m] for m in sorted(self.records)]


def _empty_state(manifest: RegistryManifest) -> RegistryState:
    return RegistryState(
        manifest=manifest,
        records=MappingProxyType({}),
        sketches=MappingProxyType({}),
        signatures=MappingProxyType({}),
        tables=tuple(
            BandTable(b) for b in range(manifest.minhash_params.num_bands)
        ),
    )


def feature_signatures(
    sketch: DatasetSketch, manifest: RegistryManifest
) -> dict[int, np.ndarray]:
    """MinHash matrix of every feature's occupied-bin tokens.

    Features with no observed values have no tokens and are left out.
    """
    whole = sketch.whole
    signatures = {}
    for descriptor in sketch.descriptors:
        tokens = expand_feature(whole.feature(descriptor.feature_id), descriptor)
        if not tokens:
            logger.warning(
                "Feature '%s' of %s has no values; not indexed",
                descriptor.name,
                sketch.dataset_id,
            )
            continue
        signatures[descriptor.feature_id] = minhash_matrix(
            tokens, manifest.minhash_params
        )
    return signatures


class Registry:
    """Model records, their dataset sketches and the prebuilt MinHash band tables.

    Readers take ``snapshot()`` and never block; registration and removal
    serialize on a lock and publish a new snapshot in one assignment, so a
    reader never sees a half-registered model.
    """

    def __init__(self, manifest: RegistryManifest | None = None):
        self._state = _empty_state(manifest or RegistryManifest())
        self._lock = threading.Lock()

    @property
    def manifest(self) -> RegistryManifest:
        return self._state.manifest

    def snapshot(self) -> RegistryState:
        return self._state

    def __len__(self) -> int:
        return len(self._state.records)

    def __contains__(self, model_id: str) -> bool:
        return model_id in self._state.records

    def get(self, model_id: str) -> ModelRecord:
        return self._state.get(model_id)

    def list_models(self) -> list[ModelRecord]:
        return self._state.list_models()

    def sketch_for(self, model_id: str) -> DatasetSketch:
        return self._state.sketch_for(model_id)

    def check_params(self, sketch: DatasetSketch) -> None:
        expected = self.manifest.bins_per_numeric_feature
        if sketch.bins_per_numeric_feature != expected:
            raise ParamsError(
                f"sketch {sketch.dataset_id} uses "
                f"{sketch.bins_per_numeric_feature} bins per numeric feature, "
                f"registry uses {expected}"
            )

    def register_model(
        self, record: ModelRecord, sketch: DatasetSketch
    ) -> RegistrationReceipt:
        if record.dataset_id != sketch.dataset_id:
            raise ParamsError(
                f"record references dataset '{record.dataset_id}' "
                f"but the sketch is '{sketch.dataset_id}'"
            )
        self.check_params(sketch)
        # Hashing happens outside the lock.
        signatures = feature_signatures(sketch, self.manifest)
        receipt = self.install(record, sketch, signatures)
        logger.info(
            "Registered model %s (%d features, %d postings)",
            record.model_id,
            receipt.num_features,
            receipt.num_postings,
        )
        return receipt

    def install(
        self,
        record: ModelRecord,
        sketch: DatasetSketch,
        signatures: Mapping[int, np.ndarray],
    ) -> RegistrationReceipt:
        """Insert a model whose MinHash signatures are already computed."""
        params = self.manifest.minhash_params
        shape = (params.num_bands, params.k_per_band)
        for fid, matrix in signatures.items():
            if sketch.descriptor(fid) is None:
                raise ParamsError(f"signature for unknown feature {fid}")
            if matrix.shape != shape:
                raise ParamsError(
                    f"signature shape {matrix.shape} differs from registry {shape}"
                )
        model_signatures = MappingProxyType(dict(signatures))
        with self._lock:
            state = self._state
            if record.model_id in state.records:
                raise ConflictError(f"model '{record.model_id}' already registered")
            existing = state.sketches.get(sketch.dataset_id)
            if existing is not None and existing != sketch:
                raise ConflictError(
                    f"dataset '{sketch.dataset_id}' is registered with other contents"
                )
            tables = tuple(
                table.with_postings(
                    Posting(record.model_id, fid, tuple(int(v) for v in matrix[b]))
                    for fid, matrix in signatures.items()
                )
                for b, table in enumerate(state.tables)
            )
            self._state = RegistryState(
                manifest=state.manifest,
                records=MappingProxyType({**state.records, record.model_id: record}),
                sketches=MappingProxyType(
                    {**state.sketches, sketch.dataset_id: existing or sketch}
                ),
                signatures=MappingProxyType(
                    {**state.signatures, record.model_id: model_signatures}
                ),
                tables=tables,
            )
        return RegistrationReceipt(
            model_id=record.model_id,
            dataset_id=record.dataset_id,
            num_features=len(signatures),
            num_postings=len(signatures) * params.num_bands,
            format_version=self.manifest.format_version,
        )

    def remove_model(self, model_id: str) -> RemovalReceipt:
        with self._lock:
            state = self._state
            record = state.get(model_id)
            records = {k: v for k, v in state.records.items() if k != model_id}
            still_used = any(
                r.dataset_id == record.dataset_id for r in records.values()
            )
            sketches = dict(state.sketches)
            if not still_used:
                del sketches[record.dataset_id]
            self._state = RegistryState(
                manifest=state.manifest,
                records=MappingProxyType(records),
                sketches=MappingProxyType(sketches),
                signatures=MappingProxyType(
                    {k: v for k, v in state.signatures.items() if k != model_id}
                ),
                tables=tuple(t.without_model(model_id) for t in state.tables),
            )
        logger.info("Removed model %s", model_id)
        return RemovalReceipt(
            model_id=model_id,
            dataset_removed=not still_used,
            format_version=state.manifest.format_version,
        )
