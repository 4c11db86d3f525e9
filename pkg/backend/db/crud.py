import hashlib
from datetime import timezone

import numpy as np
from core.codec import (
    manifest_adapter,
    signatures_from_json,
    signatures_to_json,
    sketch_from_json,
    sketch_to_json,
)
from core.errors import CorruptionError, FormatError, NotFoundError
from core.hashing import minhash_scheme
from core.record import FORMAT_VERSION, ModelRecord, RegistryManifest
from core.sketch import DatasetSketch
from db.models import ManifestRow, ModelRow, SignatureRow, SketchRow
from sqlalchemy import delete, func, select, text
from sqlalchemy.ext.asyncio import AsyncSession


def checksum(payload: bytes) -> str:
    return hashlib.sha256(payload).hexdigest()


def _verified(payload: bytes, expected: str, what: str) -> bytes:
    if checksum(payload) != expected:
        raise CorruptionError(f"checksum mismatch in {what}")
    return payload


async def quick_check(session: AsyncSession) -> None:
    result = await session.execute(text("PRAGMA quick_check"))
    problems = [row[0] for row in result.all() if row[0] != "ok"]
    if problems:
        raise CorruptionError(f"registry integrity check failed: {problems[0]}")


async def write_manifest(session: AsyncSession, manifest: RegistryManifest) -> None:
    params = manifest_adapter.dump_json(manifest)
    session.add(
        ManifestRow(
            id=1,
            format_version=manifest.format_version,
            params=params.decode(),
            checksum=checksum(params),
            bins_per_numeric_feature=manifest.bins_per_numeric_feature,
        )
    )
    await session.flush()


async def read_manifest(session: AsyncSession) -> RegistryManifest:
    # Older layouts lack columns; read the version alone first.
    format_version = (
        await session.execute(
            select(ManifestRow.format_version).where(ManifestRow.id == 1)
        )
    ).scalar_one_or_none()
    if format_version is None:
        raise CorruptionError("registry has no manifest")
    if format_version != FORMAT_VERSION:
        raise FormatError(
            f"registry format version {format_version}, expected {FORMAT_VERSION}"
        )
    row = (
        await session.execute(select(ManifestRow).where(ManifestRow.id == 1))
    ).scalar_one()
    params = _verified(row.params.encode(), row.checksum, "manifest")
    try:
        manifest = manifest_adapter.validate_json(params)
    except ValueError as e:
        raise CorruptionError(f"unreadable registry manifest: {e}") from e
    if manifest.bins_per_numeric_feature != row.bins_per_numeric_feature:
        raise CorruptionError("manifest bins disagree with the manifest row")
    if manifest.minhash_params.scheme != minhash_scheme():
        raise FormatError(
            f"registry was hashed with {manifest.minhash_params.scheme}, "
            f"this installation uses {minhash_scheme()}"
        )
    return manifest


def _record_from_row(row: ModelRow) -> ModelRecord:
    created_at = row.created_at
    if created_at.tzinfo is None:
        created_at = created_at.replace(tzinfo=timezone.utc)
    return ModelRecord(
        model_id=row.model_id,
        dataset_id=row.dataset_id,
        display_name=row.display_name,
        task_tag=row.task_tag,
        source_accuracy=row.source_accuracy,
        created_at=created_at,
        notes=row.notes,
    )


async def insert_model(
    session: AsyncSession,
    record: ModelRecord,
    sketch: DatasetSketch,
    signatures: dict[int, np.ndarray],
) -> None:
    existing = await session.get(SketchRow, sketch.dataset_id)
    if existing is None:
        payload = sketch_to_json(sketch)
        session.add(
            SketchRow(
                dataset_id=sketch.dataset_id,
                payload=payload,
                checksum=checksum(payload),
            )
        )
    session.add(
        ModelRow(
            model_id=record.model_id,
            dataset_id=record.dataset_id,
            display_name=record.display_name,
            task_tag=record.task_tag,
            source_accuracy=record.source_accuracy,
            created_at=record.created_at.astimezone(timezone.utc),
            notes=record.notes,
        )
    )
    payload = signatures_to_json(signatures)
    session.add(
        SignatureRow(
            model_id=record.model_id, payload=payload, checksum=checksum(payload)
        )
    )
    await session.flush()


async def delete_model(session: AsyncSession, model_id: str) -> bool:
    """Delete a model; its sketch goes too once no other model uses it.

    Returns whether the sketch was deleted.
    """
    row = await session.get(ModelRow, model_id)
    if row is None:
        raise NotFoundError(f"model '{model_id}' is not registered")
    dataset_id = row.dataset_id
    await session.execute(delete(SignatureRow).where(SignatureRow.model_id == model_id))
    await session.execute(delete(ModelRow).where(ModelRow.model_id == model_id))
    remaining = (
        await session.execute(
            select(func.count()).select_from(ModelRow).where(
                ModelRow.dataset_id == dataset_id
            )
        )
    ).scalar_one()
    if remaining == 0:
        await session.execute(
            delete(SketchRow).where(SketchRow.dataset_id == dataset_id)
        )
    await session.flush()
    return remaining == 0


async def load_models(
    session: AsyncSession,
) -> list[tuple[ModelRecord, DatasetSketch, dict[int, np.ndarray]]]:
    """Every stored model with its sketch and MinHash signatures, checksums verified."""
    sketches = {}
    for row in (await session.execute(select(SketchRow))).scalars():
        payload = _verified(row.payload, row.checksum, f"sketch {row.dataset_id}")
        sketches[row.dataset_id] = sketch_from_json(payload, CorruptionError)

    signatures = {}
    for row in (await session.execute(select(SignatureRow))).scalars():
        payload = _verified(row.payload, row.checksum, f"signatures of {row.model_id}")
        try:
            signatures[row.model_id] = signatures_from_json(payload)
        except ValueError as e:
            raise CorruptionError(f"unreadable signatures of {row.model_id}") from e

    models = []
    rows = await session.execute(select(ModelRow).order_by(ModelRow.model_id))
    for row in rows.scalars():
        if row.dataset_id not in sketches or row.model_id not in signatures:
            raise CorruptionError(f"model '{row.model_id}' is missing stored data")
        models.append(
            (_record_from_row(row), sketches[row.dataset_id], signatures[row.model_id])
        )
    return models
