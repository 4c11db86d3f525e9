"""Registry files: one SQLite database holding a manifest, model rows, sketch
blobs and MinHash signature blobs, each blob with a sha256 checksum.

Loads open the file read-only, so querying a registry can never modify it.
"""

import logging
import os
from pathlib import Path

from core.errors import ConflictError, CorruptionError, NotFoundError, ParamsError
from core.record import ModelRecord, RegistryManifest, RemovalReceipt
from core.sketch import DatasetSketch
from db import crud
from db.database import init_db, make_engine, make_sessionmaker
from engine.registry import Registry
from sqlalchemy.exc import DatabaseError

logger = logging.getLogger("model-scout.store")


async def _write_file(path: Path, registry: Registry) -> None:
    engine = make_engine(path)
    try:
        await init_db(engine)
        async with make_sessionmaker(engine)() as session:
            await crud.write_manifest(session, registry.manifest)
            state = registry.snapshot()
            for record in state.list_models():
                await crud.insert_model(
                    session,
                    record,
                    state.sketches[record.dataset_id],
                    dict(state.signatures[record.model_id]),
                )
            await session.commit()
    finally:
        await engine.dispose()


async def save_registry(registry: Registry, path: str | Path) -> None:
    """Write the whole registry to ``path``, replacing it atomically."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.unlink(missing_ok=True)
    try:
        await _write_file(tmp, registry)
        os.replace(tmp, path)
    finally:
        tmp.unlink(missing_ok=True)
    logger.info("Saved registry with %d models to %s", len(registry), path)


async def create_registry(
    path: str | Path, manifest: RegistryManifest | None = None
) -> Registry:
    path = Path(path)
    if path.exists():
        raise ConflictError(f"registry {path} already exists")
    registry = Registry(manifest)
    await save_registry(registry, path)
    return registry


def _existing(path: str | Path) -> Path:
    path = Path(path)
    if not path.is_file():
        raise NotFoundError(f"registry {path} does not exist")
    return path


async def load_registry(path: str | Path) -> Registry:
    path = _existing(path)
    engine = make_engine(path, read_only=True)
    try:
        async with make_sessionmaker(engine)() as session:
            await crud.quick_check(session)
            manifest = await crud.read_manifest(session)
            models = await crud.load_models(session)
    except DatabaseError as e:
        raise CorruptionError(f"registry {path} is unreadable: {e.orig}") from e
    finally:
        await engine.dispose()

    registry = Registry(manifest)
    for record, sketch, signatures in models:
        if sketch.bins_per_numeric_feature != manifest.bins_per_numeric_feature:
            raise ParamsError(
                f"sketch {sketch.dataset_id} was built with "
                f"{sketch.bins_per_numeric_feature} bins, manifest says "
                f"{manifest.bins_per_numeric_feature}"
            )
        registry.install(record, sketch, signatures)
    logger.info("Loaded registry %s: %d models", path, len(registry))
    return registry


async def add_model(
    path: str | Path, registry: Registry, record: ModelRecord, sketch: DatasetSketch
) -> None:
    """Persist a model already registered in ``registry``."""
    engine = make_engine(_existing(path))
    try:
        async with make_sessionmaker(engine)() as session:
            await crud.insert_model(
                session,
                record,
                sketch,
                dict(registry.snapshot().signatures[record.model_id]),
            )
            await session.commit()
    finally:
        await engine.dispose()


async def remove_model(path: str | Path, model_id: str) -> RemovalReceipt:
    engine = make_engine(_existing(path))
    try:
        async with make_sessionmaker(engine)() as session:
            manifest = await crud.read_manifest(session)
            dataset_removed = await crud.delete_model(session, model_id)
            await session.commit()
    finally:
        await engine.dispose()
    return RemovalReceipt(
        model_id=model_id,
        dataset_removed=dataset_removed,
        format_version=manifest.format_version,
    )
