from dataclasses import replace

import pytest
from core.errors import ConflictError, CorruptionError, FormatError, NotFoundError
from core.record import ModelRecord
from core.results import Metric, SearchConfig
from db import store
from db.database import make_engine
from engine.search import search
from sqlalchemy import text


async def _tamper(path, statement: str) -> None:
    engine = make_engine(path)
    async with engine.begin() as conn:
        await conn.execute(text(statement))
    await engine.dispose()


@pytest.mark.asyncio
async def test_round_trip_preserves_search(tmp_path, registry, queries):
    path = tmp_path / "registry.db"
    await store.save_registry(registry, path)
    loaded = await store.load_registry(path)

    assert [r.model_id for r in loaded.list_models()] == [
        r.model_id for r in registry.list_models()
    ]
    assert loaded.manifest == registry.manifest
    model_id = registry.list_models()[0].model_id
    expected = registry.get(model_id).source_accuracy
    assert loaded.get(model_id).source_accuracy == expected
    assert loaded.sketch_for(model_id) == registry.sketch_for(model_id)

    for metric in Metric:
        config = SearchConfig(metric=metric)
        for query in queries.values():
            assert search(query, loaded, config) == search(query, registry, config)


@pytest.mark.asyncio
async def test_missing_registry(tmp_path):
    with pytest.raises(NotFoundError):
        await store.load_registry(tmp_path / "absent.db")


@pytest.mark.asyncio
async def test_create_refuses_existing_file(tmp_path, manifest):
    path = tmp_path / "registry.db"
    registry = await store.create_registry(path, manifest)
    assert len(registry) == 0
    assert path.is_file()
    with pytest.raises(ConflictError):
        await store.create_registry(path, manifest)


@pytest.mark.asyncio
async def test_checksum_mismatch(tmp_path, registry):
    path = tmp_path / "registry.db"
    await store.save_registry(registry, path)
    await _tamper(path, "UPDATE sketches SET payload = X'7b7d'")
    with pytest.raises(CorruptionError):
        await store.load_registry(path)


@pytest.mark.asyncio
async def test_unknown_format_version(tmp_path, registry):
    path = tmp_path / "registry.db"
    await store.save_registry(registry, path)
    await _tamper(path, "UPDATE manifest SET format_version = 99")
    with pytest.raises(FormatError):
        await store.load_registry(path)


@pytest.mark.asyncio
async def test_tampered_manifest(tmp_path, registry):
    path = tmp_path / "registry.db"
    await store.save_registry(registry, path)
    await _tamper(path, "UPDATE manifest SET params = params || ' '")
    with pytest.raises(CorruptionError, match="manifest"):
        await store.load_registry(path)


@pytest.mark.asyncio
async def test_registry_from_another_minhash_scheme(tmp_path, manifest):
    path = tmp_path / "registry.db"
    minhash = replace(manifest.minhash_params, scheme="datasketch-0")
    await store.create_registry(path, replace(manifest, minhash_params=minhash))
    with pytest.raises(FormatError, match="datasketch-0"):
        await store.load_registry(path)


@pytest.mark.asyncio
async def test_not_a_registry(tmp_path):
    path = tmp_path / "registry.db"
    path.write_bytes(b"this is not a database" * 100)
    with pytest.raises(CorruptionError):
        await store.load_registry(path)


@pytest.mark.asyncio
async def test_add_and_remove_persist(tmp_path, manifest, letters):
    path = tmp_path / "registry.db"
    registry = await store.create_registry(path, manifest)
    record = ModelRecord(model_id="m", dataset_id="letters", task_tag="demo")
    registry.register_model(record, letters)
    await store.add_model(path, registry, record, letters)

    loaded = await store.load_registry(path)
    assert loaded.get("m").task_tag == "demo"
    assert loaded.sketch_for("m") == letters

    receipt = await store.remove_model(path, "m")
    assert receipt.dataset_removed
    assert len(await store.load_registry(path)) == 0

    with pytest.raises(NotFoundError):
        await store.remove_model(path, "m")


@pytest.mark.asyncio
async def test_loading_does_not_modify_the_file(tmp_path, registry, queries):
    path = tmp_path / "registry.db"
    await store.save_registry(registry, path)
    before = path.read_bytes()
    loaded = await store.load_registry(path)
    search(next(iter(queries.values())), loaded, SearchConfig())
    assert path.read_bytes() == before
