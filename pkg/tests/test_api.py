import pytest
from api.dependencies import get_registry
from config import settings
from core.codec import sketch_to_python
from core.errors import CorruptionError, FormatError
from core.record import FORMAT_VERSION
from core.results import Metric, SearchConfig
from db import crud
from engine.search import result_row, search
from httpx import AsyncClient

from tests.conftest import make_sketch


def _body(workload, dataset_id: str, **fields) -> dict:
    sketch = workload.sketch(dataset_id, 200)
    return {
        "model_id": workload.model_id(dataset_id),
        "sketch": sketch_to_python(sketch),
        **fields,
    }


async def _register_sources(client: AsyncClient, workload) -> None:
    for dataset_id in workload.source_ids:
        resp = await client.post("/models", json=_body(workload, dataset_id))
        assert resp.status_code == 201


@pytest.mark.asyncio
async def test_health(client: AsyncClient):
    resp = await client.get("/healthz")
    assert resp.status_code == 200
    assert resp.json() == {"status": "ok"}


@pytest.mark.asyncio
async def test_register_and_get(client: AsyncClient, workload):
    body = _body(workload, "d000-00", display_name="first", source_accuracy=0.8)
    resp = await client.post("/models", json=body)
    assert resp.status_code == 201
    receipt = resp.json()
    assert receipt["model_id"] == "model-d000-00"
    assert receipt["dataset_id"] == "d000-00"
    assert receipt["num_features"] == 4
    assert receipt["num_postings"] == 4 * 32
    assert receipt["format_version"] == FORMAT_VERSION

    resp = await client.get("/models/model-d000-00")
    assert resp.status_code == 200
    data = resp.json()
    assert data["display_name"] == "first"
    assert data["source_accuracy"] == 0.8
    assert data["num_partitions"] == 3


@pytest.mark.asyncio
async def test_register_duplicate(client: AsyncClient, workload):
    body = _body(workload, "d000-00")
    assert (await client.post("/models", json=body)).status_code == 201
    resp = await client.post("/models", json=body)
    assert resp.status_code == 409
    assert resp.json()["detail"]["code"] == "ConflictError"


@pytest.mark.asyncio
async def test_register_with_other_bins(client: AsyncClient):
    sketch = make_sketch("wide", {"v": [0.1, 0.5, 0.9]}, bins=16)
    resp = await client.post(
        "/models", json={"model_id": "m", "sketch": sketch_to_python(sketch)}
    )
    assert resp.status_code == 422
    assert resp.json()["detail"]["code"] == "ParamsError"


@pytest.mark.asyncio
async def test_register_invalid_sketch(client: AsyncClient):
    resp = await client.post("/models", json={"model_id": "m", "sketch": {"x": 1}})
    assert resp.status_code == 422
    detail = resp.json()["detail"]
    assert detail["code"] == "InputError"
    assert detail["message"].startswith("invalid sketch")


@pytest.mark.asyncio
async def test_register_invalid_body(client: AsyncClient, workload):
    body = _body(workload, "d000-00", source_accuracy=1.5)
    resp = await client.post("/models", json=body)
    assert resp.status_code == 422
    detail = resp.json()["detail"]
    assert detail["code"] == "ValidationError"
    assert "source_accuracy" in detail["message"]


@pytest.mark.asyncio
async def test_unknown_model(client: AsyncClient):
    resp = await client.get("/models/nope")
    assert resp.status_code == 404
    assert resp.json()["detail"]["code"] == "NotFoundError"
    assert (await client.delete("/models/nope")).status_code == 404


@pytest.mark.asyncio
async def test_list_models(client: AsyncClient, workload):
    await _register_sources(client, workload)
    resp = await client.get("/models")
    assert resp.status_code == 200
    data = resp.json()
    assert data["format_version"] == FORMAT_VERSION
    assert [m["model_id"] for m in data["models"]] == [
        workload.model_id(d) for d in workload.source_ids
    ]


@pytest.mark.asyncio
async def test_search_empty_registry(client: AsyncClient, queries):
    query = next(iter(queries.values()))
    resp = await client.post("/search", json={"sketch": sketch_to_python(query)})
    assert resp.status_code == 200
    data = resp.json()
    assert data["results"] == []
    assert data["metric"] == "adaptivity"
    assert data["unit"] == "fraction"


@pytest.mark.asyncio
@pytest.mark.parametrize("metric", [m.value for m in Metric])
async def test_search_matches_library(client: AsyncClient, workload, queries, metric):
    await _register_sources(client, workload)
    registry = get_registry()
    for query in queries.values():
        resp = await client.post(
            "/search", json={"sketch": sketch_to_python(query), "metric": metric}
        )
        assert resp.status_code == 200
        expected = search(query, registry, SearchConfig(metric=Metric(metric)))
        assert resp.json()["results"] == [
            result_row(r, Metric(metric)) for r in expected
        ]


@pytest.mark.asyncio
async def test_search_in_bits(client: AsyncClient, workload, queries):
    await _register_sources(client, workload)
    body = {
        "sketch": sketch_to_python(queries["q000-02"]),
        "metric": "js",
        "bits": True,
        "top": 1,
    }
    resp = await client.post("/search", json=body)
    data = resp.json()
    assert data["unit"] == "bits"
    assert len(data["results"]) == 1
    assert data["results"][0]["model_id"].startswith("model-d000-")


@pytest.mark.asyncio
async def test_search_rejects_bad_thresholds(client: AsyncClient, queries):
    query = next(iter(queries.values()))
    resp = await client.post(
        "/search", json={"sketch": sketch_to_python(query), "t1": 1.5}
    )
    assert resp.status_code == 422
    assert resp.json()["detail"]["code"] == "ParamsError"


@pytest.mark.asyncio
async def test_delete_model(client: AsyncClient, workload, db_session):
    await _register_sources(client, workload)
    resp = await client.delete("/models/model-d000-00")
    assert resp.status_code == 200
    assert resp.json() == {
        "model_id": "model-d000-00",
        "dataset_removed": True,
        "format_version": FORMAT_VERSION,
    }
    assert (await client.get("/models/model-d000-00")).status_code == 404
    stored = [record.model_id for record, _, _ in await crud.load_models(db_session)]
    assert "model-d000-00" not in stored
    assert len(stored) == len(workload.source_ids) - 1


@pytest.mark.asyncio
async def test_registration_is_persisted(client: AsyncClient, workload, db_session):
    await _register_sources(client, workload)
    stored = await crud.load_models(db_session)
    assert [record.model_id for record, _, _ in stored] == [
        workload.model_id(d) for d in workload.source_ids
    ]
    _, sketch, _ = stored[0]
    assert sketch == workload.sketch(workload.source_ids[0], 200)


@pytest.mark.asyncio
async def test_large_registration_runs_in_background(
    client: AsyncClient, workload, monkeypatch
):
    monkeypatch.setattr(settings, "ASYNC_REGISTRATION_PARTITIONS", 0)
    resp = await client.post("/models", json=_body(workload, "d001-00"))
    assert resp.status_code == 202
    pending = resp.json()
    assert pending["status"] == "pending"
    assert pending["poll_url"] == "/models/model-d001-00"

    resp = await client.get(pending["poll_url"])
    assert resp.status_code == 200
    assert resp.json()["dataset_id"] == "d001-00"


@pytest.mark.asyncio
async def test_failed_background_registration_is_reported_once(
    client: AsyncClient, workload, monkeypatch
):
    async def broken_insert(*args, **kwargs):
        raise FormatError("sketch table is from another release")

    monkeypatch.setattr(settings, "ASYNC_REGISTRATION_PARTITIONS", 0)
    monkeypatch.setattr(crud, "insert_model", broken_insert)
    resp = await client.post("/models", json=_body(workload, "d001-00"))
    assert resp.status_code == 202

    resp = await client.get("/models/model-d001-00")
    assert resp.status_code == 500
    assert resp.json()["detail"]["code"] == "FormatError"
    assert (await client.get("/models/model-d001-00")).status_code == 404
    assert "model-d001-00" not in get_registry()


@pytest.mark.asyncio
async def test_failed_delete_keeps_the_model(
    client: AsyncClient, workload, monkeypatch
):
    await _register_sources(client, workload)

    async def broken_delete(*args, **kwargs):
        raise CorruptionError("registry integrity check failed")

    monkeypatch.setattr(crud, "delete_model", broken_delete)
    resp = await client.delete("/models/model-d000-00")
    assert resp.status_code == 500
    assert resp.json()["detail"]["code"] == "CorruptionError"
    assert (await client.get("/models/model-d000-00")).status_code == 200
