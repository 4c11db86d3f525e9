from collections.abc import AsyncGenerator

import pandas as pd
import pytest
from core.record import ModelRecord, RegistryManifest
from core.sketch import DatasetSketch
from db.database import init_db, make_engine, make_sessionmaker
from engine.registry import Registry
from engine.sketchcore import ingest_frame
from harness.workload import SyntheticWorkloadSpec, Workload, generate_workload
from httpx import ASGITransport, AsyncClient
from sqlalchemy.ext.asyncio import AsyncSession

SMALL_SPEC = SyntheticWorkloadSpec(
    num_families=3,
    datasets_per_family=2,
    rows_per_dataset=600,
    num_features=4,
    bins=8,
    queries_per_family=1,
    seed=11,
)
PARTITION_SIZE = 200


def make_sketch(
    dataset_id: str,
    columns: dict[str, list],
    partition_size_m: int = 10,
    bins: int = 8,
    **options,
) -> DatasetSketch:
    return ingest_frame(
        pd.DataFrame(columns),
        partition_size_m=partition_size_m,
        bins_per_numeric_feature=bins,
        dataset_id=dataset_id,
        **options,
    )


def registry_for(workload: Workload, partition_size_m: int = PARTITION_SIZE):
    registry = Registry(RegistryManifest(bins_per_numeric_feature=workload.spec.bins))
    for dataset_id in workload.source_ids:
        model_id = workload.model_id(dataset_id)
        registry.register_model(
            ModelRecord(
                model_id=model_id,
                dataset_id=dataset_id,
                source_accuracy=workload.source_accuracy[model_id],
            ),
            workload.sketch(dataset_id, partition_size_m),
        )
    return registry


@pytest.fixture(scope="session")
def workload() -> Workload:
    return generate_workload(SMALL_SPEC)


@pytest.fixture(scope="session")
def queries(workload) -> dict[str, DatasetSketch]:
    return {q: workload.sketch(q, PARTITION_SIZE) for q in workload.query_ids}


@pytest.fixture
def manifest() -> RegistryManifest:
    return RegistryManifest(bins_per_numeric_feature=8)


@pytest.fixture
def registry(workload) -> Registry:
    return registry_for(workload)


@pytest.fixture
def letters() -> DatasetSketch:
    """Four partitions of ten rows, each holding a single category."""
    return make_sketch(
        "letters",
        {"x": ["a"] * 10 + ["b"] * 10 + ["c"] * 10 + ["d"] * 10},
    )


@pytest.fixture
async def db_engine(tmp_path):
    engine = make_engine(tmp_path / "service.db")
    await init_db(engine)
    yield engine
    await engine.dispose()


@pytest.fixture
async def db_session(db_engine) -> AsyncGenerator[AsyncSession, None]:
    async with make_sessionmaker(db_engine)() as session:
        yield session


@pytest.fixture
async def client(db_engine, manifest) -> AsyncGenerator[AsyncClient, None]:
    """Test client over an empty registry and a temporary registry file."""
    from api import models as models_api
    from api.dependencies import set_registry
    from db import database as db_module

    original_engine = db_module.engine
    original_session = db_module.async_session

    db_module.engine = db_engine
    db_module.async_session = make_sessionmaker(db_engine)

    set_registry(Registry(manifest))
    models_api._pending.clear()

    from main import app

    transport = ASGITransport(app=app)
    async with AsyncClient(transport=transport, base_url="http://test") as ac:
        yield ac

    db_module.engine = original_engine
    db_module.async_session = original_session
    set_registry(None)
    models_api._pending.clear()
