import logging
from datetime import datetime
from typing import Any

from api.dependencies import get_db, get_registry, http_error
from config import settings
from core.codec import sketch_from_python
from core.errors import ConflictError, ModelScoutError, NotFoundError
from core.record import ModelRecord
from core.sketch import DatasetSketch
from db import crud
from db import database as db_module
from engine.registry import Registry
from fastapi import APIRouter, BackgroundTasks, Depends, status
from fastapi.concurrency import run_in_threadpool
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field
from sqlalchemy.ext.asyncio import AsyncSession

logger = logging.getLogger("model-scout.api")

router = APIRouter(prefix="/models", tags=["models"])

# model_id -> None while registering, the error once it failed.
# A failure is reported to the first poll and then forgotten.
_pending: dict[str, ModelScoutError | None] = {}


class RegisterRequest(BaseModel):
    model_id: str = Field(min_length=1)
    display_name: str = ""
    task_tag: str = ""
    source_accuracy: float | None = Field(default=None, ge=0.0, le=1.0)
    notes: str = ""
    sketch: dict[str, Any]


class ReceiptResponse(BaseModel):
    model_id: str
    dataset_id: str
    num_features: int
    num_postings: int
    format_version: int


class PendingResponse(BaseModel):
    model_id: str
    status: str
    poll_url: str
    format_version: int


class ModelResponse(BaseModel):
    model_id: str
    dataset_id: str
    display_name: str
    task_tag: str
    source_accuracy: float | None
    created_at: datetime
    notes: str
    num_partitions: int
    num_features: int
    format_version: int


class ModelListResponse(BaseModel):
    format_version: int
    models: list[ModelResponse]


class RemovalResponse(BaseModel):
    model_id: str
    dataset_removed: bool
    format_version: int


def _model_response(record: ModelRecord, registry: Registry) -> ModelResponse:
    sketch = registry.sketch_for(record.model_id)
    return ModelResponse(
        model_id=record.model_id,
        dataset_id=record.dataset_id,
        display_name=record.display_name,
        task_tag=record.task_tag,
        source_accuracy=record.source_accuracy,
        created_at=record.created_at,
        notes=record.notes,
        num_partitions=sketch.num_partitions,
        num_features=len(sketch.descriptors),
        format_version=registry.manifest.format_version,
    )


def _pending_response(model_id: str, registry: Registry) -> PendingResponse:
    return PendingResponse(
        model_id=model_id,
        status="pending",
        poll_url=f"{router.prefix}/{model_id}",
        format_version=registry.manifest.format_version,
    )


async def _register(
    session: AsyncSession,
    registry: Registry,
    record: ModelRecord,
    sketch: DatasetSketch,
):
    receipt = await run_in_threadpool(registry.register_model, record, sketch)
    try:
        signatures = dict(registry.snapshot().signatures[record.model_id])
        await crud.insert_model(session, record, sketch, signatures)
        await session.commit()
    except Exception:
        registry.remove_model(record.model_id)
        raise
    return receipt


async def _register_in_background(
    registry: Registry, record: ModelRecord, sketch: DatasetSketch
):
    try:
        async with db_module.async_session() as session:
            await _register(session, registry, record, sketch)
    except ModelScoutError as e:
        logger.warning("Registration of %s failed: %s", record.model_id, e)
        _pending[record.model_id] = e
        return
    except Exception:
        logger.exception("Registration of %s failed", record.model_id)
        _pending[record.model_id] = ModelScoutError("registration failed")
        return
    _pending.pop(record.model_id, None)


@router.post(
    "",
    response_model=ReceiptResponse,
    status_code=status.HTTP_201_CREATED,
    responses={202: {"model": PendingResponse}},
)
async def register_model(
    req: RegisterRequest,
    background_tasks: BackgroundTasks,
    registry: Registry = Depends(get_registry),
    db: AsyncSession = Depends(get_db),
):
    try:
        sketch = sketch_from_python(req.sketch)
        record = ModelRecord(
            model_id=req.model_id,
            dataset_id=sketch.dataset_id,
            display_name=req.display_name,
            task_tag=req.task_tag,
            source_accuracy=req.source_accuracy,
            notes=req.notes,
        )
        registry.check_params(sketch)
        pending = req.model_id in _pending and _pending[req.model_id] is None
        if req.model_id in registry or pending:
            raise ConflictError(f"model '{req.model_id}' already registered")

        if sketch.num_partitions > settings.ASYNC_REGISTRATION_PARTITIONS:
            _pending[req.model_id] = None
            background_tasks.add_task(_register_in_background, registry, record, sketch)
            return JSONResponse(
                status_code=status.HTTP_202_ACCEPTED,
                content=_pending_response(req.model_id, registry).model_dump(),
            )

        receipt = await _register(db, registry, record, sketch)
    except ModelScoutError as e:
        raise http_error(e) from e
    _pending.pop(req.model_id, None)
    return ReceiptResponse(
        model_id=receipt.model_id,
        dataset_id=receipt.dataset_id,
        num_features=receipt.num_features,
        num_postings=receipt.num_postings,
        format_version=receipt.format_version,
    )


@router.get("", response_model=ModelListResponse)
async def list_models(registry: Registry = Depends(get_registry)):
    return ModelListResponse(
        format_version=registry.manifest.format_version,
        models=[_model_response(r, registry) for r in registry.list_models()],
    )


@router.get(
    "/{model_id}",
    response_model=ModelResponse,
    responses={202: {"model": PendingResponse}},
)
async def get_model(model_id: str, registry: Registry = Depends(get_registry)):
    if model_id in registry:
        return _model_response(registry.get(model_id), registry)
    if model_id in _pending:
        if _pending[model_id] is None:
            return JSONResponse(
                status_code=status.HTTP_202_ACCEPTED,
                content=_pending_response(model_id, registry).model_dump(),
            )
        raise http_error(_pending.pop(model_id))
    raise http_error(NotFoundError(f"model '{model_id}' is not registered"))


@router.delete("/{model_id}", response_model=RemovalResponse)
async def remove_model(
    model_id: str,
    registry: Registry = Depends(get_registry),
    db: AsyncSession = Depends(get_db),
):
    try:
        registry.get(model_id)
        await crud.delete_model(db, model_id)
        await db.commit()
        # Memory changes only after the delete is committed.
        receipt = registry.remove_model(model_id)
    except ModelScoutError as e:
        await db.rollback()
        raise http_error(e) from e
    return RemovalResponse(
        model_id=receipt.model_id,
        dataset_removed=receipt.dataset_removed,
        format_version=receipt.format_version,
    )
