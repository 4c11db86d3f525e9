from core.errors import ModelScoutError
from db.database import get_session
from engine.registry import Registry
from fastapi import HTTPException

# Set by the lifespan handler in main.py
_registry: Registry | None = None


def set_registry(registry: Registry | None):
    global _registry
    _registry = registry


def get_registry() -> Registry:
    if _registry is None:
        raise RuntimeError("Registry not initialized")
    return _registry


async def get_db():
    async for session in get_session():
        yield session


def error_detail(error: ModelScoutError) -> dict[str, str]:
    return {"code": type(error).__name__, "message": str(error)}


def http_error(error: ModelScoutError) -> HTTPException:
    return HTTPException(status_code=error.http_status, detail=error_detail(error))
