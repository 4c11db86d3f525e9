import logging
from contextlib import asynccontextmanager
from pathlib import Path

from api.dependencies import set_registry
from api.models import router as models_router
from api.search import router as search_router
from config import settings
from core.record import manifest_from_settings
from db import crud
from db import database as db_module
from db.store import load_registry
from engine.registry import Registry
from fastapi import FastAPI, Request, status
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

logger = logging.getLogger("model-scout")


async def open_registry(path: str | Path) -> Registry:
    """Load the registry file, creating an empty one on first start."""
    if Path(path).is_file():
        return await load_registry(path)
    manifest = manifest_from_settings(settings)
    await db_module.init_db()
    async with db_module.async_session() as session:
        await crud.write_manifest(session, manifest)
        await session.commit()
    logger.info("Created registry %s", path)
    return Registry(manifest)


@asynccontextmanager
async def lifespan(app: FastAPI):
    registry = await open_registry(settings.REGISTRY_PATH)
    set_registry(registry)
    logger.info("Serving %d models from %s", len(registry), settings.REGISTRY_PATH)

    yield

    set_registry(None)
    await db_module.engine.dispose()


app = FastAPI(
    title="Model Scout",
    description="Find registered models whose training data fits a query dataset",
    version="0.1.0",
    lifespan=lifespan,
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

app.include_router(models_router)
app.include_router(search_router)


@app.exception_handler(RequestValidationError)
async def validation_error(request: Request, exc: RequestValidationError):
    first = exc.errors()[0] if exc.errors() else {}
    location = ".".join(str(p) for p in first.get("loc", ()))
    return JSONResponse(
        status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
        content={
            "detail": {
                "code": "ValidationError",
                "message": f"{location}: {first.get('msg', 'invalid request')}",
            }
        },
    )


@app.get("/healthz")
async def health():
    return {"status": "ok"}


def main():
    import uvicorn

    logging.basicConfig(level=settings.LOG_LEVEL)
    uvicorn.run("main:app", host=settings.HOST, port=settings.PORT)


if __name__ == "__main__":
    main()
