from pathlib import Path

from config import settings
from sqlalchemy.ext.asyncio import (
    AsyncEngine,
    AsyncSession,
    async_sessionmaker,
    create_async_engine,
)


def registry_url(path: str | Path, read_only: bool = False) -> str:
    if read_only:
        return f"sqlite+aiosqlite:///file:{Path(path).resolve()}?mode=ro&uri=true"
    return f"sqlite+aiosqlite:///{path}"


def make_engine(path: str | Path, read_only: bool = False) -> AsyncEngine:
    return create_async_engine(registry_url(path, read_only), echo=False)


def make_sessionmaker(engine: AsyncEngine) -> async_sessionmaker[AsyncSession]:
    return async_sessionmaker(engine, class_=AsyncSession, expire_on_commit=False)


# Service registry file; tests swap these out.
engine = create_async_engine(settings.REGISTRY_URL, echo=False)
async_session = make_sessionmaker(engine)


async def init_db(target: AsyncEngine | None = None):
    from db.models import Base

    async with (target or engine).begin() as conn:
        await conn.run_sync(Base.metadata.create_all)


async def get_session() -> AsyncSession:
    async with async_session() as session:
        yield session
