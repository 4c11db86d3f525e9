from datetime import datetime, timezone

from sqlalchemy import DateTime, Float, ForeignKey, Integer, LargeBinary, String, Text
from sqlalchemy.orm import DeclarativeBase, Mapped, mapped_column


class Base(DeclarativeBase):
    pass


def _utcnow() -> datetime:
    return datetime.now(timezone.utc)


class ManifestRow(Base):
    __tablename__ = "manifest"

    id: Mapped[int] = mapped_column(Integer, primary_key=True, default=1)
    format_version: Mapped[int] = mapped_column(Integer, nullable=False)
    # RegistryManifest as JSON: hash-family parameters and bins
    params: Mapped[str] = mapped_column(Text, nullable=False)
    checksum: Mapped[str] = mapped_column(String(64), nullable=False)
    bins_per_numeric_feature: Mapped[int] = mapped_column(Integer, nullable=False)
    created_at: Mapped[datetime] = mapped_column(DateTime, default=_utcnow)


class SketchRow(Base):
    __tablename__ = "sketches"

    dataset_id: Mapped[str] = mapped_column(String, primary_key=True)
    payload: Mapped[bytes] = mapped_column(LargeBinary, nullable=False)
    checksum: Mapped[str] = mapped_column(String(64), nullable=False)


class ModelRow(Base):
    __tablename__ = "models"

    model_id: Mapped[str] = mapped_column(String, primary_key=True)
    dataset_id: Mapped[str] = mapped_column(
        String, ForeignKey("sketches.dataset_id"), nullable=False, index=True
    )
    display_name: Mapped[str] = mapped_column(String, default="")
    task_tag: Mapped[str] = mapped_column(String, default="")
    source_accuracy: Mapped[float | None] = mapped_column(Float, nullable=True)
    created_at: Mapped[datetime] = mapped_column(DateTime(timezone=True))
    notes: Mapped[str] = mapped_column(Text, default="")


class SignatureRow(Base):
    """MinHash matrices of one model's features, JSON encoded."""

    __tablename__ = "minhash_signatures"

    model_id: Mapped[str] = mapped_column(
        String, ForeignKey("models.model_id"), primary_key=True
    )
    payload: Mapped[bytes] = mapped_column(LargeBinary, nullable=False)
    checksum: Mapped[str] = mapped_column(String(64), nullable=False)
