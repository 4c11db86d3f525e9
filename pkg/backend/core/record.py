from dataclasses import dataclass, field
from datetime import datetime, timezone

from core.hashing import JsLshParams, MinHashParams

FORMAT_VERSION = 2


def _utcnow() -> datetime:
    return datetime.now(timezone.utc)


@dataclass(frozen=True)
class ModelRecord:
    """Metadata of a registered model; the training data lives in its sketch."""

    model_id: str
    dataset_id: str
    display_name: str = ""
    task_tag: str = ""
    source_accuracy: float | None = None
    created_at: datetime = field(default_factory=_utcnow)
    notes: str = ""

    def __post_init__(self):
        if not self.model_id:
            raise ValueError("model_id must not be empty")
        if self.source_accuracy is not None and not (
            0.0 <= self.source_accuracy <= 1.0
        ):
            raise ValueError("source_accuracy must lie in [0, 1]")


@dataclass(frozen=True)
class RegistryManifest:
    format_version: int = FORMAT_VERSION
    minhash_params: MinHashParams = field(default_factory=MinHashParams)
    jslsh_params: JsLshParams = field(default_factory=JsLshParams)
    l2lsh_params: JsLshParams = field(
        default_factory=lambda: JsLshParams(
            k_per_band=6, num_bands=24, r=0.25, master_seed=3
        )
    )
    bins_per_numeric_feature: int = 32


@dataclass(frozen=True)
class RegistrationReceipt:
    model_id: str
    dataset_id: str
    num_features: int
    num_postings: int
    format_version: int = FORMAT_VERSION


@dataclass(frozen=True)
class RemovalReceipt:
    model_id: str
    dataset_removed: bool
    format_version: int = FORMAT_VERSION


def manifest_from_settings(settings) -> RegistryManifest:
    """Manifest for a new registry, built from the configured hash parameters."""
    return RegistryManifest(
        minhash_params=MinHashParams(
            k_per_band=settings.MINHASH_K,
            num_bands=settings.MINHASH_L,
            master_seed=settings.MINHASH_SEED,
        ),
        jslsh_params=JsLshParams(
            k_per_band=settings.JSLSH_K,
            num_bands=settings.JSLSH_L,
            r=settings.JSLSH_R,
            master_seed=settings.JSLSH_SEED,
        ),
        l2lsh_params=JsLshParams(
            k_per_band=settings.L2LSH_K,
            num_bands=settings.L2LSH_L,
            r=settings.L2LSH_R,
            master_seed=settings.L2LSH_SEED,
        ),
        bins_per_numeric_feature=settings.BINS_PER_NUMERIC_FEATURE,
    )
